//! Projected policy-gradient synthesis on covariance data (offline), the
//! single-trajectory adaptive loop (online), and closed-loop rollouts.

use log::debug;

use crate::cost::{model_cost, model_grad, DataCostCache};
use crate::data::{ls_identify, pe_check, snr_diagnostics, CovarianceData, Dataset};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::lti::{
    self, optimal_gains, CostWeights, DecoupledPolicy, LtiSystem, NoiseStream, OptimalGains,
    ReferenceSignal, TrackingPolicy, STABILITY_MARGIN,
};
use crate::param::{
    kv_to_l, l_to_kv, projection, theta_to_xi, xi_to_theta, CovariancePolicy, ScalingMatrix,
};

/// Step sizes and stopping rule of the projected gradient iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub eta: f64,
    /// Multiplier applied to the step on the `H` block.
    pub eta_h_factor: f64,
    pub max_iters: usize,
    /// Stop once `|Π∇C|_F` drops below this.
    pub grad_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eta: crate::presets::BASE_STEP,
            eta_h_factor: 1.0,
            max_iters: 20_000,
            grad_tol: 1e-11,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) {
            return Err(Error::Config("eta must be positive".into()));
        }
        if !(self.eta_h_factor >= 1.0) {
            return Err(Error::Config("eta_h_factor must be at least 1".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

/// Scales the `H` half of a side-by-side `[∂V, ∂H]` gradient.
fn split_scale(grad: &Mat, n: usize, eta: f64, eta_h_factor: f64) -> Mat {
    let mut out = grad * eta;
    if eta_h_factor != 1.0 {
        let mut h = out.columns_mut(n, n);
        h *= eta_h_factor;
    }
    out
}

/// One projected step `ξ⁺ = ξ − Π diag(η, η·η_H) ∇C(ξ)`; returns the new
/// policy and `|Π∇C|_F` at `ξ`.
pub fn projected_step(
    cache: &DataCostCache,
    pi: &Mat,
    xi: &CovariancePolicy,
    eta: f64,
    eta_h_factor: f64,
) -> (CovariancePolicy, f64) {
    let n = xi.v.ncols();
    let pg = pi * cache.gradient();
    let step = split_scale(&pg, n, eta, eta_h_factor);
    let next = CovariancePolicy::from_stacked(&(xi.stacked() - step));
    (next, pg.norm())
}

fn is_feasible(cov: &CovarianceData, xi: &CovariancePolicy) -> bool {
    linalg::spectral_radius(&xi.closed_loop(cov)) < 1.0 - STABILITY_MARGIN
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverStatus {
    Converged,
    MaxIters,
    /// A step left the stable set; the step size is too large.
    InfeasibleStep,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub k: usize,
    pub cost: f64,
    pub policy: DecoupledPolicy,
    pub proj_grad_norm: f64,
    pub v_residual: f64,
    pub h_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverTrace {
    pub records: Vec<IterationRecord>,
    pub status: SolverStatus,
    pub xi: CovariancePolicy,
}

impl SolverTrace {
    pub fn final_policy(&self) -> &DecoupledPolicy {
        &self
            .records
            .last()
            .expect("trace has at least one record")
            .policy
    }

    pub fn final_cost(&self) -> f64 {
        self.records
            .last()
            .expect("trace has at least one record")
            .cost
    }

    pub fn costs(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.cost).collect()
    }
}

/// Offline projected gradient descent from `theta0` on fixed covariance data.
pub fn offline_solve(
    cov: &CovarianceData,
    weights: &CostWeights,
    theta0: &DecoupledPolicy,
    cfg: &SolverConfig,
) -> Result<SolverTrace> {
    cfg.validate()?;
    let mut xi = theta_to_xi(theta0, cov)?;
    let pi = projection(cov);
    let mut records = Vec::new();
    let mut cache = DataCostCache::new(cov, weights, &xi)?;
    let mut status = SolverStatus::MaxIters;
    for k in 0..=cfg.max_iters {
        let (next, pg_norm) = projected_step(&cache, &pi, &xi, cfg.eta, cfg.eta_h_factor);
        let next = next.restore_constraints(cov);
        let (v_residual, h_residual) = xi.constraint_residuals(cov);
        records.push(IterationRecord {
            k,
            cost: cache.cost,
            policy: xi_to_theta(&xi, cov),
            proj_grad_norm: pg_norm,
            v_residual,
            h_residual,
        });
        if pg_norm < cfg.grad_tol {
            status = SolverStatus::Converged;
            break;
        }
        if k == cfg.max_iters {
            break;
        }
        if !is_feasible(cov, &next) {
            status = SolverStatus::InfeasibleStep;
            break;
        }
        cache = match DataCostCache::new(cov, weights, &next) {
            Ok(c) => c,
            Err(Error::Unstable { .. }) => {
                status = SolverStatus::InfeasibleStep;
                break;
            }
            Err(e) => return Err(e),
        };
        xi = next;
    }
    debug!(
        "offline solve finished after {} records: {status:?}",
        records.len()
    );
    Ok(SolverTrace {
        records,
        status,
        xi,
    })
}

/// Largest `eta_start·2⁻ᵏ` whose first `probe_iters` iterations stay
/// stabilizing with non-increasing cost.
pub fn max_stable_step(
    cov: &CovarianceData,
    weights: &CostWeights,
    theta0: &DecoupledPolicy,
    eta_start: f64,
    eta_h_factor: f64,
    probe_iters: usize,
) -> Result<f64> {
    const MAX_HALVINGS: usize = 60;
    let mut eta = eta_start;
    for _ in 0..MAX_HALVINGS {
        let cfg = SolverConfig {
            eta,
            eta_h_factor,
            max_iters: probe_iters,
            grad_tol: 0.0,
        };
        let trace = offline_solve(cov, weights, theta0, &cfg)?;
        let monotone = trace
            .records
            .windows(2)
            .all(|p| p[1].cost <= p[0].cost * (1.0 + 1e-12));
        if trace.status != SolverStatus::InfeasibleStep && monotone {
            return Ok(eta);
        }
        eta *= 0.5;
    }
    Err(Error::Divergence {
        what: "step size search",
        iterations: MAX_HALVINGS,
        residual: eta,
    })
}

/// One model-space step `θ⁺ = θ − η M ∇_θ Ĉ(θ)` on the least-squares model,
/// with the `L` block scaled by `eta_h_factor`.
pub fn offline_step_model_equiv(
    cov: &CovarianceData,
    weights: &CostWeights,
    theta: &DecoupledPolicy,
    eta: f64,
    eta_h_factor: f64,
) -> Result<DecoupledPolicy> {
    let est = ls_identify(cov)?;
    let scaling = ScalingMatrix::new(cov)?;
    let grad = model_grad(&est, weights, theta)?;
    let step = &scaling.m * split_scale(&grad, cov.n(), eta, eta_h_factor);
    Ok(DecoupledPolicy::from_stacked(&(theta.stacked() - step)))
}

/// Certainty-equivalence design: Riccati gains of the least-squares model.
#[derive(Debug, Clone, PartialEq)]
pub struct CeSolution {
    pub model: LtiSystem,
    pub gains: OptimalGains,
    pub cost: f64,
}

pub fn ce_solution(cov: &CovarianceData, weights: &CostWeights) -> Result<CeSolution> {
    let model = ls_identify(cov)?;
    let gains = optimal_gains(&model, weights)?;
    let cost = model_cost(&model, weights, &gains.decoupled)?;
    Ok(CeSolution { model, gains, cost })
}

/// Settings of the adaptive loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OnlineConfig {
    pub eta: f64,
    pub eta_h_factor: f64,
    /// Preview length `N`; the recursion sees `z_t, …, z_{t+N}`.
    pub preview: usize,
    /// Number of online steps.
    pub steps: usize,
    /// Overrides the noise model's exploration level online when set.
    pub exploration_std: Option<f64>,
    /// Use `η_t = η / |M_t|`.
    pub normalize_step: bool,
    /// Abort once `|x_t| > blowup_factor·(1 + z̄)`.
    pub blowup_factor: f64,
    /// Halvings tried when a step leaves the stable set before skipping it.
    pub max_backtracks: usize,
}

impl Default for OnlineConfig {
    fn default() -> Self {
        Self {
            eta: crate::presets::BASE_STEP,
            eta_h_factor: 1.0,
            preview: crate::presets::PREVIEW_HORIZON,
            steps: 3000,
            exploration_std: None,
            normalize_step: false,
            blowup_factor: 1e6,
            max_backtracks: 30,
        }
    }
}

/// Everything the adaptive loop carries between steps.
#[derive(Debug, Clone)]
pub struct OnlineState {
    pub policy: TrackingPolicy,
    /// Set-point gain of the latest accepted update.
    pub l: Mat,
    pub data: Dataset,
    /// Most recent post-update `V'`.
    pub v_prime: Mat,
    pub x: Vector,
    /// Steps taken since the start of the online phase.
    pub step: usize,
    pub noise: NoiseStream,
}

impl OnlineState {
    /// Initial parameterization `V' = Λ⁻¹[K; I]` at the pre-collected data.
    pub fn new(
        policy: TrackingPolicy,
        data: Dataset,
        x: Vector,
        noise: NoiseStream,
        weights: &CostWeights,
    ) -> Result<Self> {
        let n = data.cov.n();
        data.cov.require_pe()?;
        let v_prime = data
            .cov
            .lambda_solve(&linalg::vstack(&policy.k, &Mat::identity(n, n)));
        let l = kv_to_l(&policy.kv, &(data.cov.xbar1() * &v_prime), weights)?;
        Ok(Self {
            policy,
            l,
            data,
            v_prime,
            x,
            step: 0,
            noise,
        })
    }

    pub fn decoupled(&self) -> DecoupledPolicy {
        DecoupledPolicy {
            k: self.policy.k.clone(),
            l: self.l.clone(),
        }
    }
}

/// Why a step's policy update was not applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkipReason {
    NotExcited,
    InfeasibleParameterization,
    InfeasibleStep,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OnlineRecord {
    /// Online step index; the reference is sampled at this index.
    pub t: usize,
    /// True-system `C(θ_t)` of the policy in force after the step.
    pub cost: f64,
    pub gap: f64,
    pub norm_x: f64,
    pub snr: f64,
    pub gamma: f64,
    pub delta: f64,
    pub sigma_min_m: f64,
    pub norm_m: f64,
    pub sigma_min_u: f64,
    pub stage_cost: f64,
    /// Time-averaged stage cost so far.
    pub running_cost: f64,
    pub x: Vector,
    pub z: Vector,
    pub k: Mat,
    pub l: Mat,
    pub kv: Mat,
    pub v_residual: f64,
    pub h_residual: f64,
    /// Step halvings needed to stay stabilizing.
    pub backtracks: usize,
    pub skipped: Option<SkipReason>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OnlineStatus {
    Completed,
    Aborted { t: usize, norm: f64 },
}

#[derive(Debug, Clone)]
pub struct OnlineTrace {
    pub records: Vec<OnlineRecord>,
    pub status: OnlineStatus,
    /// True-system optimum `C*`.
    pub optimal_cost: f64,
    /// Gap of the initial policy.
    pub initial_gap: f64,
}

impl OnlineTrace {
    pub fn gaps(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.gap).collect()
    }

    pub fn max_state_norm(&self) -> f64 {
        self.records.iter().map(|r| r.norm_x).fold(0.0, f64::max)
    }
}

fn true_gap(
    sys: &LtiSystem,
    weights: &CostWeights,
    theta: &DecoupledPolicy,
    optimum: f64,
) -> (f64, f64) {
    match model_cost(sys, weights, theta) {
        Ok(c) => (c, c - optimum),
        Err(_) => (f64::INFINITY, f64::INFINITY),
    }
}

/// Runs the adaptive loop for `cfg.steps` steps along one trajectory of `sys`.
pub fn online_run(
    sys: &LtiSystem,
    weights: &CostWeights,
    reference: &ReferenceSignal,
    mut state: OnlineState,
    cfg: &OnlineConfig,
) -> Result<OnlineTrace> {
    let (n, m) = (sys.n(), sys.m());
    let optimum = model_cost(sys, weights, &optimal_gains(sys, weights)?.decoupled)?;
    let (_, initial_gap) = true_gap(sys, weights, &state.decoupled(), optimum);
    let blowup = cfg.blowup_factor * (1.0 + reference.bound());
    let exploration_std = cfg
        .exploration_std
        .unwrap_or(state.noise.model().exploration_std);
    let mut records = Vec::with_capacity(cfg.steps);
    let mut total_stage = 0.0;
    let mut status = OnlineStatus::Completed;

    for _ in 0..cfg.steps {
        let t = state.step;
        // (a) tracking state from the data-based closed loop X̄₁,ₜ V'ₜ
        let cl_old = state.data.cov.xbar1() * &state.v_prime;
        let refs = reference.window(t, cfg.preview + 1)?;
        let v = lti::preview_tracking_state(&cl_old, weights.q(), &refs)?;

        // (b) control and true-system response
        let z = &refs[0];
        let e = state.noise.gaussian(m, exploration_std);
        let u = state.policy.input(&state.x, &v) + e;
        let w = state.noise.process(n);
        let x_next = sys.simulate_step(&state.x, &u, &w)?;
        let err = &state.x - z;
        let stage = err.dot(&(weights.q() * &err)) + u.dot(&(weights.r() * &u));
        total_stage += stage;

        // (c) data refresh; W is kept for diagnostics only
        state.data.append_sample(&state.x, &u, &x_next, Some(&w))?;
        let x_prev = std::mem::replace(&mut state.x, x_next);
        state.step += 1;

        // (d–f) re-parameterize at the new covariance, step, recover gains
        let cov = &state.data.cov;
        let pe = pe_check(cov);
        let mut skipped = None;
        let mut scaling = None;
        let mut residuals = (f64::NAN, f64::NAN);
        let mut backtracks = 0;
        if pe.excited {
            let pi = projection(cov);
            let sm = ScalingMatrix::with_projection(cov, &pi);
            let l_t = kv_to_l(&state.policy.kv, &cl_old, weights)?;
            let theta = DecoupledPolicy {
                k: state.policy.k.clone(),
                l: l_t,
            };
            let xi = theta_to_xi(&theta, cov)?;
            match DataCostCache::new(cov, weights, &xi) {
                Ok(cache) => {
                    let eta = if cfg.normalize_step && sm.norm > 0.0 {
                        cfg.eta / sm.norm
                    } else {
                        cfg.eta
                    };
                    let mut accepted = None;
                    let mut eta_k = eta;
                    for k in 0..=cfg.max_backtracks {
                        let (next, _) = projected_step(&cache, &pi, &xi, eta_k, cfg.eta_h_factor);
                        let next = next.restore_constraints(cov);
                        if is_feasible(cov, &next) {
                            accepted = Some(next);
                            backtracks = k;
                            break;
                        }
                        eta_k *= 0.5;
                    }
                    match accepted {
                        Some(next) => {
                            let gains = xi_to_theta(&next, cov);
                            let kv = l_to_kv(&gains.l, &next.closed_loop(cov), weights)?;
                            residuals = next.constraint_residuals(cov);
                            state.policy = TrackingPolicy { k: gains.k, kv };
                            state.l = gains.l;
                            state.v_prime = next.v;
                        }
                        None => {
                            skipped = Some(SkipReason::InfeasibleStep);
                            backtracks = cfg.max_backtracks;
                            state.v_prime = xi.v;
                        }
                    }
                }
                Err(Error::Unstable { .. }) => {
                    skipped = Some(SkipReason::InfeasibleParameterization);
                    state.v_prime = xi.v;
                }
                Err(e) => return Err(e),
            }
            scaling = Some(sm);
        } else {
            skipped = Some(SkipReason::NotExcited);
        }
        if let Some(reason) = skipped {
            debug!("online step {t}: update skipped ({reason:?})");
        }

        let diag = snr_diagnostics(&state.data.log, &state.data.cov, None)?;
        let (cost, gap) = true_gap(sys, weights, &state.decoupled(), optimum);
        records.push(OnlineRecord {
            t,
            cost,
            gap,
            norm_x: x_prev.norm(),
            snr: diag.snr,
            gamma: diag.gamma,
            delta: diag.delta,
            sigma_min_m: scaling.as_ref().map_or(0.0, |s| s.sigma_min),
            norm_m: scaling.as_ref().map_or(0.0, |s| s.norm),
            sigma_min_u: diag.sigma_min_u_raw,
            stage_cost: stage,
            running_cost: total_stage / (t + 1) as f64,
            x: x_prev,
            z: z.clone(),
            k: state.policy.k.clone(),
            l: state.l.clone(),
            kv: state.policy.kv.clone(),
            v_residual: residuals.0,
            h_residual: residuals.1,
            backtracks,
            skipped,
        });

        let norm = state.x.norm();
        if !(norm <= blowup) {
            status = OnlineStatus::Aborted {
                t: state.step,
                norm,
            };
            break;
        }
    }
    Ok(OnlineTrace {
        records,
        status,
        optimal_cost: optimum,
        initial_gap,
    })
}

/// Pre-collects `steps` samples from `x0` with exploratory inputs, returning
/// the dataset and the final state.
pub fn precollect(
    sys: &LtiSystem,
    x0: &Vector,
    steps: usize,
    noise: &mut NoiseStream,
) -> Result<(Dataset, Vector)> {
    crate::data::collect_random_data(sys, x0, steps, noise)
}

/// Closed-loop deployment of a fixed tracking policy.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    /// `(1/T) Σ [(x−z)ᵀQ(x−z) + uᵀRu]`.
    pub average_cost: f64,
    /// Mean of `|x_t − z_t|²`.
    pub mean_sq_error: f64,
    pub states: Vec<Vector>,
    pub references: Vec<Vector>,
    pub inputs: Vec<Vector>,
}

/// Deploys `u = K x + K_v v` on the true system for `steps` steps from `x0`.
/// The tracking states use the closed loop `preview_loop` over the full
/// future reference with a tail long enough for the truncation to vanish.
#[allow(clippy::too_many_arguments)]
pub fn tracking_rollout(
    sys: &LtiSystem,
    weights: &CostWeights,
    policy: &TrackingPolicy,
    preview_loop: &Mat,
    reference: &ReferenceSignal,
    noise: &mut NoiseStream,
    x0: &Vector,
    steps: usize,
) -> Result<Rollout> {
    let rho = linalg::spectral_radius(&sys.closed_loop(&policy.k));
    lti::check_stable(rho)?;
    let rho_v = linalg::spectral_radius(preview_loop);
    lti::check_stable(rho_v)?;
    let tail = if rho_v > 0.0 {
        ((1e-16f64).ln() / rho_v.ln()).ceil().clamp(1.0, 20_000.0) as usize
    } else {
        1
    };
    let refs = reference.window(0, steps + tail)?;
    let vs = lti::tracking_state_sequence(preview_loop, weights.q(), &refs)?;
    let blowup = 1e6 * (1.0 + reference.bound());

    let mut x = x0.clone();
    let (mut total, mut sq_err) = (0.0, 0.0);
    let mut states = Vec::with_capacity(steps);
    let mut inputs = Vec::with_capacity(steps);
    for t in 0..steps {
        let z = &refs[t];
        let u = policy.input(&x, &vs[t]);
        let err = &x - z;
        total += err.dot(&(weights.q() * &err)) + u.dot(&(weights.r() * &u));
        sq_err += err.norm_squared();
        let w = noise.process(sys.n());
        let next = sys.simulate_step(&x, &u, &w)?;
        states.push(std::mem::replace(&mut x, next));
        inputs.push(u);
        if !(x.norm() <= blowup) {
            return Err(Error::BlowUp {
                t: t + 1,
                norm: x.norm(),
            });
        }
    }
    Ok(Rollout {
        average_cost: total / steps as f64,
        mean_sq_error: sq_err / steps as f64,
        states,
        references: refs.into_iter().take(steps).collect(),
        inputs,
    })
}
