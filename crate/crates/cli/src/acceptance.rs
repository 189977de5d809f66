//! Acceptance suite: one outcome per criterion, shared runs computed once.

use std::time::{Duration, Instant};

use deepo_core::max_stable_step;
use deepo_core::presets::{self, Actuation};
use deepo_core::{
    data_cost, data_grad, linalg, model_cost, model_cost_alt, model_grad, offline_solve,
    offline_step_model_equiv, optimal_gains, per_setpoint_cost, precollect, projected_step,
    projection, solve_dare, theta_to_xi, tracking_rollout, xi_to_theta, CostWeights,
    CovarianceData, CovariancePolicy, DataCostCache, DecoupledPolicy, LtiSystem, Mat, NoiseModel,
    OnlineConfig, OnlineStatus, SolverConfig, SolverStatus, TrackingPolicy, Vector,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::config::ExperimentConfig;
use crate::experiment::{
    self, average, offline_run, online_digest, OfflineProtocol, OfflineRun, OfflineSolve,
    OnlineDigest, OnlineProtocol,
};
use crate::fit;
use crate::oracle;

/// Criteria whose failing sub-check is a recorded deviation rather than a defect.
pub const KNOWN_GAPS: &[u8] = &[11];

/// Pre-collected samples for the offline criteria.
pub const OFFLINE_SAMPLES: usize = 200;

/// Pre-collected samples for the tracking comparison.
pub const PARITY_SAMPLES: usize = 500;

#[derive(Debug, Clone)]
pub struct Outcome {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    /// Failed only on a known-gap sub-check; the hard part held.
    pub waived: bool,
    pub detail: String,
    pub elapsed: Duration,
    pub budget: Duration,
}

impl Outcome {
    pub fn render_line(&self) -> String {
        let tag = match (self.passed, self.waived) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known gap)",
            (false, false) => "FAIL",
        };
        format!(
            "criterion {:>2} [{tag}] {} ({:.1}s, budget {}s): {}",
            self.id,
            self.title,
            self.elapsed.as_secs_f64(),
            self.budget.as_secs(),
            self.detail
        )
    }
}

/// True when every criterion passed or failed only on a known gap.
pub fn gate_passed(outcomes: &[Outcome]) -> bool {
    outcomes.iter().all(|o| o.passed || o.waived)
}

struct Plant {
    label: &'static str,
    sys: LtiSystem,
    w: CostWeights,
}

fn plants() -> Vec<Plant> {
    [Actuation::Full, Actuation::Under]
        .into_iter()
        .map(|a| {
            let sys = presets::benchmark_system(a);
            let w = presets::benchmark_weights(sys.n(), sys.m());
            Plant {
                label: a.label(),
                sys,
                w,
            }
        })
        .collect()
}

struct OfflineShared {
    plant: Plant,
    runs: Vec<OfflineRun>,
}

struct Suite {
    seed: u64,
    runs: usize,
    offline: Option<Vec<OfflineShared>>,
    sweep: Option<Vec<(&'static str, Vec<OfflineRun>)>>,
    online: Option<Vec<OnlineDigest>>,
    parity: Vec<OfflineRun>,
    /// Max `Π² − Π`, `Π − Πᵀ` over every dataset touched.
    projector_error: f64,
    datasets: usize,
}

type Check = Result<(bool, String), String>;

pub fn run_suite(seed: u64, runs: usize, on_outcome: &mut dyn FnMut(&Outcome)) -> Vec<Outcome> {
    let mut suite = Suite {
        seed,
        runs: runs.max(1),
        offline: None,
        sweep: None,
        online: None,
        parity: Vec::new(),
        projector_error: 0.0,
        datasets: 0,
    };
    let table: [Criterion; 12] = [
        (1, "scalar oracle", 1, scalar_oracle),
        (2, "DARE correctness", 10, dare_correctness),
        (3, "gradient certification", 30, gradient_certification),
        (4, "cost-form equality", 10, cost_forms),
        (5, "data/model dual-path step", 5, dual_path),
        (6, "offline optimum equals CE", 60, ce_equivalence),
        (7, "offline linear convergence", 60, linear_convergence),
        (8, "tracking parity", 120, tracking_parity),
        (9, "online behavior", 300, online_behavior),
        (10, "H-block step sweep", 300, h_sweep),
        (11, "excitation diagnostics", 60, excitation),
        (12, "constraint preservation", 1, constraints),
    ];
    let mut out = Vec::new();
    for (id, title, budget, check) in table {
        let start = Instant::now();
        let result = check(&mut suite);
        let elapsed = start.elapsed();
        let budget = Duration::from_secs(budget);
        let (mut passed, mut detail) = match result {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        // criterion 12 runs inside the other suites and has no own budget
        if id != 12 && elapsed > budget {
            passed = false;
            detail.push_str("; over time budget");
        }
        let waived = !passed && KNOWN_GAPS.contains(&id) && !detail.contains("hard check failed");
        let o = Outcome {
            id,
            title,
            passed,
            waived,
            detail,
            elapsed,
            budget,
        };
        on_outcome(&o);
        out.push(o);
    }
    out
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn within(x: f64, tol: f64) -> bool {
    x.is_finite() && x < tol
}

fn note_projector(suite: &mut Suite, cov: &CovarianceData) {
    let pi = projection(cov);
    let e = (&pi * &pi - &pi).amax().max((&pi - pi.transpose()).amax());
    suite.projector_error = suite.projector_error.max(e);
    suite.datasets += 1;
}

fn base_config(seed: u64, runs: usize, samples: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::parse("").expect("defaults are valid");
    cfg.seed = seed;
    cfg.runs = runs;
    cfg.data.precollect = samples;
    cfg
}

fn scalar_oracle(_: &mut Suite) -> Check {
    let sys = LtiSystem::new(Mat::zeros(1, 1), Mat::identity(1, 1)).map_err(err)?;
    let w = CostWeights::scaled_identity(1, 1, 1.0, 1.0).map_err(err)?;
    let g = optimal_gains(&sys, &w).map_err(err)?;
    let (k, kv, l) = (
        g.tracking.k[(0, 0)],
        g.tracking.kv[(0, 0)],
        g.decoupled.l[(0, 0)],
    );
    let exact = k == 0.0 && kv == 0.5 && l == 0.5;
    let c = model_cost(&sys, &w, &g.decoupled).map_err(err)?;
    let mut noise = NoiseModel::new(0.0, 1.0, 4).map_err(err)?.stream();
    let (data, _) = precollect(&sys, &Vector::from_element(1, 1.0), 20, &mut noise).map_err(err)?;
    let solver = SolverConfig {
        eta: 0.1,
        max_iters: 500,
        grad_tol: 1e-12,
        ..Default::default()
    };
    let start = Instant::now();
    let trace =
        offline_solve(&data.cov, &w, &DecoupledPolicy::zeros(1, 1), &solver).map_err(err)?;
    let secs = start.elapsed().as_secs_f64();
    let p = trace.final_policy();
    let dev = p.k[(0, 0)].abs().max((p.l[(0, 0)] - 0.5).abs());
    let ok =
        exact && (c - 1.5).abs() < 1e-12 && dev < 1e-8 && trace.records.len() <= 501 && secs < 1.0;
    Ok((
        ok,
        format!(
            "(K, Kv, L) = ({k}, {kv}, {l}), C* = {c}, offline |theta - theta*| = {dev:.1e} after {} iterations in {secs:.3}s",
            trace.records.len() - 1
        ),
    ))
}

fn random_stabilizable(
    rng: &mut ChaCha8Rng,
    max_n: usize,
    max_m: usize,
    rho: (f64, f64),
) -> LtiSystem {
    loop {
        let n = rng.random_range(1..=max_n);
        let m = rng.random_range(1..=max_m);
        let r = rng.random_range(rho.0..rho.1);
        let sys = oracle::random_system(rng, n, m, r);
        if oracle::is_stabilizable(&sys) {
            return sys;
        }
    }
}

fn random_weights(rng: &mut ChaCha8Rng, n: usize, m: usize) -> CostWeights {
    CostWeights::new(oracle::random_spd(rng, n), oracle::random_spd(rng, m)).expect("spd")
}

fn dare_correctness(suite: &mut Suite) -> Check {
    let mut rng = oracle::rng(suite.seed ^ 0xDA5E);
    let (mut worst_res, mut worst_vi) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let sys = random_stabilizable(&mut rng, 6, 4, (0.3, 1.4));
        let w = random_weights(&mut rng, sys.n(), sys.m());
        let p = solve_dare(&sys, &w).map_err(err)?;
        let vi = oracle::value_iteration(&sys, &w, 1_000_000).ok_or("value iteration stalled")?;
        worst_res = worst_res.max(oracle::riccati_residual(&sys, &w, &p));
        worst_vi = worst_vi.max((&p - &vi).norm() / vi.norm());
    }
    Ok((
        within(worst_res, 1e-10) && within(worst_vi, 1e-8),
        format!("100 systems: max residual {worst_res:.2e}, max |P - P_vi|/|P_vi| {worst_vi:.2e}"),
    ))
}

/// `K* + s E` with `s` halved until `ρ(A + BK) < 0.95`.
fn random_stabilizing(
    rng: &mut ChaCha8Rng,
    sys: &LtiSystem,
    w: &CostWeights,
) -> Result<DecoupledPolicy, String> {
    let g = optimal_gains(sys, w).map_err(err)?;
    let (n, m) = (sys.n(), sys.m());
    let mut s = 0.5;
    let e = oracle::randn(rng, m, n);
    loop {
        let k = &g.tracking.k + &e * s;
        if linalg::spectral_radius(&sys.closed_loop(&k)) < 0.95 {
            return Ok(DecoupledPolicy {
                k,
                l: oracle::randn(rng, m, n),
            });
        }
        s *= 0.5;
        if s < 1e-6 {
            return Err("no stabilizing perturbation".into());
        }
    }
}

fn relative(a: &Mat, b: &Mat) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

fn benchmark_data(sys: &LtiSystem, seed: u64, samples: usize) -> Result<CovarianceData, String> {
    let mut noise = NoiseModel::new(presets::PROCESS_STD, presets::EXPLORATION_STD, seed)
        .map_err(err)?
        .stream();
    Ok(
        precollect(sys, &Vector::zeros(sys.n()), samples, &mut noise)
            .map_err(err)?
            .0
            .cov,
    )
}

fn gradient_certification(suite: &mut Suite) -> Check {
    let mut rng = oracle::rng(suite.seed ^ 0x6AAD);
    let benchmark = plants();
    let h = 1e-6;
    let mut worst_model = 0.0f64;
    for i in 0..20 {
        let (sys, w) = if i < 10 {
            let p = &benchmark[i % 2];
            (p.sys.clone(), p.w.clone())
        } else {
            let sys = random_stabilizable(&mut rng, 5, 3, (0.5, 1.2));
            let w = random_weights(&mut rng, sys.n(), sys.m());
            (sys, w)
        };
        let theta = random_stabilizing(&mut rng, &sys, &w)?;
        let g = model_grad(&sys, &w, &theta).map_err(err)?;
        let x = theta.stacked();
        let dirs = oracle::coordinate_directions(x.nrows(), x.ncols());
        let fd = oracle::central_differences(
            |t| model_cost(&sys, &w, &DecoupledPolicy::from_stacked(t)).ok(),
            &x,
            &dirs,
            h * x.amax().max(1.0),
        )
        .ok_or("model cost undefined near a stabilizing point")?;
        let fd = Mat::from_row_iterator(x.nrows(), x.ncols(), fd);
        worst_model = worst_model.max(relative(&fd, &g));
    }
    let mut worst_data = 0.0f64;
    let mut worst_absolute = 0.0f64;
    for i in 0..20 {
        let (w, cov) = if i < 10 {
            let p = &benchmark[i % 2];
            let cov = benchmark_data(
                &p.sys,
                suite.seed.wrapping_add(i as u64),
                presets::PRECOLLECT_SAMPLES,
            )?;
            (p.w.clone(), cov)
        } else {
            let sys = random_stabilizable(&mut rng, 4, 3, (0.5, 1.1));
            let w = random_weights(&mut rng, sys.n(), sys.m());
            let cov = benchmark_data(&sys, rng.random(), 2 * (sys.n() + sys.m()) + 5)?;
            (w, cov)
        };
        note_projector(suite, &cov);
        let est = deepo_core::ls_identify(&cov).map_err(err)?;
        let theta = random_stabilizing(&mut rng, &est, &w)?;
        let xi = theta_to_xi(&theta, &cov).map_err(err)?;
        let grad = data_grad(&cov, &w, &xi).map_err(err)?;
        let basis = oracle::null_basis(&cov.xbar0());
        let x = xi.stacked();
        let mut dirs = Vec::new();
        for b in basis.column_iter() {
            for k in 0..x.ncols() {
                let mut d = Mat::zeros(x.nrows(), x.ncols());
                d.set_column(k, &b);
                dirs.push(d);
            }
        }
        let analytic = basis.transpose() * &grad;
        let cost = |s: &Mat| data_cost(&cov, &w, &CovariancePolicy::from_stacked(s)).ok();
        let fd = |step: f64| {
            oracle::central_differences(cost, &x, &dirs, step)
                .map(|v| Mat::from_row_iterator(basis.ncols(), x.ncols(), v))
                .ok_or("data cost undefined near a feasible point")
        };
        worst_data = worst_data.max(relative(&fd(h * x.amax().max(1.0))?, &analytic));
        worst_absolute = worst_absolute.max(relative(&fd(h)?, &analytic));
    }
    Ok((
        within(worst_model, 1e-5) && within(worst_data, 1e-5),
        format!(
            "20 + 20 points (10 each on the 4-state system), step 1e-6 times the largest entry: max relative error model {worst_model:.2e}, data {worst_data:.2e} (unscaled step on data: {worst_absolute:.2e})"
        ),
    ))
}

fn cost_forms(suite: &mut Suite) -> Check {
    let mut rng = oracle::rng(suite.seed ^ 0xC057);
    let (mut worst_alt, mut worst_sum) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let sys = random_stabilizable(&mut rng, 5, 3, (0.3, 1.2));
        let w = random_weights(&mut rng, sys.n(), sys.m());
        let theta = random_stabilizing(&mut rng, &sys, &w)?;
        let c = model_cost(&sys, &w, &theta).map_err(err)?;
        let alt = model_cost_alt(&sys, &w, &theta).map_err(err)?;
        let mut sum = 0.0;
        for i in 0..sys.n() {
            sum += per_setpoint_cost(&sys, &w, &theta, i).map_err(err)?;
        }
        worst_alt = worst_alt.max((c - alt).abs() / (1.0 + c));
        worst_sum = worst_sum.max((c - sum).abs() / (1.0 + c));
    }
    Ok((
        within(worst_alt, 1e-9) && within(worst_sum, 1e-9),
        format!("100 draws: max |C - C_alt|/(1+C) {worst_alt:.2e}, max |C - sum_i C_i|/(1+C) {worst_sum:.2e}"),
    ))
}

fn dual_path(suite: &mut Suite) -> Check {
    let p = &plants()[0];
    let cov = benchmark_data(&p.sys, suite.seed, presets::PRECOLLECT_SAMPLES)?;
    note_projector(suite, &cov);
    let theta0 = DecoupledPolicy::zeros(p.sys.n(), p.sys.m());
    let eta = max_stable_step(&cov, &p.w, &theta0, 1.0, 1.0, 50).map_err(err)?;
    let pi = projection(&cov);
    let mut xi = theta_to_xi(&theta0, &cov).map_err(err)?;
    let mut theta = theta0;
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let cache = DataCostCache::new(&cov, &p.w, &xi).map_err(err)?;
        xi = projected_step(&cache, &pi, &xi, eta, 1.0).0;
        theta = offline_step_model_equiv(&cov, &p.w, &theta, eta, 1.0).map_err(err)?;
        let via_data = xi_to_theta(&xi, &cov);
        worst = worst.max((via_data.stacked() - theta.stacked()).norm());
    }
    Ok((
        within(worst, 1e-9),
        format!(
            "50 steps at eta = {eta:.3e} on T = 9 data: max |theta_data - theta_model| {worst:.2e}"
        ),
    ))
}

fn offline_shared(suite: &mut Suite) -> Result<&Vec<OfflineShared>, String> {
    if suite.offline.is_none() {
        let mut all = Vec::new();
        for plant in plants() {
            let runs = offline_runs(suite, &plant, OFFLINE_SAMPLES)?;
            all.push(OfflineShared { plant, runs });
        }
        suite.offline = Some(all);
    }
    Ok(suite.offline.as_ref().expect("just set"))
}

fn ce_equivalence(suite: &mut Suite) -> Check {
    let shared = offline_shared(suite)?;
    let mut ok = true;
    let mut parts = Vec::new();
    for s in shared {
        let mut worst = 0.0f64;
        let mut iters = Vec::new();
        for r in &s.runs {
            let sv = &r.solves[0];
            worst = worst.max(sv.gain_errors[sv.gain_errors.len() - 1]);
            ok &= sv.status == SolverStatus::Converged;
            iters.push(sv.iterations());
        }
        ok &= within(worst, 1e-6);
        parts.push(format!(
            "{}: max relative |theta - theta_CE| {worst:.2e}, iterations {}..{}",
            s.plant.label,
            iters.iter().min().unwrap_or(&0),
            iters.iter().max().unwrap_or(&0)
        ));
    }
    Ok((
        ok,
        format!(
            "T = {OFFLINE_SAMPLES}, {} seeds; {}",
            suite.runs,
            parts.join("; ")
        ),
    ))
}

fn linear_convergence(suite: &mut Suite) -> Check {
    let shared = offline_shared(suite)?;
    let mut ok = true;
    let mut parts = Vec::new();
    for s in shared {
        let mut r2 = Vec::new();
        let mut rho = Vec::new();
        for r in &s.runs {
            match fit::log_gap_segment(&r.solves[0].gaps, 1e-1, 1e-8) {
                Some((_, _, f)) => {
                    r2.push(f.r2);
                    rho.push(10f64.powf(f.slope));
                }
                None => ok = false,
            }
        }
        let min_r2 = r2.iter().copied().fold(f64::INFINITY, f64::min);
        ok &= r2.len() == s.runs.len() && min_r2 > 0.99;
        parts.push(format!(
            "{}: {}/{} runs traverse 1e-1..1e-8, min R^2 {min_r2:.5}, mean rho {:.6}",
            s.plant.label,
            r2.len(),
            s.runs.len(),
            fit::mean(&rho)
        ));
    }
    Ok((ok, parts.join("; ")))
}

fn noiseless_residual(
    sys: &LtiSystem,
    w: &CostWeights,
    policy: &TrackingPolicy,
    reference: &deepo_core::ReferenceSignal,
    steps: usize,
) -> Result<f64, String> {
    let mut quiet = NoiseModel::new(0.0, 0.0, 0).map_err(err)?.stream();
    let roll = tracking_rollout(
        sys,
        w,
        policy,
        &sys.closed_loop(&policy.k),
        reference,
        &mut quiet,
        &Vector::zeros(sys.n()),
        steps,
    )
    .map_err(err)?;
    Ok(roll.mean_sq_error)
}

/// Mean deployment cost of DeePO, CE and the optimal policy, plus the least
/// noise-free tracking residual over all policies.
fn parity(
    cfg: &ExperimentConfig,
    plant: &Plant,
    runs: &[OfflineRun],
    steps: usize,
) -> Result<([f64; 3], f64), String> {
    let (sys, w) = (&plant.sys, &plant.w);
    let reference = presets::benchmark_reference(steps);
    let opt = optimal_gains(sys, w).map_err(err)?;
    let mut costs = [0.0f64; 3];
    let mut residual = f64::INFINITY;
    for r in runs {
        let deepo =
            experiment::tracking_form(&r.data.cov, w, &r.solves[0].final_policy).map_err(err)?;
        let policies = [deepo, r.ce.gains.tracking.clone(), opt.tracking.clone()];
        for (slot, p) in policies.iter().enumerate() {
            let roll =
                experiment::deploy(cfg, sys, w, p, &reference, r.seed, steps).map_err(err)?;
            costs[slot] += roll.average_cost / runs.len() as f64;
            residual = residual.min(noiseless_residual(sys, w, p, &reference, steps)?);
        }
    }
    Ok((costs, residual))
}

fn offline_runs(
    suite: &mut Suite,
    plant: &Plant,
    samples: usize,
) -> Result<Vec<OfflineRun>, String> {
    let cfg = base_config(suite.seed, suite.runs, samples);
    let protocol = OfflineProtocol {
        samples,
        eta: None,
        sweep: vec![1.0],
        search_factor: 1.0,
        max_iters: 300_000,
        grad_tol: 1e-10,
        stride: usize::MAX,
    };
    let runs = (0..suite.runs)
        .map(|i| offline_run(&cfg, &plant.sys, &plant.w, cfg.run_seed(i), &protocol).map_err(err))
        .collect::<Result<Vec<_>, _>>()?;
    for r in &runs {
        note_projector(suite, &r.data.cov);
    }
    Ok(runs)
}

fn tracking_parity(suite: &mut Suite) -> Check {
    let steps = presets::DEPLOY_STEPS;
    let (seed, runs) = (suite.seed, suite.runs);
    let power = (0..steps)
        .map(|t| {
            presets::benchmark_reference(steps)
                .reference_at(t)
                .map(|z| z.norm_squared())
        })
        .sum::<Result<f64, _>>()
        .map_err(err)?
        / steps as f64;
    let mut ok = true;
    let mut parts = Vec::new();
    for plant in plants() {
        let long = offline_runs(suite, &plant, PARITY_SAMPLES)?;
        let cfg = base_config(seed, runs, PARITY_SAMPLES);
        let (c, residual) = parity(&cfg, &plant, &long, steps)?;
        let vs_ce = (c[0] - c[1]).abs() / c[1];
        let vs_opt = (c[0] - c[2]) / c[2];
        ok &= vs_ce <= 0.02 && vs_opt <= 0.05;
        let mut line = format!(
            "{}: cost deepo {:.3}, ce {:.3}, optimal {:.3} (vs CE {:.3}%, vs optimal {:.2}%)",
            plant.label,
            c[0],
            c[1],
            c[2],
            100.0 * vs_ce,
            100.0 * vs_opt
        );
        if plant.label == "under" {
            ok &= residual > 1e-9 * power;
            line.push_str(&format!(", min noise-free residual {residual:.3e}"));
        }
        suite.parity.extend(long);
        parts.push(line);
    }

    // shorter data lengths, as diagnostics
    let mut short = Vec::new();
    let shared = offline_shared(suite)?;
    let cfg = base_config(seed, runs, OFFLINE_SAMPLES);
    for s in shared {
        let (c, _) = parity(&cfg, &s.plant, &s.runs, steps)?;
        short.push(format!(
            "T = {OFFLINE_SAMPLES} {} deepo vs optimal {:.2}%",
            s.plant.label,
            100.0 * (c[0] / c[2] - 1.0)
        ));
    }
    let cfg9 = base_config(seed, runs, presets::PRECOLLECT_SAMPLES);
    for p in plants() {
        let reference = presets::benchmark_reference(steps);
        let opt = optimal_gains(&p.sys, &p.w).map_err(err)?;
        let (mut ratio, mut stable) = (0.0, 0usize);
        for i in 0..runs {
            let (data, _, _) = experiment::prepare_data(
                &cfg9,
                &p.sys,
                cfg9.run_seed(i),
                presets::PRECOLLECT_SAMPLES,
            )
            .map_err(err)?;
            let Ok(ce) = deepo_core::ce_solution(&data.cov, &p.w) else {
                continue;
            };
            let seed = cfg9.run_seed(i);
            let ce_roll = experiment::deploy(
                &cfg9,
                &p.sys,
                &p.w,
                &ce.gains.tracking,
                &reference,
                seed,
                steps,
            );
            let opt_roll =
                experiment::deploy(&cfg9, &p.sys, &p.w, &opt.tracking, &reference, seed, steps);
            if let (Ok(a), Ok(b)) = (ce_roll, opt_roll) {
                ratio += a.average_cost / b.average_cost;
                stable += 1;
            }
        }
        short.push(format!(
            "T = 9 {} CE stable {}/{}, mean cost ratio to optimal {:.2}",
            p.label,
            stable,
            runs,
            ratio / stable.max(1) as f64
        ));
    }
    Ok((
        ok,
        format!(
            "T = {PARITY_SAMPLES}, {runs} seeds; {}; diagnostics: {}",
            parts.join("; "),
            short.join(", ")
        ),
    ))
}

fn online_shared(suite: &mut Suite) -> Result<&Vec<OnlineDigest>, String> {
    if suite.online.is_none() {
        let cfg = base_config(suite.seed, suite.runs, presets::PRECOLLECT_SAMPLES);
        let p = &plants()[0];
        let steps = cfg.online.steps;
        let reference = presets::benchmark_reference(steps + cfg.online.preview + 1);
        let mut digests = Vec::new();
        for factor in presets::ETA_H_SWEEP {
            for i in 0..suite.runs {
                let protocol = OnlineProtocol {
                    samples: presets::PRECOLLECT_SAMPLES,
                    config: OnlineConfig {
                        eta: cfg.online.eta,
                        eta_h_factor: factor,
                        preview: cfg.online.preview,
                        steps,
                        ..Default::default()
                    },
                    keep_stride: None,
                };
                let d = online_digest(&cfg, &p.sys, &p.w, &reference, cfg.run_seed(i), &protocol)
                    .map_err(err)?;
                suite.projector_error = suite.projector_error.max(d.projector_error);
                suite.datasets += 1;
                digests.push(d);
            }
        }
        suite.online = Some(digests);
    }
    Ok(suite.online.as_ref().expect("just set"))
}

fn group(digests: &[OnlineDigest], factor: f64) -> Vec<&OnlineDigest> {
    digests.iter().filter(|d| d.eta_h == factor).collect()
}

fn late_floor(gap: &[f64]) -> f64 {
    fit::mean(&gap[gap.len() - (gap.len() / 10).max(1)..])
}

fn online_behavior(suite: &mut Suite) -> Check {
    let digests = online_shared(suite)?;
    let main = group(digests, 1.0);
    let gap = average(&main.iter().map(|d| d.gap.as_slice()).collect::<Vec<_>>());
    let snr = average(&main.iter().map(|d| d.snr.as_slice()).collect::<Vec<_>>());
    let g0 = fit::mean(&main.iter().map(|d| d.initial_gap).collect::<Vec<_>>());
    let floor = late_floor(&gap);
    let decades = (g0 / floor).log10();

    // early phase: until the average first comes within 100x of the floor
    let end = gap
        .iter()
        .position(|g| *g <= 100.0 * floor)
        .ok_or("gap never nears its floor")?;
    let x: Vec<f64> = (0..=end).map(|t| t as f64).collect();
    let y: Vec<f64> = gap[..=end].iter().map(|g| g.log10()).collect();
    let early = fit::linear_fit(&x, &y).ok_or("early phase too short")?;
    let rho = 10f64.powf(early.slope);

    // floor model g0 rho^t + c / SNR_t: c from the first half of the late
    // phase, checked on the second half
    let late = &gap[end..];
    let half = late.len() / 2;
    let transient = |t: usize| g0 * rho.powf(t as f64);
    let c = (end..end + half)
        .map(|t| (gap[t] - transient(t)).max(0.0) * snr[t])
        .fold(0.0, f64::max);
    let violations = (end + half..gap.len())
        .filter(|&t| gap[t] > transient(t) + c / snr[t])
        .count();
    let max_x = digests.iter().map(|d| d.max_norm_x()).fold(0.0, f64::max);
    let completed = digests
        .iter()
        .all(|d| d.status == OnlineStatus::Completed && d.max_norm_x().is_finite());
    let ok = decades >= 2.0 && early.r2 > 0.95 && violations == 0 && completed;
    Ok((
        ok,
        format!(
            "{} runs, eta = 5e-4, eta_h = 1: gap {g0:.3e} -> floor {floor:.3e} ({decades:.2} decades); early phase t < {end}: rho {rho:.6}, R^2 {:.4}; c = {c:.3e}, held-out violations {violations}/{}; max |x_t| {max_x:.2} over all {} runs",
            main.len(),
            early.r2,
            gap.len() - end - half,
            digests.len()
        ),
    ))
}

fn offline_sweep(suite: &mut Suite) -> Result<&Vec<(&'static str, Vec<OfflineRun>)>, String> {
    if suite.sweep.is_none() {
        let cfg = base_config(suite.seed, suite.runs, OFFLINE_SAMPLES);
        let sweep = presets::ETA_H_SWEEP.to_vec();
        let protocol = OfflineProtocol {
            samples: OFFLINE_SAMPLES,
            eta: None,
            search_factor: sweep.iter().copied().fold(1.0, f64::max),
            sweep,
            max_iters: 10_000,
            grad_tol: 1e-10,
            stride: usize::MAX,
        };
        let mut all = Vec::new();
        for plant in plants() {
            let runs = (0..suite.runs)
                .map(|i| {
                    offline_run(&cfg, &plant.sys, &plant.w, cfg.run_seed(i), &protocol).map_err(err)
                })
                .collect::<Result<Vec<_>, _>>()?;
            all.push((plant.label, runs));
        }
        suite.sweep = Some(all);
    }
    Ok(suite.sweep.as_ref().expect("just set"))
}

fn h_sweep(suite: &mut Suite) -> Check {
    let mut ok = true;
    let mut parts = Vec::new();
    for (label, runs) in offline_sweep(suite)? {
        let mut means = Vec::new();
        for (idx, factor) in presets::ETA_H_SWEEP.iter().enumerate() {
            let hits: Vec<f64> = runs
                .iter()
                .filter_map(|r| r.solves[idx].first_below(1e-1).map(|k| k as f64))
                .collect();
            ok &= hits.len() == runs.len();
            means.push((factor, fit::mean(&hits)));
        }
        ok &= means.windows(2).all(|p| p[1].1 <= p[0].1);
        let text: Vec<String> = means.iter().map(|(f, m)| format!("{f}: {m:.0}")).collect();
        parts.push(format!(
            "offline {label} mean iterations to gap 1e-1 {}",
            text.join(", ")
        ));
    }
    let digests = online_shared(suite)?;
    let floors: Vec<(f64, f64)> = presets::ETA_H_SWEEP
        .iter()
        .map(|&f| {
            let g = group(digests, f);
            (
                f,
                late_floor(&average(
                    &g.iter().map(|d| d.gap.as_slice()).collect::<Vec<_>>(),
                )),
            )
        })
        .collect();
    let hi = floors.iter().map(|f| f.1).fold(0.0, f64::max);
    let lo = floors.iter().map(|f| f.1).fold(f64::INFINITY, f64::min);
    ok &= hi <= 2.0 * lo;
    let text: Vec<String> = floors
        .iter()
        .map(|(f, v)| format!("{f}: {v:.3e}"))
        .collect();
    parts.push(format!(
        "online floors {} (ratio {:.2})",
        text.join(", "),
        hi / lo
    ));
    Ok((ok, parts.join("; ")))
}

fn excitation(suite: &mut Suite) -> Check {
    let digests = online_shared(suite)?;
    let violations: usize = digests.iter().map(|d| d.gamma_violations).sum();
    let main = group(digests, 1.0);
    let sm = average(
        &main
            .iter()
            .map(|d| d.sigma_min_m.as_slice())
            .collect::<Vec<_>>(),
    );
    let su = average(
        &main
            .iter()
            .map(|d| d.sigma_min_u.as_slice())
            .collect::<Vec<_>>(),
    );
    let idx: Vec<usize> = (0..sm.len()).step_by(50).collect();
    let x: Vec<f64> = idx.iter().map(|&t| t as f64).collect();
    let y: Vec<f64> = idx.iter().map(|&t| sm[t]).collect();
    let ts = fit::theil_sen(&x, &y).ok_or("too few samples")?;
    let drift = ts.high < 0.0;
    let level = fit::mean(&y);
    // sigma_min of the raw U0 against sqrt(t)
    let tail = sm.len() - 1;
    let u_ratio = su[tail] / (su[tail / 2] * std::f64::consts::SQRT_2);
    let hard = violations == 0;
    let mut detail = format!(
        "gamma^4 violations {violations} over {} runs; sigma_min(M_t) mean {level:.4}, Theil-Sen slope {:.3e}/step (95% band {:.3e}..{:.3e}, {:.2}% of level over the horizon); raw sigma_min(U0) growth vs sqrt(t) {u_ratio:.3}",
        digests.len(),
        ts.slope,
        ts.low,
        ts.high,
        100.0 * ts.slope * sm.len() as f64 / level
    );
    if !hard {
        detail.push_str("; hard check failed");
    }
    if drift {
        detail.push_str("; significant negative drift");
    }
    Ok((hard && !drift, detail))
}

/// Id, title, budget in seconds, evaluator.
type Criterion = (u8, &'static str, u64, fn(&mut Suite) -> Check);

fn constraints(suite: &mut Suite) -> Check {
    // worst residual and update count per source
    let mut parts: Vec<(&str, f64, usize)> = Vec::new();
    let digest = |solves: &mut dyn Iterator<Item = &OfflineSolve>| {
        solves.fold((0.0f64, 0usize), |(w, n), sv| {
            (w.max(sv.max_residual), n + sv.iterations())
        })
    };
    if let Some(shared) = &suite.offline {
        let (w, n) = digest(&mut shared.iter().flat_map(|s| &s.runs).flat_map(|r| &r.solves));
        parts.push(("offline", w, n));
    }
    let (w, n) = digest(&mut suite.parity.iter().flat_map(|r| &r.solves));
    parts.push(("parity", w, n));
    if let Some(sweep) = &suite.sweep {
        let (w, n) = digest(&mut sweep.iter().flat_map(|s| &s.1).flat_map(|r| &r.solves));
        parts.push(("sweep", w, n));
    }
    if let Some(online) = &suite.online {
        let w = online
            .iter()
            .map(|d| d.max_constraint_residual)
            .fold(0.0, f64::max);
        let n = online.iter().map(|d| d.gap.len() - d.skipped).sum();
        parts.push(("online", w, n));
    }
    let worst = parts.iter().map(|p| p.1).fold(0.0, f64::max);
    let updates: usize = parts.iter().map(|p| p.2).sum();
    let ok = updates > 0 && within(worst, 1e-8) && suite.projector_error < 1e-11;
    let by_source: Vec<String> = parts
        .iter()
        .map(|(k, w, _)| format!("{k} {w:.2e}"))
        .collect();
    Ok((
        ok,
        format!(
            "{updates} updates: max |X0 V - I| + |X0 H| {worst:.2e} ({}); projector error {:.2e} over {} datasets",
            by_source.join(", "),
            suite.projector_error,
            suite.datasets
        ),
    ))
}
