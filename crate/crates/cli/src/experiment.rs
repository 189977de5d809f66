//! End-to-end offline and online experiments with CSV artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use deepo_core::{
    ce_solution, l_to_kv, linalg, max_stable_step, model_cost, offline_solve, online_run,
    optimal_gains, pe_check, precollect, projection, scaling_matrix, snr_diagnostics, theta_to_xi,
    tracking_rollout, CeSolution, CostWeights, CovarianceData, Dataset, DecoupledPolicy,
    IterationRecord, LtiSystem, Mat, NoiseStream, OnlineConfig, OnlineRecord, OnlineState,
    OnlineStatus, ReferenceSignal, SkipReason, SolverConfig, SolverStatus, SolverTrace,
    TrackingPolicy, Vector,
};
use log::info;
use rayon::prelude::*;

use crate::config::{ExperimentConfig, Plant};
use crate::fit;
use crate::CliError;

/// One pass/fail assertion raised by an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

/// Files written by an experiment plus its findings.
#[derive(Debug, Clone, Default)]
pub struct ArtifactSet {
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub findings: Vec<String>,
    pub checks: Vec<Check>,
}

impl ArtifactSet {
    fn new(out_dir: &Path) -> Self {
        Self {
            out_dir: out_dir.to_path_buf(),
            ..Default::default()
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn table(
        &mut self,
        name: &str,
        header: Vec<String>,
        rows: Vec<Vec<String>>,
    ) -> Result<(), CliError> {
        let path = self.out_dir.join(name);
        let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::io(&path, e))?;
        w.write_record(&header)
            .map_err(|e| CliError::io(&path, e))?;
        for row in rows {
            w.write_record(&row).map_err(|e| CliError::io(&path, e))?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
        self.files.push(path);
        Ok(())
    }
}

/// Which figure family each artifact prefix belongs to.
pub const FIGURE_MAP: &[(&str, &str)] = &[
    (
        "fig1_",
        "offline convergence: cost gap and gain error per iteration",
    ),
    (
        "fig2_",
        "offline tracking: DeePO vs CE vs optimal deployment",
    ),
    (
        "fig3_",
        "online convergence: optimality gap and tracking trajectory",
    ),
    ("fig4_", "H-block step size sweep, offline and online"),
    (
        "fig5_",
        "excitation: sigma_min of U0 and of M over the online run",
    ),
];

fn num(x: f64) -> String {
    format!("{x}")
}

fn mat_entries(m: &Mat) -> impl Iterator<Item = String> + '_ {
    (0..m.nrows()).flat_map(move |i| (0..m.ncols()).map(move |j| num(m[(i, j)])))
}

fn mat_header(name: &str, rows: usize, cols: usize) -> Vec<String> {
    (0..rows)
        .flat_map(|i| (0..cols).map(move |j| format!("{name}_{}_{}", i + 1, j + 1)))
        .collect()
}

fn vec_header(name: &str, len: usize) -> Vec<String> {
    (1..=len).map(|i| format!("{name}{i}")).collect()
}

fn trace_header(index: &str, n: usize, m: usize) -> Vec<String> {
    let mut h: Vec<String> = [
        index,
        "cost",
        "gap",
        "norm_x",
        "snr",
        "sigma_min_M",
        "sigma_min_U",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    h.extend(mat_header("K", m, n));
    h.extend(mat_header("L", m, n));
    h
}

/// Pre-collected data and the noise stream that continues after it.
pub fn prepare_data(
    cfg: &ExperimentConfig,
    sys: &LtiSystem,
    seed: u64,
    samples: usize,
) -> Result<(Dataset, Vector, NoiseStream), CliError> {
    let mut noise = cfg.noise.model(seed)?.stream();
    let (data, x) = precollect(sys, &cfg.x0(sys.n()), samples, &mut noise)?;
    Ok((data, x, noise))
}

/// One offline solve reduced to per-iteration series.
#[derive(Debug, Clone)]
pub struct OfflineSolve {
    pub factor: f64,
    pub status: SolverStatus,
    pub costs: Vec<f64>,
    /// `C(θ_k) − C_CE` on the identified model.
    pub gaps: Vec<f64>,
    pub gain_errors: Vec<f64>,
    pub proj_grad_norms: Vec<f64>,
    /// Max of `|X̄₀V−I|_F + |X̄₀H|_F` over the iterates.
    pub max_residual: f64,
    pub final_policy: DecoupledPolicy,
    /// Every `stride`-th iterate.
    pub kept: Vec<IterationRecord>,
}

impl OfflineSolve {
    pub fn iterations(&self) -> usize {
        self.costs.len() - 1
    }

    pub fn monotone(&self) -> bool {
        self.costs.windows(2).all(|p| p[1] <= p[0] * (1.0 + 1e-12))
    }

    /// First iteration with gap below `level`.
    pub fn first_below(&self, level: f64) -> Option<usize> {
        self.gaps.iter().position(|g| *g < level)
    }
}

/// Offline solves of one Monte Carlo run, one per `η_H` factor.
#[derive(Debug, Clone)]
pub struct OfflineRun {
    pub seed: u64,
    pub data: Dataset,
    pub ce: CeSolution,
    pub eta: f64,
    pub solves: Vec<OfflineSolve>,
}

fn digest_solve(
    trace: SolverTrace,
    factor: f64,
    ce: &CeSolution,
    w: &CostWeights,
    stride: usize,
) -> OfflineSolve {
    let star = ce.gains.decoupled.stacked();
    let scale = star.norm().max(f64::MIN_POSITIVE);
    let len = trace.records.len();
    let mut out = OfflineSolve {
        factor,
        status: trace.status,
        costs: Vec::with_capacity(len),
        gaps: Vec::with_capacity(len),
        gain_errors: Vec::with_capacity(len),
        proj_grad_norms: Vec::with_capacity(len),
        max_residual: 0.0,
        final_policy: trace.final_policy().clone(),
        kept: Vec::new(),
    };
    for r in trace.records {
        out.costs.push(r.cost);
        out.gaps
            .push(model_cost(&ce.model, w, &r.policy).unwrap_or(f64::INFINITY) - ce.cost);
        out.gain_errors
            .push((r.policy.stacked() - &star).norm() / scale);
        out.proj_grad_norms.push(r.proj_grad_norm);
        out.max_residual = out.max_residual.max(r.v_residual + r.h_residual);
        if r.k % stride == 0 || r.k + 1 == len {
            out.kept.push(r);
        }
    }
    out
}

/// Parameters of one offline protocol.
#[derive(Debug, Clone)]
pub struct OfflineProtocol {
    pub samples: usize,
    pub eta: Option<f64>,
    pub sweep: Vec<f64>,
    /// `η_H` factor the step size search must be stable for.
    pub search_factor: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub stride: usize,
}

pub fn offline_run(
    cfg: &ExperimentConfig,
    sys: &LtiSystem,
    w: &CostWeights,
    seed: u64,
    protocol: &OfflineProtocol,
) -> Result<OfflineRun, CliError> {
    let (data, _, _) = prepare_data(cfg, sys, seed, protocol.samples)?;
    let ce = ce_solution(&data.cov, w)?;
    let theta0 = DecoupledPolicy::zeros(sys.n(), sys.m());
    let eta = match protocol.eta {
        Some(eta) => eta,
        None => max_stable_step(&data.cov, w, &theta0, 1.0, protocol.search_factor, 2000)?,
    };
    let mut solves = Vec::with_capacity(protocol.sweep.len());
    for &factor in &protocol.sweep {
        let solver = SolverConfig {
            eta,
            eta_h_factor: factor,
            max_iters: protocol.max_iters,
            grad_tol: protocol.grad_tol,
        };
        let trace = offline_solve(&data.cov, w, &theta0, &solver)?;
        solves.push(digest_solve(trace, factor, &ce, w, protocol.stride));
    }
    Ok(OfflineRun {
        seed,
        data,
        ce,
        eta,
        solves,
    })
}

/// Deploys a tracking policy from rest with a fixed rollout noise seed.
pub fn deploy(
    cfg: &ExperimentConfig,
    sys: &LtiSystem,
    w: &CostWeights,
    policy: &TrackingPolicy,
    reference: &ReferenceSignal,
    seed: u64,
    steps: usize,
) -> Result<deepo_core::Rollout, CliError> {
    let mut noise = cfg.noise.model(rollout_seed(seed))?.stream();
    Ok(tracking_rollout(
        sys,
        w,
        policy,
        &sys.closed_loop(&policy.k),
        reference,
        &mut noise,
        &cfg.x0(sys.n()),
        steps,
    )?)
}

/// Keeps deployment noise independent of the data noise of the same run.
pub fn rollout_seed(seed: u64) -> u64 {
    seed ^ 0x5DEE_CE66_D1CE_5EED
}

/// Feedback/feedforward form of a decoupled policy, with `K_v` recovered
/// through the data-based closed loop `X̄₁V`.
pub fn tracking_form(
    cov: &CovarianceData,
    w: &CostWeights,
    theta: &DecoupledPolicy,
) -> Result<TrackingPolicy, CliError> {
    let xi = theta_to_xi(theta, cov)?;
    let kv = l_to_kv(&theta.l, &xi.closed_loop(cov), w)?;
    Ok(TrackingPolicy {
        k: theta.k.clone(),
        kv,
    })
}

pub fn run_offline_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<ArtifactSet, CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let mut art = ArtifactSet::new(out);
    let protocol = OfflineProtocol {
        samples: cfg.data.precollect,
        eta: cfg.offline.eta,
        sweep: cfg.offline.eta_h_sweep.clone(),
        search_factor: cfg.offline.eta_h_sweep.iter().copied().fold(1.0, f64::max),
        max_iters: cfg.offline.max_iters,
        grad_tol: cfg.offline.grad_tol,
        stride: cfg.offline.trace_stride,
    };
    let mut summary_rows = Vec::new();
    for Plant { label, sys } in cfg.system.plants()? {
        let (n, m) = (sys.n(), sys.m());
        let w = cfg.weights.build(n, m)?;
        let opt = optimal_gains(&sys, &w)?;
        let horizon = cfg.offline.deploy_steps;
        let reference = cfg.reference.build(n, horizon)?;
        info!("offline {label}: {} runs", cfg.runs);
        let base = sweep_position(&protocol.sweep, 1.0).unwrap_or(0);
        let runs: Vec<Result<OfflineRun, CliError>> = (0..cfg.runs)
            .into_par_iter()
            .map(|i| {
                // only run 0 carries the full sweep
                let mut p = protocol.clone();
                if i > 0 {
                    p.sweep = vec![protocol.sweep[base]];
                }
                offline_run(cfg, &sys, &w, cfg.run_seed(i), &p)
            })
            .collect();
        let runs: Vec<OfflineRun> = runs.into_iter().collect::<Result<_, _>>()?;
        let deployed = |run: &OfflineRun| if run.solves.len() == 1 { 0 } else { base };

        // convergence trace of run 0
        let first = &runs[0];
        let solve = &first.solves[base];
        let diag = snr_diagnostics(&first.data.log, &first.data.cov, None)?;
        let sm = scaling_matrix(&first.data.cov)?;
        let mut header = trace_header("k", n, m);
        header.insert(3, "gain_err".into());
        header.insert(4, "proj_grad_norm".into());
        let rows = solve
            .kept
            .iter()
            .map(|r| {
                let mut row = vec![
                    r.k.to_string(),
                    num(r.cost),
                    num(solve.gaps[r.k]),
                    num(solve.gain_errors[r.k]),
                    num(r.proj_grad_norm),
                    "nan".into(),
                    num(diag.snr),
                    num(sm.sigma_min),
                    num(diag.sigma_min_u_raw),
                ];
                row.extend(mat_entries(&r.policy.k));
                row.extend(mat_entries(&r.policy.l));
                row
            })
            .collect();
        art.table(
            &format!("fig1_offline_convergence_{label}.csv"),
            header,
            rows,
        )?;

        let gaps = &solve.gaps;
        art.findings.push(match fit::log_gap_segment(gaps, 1e-1, 1e-8) {
            Some((s, e, f)) => format!(
                "offline {label}: eta = {:.3e}, linear rate rho = {:.6}, R^2 = {:.4} over k = {s}..{e}; final gap {:.3e} after {} iterations ({:?})",
                first.eta,
                10f64.powf(f.slope),
                f.r2,
                gaps[gaps.len() - 1],
                solve.iterations(),
                solve.status
            ),
            None => format!(
                "offline {label}: eta = {:.3e}, gap {:.3e} -> {:.3e} after {} iterations ({:?}); the 1e-1..1e-8 window was not traversed",
                first.eta,
                gaps[0],
                gaps[gaps.len() - 1],
                solve.iterations(),
                solve.status
            ),
        });

        // H-block sweep on run 0
        let mut rows = Vec::new();
        for sv in &first.solves {
            let stride = cfg.offline.trace_stride;
            for (k, g) in sv.gaps.iter().enumerate().filter(|(k, _)| k % stride == 0) {
                rows.push(vec![num(sv.factor), k.to_string(), num(*g)]);
            }
            art.findings.push(format!(
                "offline {label} eta_h = {}: first k with gap < 1e-1 = {}",
                sv.factor,
                sv.first_below(1e-1)
                    .map_or("never".to_string(), |k| k.to_string())
            ));
        }
        art.table(
            &format!("fig4_hsweep_offline_{label}.csv"),
            vec!["eta_h".into(), "k".into(), "gap".into()],
            rows,
        )?;

        let mut bad = Vec::new();
        for run in &runs {
            for sv in &run.solves {
                if sv.status == SolverStatus::InfeasibleStep
                    || !sv.monotone()
                    || sv.max_residual >= 1e-8
                {
                    bad.push(format!(
                        "seed {} eta_h {}: {:?}, monotone {}, residual {:.2e}",
                        run.seed,
                        sv.factor,
                        sv.status,
                        sv.monotone(),
                        sv.max_residual
                    ));
                }
            }
        }
        art.checks.push(Check::new(
            format!("offline {label} iterates"),
            bad.is_empty(),
            if bad.is_empty() {
                "feasible, non-increasing cost, constraints held".to_string()
            } else {
                bad.join("; ")
            },
        ));

        // deployment
        let mut traj = Vec::new();
        let mut sums = [0.0f64; 3];
        let mut counted = [0usize; 3];
        for (i, run) in runs.iter().enumerate() {
            let theta = &run.solves[deployed(run)].final_policy;
            let candidates: [(&str, Result<TrackingPolicy, CliError>); 3] = [
                ("deepo", tracking_form(&run.data.cov, &w, theta)),
                ("ce", Ok(run.ce.gains.tracking.clone())),
                ("optimal", Ok(opt.tracking.clone())),
            ];
            for (slot, (name, policy)) in candidates.into_iter().enumerate() {
                let result =
                    policy.and_then(|p| deploy(cfg, &sys, &w, &p, &reference, run.seed, horizon));
                match result {
                    Ok(roll) => {
                        sums[slot] += roll.average_cost;
                        counted[slot] += 1;
                        summary_rows.push(vec![
                            label.clone(),
                            run.seed.to_string(),
                            name.to_string(),
                            "ok".into(),
                            num(roll.average_cost),
                            num(roll.mean_sq_error),
                        ]);
                        if i == 0 {
                            for (t, (x, z)) in roll.states.iter().zip(&roll.references).enumerate()
                            {
                                let mut row = vec![name.to_string(), t.to_string()];
                                row.extend(x.iter().map(|v| num(*v)));
                                row.extend(z.iter().map(|v| num(*v)));
                                traj.push(row);
                            }
                        }
                    }
                    Err(e) => summary_rows.push(vec![
                        label.clone(),
                        run.seed.to_string(),
                        name.to_string(),
                        format!("failed: {e}"),
                        "inf".into(),
                        "inf".into(),
                    ]),
                }
            }
        }
        let mut header = vec!["policy".to_string(), "t".to_string()];
        header.extend(vec_header("x", n));
        header.extend(vec_header("z", n));
        art.table(&format!("fig2_tracking_{label}.csv"), header, traj)?;
        let avg = |s: usize| {
            if counted[s] > 0 {
                sums[s] / counted[s] as f64
            } else {
                f64::NAN
            }
        };
        art.findings.push(format!(
            "tracking {label}: mean cost deepo {:.4} ({}/{} runs), ce {:.4} ({}/{}), optimal {:.4}",
            avg(0),
            counted[0],
            runs.len(),
            avg(1),
            counted[1],
            runs.len(),
            avg(2)
        ));
    }
    art.table(
        "fig2_tracking_summary.csv",
        [
            "plant",
            "seed",
            "policy",
            "status",
            "average_cost",
            "mean_sq_error",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect(),
        summary_rows,
    )?;
    Ok(art)
}

fn sweep_position(sweep: &[f64], factor: f64) -> Option<usize> {
    sweep.iter().position(|f| *f == factor)
}

/// Per-step series of one online run, without the recorded matrices.
#[derive(Debug, Clone)]
pub struct OnlineDigest {
    pub seed: u64,
    pub eta_h: f64,
    pub status: OnlineStatus,
    pub initial_gap: f64,
    pub gap: Vec<f64>,
    pub norm_x: Vec<f64>,
    pub snr: Vec<f64>,
    pub sigma_min_m: Vec<f64>,
    pub norm_m: Vec<f64>,
    pub gamma4: Vec<f64>,
    pub sigma_min_u: Vec<f64>,
    pub running_cost: Vec<f64>,
    /// Steps where `σ_min(M_t) < γ_t⁴`.
    pub gamma_violations: usize,
    pub max_constraint_residual: f64,
    pub skipped: usize,
    /// Max `Π² − Π` and `Π − Πᵀ` seen at sampled steps.
    pub projector_error: f64,
    /// Strided records kept for trace files.
    pub kept: Vec<OnlineRecord>,
}

impl OnlineDigest {
    pub fn max_norm_x(&self) -> f64 {
        self.norm_x.iter().copied().fold(0.0, f64::max)
    }
}

/// Parameters of one online protocol.
#[derive(Debug, Clone)]
pub struct OnlineProtocol {
    pub samples: usize,
    pub config: OnlineConfig,
    pub keep_stride: Option<usize>,
}

pub fn online_digest(
    cfg: &ExperimentConfig,
    sys: &LtiSystem,
    w: &CostWeights,
    reference: &ReferenceSignal,
    seed: u64,
    protocol: &OnlineProtocol,
) -> Result<OnlineDigest, CliError> {
    let (data, x, noise) = prepare_data(cfg, sys, seed, protocol.samples)?;
    let projector_error = projector_error(&data);
    let initial = TrackingPolicy {
        k: Mat::zeros(sys.m(), sys.n()),
        kv: Mat::zeros(sys.m(), sys.n()),
    };
    let state = OnlineState::new(initial, data, x, noise, w)?;
    let trace = online_run(sys, w, reference, state, &protocol.config)?;
    let len = trace.records.len();
    let mut d = OnlineDigest {
        seed,
        eta_h: protocol.config.eta_h_factor,
        status: trace.status,
        initial_gap: trace.initial_gap,
        gap: Vec::with_capacity(len),
        norm_x: Vec::with_capacity(len),
        snr: Vec::with_capacity(len),
        sigma_min_m: Vec::with_capacity(len),
        norm_m: Vec::with_capacity(len),
        gamma4: Vec::with_capacity(len),
        sigma_min_u: Vec::with_capacity(len),
        running_cost: Vec::with_capacity(len),
        gamma_violations: 0,
        max_constraint_residual: 0.0,
        skipped: 0,
        projector_error,
        kept: Vec::new(),
    };
    for r in trace.records {
        d.gap.push(r.gap);
        d.norm_x.push(r.norm_x);
        d.snr.push(r.snr);
        d.sigma_min_m.push(r.sigma_min_m);
        d.norm_m.push(r.norm_m);
        d.gamma4.push(r.gamma.powi(4));
        d.sigma_min_u.push(r.sigma_min_u);
        d.running_cost.push(r.running_cost);
        if r.skipped != Some(SkipReason::NotExcited)
            && r.sigma_min_m < r.gamma.powi(4) * (1.0 - 1e-9)
        {
            d.gamma_violations += 1;
        }
        match r.skipped {
            Some(_) => d.skipped += 1,
            None => {
                let res = r.v_residual + r.h_residual;
                d.max_constraint_residual = d.max_constraint_residual.max(if res.is_finite() {
                    res
                } else {
                    f64::INFINITY
                });
            }
        }
        if protocol.keep_stride.is_some_and(|s| r.t % s == 0) {
            d.kept.push(r);
        }
    }
    Ok(d)
}

fn projector_error(data: &Dataset) -> f64 {
    if !pe_check(&data.cov).excited {
        return 0.0;
    }
    let pi = projection(&data.cov);
    let idem = (&pi * &pi - &pi).amax();
    let sym = (&pi - pi.transpose()).amax();
    idem.max(sym)
}

/// Pointwise mean of equally long series.
pub fn average(series: &[&[f64]]) -> Vec<f64> {
    let len = series.iter().map(|s| s.len()).min().unwrap_or(0);
    (0..len)
        .map(|t| series.iter().map(|s| s[t]).sum::<f64>() / series.len() as f64)
        .collect()
}

pub fn run_online_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<ArtifactSet, CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let mut art = ArtifactSet::new(out);
    let Plant { label, sys } = cfg
        .system
        .plants()?
        .into_iter()
        .next()
        .ok_or_else(|| CliError::Config("no system".into()))?;
    let (n, m) = (sys.n(), sys.m());
    let w = cfg.weights.build(n, m)?;
    let steps = cfg.online.steps;
    let reference = cfg.reference.build(n, steps + cfg.online.preview + 1)?;
    let stride = cfg.online.trace_stride;

    let jobs: Vec<(usize, f64)> = cfg
        .online
        .eta_h_sweep
        .iter()
        .flat_map(|&f| (0..cfg.runs).map(move |i| (i, f)))
        .collect();
    let first_factor = cfg.online.eta_h_sweep[0];
    info!(
        "online {label}: {} runs x {} step sizes",
        cfg.runs,
        cfg.online.eta_h_sweep.len()
    );
    let digests: Vec<Result<OnlineDigest, CliError>> = jobs
        .par_iter()
        .map(|&(i, factor)| {
            let protocol = OnlineProtocol {
                samples: cfg.data.precollect,
                config: OnlineConfig {
                    eta: cfg.online.eta,
                    eta_h_factor: factor,
                    preview: cfg.online.preview,
                    steps,
                    exploration_std: cfg.online.exploration_std,
                    normalize_step: cfg.online.normalize_step,
                    ..Default::default()
                },
                keep_stride: (factor == first_factor).then_some(stride),
            };
            online_digest(cfg, &sys, &w, &reference, cfg.run_seed(i), &protocol)
        })
        .collect();
    let digests: Vec<OnlineDigest> = digests.into_iter().collect::<Result<_, _>>()?;
    let main: Vec<&OnlineDigest> = digests.iter().filter(|d| d.eta_h == first_factor).collect();

    // per-run traces
    let mut header = trace_header("t", n, m);
    header.insert(0, "seed".into());
    header.push("skipped".into());
    let mut rows = Vec::new();
    for d in &main {
        for r in &d.kept {
            let mut row = vec![
                d.seed.to_string(),
                r.t.to_string(),
                num(r.cost),
                num(r.gap),
                num(r.norm_x),
                num(r.snr),
                num(r.sigma_min_m),
                num(r.sigma_min_u),
            ];
            row.extend(mat_entries(&r.k));
            row.extend(mat_entries(&r.l));
            row.push(r.skipped.map_or(String::new(), |s| format!("{s:?}")));
            rows.push(row);
        }
    }
    art.table("fig3_online_runs.csv", header, rows)?;

    let gap = average(&main.iter().map(|d| d.gap.as_slice()).collect::<Vec<_>>());
    let norm_x = average(&main.iter().map(|d| d.norm_x.as_slice()).collect::<Vec<_>>());
    let snr = average(&main.iter().map(|d| d.snr.as_slice()).collect::<Vec<_>>());
    let running = average(
        &main
            .iter()
            .map(|d| d.running_cost.as_slice())
            .collect::<Vec<_>>(),
    );
    let rows = (0..gap.len())
        .filter(|t| t % stride == 0)
        .map(|t| {
            vec![
                t.to_string(),
                num(gap[t]),
                num(norm_x[t]),
                num(snr[t]),
                num(running[t]),
            ]
        })
        .collect();
    art.table(
        "fig3_online_average.csv",
        ["t", "gap", "norm_x", "snr", "running_cost"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        rows,
    )?;

    let mut header = vec!["t".to_string()];
    header.extend(vec_header("x", n));
    header.extend(vec_header("z", n));
    let rows = main[0]
        .kept
        .iter()
        .map(|r| {
            let mut row = vec![r.t.to_string()];
            row.extend(r.x.iter().map(|v| num(*v)));
            row.extend(r.z.iter().map(|v| num(*v)));
            row
        })
        .collect();
    art.table("fig3_online_tracking.csv", header, rows)?;

    let mut rows = Vec::new();
    let mut floors = Vec::new();
    for &factor in &cfg.online.eta_h_sweep {
        let group: Vec<&[f64]> = digests
            .iter()
            .filter(|d| d.eta_h == factor)
            .map(|d| d.gap.as_slice())
            .collect();
        let avg = average(&group);
        for t in (0..avg.len()).filter(|t| t % stride == 0) {
            rows.push(vec![num(factor), t.to_string(), num(avg[t])]);
        }
        let tail = &avg[avg.len() - (avg.len() / 10).max(1)..];
        floors.push((factor, fit::mean(tail)));
    }
    art.table(
        "fig4_hsweep_online.csv",
        vec!["eta_h".into(), "t".into(), "gap".into()],
        rows,
    )?;

    let su = average(
        &main
            .iter()
            .map(|d| d.sigma_min_u.as_slice())
            .collect::<Vec<_>>(),
    );
    let sm = average(
        &main
            .iter()
            .map(|d| d.sigma_min_m.as_slice())
            .collect::<Vec<_>>(),
    );
    let nm = average(&main.iter().map(|d| d.norm_m.as_slice()).collect::<Vec<_>>());
    let g4 = average(&main.iter().map(|d| d.gamma4.as_slice()).collect::<Vec<_>>());
    let rows = (0..su.len())
        .filter(|t| t % stride == 0)
        .map(|t| {
            vec![
                t.to_string(),
                num(su[t]),
                num(sm[t]),
                num(nm[t]),
                num(g4[t]),
            ]
        })
        .collect();
    art.table(
        "fig5_excitation.csv",
        ["t", "sigma_min_U", "sigma_min_M", "norm_M", "gamma4"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        rows,
    )?;

    let rows = digests
        .iter()
        .map(|d| {
            let (status, at) = match d.status {
                OnlineStatus::Completed => ("completed".to_string(), String::new()),
                OnlineStatus::Aborted { t, .. } => ("aborted".to_string(), t.to_string()),
            };
            vec![
                num(d.eta_h),
                d.seed.to_string(),
                status,
                at,
                num(d.max_norm_x()),
                num(d.gap.last().copied().unwrap_or(f64::NAN)),
                d.skipped.to_string(),
            ]
        })
        .collect();
    art.table(
        "fig3_online_status.csv",
        [
            "eta_h",
            "seed",
            "status",
            "abort_t",
            "max_norm_x",
            "final_gap",
            "skipped_updates",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect(),
        rows,
    )?;

    let tail = gap.len() - (gap.len() / 10).max(1);
    let floor = fit::mean(&gap[tail..]);
    let initial = fit::mean(&main.iter().map(|d| d.initial_gap).collect::<Vec<_>>());
    art.findings.push(format!(
        "online {label}: mean initial gap {initial:.3e}, late floor {floor:.3e} ({:.2} decades), final SNR {:.3}",
        (initial / floor).log10(),
        snr.last().copied().unwrap_or(f64::NAN)
    ));
    let end = gap
        .iter()
        .position(|g| *g <= 100.0 * floor)
        .unwrap_or(gap.len() - 1);
    if end > 1 {
        let x: Vec<f64> = (0..=end).map(|t| t as f64).collect();
        let y: Vec<f64> = gap[..=end].iter().map(|g| g.log10()).collect();
        if let Some(f) = fit::linear_fit(&x, &y) {
            art.findings.push(format!(
                "online {label}: early phase t = 0..{end}, rate rho = {:.6}, R^2 = {:.4}",
                10f64.powf(f.slope),
                f.r2
            ));
        }
    }
    for (factor, fl) in &floors {
        art.findings.push(format!(
            "online {label} eta_h = {factor}: late floor {fl:.3e}"
        ));
    }
    let aborted: Vec<String> = digests
        .iter()
        .filter(|d| d.status != OnlineStatus::Completed)
        .map(|d| format!("eta_h {} seed {}", d.eta_h, d.seed))
        .collect();
    art.checks.push(Check::new(
        "online runs bounded",
        aborted.is_empty(),
        if aborted.is_empty() {
            format!(
                "max |x_t| = {:.3e}",
                digests.iter().map(|d| d.max_norm_x()).fold(0.0, f64::max)
            )
        } else {
            format!("aborted: {}", aborted.join(", "))
        },
    ));
    let violations: usize = digests.iter().map(|d| d.gamma_violations).sum();
    art.checks.push(Check::new(
        "sigma_min(M_t) >= gamma_t^4",
        violations == 0,
        format!("{violations} violating steps"),
    ));
    let residual = digests
        .iter()
        .map(|d| d.max_constraint_residual)
        .fold(0.0, f64::max);
    art.checks.push(Check::new(
        "online constraints",
        residual < 1e-8,
        format!("max residual {residual:.2e}"),
    ));
    Ok(art)
}

/// Riccati gains and optimal cost for every configured plant.
pub fn oracle_report(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let mut out = String::new();
    for Plant { label, sys } in cfg.system.plants()? {
        let w = cfg.weights.build(sys.n(), sys.m())?;
        let opt = optimal_gains(&sys, &w)?;
        let cost = model_cost(&sys, &w, &opt.decoupled)?;
        let rho = linalg::spectral_radius(&sys.closed_loop(&opt.tracking.k));
        out.push_str(&format!("== {label} (n = {}, m = {})\n", sys.n(), sys.m()));
        out.push_str(&format!("P =\n{}", fmt_mat(&opt.p)));
        out.push_str(&format!("K =\n{}", fmt_mat(&opt.tracking.k)));
        out.push_str(&format!("Kv =\n{}", fmt_mat(&opt.tracking.kv)));
        out.push_str(&format!("L =\n{}", fmt_mat(&opt.decoupled.l)));
        out.push_str(&format!("C* = {cost:.12}\nrho(A + BK) = {rho:.6}\n"));
    }
    Ok(out)
}

fn fmt_mat(m: &Mat) -> String {
    let mut s = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols())
            .map(|j| format!("{:>14.8}", m[(i, j)]))
            .collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}
