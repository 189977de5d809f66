//! Experiment protocol files (TOML).

use std::path::{Path, PathBuf};

use deepo_core::presets::{self, Actuation};
use deepo_core::{
    linalg, CostWeights, LtiSystem, Mat, NoiseModel, ReferenceSignal, SinusoidChannel,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub system: SystemSpec,
    #[serde(default)]
    pub weights: WeightSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub data: DataSpec,
    #[serde(default)]
    pub reference: ReferenceSpec,
    #[serde(default)]
    pub offline: OfflineSpec,
    #[serde(default)]
    pub online: OnlineSpec,
}

fn default_runs() -> usize {
    10
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActuationSpec {
    Full,
    Under,
}

impl From<ActuationSpec> for Actuation {
    fn from(a: ActuationSpec) -> Self {
        match a {
            ActuationSpec::Full => Actuation::Full,
            ActuationSpec::Under => Actuation::Under,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SystemSpec {
    /// The 4-state benchmark.
    Benchmark {
        #[serde(default = "default_actuation")]
        actuation: Vec<ActuationSpec>,
    },
    Inline {
        a: Vec<Vec<f64>>,
        b: Vec<Vec<f64>>,
    },
    /// Gaussian `A` rescaled to spectral radius `rho`, Gaussian `B`.
    Random {
        n: usize,
        m: usize,
        #[serde(default = "default_rho")]
        rho: f64,
        #[serde(default)]
        seed: u64,
    },
}

fn default_actuation() -> Vec<ActuationSpec> {
    vec![ActuationSpec::Full, ActuationSpec::Under]
}

fn default_rho() -> f64 {
    0.8
}

impl Default for SystemSpec {
    fn default() -> Self {
        SystemSpec::Benchmark {
            actuation: default_actuation(),
        }
    }
}

/// A labelled system instance.
#[derive(Debug, Clone)]
pub struct Plant {
    pub label: String,
    pub sys: LtiSystem,
}

impl SystemSpec {
    pub fn plants(&self) -> Result<Vec<Plant>, CliError> {
        match self {
            SystemSpec::Benchmark { actuation } => {
                if actuation.is_empty() {
                    return Err(CliError::Config("system.actuation is empty".into()));
                }
                Ok(actuation
                    .iter()
                    .map(|&a| {
                        let a = Actuation::from(a);
                        Plant {
                            label: a.label().to_string(),
                            sys: presets::benchmark_system(a),
                        }
                    })
                    .collect())
            }
            SystemSpec::Inline { a, b } => {
                let a = matrix("system.a", a)?;
                let b = matrix("system.b", b)?;
                let sys =
                    LtiSystem::new(a, b).map_err(|e| CliError::Config(format!("system: {e}")))?;
                Ok(vec![Plant {
                    label: "inline".into(),
                    sys,
                }])
            }
            SystemSpec::Random { n, m, rho, seed } => {
                if *n == 0 || *m == 0 {
                    return Err(CliError::Config(
                        "system.n and system.m must be positive".into(),
                    ));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let mut draw = |r: usize, c: usize| {
                    Mat::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
                };
                let a = draw(*n, *n);
                let b = draw(*n, *m);
                let scale = rho / linalg::spectral_radius(&a).max(1e-12);
                let sys = LtiSystem::new(a * scale, b)
                    .map_err(|e| CliError::Config(format!("system: {e}")))?;
                Ok(vec![Plant {
                    label: "random".into(),
                    sys,
                }])
            }
        }
    }
}

fn matrix(what: &str, rows: &[Vec<f64>]) -> Result<Mat, CliError> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 {
        return Err(CliError::Config(format!("{what} is empty")));
    }
    if let Some(bad) = rows.iter().position(|row| row.len() != c) {
        return Err(CliError::Config(format!(
            "{what}: row {bad} has {} entries, expected {c}",
            rows[bad].len()
        )));
    }
    Ok(Mat::from_fn(r, c, |i, j| rows[i][j]))
}

/// A scalar `s` means `s·I`; a list is a diagonal; nested lists are a full matrix.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Scalar(f64),
    Diagonal(Vec<f64>),
    Full(Vec<Vec<f64>>),
}

impl MatrixSpec {
    fn build(&self, what: &str, dim: usize) -> Result<Mat, CliError> {
        match self {
            MatrixSpec::Scalar(s) => Ok(Mat::identity(dim, dim) * *s),
            MatrixSpec::Diagonal(d) => {
                if d.len() != dim {
                    return Err(CliError::Config(format!(
                        "{what}: diagonal has {} entries, expected {dim}",
                        d.len()
                    )));
                }
                Ok(Mat::from_diagonal(&deepo_core::Vector::from_column_slice(
                    d,
                )))
            }
            MatrixSpec::Full(rows) => {
                let m = matrix(what, rows)?;
                if m.shape() != (dim, dim) {
                    return Err(CliError::Config(format!(
                        "{what}: shape {:?}, expected {dim}x{dim}",
                        m.shape()
                    )));
                }
                Ok(m)
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightSpec {
    pub q: MatrixSpec,
    pub r: MatrixSpec,
}

impl Default for WeightSpec {
    fn default() -> Self {
        Self {
            q: MatrixSpec::Scalar(1.0),
            r: MatrixSpec::Scalar(0.01),
        }
    }
}

impl WeightSpec {
    pub fn build(&self, n: usize, m: usize) -> Result<CostWeights, CliError> {
        CostWeights::new(self.q.build("weights.q", n)?, self.r.build("weights.r", m)?)
            .map_err(|e| CliError::Config(format!("weights: {e}")))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub process_std: f64,
    pub exploration_std: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            process_std: presets::PROCESS_STD,
            exploration_std: presets::EXPLORATION_STD,
        }
    }
}

impl NoiseSpec {
    pub fn model(&self, seed: u64) -> Result<NoiseModel, CliError> {
        NoiseModel::new(self.process_std, self.exploration_std, seed)
            .map_err(|e| CliError::Config(format!("noise: {e}")))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    /// Number of pre-collected samples.
    pub precollect: usize,
    /// Initial state; zero when omitted.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
}

impl Default for DataSpec {
    fn default() -> Self {
        Self {
            precollect: presets::PRECOLLECT_SAMPLES,
            x0: None,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ReferenceSpec {
    #[default]
    Benchmark,
    Constant {
        value: Vec<f64>,
    },
    Sinusoids {
        channels: Vec<ChannelSpec>,
    },
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default)]
    pub frequency: f64,
    #[serde(default)]
    pub phase: f64,
    #[serde(default)]
    pub slope: f64,
    #[serde(default)]
    pub offset: f64,
}

impl ReferenceSpec {
    pub fn build(&self, n: usize, horizon: usize) -> Result<ReferenceSignal, CliError> {
        let signal = match self {
            ReferenceSpec::Benchmark => presets::benchmark_reference(horizon),
            ReferenceSpec::Constant { value } => {
                ReferenceSignal::Constant(deepo_core::Vector::from_column_slice(value))
            }
            ReferenceSpec::Sinusoids { channels } => ReferenceSignal::SinusoidMix {
                channels: channels
                    .iter()
                    .map(|c| SinusoidChannel {
                        amplitude: c.amplitude,
                        frequency: c.frequency,
                        phase: c.phase,
                        slope: c.slope,
                        offset: c.offset,
                    })
                    .collect(),
                horizon,
            },
        };
        if signal.dim() != n {
            return Err(CliError::Config(format!(
                "reference has {} channels, system has {n} states",
                signal.dim()
            )));
        }
        Ok(signal)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OfflineSpec {
    /// Base step; found by halving search when omitted.
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default = "default_sweep")]
    pub eta_h_sweep: Vec<f64>,
    #[serde(default = "default_offline_iters")]
    pub max_iters: usize,
    #[serde(default = "default_grad_tol")]
    pub grad_tol: f64,
    #[serde(default = "default_deploy")]
    pub deploy_steps: usize,
    /// Write every k-th iteration to the convergence traces.
    #[serde(default = "default_stride")]
    pub trace_stride: usize,
}

fn default_sweep() -> Vec<f64> {
    presets::ETA_H_SWEEP.to_vec()
}

fn default_offline_iters() -> usize {
    200_000
}

fn default_grad_tol() -> f64 {
    1e-10
}

fn default_deploy() -> usize {
    presets::DEPLOY_STEPS
}

fn default_stride() -> usize {
    10
}

impl Default for OfflineSpec {
    fn default() -> Self {
        Self {
            eta: None,
            eta_h_sweep: default_sweep(),
            max_iters: default_offline_iters(),
            grad_tol: default_grad_tol(),
            deploy_steps: default_deploy(),
            trace_stride: default_stride(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OnlineSpec {
    #[serde(default = "default_online_eta")]
    pub eta: f64,
    #[serde(default = "default_sweep")]
    pub eta_h_sweep: Vec<f64>,
    #[serde(default = "default_online_steps")]
    pub steps: usize,
    #[serde(default = "default_preview")]
    pub preview: usize,
    #[serde(default)]
    pub normalize_step: bool,
    #[serde(default)]
    pub exploration_std: Option<f64>,
    #[serde(default = "default_stride")]
    pub trace_stride: usize,
}

fn default_online_eta() -> f64 {
    5e-4
}

fn default_online_steps() -> usize {
    20_000
}

fn default_preview() -> usize {
    presets::PREVIEW_HORIZON
}

impl Default for OnlineSpec {
    fn default() -> Self {
        Self {
            eta: default_online_eta(),
            eta_h_sweep: default_sweep(),
            steps: default_online_steps(),
            preview: default_preview(),
            normalize_step: false,
            exploration_std: None,
            trace_stride: default_stride(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: &str| Err(CliError::Config(msg.into()));
        if self.runs == 0 {
            return bad("runs must be at least 1");
        }
        if self.offline.eta.is_some_and(|e| !(e > 0.0)) {
            return bad("offline.eta must be positive");
        }
        if !(self.online.eta > 0.0) {
            return bad("online.eta must be positive");
        }
        for sweep in [&self.offline.eta_h_sweep, &self.online.eta_h_sweep] {
            if sweep.is_empty() || sweep.iter().any(|f| !(*f >= 1.0)) {
                return bad("eta_h_sweep entries must be at least 1");
            }
        }
        if self.offline.max_iters == 0 || self.online.steps == 0 || self.offline.deploy_steps == 0 {
            return bad("iteration counts must be positive");
        }
        if self.offline.trace_stride == 0 || self.online.trace_stride == 0 {
            return bad("trace_stride must be positive");
        }
        for plant in self.system.plants()? {
            let (n, m) = (plant.sys.n(), plant.sys.m());
            self.weights.build(n, m)?;
            self.reference.build(n, 1)?;
            if let Some(x0) = &self.data.x0 {
                if x0.len() != n {
                    return Err(CliError::Config(format!(
                        "data.x0 has {} entries, system has {n} states",
                        x0.len()
                    )));
                }
            }
            if self.data.precollect < n + m {
                return Err(CliError::Config(format!(
                    "data.precollect = {} cannot excite n + m = {} directions",
                    self.data.precollect,
                    n + m
                )));
            }
        }
        self.noise.model(0)?;
        Ok(())
    }

    pub fn x0(&self, n: usize) -> deepo_core::Vector {
        match &self.data.x0 {
            Some(v) => deepo_core::Vector::from_column_slice(v),
            None => deepo_core::Vector::zeros(n),
        }
    }

    /// Seed of Monte Carlo run `i`.
    pub fn run_seed(&self, i: usize) -> u64 {
        self.seed.wrapping_add(i as u64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_benchmark_protocol() {
        let cfg = ExperimentConfig::parse("").unwrap();
        assert_eq!(cfg.runs, 10);
        assert_eq!(cfg.data.precollect, 9);
        let plants = cfg.system.plants().unwrap();
        assert_eq!(plants.len(), 2);
        assert_eq!(plants[1].sys.m(), 2);
        let w = cfg.weights.build(4, 2).unwrap();
        assert_eq!(w.r()[(1, 1)], 0.01);
    }

    #[test]
    fn inline_system_and_matrix_weights() {
        let cfg = ExperimentConfig::parse(
            r#"
            [system]
            kind = "inline"
            a = [[0.0]]
            b = [[1.0]]
            [weights]
            q = [[1.0]]
            r = [1.0]
            [data]
            precollect = 5
            [reference]
            kind = "constant"
            value = [1.0]
            "#,
        )
        .unwrap();
        let plant = &cfg.system.plants().unwrap()[0];
        assert_eq!(plant.sys.n(), 1);
    }

    #[test]
    fn errors_name_the_problem() {
        let err = ExperimentConfig::parse("runs = 0").unwrap_err();
        assert!(err.to_string().contains("runs"));
        let err = ExperimentConfig::parse(
            "[system]\nkind = \"inline\"\na = [[1.0, 2.0], [1.0]]\nb = [[1.0], [1.0]]",
        )
        .unwrap_err();
        assert!(err.to_string().contains("row 1"));
        let err =
            ExperimentConfig::parse("[reference]\nkind = \"constant\"\nvalue = [1.0]").unwrap_err();
        assert!(err.to_string().contains("channels"));
        let err = ExperimentConfig::parse("bogus = 1").unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
    }
}
