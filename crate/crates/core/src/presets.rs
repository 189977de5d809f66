//! The open-loop stable 4-state benchmark system, its weights and reference.

use crate::linalg::Mat;
use crate::lti::{CostWeights, LtiSystem, ReferenceSignal, SinusoidChannel};

#[rustfmt::skip]
const A: [f64; 16] = [
    -0.229, 0.247, -0.511,  0.493,
     0.846, 0.159,  0.722,  0.529,
    -0.018, 0.07,   0.3,    0.758,
     0.247, 0.546, -0.511, -0.176,
];

#[rustfmt::skip]
const B_FULL: [f64; 16] = [
    -0.633,  0.938,  0.132, -0.527,
     0.262, -0.796,  0.264, -0.350,
     0.461, -0.180, -0.428,  0.457,
     0.774,  0.112, -0.285, -0.168,
];

/// Which columns of the benchmark input matrix are available.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Actuation {
    /// All four inputs.
    Full,
    /// First two inputs only.
    Under,
}

impl Actuation {
    pub fn label(self) -> &'static str {
        match self {
            Actuation::Full => "full",
            Actuation::Under => "under",
        }
    }
}

pub fn benchmark_a() -> Mat {
    Mat::from_row_slice(4, 4, &A)
}

pub fn benchmark_b_full() -> Mat {
    Mat::from_row_slice(4, 4, &B_FULL)
}

pub fn benchmark_b_under() -> Mat {
    benchmark_b_full().columns(0, 2).into_owned()
}

pub fn benchmark_system(actuation: Actuation) -> LtiSystem {
    let b = match actuation {
        Actuation::Full => benchmark_b_full(),
        Actuation::Under => benchmark_b_under(),
    };
    LtiSystem::new(benchmark_a(), b).expect("benchmark matrices are consistent")
}

pub fn benchmark_system_full() -> LtiSystem {
    benchmark_system(Actuation::Full)
}

/// `Q = I_n`, `R = 0.01 I_m`.
pub fn benchmark_weights(n: usize, m: usize) -> CostWeights {
    CostWeights::scaled_identity(n, m, 1.0, 0.01).expect("positive weights")
}

/// `z_t = [50 sin(0.003t), 0.003t, 50 sin(0.009t), 10]`, bounded over `horizon` steps.
pub fn benchmark_reference(horizon: usize) -> ReferenceSignal {
    let ch = |amplitude: f64, frequency: f64, slope: f64, offset: f64| SinusoidChannel {
        amplitude,
        frequency,
        phase: 0.0,
        slope,
        offset,
    };
    ReferenceSignal::SinusoidMix {
        channels: vec![
            ch(50.0, 0.003, 0.0, 0.0),
            ch(0.0, 0.0, 0.003, 0.0),
            ch(50.0, 0.009, 0.0, 0.0),
            ch(0.0, 0.0, 0.0, 10.0),
        ],
        horizon,
    }
}

/// Pre-collection length used for both offline and online runs.
pub const PRECOLLECT_SAMPLES: usize = 9;
/// Process noise standard deviation.
pub const PROCESS_STD: f64 = 0.1;
/// Exploration standard deviation during pre-collection.
pub const EXPLORATION_STD: f64 = 1.0;
/// Base step size.
pub const BASE_STEP: f64 = 0.01;
/// Preview length of the online tracking-state recursion.
pub const PREVIEW_HORIZON: usize = 10;
/// H-block step multipliers for the split step-size sweep.
pub const ETA_H_SWEEP: [f64; 4] = [1.0, 5.0, 10.0, 50.0];
/// Deployment length of the tracking comparison.
pub const DEPLOY_STEPS: usize = 3000;
