//! Data-driven linear quadratic tracking by covariance-parameterized policy
//! optimization.
//!
//! The crate is organized bottom-up:
//!
//! - [`lti`]: dynamics, Riccati/Lyapunov solvers, optimal tracking gains.
//! - [`data`]: trajectory logs, sample covariances, identification.
//! - [`param`]: `θ ↔ ξ` maps, constraint projector, scaling matrix.
//! - [`cost`]: model- and data-space costs and gradients.
//! - [`solver`]: offline projected gradient, online adaptation, rollouts.
//! - [`presets`]: the 4-state benchmark system and reference.

pub mod cost;
pub mod data;
pub mod error;
pub mod linalg;
pub mod lti;
pub mod param;
pub mod presets;
pub mod solver;

pub use cost::{
    data_cost, data_grad, model_cost, model_cost_alt, model_grad, per_setpoint_cost, DataCostCache,
    ModelCostCache,
};
pub use data::{
    ls_identify, pe_check, snr_diagnostics, CovarianceData, DataDiagnostics, DataLog, Dataset,
    PeStatus,
};
pub use error::{Error, Result};
pub use linalg::{spectral_radius, Mat, Vector};
pub use lti::{
    optimal_gains, preview_tracking_state, solve_dare, solve_dlyap, solve_dlyap_transposed,
    CostWeights, DecoupledPolicy, LtiSystem, NoiseModel, NoiseStream, OptimalGains,
    ReferenceSignal, SinusoidChannel, TrackingPolicy,
};
pub use param::{
    kv_to_l, l_to_kv, projection, scaling_matrix, theta_to_xi, xi_to_theta, CovariancePolicy,
    ScalingMatrix,
};
pub use presets::Actuation;
pub use solver::{
    ce_solution, max_stable_step, offline_solve, offline_step_model_equiv, online_run, precollect,
    projected_step, tracking_rollout, CeSolution, IterationRecord, OnlineConfig, OnlineRecord,
    OnlineState, OnlineStatus, OnlineTrace, Rollout, SkipReason, SolverConfig, SolverStatus,
    SolverTrace,
};
