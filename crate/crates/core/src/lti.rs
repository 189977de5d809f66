//! Ground-truth linear-system machinery: dynamics, weights, Riccati and
//! Lyapunov solvers, optimal tracking gains and the backward tracking state.

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_shape, Error, Result};
use crate::linalg::{self, Mat, Vector};

/// Spectral radii at or above `1 - STABILITY_MARGIN` are treated as infeasible.
pub const STABILITY_MARGIN: f64 = 1e-9;

const DARE_TOL: f64 = 1e-12;
const DARE_MAX_ITERS: usize = 100_000;
const DARE_BLOWUP: f64 = 1e100;
const KRON_LYAP_MAX_N: usize = 32;

/// Discrete-time pair `x⁺ = A x + B u + w`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiSystem {
    a: Mat,
    b: Mat,
}

impl LtiSystem {
    pub fn new(a: Mat, b: Mat) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || b.ncols() == 0 {
            return Err(Error::Config("system needs n >= 1 and m >= 1".into()));
        }
        check_shape("LtiSystem::A", a.shape(), (n, n))?;
        check_shape("LtiSystem::B", b.shape(), (n, b.ncols()))?;
        Ok(Self { a, b })
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }

    pub fn b(&self) -> &Mat {
        &self.b
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    /// `A + B K`.
    pub fn closed_loop(&self, k: &Mat) -> Mat {
        &self.a + &self.b * k
    }

    /// One step of the dynamics.
    pub fn simulate_step(&self, x: &Vector, u: &Vector, w: &Vector) -> Result<Vector> {
        check_shape("simulate_step x", x.shape(), (self.n(), 1))?;
        check_shape("simulate_step u", u.shape(), (self.m(), 1))?;
        check_shape("simulate_step w", w.shape(), (self.n(), 1))?;
        Ok(&self.a * x + &self.b * u + w)
    }
}

/// Quadratic weights `Q ≻ 0` on the tracking error and `R ≻ 0` on the input.
#[derive(Debug, Clone, PartialEq)]
pub struct CostWeights {
    q: Mat,
    r: Mat,
    q_inv: Mat,
}

impl CostWeights {
    pub fn new(q: Mat, r: Mat) -> Result<Self> {
        if !linalg::is_symmetric(&q, 1e-12) {
            return Err(Error::NotPositiveDefinite("Q"));
        }
        if !linalg::is_symmetric(&r, 1e-12) {
            return Err(Error::NotPositiveDefinite("R"));
        }
        let chol = q
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite("Q"))?;
        if linalg::min_sym_eigenvalue(&r) <= 0.0 {
            return Err(Error::NotPositiveDefinite("R"));
        }
        let q_inv = chol.inverse();
        Ok(Self { q, r, q_inv })
    }

    /// `Q = q I_n`, `R = r I_m`.
    pub fn scaled_identity(n: usize, m: usize, q: f64, r: f64) -> Result<Self> {
        Self::new(Mat::identity(n, n) * q, Mat::identity(m, m) * r)
    }

    pub fn q(&self) -> &Mat {
        &self.q
    }

    pub fn r(&self) -> &Mat {
        &self.r
    }

    pub fn q_inv(&self) -> &Mat {
        &self.q_inv
    }

    pub fn n(&self) -> usize {
        self.q.nrows()
    }

    pub fn m(&self) -> usize {
        self.r.nrows()
    }

    pub(crate) fn check_against(&self, n: usize, m: usize) -> Result<()> {
        check_shape("CostWeights::Q", self.q.shape(), (n, n))?;
        check_shape("CostWeights::R", self.r.shape(), (m, m))
    }
}

/// Feedback-plus-feedforward law `u = K x + K_v v`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingPolicy {
    pub k: Mat,
    pub kv: Mat,
}

impl TrackingPolicy {
    pub fn input(&self, x: &Vector, v: &Vector) -> Vector {
        &self.k * x + &self.kv * v
    }
}

/// Set-point parameterization `u = K x + L δ`, i.e. `θ = [K, L]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoupledPolicy {
    pub k: Mat,
    pub l: Mat,
}

impl DecoupledPolicy {
    pub fn new(k: Mat, l: Mat) -> Result<Self> {
        check_shape("DecoupledPolicy::L", l.shape(), k.shape())?;
        Ok(Self { k, l })
    }

    pub fn zeros(n: usize, m: usize) -> Self {
        Self {
            k: Mat::zeros(m, n),
            l: Mat::zeros(m, n),
        }
    }

    /// `[K, L]` as one `m × 2n` matrix.
    pub fn stacked(&self) -> Mat {
        linalg::hstack(&self.k, &self.l)
    }

    pub fn from_stacked(theta: &Mat) -> Self {
        let n = theta.ncols() / 2;
        Self {
            k: theta.columns(0, n).into_owned(),
            l: theta.columns(n, n).into_owned(),
        }
    }

    /// Stable for `sys` with the shared margin.
    pub fn is_stabilizing(&self, sys: &LtiSystem) -> bool {
        linalg::spectral_radius(&sys.closed_loop(&self.k)) < 1.0 - STABILITY_MARGIN
    }
}

/// Errors when `rho` is outside the feasible region; warns in the margin band.
pub fn check_stable(rho: f64) -> Result<()> {
    if !rho.is_finite() || rho >= 1.0 {
        return Err(Error::Unstable { rho });
    }
    if rho >= 1.0 - STABILITY_MARGIN {
        warn!("closed loop within {STABILITY_MARGIN:e} of the unit circle (rho = {rho})");
        return Err(Error::Unstable { rho });
    }
    Ok(())
}

/// One channel `amplitude·sin(frequency·t + phase) + slope·t + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct SinusoidChannel {
    pub amplitude: f64,
    pub frequency: f64,
    pub phase: f64,
    pub slope: f64,
    pub offset: f64,
}

impl SinusoidChannel {
    pub fn eval(&self, t: f64) -> f64 {
        self.amplitude * (self.frequency * t + self.phase).sin() + self.slope * t + self.offset
    }

    fn sup_over(&self, horizon: usize) -> f64 {
        self.amplitude.abs() + self.offset.abs() + self.slope.abs() * horizon as f64
    }
}

/// Reference trajectory `z_t` with a declared sup-norm bound.
#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceSignal {
    Constant(Vector),
    SinusoidMix {
        channels: Vec<SinusoidChannel>,
        /// Bound is declared for `0 <= t <= horizon`.
        horizon: usize,
    },
    Table(Vec<Vector>),
}

impl ReferenceSignal {
    pub fn dim(&self) -> usize {
        match self {
            Self::Constant(z) => z.len(),
            Self::SinusoidMix { channels, .. } => channels.len(),
            Self::Table(rows) => rows.first().map_or(0, |r| r.len()),
        }
    }

    /// `z_t`.
    pub fn reference_at(&self, t: usize) -> Result<Vector> {
        match self {
            Self::Constant(z) => Ok(z.clone()),
            Self::SinusoidMix { channels, .. } => Ok(Vector::from_iterator(
                channels.len(),
                channels.iter().map(|c| c.eval(t as f64)),
            )),
            Self::Table(rows) => rows.get(t).cloned().ok_or(Error::OutOfRange {
                index: t,
                len: rows.len(),
            }),
        }
    }

    /// `z_t, …, z_{t+len-1}`.
    pub fn window(&self, t: usize, len: usize) -> Result<Vec<Vector>> {
        (t..t + len).map(|s| self.reference_at(s)).collect()
    }

    /// Declared `z̄` with `|z_t| <= z̄`.
    pub fn bound(&self) -> f64 {
        match self {
            Self::Constant(z) => z.norm(),
            Self::SinusoidMix { channels, horizon } => channels
                .iter()
                .map(|c| c.sup_over(*horizon).powi(2))
                .sum::<f64>()
                .sqrt(),
            Self::Table(rows) => rows.iter().map(|r| r.norm()).fold(0.0, f64::max),
        }
    }
}

/// Gaussian process noise and exploration levels with a seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub process_std: f64,
    pub exploration_std: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(process_std: f64, exploration_std: f64, seed: u64) -> Result<Self> {
        if !(process_std >= 0.0 && exploration_std >= 0.0) {
            return Err(Error::Config(
                "noise standard deviations must be nonnegative".into(),
            ));
        }
        Ok(Self {
            process_std,
            exploration_std,
            seed,
        })
    }

    pub fn stream(&self) -> NoiseStream {
        NoiseStream {
            rng: ChaCha20Rng::seed_from_u64(self.seed),
            model: *self,
        }
    }
}

/// Sample stream for a [`NoiseModel`]; identical seeds give identical streams.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha20Rng,
    model: NoiseModel,
}

impl NoiseStream {
    pub fn model(&self) -> &NoiseModel {
        &self.model
    }

    pub fn gaussian(&mut self, dim: usize, std: f64) -> Vector {
        let rng = &mut self.rng;
        Vector::from_iterator(
            dim,
            (0..dim).map(|_| {
                let s: f64 = StandardNormal.sample(rng);
                std * s
            }),
        )
    }

    /// `w_t`.
    pub fn process(&mut self, n: usize) -> Vector {
        self.gaussian(n, self.model.process_std)
    }

    /// `e_t`.
    pub fn exploration(&mut self, m: usize) -> Vector {
        self.gaussian(m, self.model.exploration_std)
    }
}

fn riccati_map(sys: &LtiSystem, weights: &CostWeights, p: &Mat) -> Result<Mat> {
    let (a, b) = (sys.a(), sys.b());
    let bt_p = b.transpose() * p;
    let gram = weights.r() + &bt_p * b;
    let gain = linalg::solve(&gram, &(&bt_p * a), "R + B'PB")?;
    let next = weights.q() + a.transpose() * p * a - a.transpose() * p * b * gain;
    Ok(linalg::symmetrize(&next))
}

/// Frobenius residual of `P = Q + A'PA − A'PB(R+B'PB)⁻¹B'PA`.
pub fn dare_residual(sys: &LtiSystem, weights: &CostWeights, p: &Mat) -> f64 {
    match riccati_map(sys, weights, p) {
        Ok(next) => (next - p).norm(),
        Err(_) => f64::INFINITY,
    }
}

/// Stabilizing solution of the discrete algebraic Riccati equation by
/// fixed-point iteration from `P₀ = Q`.
pub fn solve_dare(sys: &LtiSystem, weights: &CostWeights) -> Result<Mat> {
    weights.check_against(sys.n(), sys.m())?;
    let n = sys.n();
    let mut p = weights.q().clone();
    let mut delta = f64::INFINITY;
    for _ in 0..DARE_MAX_ITERS {
        let next = riccati_map(sys, weights, &p)?;
        delta = (&next - &p).norm();
        let scale = next.amax();
        if !delta.is_finite() || !(scale < DARE_BLOWUP) {
            break;
        }
        let roundoff = 8.0 * f64::EPSILON * (n as f64) * scale;
        p = next;
        if delta <= DARE_TOL.max(roundoff) {
            return Ok(p);
        }
    }
    Err(Error::Divergence {
        what: "DARE fixed-point iteration",
        iterations: DARE_MAX_ITERS,
        residual: delta,
    })
}

/// Riccati solution together with both optimal policy forms.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalGains {
    pub p: Mat,
    pub tracking: TrackingPolicy,
    pub decoupled: DecoupledPolicy,
}

/// `K* = −(R+B'PB)⁻¹B'PA`, `K_v* = (R+B'PB)⁻¹B'`, `L* = K_v*(I−A−BK*)⁻ᵀQ`.
pub fn optimal_gains(sys: &LtiSystem, weights: &CostWeights) -> Result<OptimalGains> {
    let p = solve_dare(sys, weights)?;
    let (a, b) = (sys.a(), sys.b());
    let gram = weights.r() + b.transpose() * &p * b;
    let k = -linalg::solve(&gram, &(b.transpose() * &p * a), "R + B'PB")?;
    let kv = linalg::solve(&gram, &b.transpose(), "R + B'PB")?;
    let a_cl = sys.closed_loop(&k);
    let rho = linalg::spectral_radius(&a_cl);
    assert!(rho < 1.0, "Riccati gain is not stabilizing (rho = {rho})");
    let l = setpoint_gain(&kv, &a_cl, weights.q())?;
    Ok(OptimalGains {
        p,
        tracking: TrackingPolicy { k: k.clone(), kv },
        decoupled: DecoupledPolicy { k, l },
    })
}

/// `L = K_v (I − A_cl)⁻ᵀ Q`.
pub fn setpoint_gain(kv: &Mat, a_cl: &Mat, q: &Mat) -> Result<Mat> {
    let n = a_cl.nrows();
    let inv_t = linalg::inverse(&(Mat::identity(n, n) - a_cl), "I - A_cl")?.transpose();
    Ok(kv * inv_t * q)
}

/// Solves `X = S + A X Aᵀ` (Gramian orientation).
pub fn solve_dlyap(a_cl: &Mat, s: &Mat) -> Result<Mat> {
    let n = a_cl.nrows();
    check_shape("solve_dlyap A", a_cl.shape(), (n, n))?;
    check_shape("solve_dlyap S", s.shape(), (n, n))?;
    let rho = linalg::spectral_radius(a_cl);
    if !(rho < 1.0) {
        return Err(Error::Unstable { rho });
    }
    if n <= KRON_LYAP_MAX_N {
        let lhs = Mat::identity(n * n, n * n) - linalg::kron(a_cl, a_cl);
        let rhs = Mat::from_column_slice(n * n, 1, s.as_slice());
        let x = linalg::solve(&lhs, &rhs, "I - A⊗A")?;
        Ok(Mat::from_column_slice(n, n, x.as_slice()))
    } else {
        smith_series(a_cl, s, rho)
    }
}

/// Solves `X = S + Aᵀ X A` (value orientation).
pub fn solve_dlyap_transposed(a_cl: &Mat, s: &Mat) -> Result<Mat> {
    solve_dlyap(&a_cl.transpose(), s)
}

// Squared-series summation Σ A^i S (Aᵀ)^i for large n.
fn smith_series(a: &Mat, s: &Mat, rho: f64) -> Result<Mat> {
    let mut x = s.clone();
    let mut ak = a.clone();
    for _ in 0..64 {
        let inc = &ak * &x * ak.transpose();
        x += &inc;
        ak = &ak * &ak;
        if inc.norm() <= 1e-16 * x.norm() {
            return Ok(x);
        }
    }
    Err(Error::Divergence {
        what: "Lyapunov series",
        iterations: 64,
        residual: rho,
    })
}

/// Backward tracking state `v_t` from a preview `z_t, …, z_{t+N}`:
/// `v_{t+N} = (I − A_clᵀ)⁻¹ Q z_{t+N}`, then `v_s = A_clᵀ v_{s+1} + Q z_s`.
pub fn preview_tracking_state(a_cl: &Mat, q: &Mat, refs: &[Vector]) -> Result<Vector> {
    let n = a_cl.nrows();
    let last = refs
        .last()
        .ok_or_else(|| Error::Config("preview needs at least one reference".into()))?;
    check_shape("preview reference", last.shape(), (n, 1))?;
    let a_t = a_cl.transpose();
    let terminal = (Mat::identity(n, n) - &a_t)
        .lu()
        .solve(&(q * last))
        .ok_or(Error::Singular("I - A_cl'"))?;
    let mut v = terminal;
    for z in refs.iter().rev().skip(1) {
        v = &a_t * v + q * z;
    }
    Ok(v)
}

/// All tracking states `v_0, …, v_{len-1}` for the given references, with the
/// steady-state terminal condition on the final one.
pub fn tracking_state_sequence(a_cl: &Mat, q: &Mat, refs: &[Vector]) -> Result<Vec<Vector>> {
    let n = a_cl.nrows();
    let last = refs
        .last()
        .ok_or_else(|| Error::Config("tracking states need at least one reference".into()))?;
    let a_t = a_cl.transpose();
    let mut v = (Mat::identity(n, n) - &a_t)
        .lu()
        .solve(&(q * last))
        .ok_or(Error::Singular("I - A_cl'"))?;
    let mut out = vec![v.clone(); refs.len()];
    for (idx, z) in refs.iter().enumerate().rev().skip(1) {
        v = &a_t * v + q * z;
        out[idx] = v.clone();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    fn scalar(a: f64, b: f64) -> LtiSystem {
        LtiSystem::new(Mat::from_element(1, 1, a), Mat::from_element(1, 1, b)).unwrap()
    }

    #[test]
    fn simulate_step_cases() {
        let n = 3;
        let sys = LtiSystem::new(Mat::zeros(n, n), Mat::identity(n, n)).unwrap();
        let x = Vector::from_vec(vec![4.0, -2.0, 7.0]);
        let u = Vector::from_element(n, 1.0);
        let out = sys.simulate_step(&x, &u, &Vector::zeros(n)).unwrap();
        assert_eq!(out, Vector::from_element(n, 1.0));

        let ident = LtiSystem::new(Mat::identity(n, n), Mat::identity(n, n)).unwrap();
        let out = ident
            .simulate_step(&x, &Vector::zeros(n), &Vector::zeros(n))
            .unwrap();
        assert_eq!(out, x);

        let benchmark = presets::benchmark_system_full();
        let mut e1 = Vector::zeros(4);
        e1[0] = 1.0;
        let out = benchmark
            .simulate_step(&e1, &Vector::zeros(4), &Vector::zeros(4))
            .unwrap();
        assert_eq!(out, benchmark.a().column(0).into_owned());
    }

    #[test]
    fn simulate_step_rejects_bad_dims() {
        let sys = scalar(0.5, 1.0);
        let err = sys
            .simulate_step(&Vector::zeros(2), &Vector::zeros(1), &Vector::zeros(1))
            .unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn system_rejects_inconsistent_shapes() {
        assert!(LtiSystem::new(Mat::zeros(2, 3), Mat::zeros(2, 1)).is_err());
        assert!(LtiSystem::new(Mat::zeros(2, 2), Mat::zeros(3, 1)).is_err());
    }

    #[test]
    fn weights_must_be_positive_definite() {
        assert!(CostWeights::new(Mat::identity(2, 2), Mat::zeros(1, 1)).is_err());
        let asym = Mat::from_row_slice(2, 2, &[1.0, 0.2, 0.0, 1.0]);
        assert!(CostWeights::new(asym, Mat::identity(1, 1)).is_err());
        let w = CostWeights::new(Mat::identity(2, 2) * 2.0, Mat::identity(1, 1)).unwrap();
        assert!((w.q_inv() - Mat::identity(2, 2) * 0.5).amax() < 1e-15);
    }

    #[test]
    fn dare_scalar_and_zero_dynamics() {
        let w = CostWeights::scaled_identity(1, 1, 1.0, 1.0).unwrap();
        let p = solve_dare(&scalar(0.0, 1.0), &w).unwrap();
        assert_eq!(p[(0, 0)], 1.0);

        let q = Mat::from_row_slice(3, 3, &[2.0, 0.1, 0.0, 0.1, 1.0, 0.0, 0.0, 0.0, 3.0]);
        let w = CostWeights::new(q.clone(), Mat::identity(3, 3)).unwrap();
        let sys = LtiSystem::new(Mat::zeros(3, 3), Mat::identity(3, 3)).unwrap();
        let p = solve_dare(&sys, &w).unwrap();
        assert!((p - q).amax() < 1e-15);
    }

    #[test]
    fn dare_on_benchmark_system_has_small_residual() {
        let sys = presets::benchmark_system_full();
        let w = presets::benchmark_weights(4, 4);
        let p = solve_dare(&sys, &w).unwrap();
        assert!(dare_residual(&sys, &w, &p) < 1e-10);
        assert!(linalg::min_sym_eigenvalue(&p) > 0.0);
    }

    #[test]
    fn dare_reports_divergence_for_unstabilizable_pair() {
        let sys = LtiSystem::new(
            Mat::from_row_slice(2, 2, &[1.5, 0.0, 0.0, 0.5]),
            Mat::from_row_slice(2, 1, &[0.0, 1.0]),
        )
        .unwrap();
        let w = CostWeights::scaled_identity(2, 1, 1.0, 1.0).unwrap();
        let res = solve_dare(&sys, &w);
        assert!(matches!(res, Err(Error::Divergence { .. })), "{res:?}");
    }

    #[test]
    fn optimal_gains_scalar_and_matrix() {
        let w = CostWeights::scaled_identity(1, 1, 1.0, 1.0).unwrap();
        let g = optimal_gains(&scalar(0.0, 1.0), &w).unwrap();
        assert_eq!(g.tracking.k[(0, 0)], 0.0);
        assert_eq!(g.tracking.kv[(0, 0)], 0.5);
        assert_eq!(g.decoupled.l[(0, 0)], 0.5);

        let sys = LtiSystem::new(Mat::zeros(3, 3), Mat::identity(3, 3)).unwrap();
        let w = CostWeights::scaled_identity(3, 3, 1.0, 1.0).unwrap();
        let g = optimal_gains(&sys, &w).unwrap();
        assert!(g.tracking.k.amax() < 1e-15);
        assert!((&g.tracking.kv - Mat::identity(3, 3) * 0.5).amax() < 1e-15);
        assert!((&g.decoupled.l - Mat::identity(3, 3) * 0.5).amax() < 1e-15);
    }

    #[test]
    fn dlyap_closed_forms() {
        let x = solve_dlyap(&Mat::zeros(3, 3), &Mat::identity(3, 3)).unwrap();
        assert!((x - Mat::identity(3, 3)).amax() < 1e-15);
        let x = solve_dlyap(&Mat::from_element(1, 1, 0.5), &Mat::from_element(1, 1, 1.0)).unwrap();
        assert!((x[(0, 0)] - 4.0 / 3.0).abs() < 1e-15);
        assert!(matches!(
            solve_dlyap(&Mat::from_element(1, 1, 1.0), &Mat::from_element(1, 1, 1.0)),
            Err(Error::Unstable { .. })
        ));
    }

    #[test]
    fn dlyap_large_n_uses_series() {
        let n = 40;
        let a = Mat::from_fn(n, n, |i, j| {
            if i == j {
                0.5
            } else if j == i + 1 {
                0.3
            } else {
                0.0
            }
        });
        let s = Mat::identity(n, n);
        let x = solve_dlyap(&a, &s).unwrap();
        let res = (&s + &a * &x * a.transpose() - &x).norm();
        assert!(res < 1e-11 * x.norm(), "residual {res}");
    }

    #[test]
    fn preview_state_closed_forms() {
        let q = Mat::identity(2, 2);
        let z = Vector::from_vec(vec![1.0, -3.0]);
        for horizon in [0usize, 1, 7] {
            let refs = vec![z.clone(); horizon + 1];
            let v = preview_tracking_state(&Mat::zeros(2, 2), &q, &refs).unwrap();
            assert_eq!(v, z);
        }
        let refs = vec![Vector::from_element(1, 1.0); 30];
        let v = preview_tracking_state(&Mat::from_element(1, 1, 0.5), &Mat::identity(1, 1), &refs)
            .unwrap();
        // constant preview with steady-state terminal condition is exact
        assert!((v[0] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn preview_singular_terminal() {
        let err = preview_tracking_state(
            &Mat::identity(1, 1),
            &Mat::identity(1, 1),
            &[Vector::from_element(1, 1.0)],
        )
        .unwrap_err();
        assert!(matches!(err, Error::Singular(_)));
    }

    #[test]
    fn sequence_matches_per_step_preview() {
        let a = Mat::from_row_slice(2, 2, &[0.3, 0.2, -0.1, 0.5]);
        let q = Mat::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        let refs: Vec<Vector> = (0..12)
            .map(|t| Vector::from_vec(vec![(t as f64).sin(), 0.1 * t as f64]))
            .collect();
        let seq = tracking_state_sequence(&a, &q, &refs).unwrap();
        for t in 0..refs.len() {
            let v = preview_tracking_state(&a, &q, &refs[t..]).unwrap();
            assert!((&seq[t] - v).amax() < 1e-12);
        }
    }

    #[test]
    fn reference_kinds() {
        let r = presets::benchmark_reference(3000);
        assert_eq!(
            r.reference_at(0).unwrap(),
            Vector::from_vec(vec![0.0, 0.0, 0.0, 10.0])
        );
        for t in (0..=3000).step_by(37) {
            assert!(r.reference_at(t).unwrap().norm() <= r.bound());
        }
        let d = Vector::from_vec(vec![1.0, 2.0]);
        let c = ReferenceSignal::Constant(d.clone());
        assert_eq!(c.reference_at(999).unwrap(), d);
        let tab = ReferenceSignal::Table(vec![d.clone(), d.clone() * 2.0]);
        assert_eq!(tab.reference_at(1).unwrap(), d * 2.0);
        assert!(matches!(
            tab.reference_at(2),
            Err(Error::OutOfRange { index: 2, len: 2 })
        ));
    }

    #[test]
    fn noise_stream_is_deterministic() {
        let model = NoiseModel::new(0.1, 1.0, 42).unwrap();
        let mut a = model.stream();
        let mut b = model.stream();
        for _ in 0..10 {
            assert_eq!(a.process(4), b.process(4));
            assert_eq!(a.exploration(2), b.exploration(2));
        }
        assert!(NoiseModel::new(-1.0, 0.0, 0).is_err());
        let mut silent = NoiseModel::new(0.0, 0.0, 3).unwrap().stream();
        assert_eq!(silent.process(3), Vector::zeros(3));
    }

    #[test]
    fn stability_margin_band() {
        assert!(check_stable(0.5).is_ok());
        assert!(check_stable(1.0 - 1e-10).is_err());
        assert!(check_stable(1.2).is_err());
        assert!(check_stable(f64::NAN).is_err());
    }
}
