#![allow(dead_code)]

use deepo_core::{linalg, CostWeights, LtiSystem, Mat, NoiseModel, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn randn(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    Mat::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Random system with open-loop spectral radius `rho`.
pub fn random_system(rng: &mut ChaCha8Rng, n: usize, m: usize, rho: f64) -> LtiSystem {
    let a = randn(rng, n, n);
    let r = linalg::spectral_radius(&a).max(1e-3);
    LtiSystem::new(a * (rho / r), randn(rng, n, m)).unwrap()
}

pub fn random_spd(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> Mat {
    let g = randn(rng, n, n);
    &g * g.transpose() / n as f64 + Mat::identity(n, n) * floor
}

pub fn random_weights(rng: &mut ChaCha8Rng, n: usize, m: usize) -> CostWeights {
    CostWeights::new(random_spd(rng, n, 0.5), random_spd(rng, m, 0.1)).unwrap()
}

/// Riccati value iteration from `P = 0`; slow but independent.
pub fn value_iteration(sys: &LtiSystem, w: &CostWeights) -> Mat {
    let (a, b) = (sys.a(), sys.b());
    let mut p = Mat::zeros(sys.n(), sys.n());
    for _ in 0..1_000_000 {
        let bp = b.transpose() * &p;
        let gain = (w.r() + &bp * b).try_inverse().unwrap() * (&bp * a);
        let next = w.q() + a.transpose() * &p * a - a.transpose() * p.transpose() * b * gain;
        let next = (&next + next.transpose()) * 0.5;
        let done = (&next - &p).norm() <= 1e-14 * (1.0 + next.norm());
        p = next;
        if done {
            break;
        }
    }
    p
}

/// `Σ_k A^k S (A^k)ᵀ`, truncated once terms fall below roundoff.
pub fn lyap_series(a: &Mat, s: &Mat) -> Mat {
    let mut term = s.clone();
    let mut sum = s.clone();
    for _ in 0..200_000 {
        term = a * term * a.transpose();
        sum += &term;
        if term.norm() < 1e-17 * sum.norm() {
            break;
        }
    }
    sum
}

/// Orthogonal projector onto the null space of `x`, built from the
/// eigendecomposition of the Gram matrix `x xᵀ`.
pub fn null_projector(x: &Mat) -> Mat {
    let cols = x.ncols();
    let eig = (x * x.transpose()).symmetric_eigen();
    let tol = 1e-14 * eig.eigenvalues.max();
    let mut range = Mat::zeros(cols, cols);
    for (i, l) in eig.eigenvalues.iter().enumerate() {
        if *l > tol {
            let c = x.transpose() * eig.eigenvectors.column(i) / l.sqrt();
            range += &c * c.transpose();
        }
    }
    Mat::identity(cols, cols) - range
}

/// Central difference of `f` at `x` along `d`.
pub fn directional_fd(f: &dyn Fn(&Mat) -> f64, x: &Mat, d: &Mat, h: f64) -> f64 {
    (f(&(x + d * h)) - f(&(x - d * h))) / (2.0 * h)
}

pub fn zeros(n: usize) -> Vector {
    Vector::zeros(n)
}

pub fn noise(process: f64, exploration: f64, seed: u64) -> deepo_core::NoiseStream {
    NoiseModel::new(process, exploration, seed)
        .unwrap()
        .stream()
}
