//! Reference computations that share no code with the solvers they check.

use deepo_core::{CostWeights, LtiSystem, Mat};
use nalgebra::{Complex, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn randn(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> Mat {
    let g = randn(rng, n, n);
    &g * g.transpose() / n as f64 + Mat::identity(n, n) * 0.1
}

fn radius(m: &Mat) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Gaussian `A` rescaled to spectral radius `rho`, Gaussian `B`.
pub fn random_system(rng: &mut ChaCha8Rng, n: usize, m: usize, rho: f64) -> LtiSystem {
    let a = randn(rng, n, n);
    let r = radius(&a).max(1e-3);
    LtiSystem::new(a * (rho / r), randn(rng, n, m)).expect("consistent shapes")
}

/// PBH test on every eigenvalue outside the open unit disc.
pub fn is_stabilizable(sys: &LtiSystem) -> bool {
    let (a, b) = (sys.a(), sys.b());
    let n = a.nrows();
    let c = |m: &Mat| m.map(|v| Complex::new(v, 0.0));
    for lambda in a.complex_eigenvalues().iter() {
        if lambda.norm() < 1.0 {
            continue;
        }
        let mut pencil = DMatrix::<Complex<f64>>::zeros(n, n + b.ncols());
        let shifted = c(a) - DMatrix::<Complex<f64>>::identity(n, n) * *lambda;
        pencil.view_mut((0, 0), (n, n)).copy_from(&shifted);
        pencil.view_mut((0, n), (n, b.ncols())).copy_from(&c(b));
        // rank test on the Hermitian Gram matrix of the pencil
        let gram = &pencil * pencil.adjoint();
        let ev = gram.symmetric_eigenvalues();
        if ev.min() < 1e-12 * ev.max().max(1.0) {
            return false;
        }
    }
    true
}

/// Riccati recursion from `P = 0` until the update stalls.
pub fn value_iteration(sys: &LtiSystem, w: &CostWeights, max_iters: usize) -> Option<Mat> {
    let (a, b, q, r) = (sys.a(), sys.b(), w.q(), w.r());
    let mut p = Mat::zeros(a.nrows(), a.nrows());
    for _ in 0..max_iters {
        let bp = b.transpose() * &p;
        let gain = (r + &bp * b).lu().solve(&(&bp * a))?;
        let next = q + a.transpose() * &p * a - a.transpose() * &p * b * gain;
        let next = (&next + next.transpose()) * 0.5;
        let step = (&next - &p).norm();
        p = next;
        if step <= 1e-15 * (1.0 + p.norm()) {
            return Some(p);
        }
    }
    None
}

/// `Q + A'PA − A'PB(R+B'PB)⁻¹B'PA − P`, relative to `1 + |P|`.
pub fn riccati_residual(sys: &LtiSystem, w: &CostWeights, p: &Mat) -> f64 {
    let (a, b) = (sys.a(), sys.b());
    let bp = b.transpose() * p;
    let Some(gain) = (w.r() + &bp * b).lu().solve(&(&bp * a)) else {
        return f64::INFINITY;
    };
    let res = w.q() + a.transpose() * p * a - a.transpose() * p * b * gain - p;
    res.norm() / (1.0 + p.norm())
}

/// Orthonormal basis of the null space of `m`: eigenvectors of `mᵀm` for the
/// eigenvalues at roundoff level.
pub fn null_basis(m: &Mat) -> Mat {
    let eig = (m.transpose() * m).symmetric_eigen();
    let tol = 1e-12 * eig.eigenvalues.max().max(f64::MIN_POSITIVE);
    let cols: Vec<_> = (0..eig.eigenvalues.len())
        .filter(|&i| eig.eigenvalues[i] <= tol)
        .map(|i| eig.eigenvectors.column(i).into_owned())
        .collect();
    if cols.is_empty() {
        Mat::zeros(m.ncols(), 0)
    } else {
        Mat::from_columns(&cols)
    }
}

/// Central differences of `f` along `dirs`, one entry per direction.
pub fn central_differences<F>(f: F, x: &Mat, dirs: &[Mat], h: f64) -> Option<Vec<f64>>
where
    F: Fn(&Mat) -> Option<f64>,
{
    dirs.iter()
        .map(|d| {
            let up = f(&(x + d * h))?;
            let down = f(&(x - d * h))?;
            Some((up - down) / (2.0 * h))
        })
        .collect()
}

/// Unit matrices `E_ij`.
pub fn coordinate_directions(rows: usize, cols: usize) -> Vec<Mat> {
    let mut out = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            let mut e = Mat::zeros(rows, cols);
            e[(i, j)] = 1.0;
            out.push(e);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_value_iteration() {
        // a = 0, b = 1: P = q
        let sys = LtiSystem::new(Mat::zeros(1, 1), Mat::identity(1, 1)).unwrap();
        let w = CostWeights::scaled_identity(1, 1, 1.0, 1.0).unwrap();
        let p = value_iteration(&sys, &w, 100).unwrap();
        assert!((p[(0, 0)] - 1.0).abs() < 1e-14);
        assert!(riccati_residual(&sys, &w, &p) < 1e-14);
    }

    #[test]
    fn null_basis_is_orthonormal_kernel() {
        let mut r = rng(3);
        for _ in 0..50 {
            let m = randn(&mut r, 4, 8) * 10.0;
            let n = null_basis(&m);
            assert_eq!(n.ncols(), 4);
            assert!((&m * &n).norm() < 1e-11 * m.norm());
            assert!((n.transpose() * &n - Mat::identity(4, 4)).norm() < 1e-12);
        }
    }

    #[test]
    fn uncontrollable_unstable_mode_is_detected() {
        let a = Mat::from_row_slice(2, 2, &[1.5, 0.0, 0.0, 0.5]);
        let b = Mat::from_row_slice(2, 1, &[0.0, 1.0]);
        assert!(!is_stabilizable(&LtiSystem::new(a.clone(), b).unwrap()));
        let b = Mat::from_row_slice(2, 1, &[1.0, 0.0]);
        assert!(is_stabilizable(&LtiSystem::new(a, b).unwrap()));
    }
}
