//! Maps between model-space gains `θ = [K, L]` and the covariance
//! parameterization `ξ = [V, H]`, plus the constraint projector and the
//! scaling matrix relating the two gradient flows.

use crate::data::CovarianceData;
use crate::error::{check_shape, Error, Result};
use crate::linalg::{self, Mat};
use crate::lti::{CostWeights, DecoupledPolicy};

/// Relative singular-value cutoff of the pseudo-inverse `X̄₀†`.
pub const PINV_RCOND: f64 = 1e-12;
/// Tolerance on `|X̄₀V − I|_F` and `|X̄₀H|_F` for a policy to count as feasible.
pub const CONSTRAINT_TOL: f64 = 1e-8;

/// Data-space policy `ξ = [V, H]`, both `(m+n) × n`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariancePolicy {
    pub v: Mat,
    pub h: Mat,
}

impl CovariancePolicy {
    /// `|X̄₀V − I|_F` and `|X̄₀H|_F`.
    pub fn constraint_residuals(&self, cov: &CovarianceData) -> (f64, f64) {
        let x0 = cov.xbar0();
        let n = cov.n();
        (
            (&x0 * &self.v - Mat::identity(n, n)).norm(),
            (&x0 * &self.h).norm(),
        )
    }

    pub fn check_constraints(&self, cov: &CovarianceData) -> Result<()> {
        let (v_residual, h_residual) = self.constraint_residuals(cov);
        if v_residual > CONSTRAINT_TOL || h_residual > CONSTRAINT_TOL {
            return Err(Error::ConstraintViolation {
                v_residual,
                h_residual,
            });
        }
        Ok(())
    }

    /// Removes the rounding that a projected step leaks off the affine set,
    /// once it exceeds a hundredth of the feasibility tolerance.
    pub fn restore_constraints(self, cov: &CovarianceData) -> Self {
        let (rv, rh) = self.constraint_residuals(cov);
        if rv.max(rh) <= CONSTRAINT_TOL * 1e-2 {
            return self;
        }
        let x0 = cov.xbar0();
        let pinv = linalg::pinv(&x0, PINV_RCOND);
        let n = cov.n();
        let v = &self.v - &pinv * (&x0 * &self.v - Mat::identity(n, n));
        let h = &self.h - &pinv * (&x0 * &self.h);
        Self { v, h }
    }

    /// Data-based closed loop `X̄₁ V`.
    pub fn closed_loop(&self, cov: &CovarianceData) -> Mat {
        cov.xbar1() * &self.v
    }

    pub fn stacked(&self) -> Mat {
        linalg::hstack(&self.v, &self.h)
    }

    pub fn from_stacked(xi: &Mat) -> Self {
        let n = xi.ncols() / 2;
        Self {
            v: xi.columns(0, n).into_owned(),
            h: xi.columns(n, n).into_owned(),
        }
    }
}

/// `V = Λ⁻¹[K; I]`, `H = Λ⁻¹[L; 0]`.
pub fn theta_to_xi(theta: &DecoupledPolicy, cov: &CovarianceData) -> Result<CovariancePolicy> {
    let (n, m) = (cov.n(), cov.m());
    check_shape("theta_to_xi K", theta.k.shape(), (m, n))?;
    check_shape("theta_to_xi L", theta.l.shape(), (m, n))?;
    cov.require_pe()?;
    let k_stack = linalg::vstack(&theta.k, &Mat::identity(n, n));
    let l_stack = linalg::vstack(&theta.l, &Mat::zeros(n, n));
    Ok(CovariancePolicy {
        v: cov.lambda_solve(&k_stack),
        h: cov.lambda_solve(&l_stack),
    })
}

/// `K = Ū₀V`, `L = Ū₀H`.
pub fn xi_to_theta(xi: &CovariancePolicy, cov: &CovarianceData) -> DecoupledPolicy {
    let u = cov.ubar0();
    DecoupledPolicy {
        k: &u * &xi.v,
        l: &u * &xi.h,
    }
}

/// `K_v = L Q⁻¹ (I − A_cl)ᵀ`, the inverse of [`kv_to_l`].
pub fn l_to_kv(l: &Mat, a_cl: &Mat, weights: &CostWeights) -> Result<Mat> {
    let n = a_cl.nrows();
    let shifted = Mat::identity(n, n) - a_cl;
    if linalg::sigma_min(&shifted) <= 1e-13 * (1.0 + shifted.amax()) {
        return Err(Error::Singular("I - A_cl"));
    }
    Ok(l * weights.q_inv() * shifted.transpose())
}

/// `L = K_v (I − A_cl)⁻ᵀ Q`.
pub fn kv_to_l(kv: &Mat, a_cl: &Mat, weights: &CostWeights) -> Result<Mat> {
    crate::lti::setpoint_gain(kv, a_cl, weights.q())
}

/// Orthogonal projector `Π = I − X̄₀†X̄₀` onto `null(X̄₀)`.
pub fn projection(cov: &CovarianceData) -> Mat {
    let x0 = cov.xbar0();
    let dim = cov.n() + cov.m();
    let p = Mat::identity(dim, dim) - linalg::pinv(&x0, PINV_RCOND) * &x0;
    linalg::symmetrize(&p)
}

/// `M = Ū₀ Π Ū₀ᵀ` with cached extreme singular values.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingMatrix {
    pub m: Mat,
    pub sigma_min: f64,
    pub norm: f64,
}

impl ScalingMatrix {
    pub fn new(cov: &CovarianceData) -> Result<Self> {
        cov.require_pe()?;
        Ok(Self::with_projection(cov, &projection(cov)))
    }

    pub(crate) fn with_projection(cov: &CovarianceData, pi: &Mat) -> Self {
        let u = cov.ubar0();
        let m = linalg::symmetrize(&(&u * pi * u.transpose()));
        let eig = m.symmetric_eigenvalues();
        Self {
            sigma_min: eig.iter().copied().fold(f64::INFINITY, f64::min).max(0.0),
            norm: eig.iter().copied().fold(0.0, f64::max),
            m,
        }
    }
}

pub fn scaling_matrix(cov: &CovarianceData) -> Result<ScalingMatrix> {
    ScalingMatrix::new(cov)
}
