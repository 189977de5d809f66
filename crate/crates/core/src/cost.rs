//! Reference-decoupled tracking cost and its gradient, in model space
//! (`θ = [K, L]` on a pair `(A, B)`) and in data space (`ξ = [V, H]` on a
//! covariance dataset).
//!
//! Both caches hold the policy-dependent matrices the cost and gradient are
//! built from; `Φ` carries the `n·Σ` weighting that the `n·tr(P)` term of the
//! cost induces.

use crate::data::CovarianceData;
use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::lti::{self, CostWeights, DecoupledPolicy, LtiSystem};
use crate::param::CovariancePolicy;

fn phi_matrix(n: usize, sigma: &Mat, z: &Mat) -> Mat {
    let top_left = sigma * n as f64 + z * z.transpose();
    linalg::block2(&top_left, z, &z.transpose(), &Mat::identity(n, n))
}

/// Policy-dependent matrices of `θ` on `(A, B)`.
#[derive(Debug, Clone)]
pub struct ModelCostCache {
    pub a_cl: Mat,
    pub p: Mat,
    pub y: Mat,
    pub g: Mat,
    pub sigma: Mat,
    pub e: Mat,
    pub f: Mat,
    pub z: Mat,
    pub phi: Mat,
    pub cost: f64,
}

impl ModelCostCache {
    pub fn new(sys: &LtiSystem, weights: &CostWeights, theta: &DecoupledPolicy) -> Result<Self> {
        let (n, m) = (sys.n(), sys.m());
        weights.check_against(n, m)?;
        crate::error::check_shape("policy K", theta.k.shape(), (m, n))?;
        crate::error::check_shape("policy L", theta.l.shape(), (m, n))?;
        let (a, b, q, r) = (sys.a(), sys.b(), weights.q(), weights.r());
        let (k, l) = (&theta.k, &theta.l);
        let a_cl = sys.closed_loop(k);
        lti::check_stable(linalg::spectral_radius(&a_cl))?;

        let p = linalg::symmetrize(&lti::solve_dlyap_transposed(
            &a_cl,
            &(q + k.transpose() * r * k),
        )?);
        let y = linalg::inverse(&(Mat::identity(n, n) - &a_cl), "I - A - BK")?;
        let bl = b * l;
        let g = y.transpose() * (-q + k.transpose() * r * l + a_cl.transpose() * &p * &bl);
        let sigma = linalg::symmetrize(&lti::solve_dlyap(&a_cl, &Mat::identity(n, n))?);
        let bt_p = b.transpose() * &p;
        let e = (r + &bt_p * b) * k + &bt_p * a;
        let f = b.transpose() * &g + r * l + &bt_p * &bl;
        let z = &y * &bl;
        let phi = phi_matrix(n, &sigma, &z);
        let cost = (q
            + l.transpose() * r * l
            + bl.transpose() * &p * &bl
            + &p * n as f64
            + g.transpose() * &bl * 2.0)
            .trace();
        Ok(Self {
            a_cl,
            p,
            y,
            g,
            sigma,
            e,
            f,
            z,
            phi,
            cost,
        })
    }

    /// `2 [E_K, F_θ] Φ(θ)`, laid out as `[∂/∂K, ∂/∂L]`.
    pub fn gradient(&self) -> Mat {
        linalg::hstack(&self.e, &self.f) * &self.phi * 2.0
    }

    /// Largest residual of the defining equations.
    pub fn residual(&self, sys: &LtiSystem, weights: &CostWeights, theta: &DecoupledPolicy) -> f64 {
        let n = sys.n();
        let (q, r, k) = (weights.q(), weights.r(), &theta.k);
        let p_res = (q + k.transpose() * r * k + self.a_cl.transpose() * &self.p * &self.a_cl
            - &self.p)
            .norm();
        let y_res = ((Mat::identity(n, n) - &self.a_cl) * &self.y - Mat::identity(n, n)).norm();
        let s_res = (Mat::identity(n, n) + &self.a_cl * &self.sigma * self.a_cl.transpose()
            - &self.sigma)
            .norm();
        p_res.max(y_res).max(s_res)
    }
}

/// `C(θ)` on `(A, B)`.
pub fn model_cost(sys: &LtiSystem, weights: &CostWeights, theta: &DecoupledPolicy) -> Result<f64> {
    Ok(ModelCostCache::new(sys, weights, theta)?.cost)
}

/// Steady-state form `tr((Z−I)ᵀQ(Z−I) + (KZ+L)ᵀR(KZ+L) + n P_K)`.
pub fn model_cost_alt(
    sys: &LtiSystem,
    weights: &CostWeights,
    theta: &DecoupledPolicy,
) -> Result<f64> {
    let n = sys.n();
    let cache = ModelCostCache::new(sys, weights, theta)?;
    let offset = &cache.z - Mat::identity(n, n);
    let input = &theta.k * &cache.z + &theta.l;
    Ok((offset.transpose() * weights.q() * &offset
        + input.transpose() * weights.r() * &input
        + &cache.p * n as f64)
        .trace())
}

/// Cost of tracking the single set point `e_i` (0-based index).
pub fn per_setpoint_cost(
    sys: &LtiSystem,
    weights: &CostWeights,
    theta: &DecoupledPolicy,
    i: usize,
) -> Result<f64> {
    let n = sys.n();
    if i >= n {
        return Err(Error::OutOfRange { index: i, len: n });
    }
    let cache = ModelCostCache::new(sys, weights, theta)?;
    let (q, r, b) = (weights.q(), weights.r(), sys.b());
    let (k, l) = (&theta.k, &theta.l);
    let bl = b * l;
    let rhs = (-q + k.transpose() * r * l + cache.a_cl.transpose() * &cache.p * &bl)
        .column(i)
        .into_owned();
    let g = (Mat::identity(n, n) - cache.a_cl.transpose())
        .lu()
        .solve(&rhs)
        .ok_or(Error::Singular("I - (A+BK)'"))?;
    let li = l.column(i);
    let bli = bl.column(i);
    Ok(q[(i, i)]
        + (li.transpose() * r * li)[(0, 0)]
        + (bli.transpose() * &cache.p * bli)[(0, 0)]
        + cache.p.trace()
        + 2.0 * g.dot(&bli))
}

/// `∇_θ C(θ)`.
pub fn model_grad(sys: &LtiSystem, weights: &CostWeights, theta: &DecoupledPolicy) -> Result<Mat> {
    Ok(ModelCostCache::new(sys, weights, theta)?.gradient())
}

/// Policy-dependent matrices of `ξ` on a covariance dataset.
#[derive(Debug, Clone)]
pub struct DataCostCache {
    pub a_cl: Mat,
    pub p: Mat,
    pub y: Mat,
    pub g: Mat,
    pub e: Mat,
    pub f: Mat,
    pub sigma: Mat,
    pub z: Mat,
    pub phi: Mat,
    pub cost: f64,
}

impl DataCostCache {
    pub fn new(cov: &CovarianceData, weights: &CostWeights, xi: &CovariancePolicy) -> Result<Self> {
        let (n, m) = (cov.n(), cov.m());
        weights.check_against(n, m)?;
        crate::error::check_shape("policy V", xi.v.shape(), (n + m, n))?;
        crate::error::check_shape("policy H", xi.h.shape(), (n + m, n))?;
        xi.check_constraints(cov)?;
        let (q, r) = (weights.q(), weights.r());
        let (v, h) = (&xi.v, &xi.h);
        let x1 = cov.xbar1();
        let u0 = cov.ubar0();
        let a_cl = x1 * v;
        lti::check_stable(linalg::spectral_radius(&a_cl))?;

        let uru = u0.transpose() * r * &u0;
        let p = linalg::symmetrize(&lti::solve_dlyap_transposed(
            &a_cl,
            &(q + v.transpose() * &uru * v),
        )?);
        let y = linalg::inverse(&(Mat::identity(n, n) - &a_cl), "I - X1 V")?;
        let xpx = x1.transpose() * &p * x1;
        let g = y.transpose() * (-q + v.transpose() * &uru * h + v.transpose() * &xpx * h);
        let e = (&uru + &xpx) * v;
        let f = x1.transpose() * &g + &uru * h + &xpx * h;
        let sigma = linalg::symmetrize(&lti::solve_dlyap(&a_cl, &Mat::identity(n, n))?);
        let x1h = x1 * h;
        let z = &y * &x1h;
        let phi = phi_matrix(n, &sigma, &z);
        let cost = (q
            + h.transpose() * &uru * h
            + h.transpose() * &xpx * h
            + &p * n as f64
            + g.transpose() * &x1h * 2.0)
            .trace();
        Ok(Self {
            a_cl,
            p,
            y,
            g,
            e,
            f,
            sigma,
            z,
            phi,
            cost,
        })
    }

    /// `2 [E_V, F_ξ] Φ_ξ`, laid out as `[∂/∂V, ∂/∂H]`.
    pub fn gradient(&self) -> Mat {
        linalg::hstack(&self.e, &self.f) * &self.phi * 2.0
    }

    pub fn residual(
        &self,
        cov: &CovarianceData,
        weights: &CostWeights,
        xi: &CovariancePolicy,
    ) -> f64 {
        let n = cov.n();
        let u0 = cov.ubar0();
        let ru = u0.transpose() * weights.r() * &u0;
        let p_res = (weights.q()
            + xi.v.transpose() * &ru * &xi.v
            + self.a_cl.transpose() * &self.p * &self.a_cl
            - &self.p)
            .norm();
        let y_res = ((Mat::identity(n, n) - &self.a_cl) * &self.y - Mat::identity(n, n)).norm();
        let s_res = (Mat::identity(n, n) + &self.a_cl * &self.sigma * self.a_cl.transpose()
            - &self.sigma)
            .norm();
        p_res.max(y_res).max(s_res)
    }
}

/// `C(ξ)`.
pub fn data_cost(
    cov: &CovarianceData,
    weights: &CostWeights,
    xi: &CovariancePolicy,
) -> Result<f64> {
    Ok(DataCostCache::new(cov, weights, xi)?.cost)
}

/// `∇_ξ C(ξ)` (unprojected).
pub fn data_grad(
    cov: &CovarianceData,
    weights: &CostWeights,
    xi: &CovariancePolicy,
) -> Result<Mat> {
    Ok(DataCostCache::new(cov, weights, xi)?.gradient())
}
