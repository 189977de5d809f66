mod common;

use common::*;
use deepo_core::*;

fn stabilizing_gain(sys: &LtiSystem, w: &CostWeights) -> Mat {
    optimal_gains(sys, w).unwrap().tracking.k
}

#[test]
fn dare_matches_value_iteration() {
    let mut r = rng(11);
    for case in 0..30 {
        let n = 1 + case % 5;
        let m = 1 + case % 3;
        let sys = random_system(&mut r, n, m, 0.4 + 0.03 * case as f64);
        let w = random_weights(&mut r, n, m);
        let p = solve_dare(&sys, &w).unwrap();
        let oracle = value_iteration(&sys, &w);
        assert!(
            (&p - &oracle).norm() < 1e-8 * (1.0 + oracle.norm()),
            "case {case}: {}",
            (&p - &oracle).norm()
        );
        assert!(lti::dare_residual(&sys, &w, &p) < 1e-10 * (1.0 + p.norm()));
    }
}

#[test]
fn lyapunov_matches_series() {
    let mut r = rng(12);
    for n in [1, 2, 5, 8] {
        let a = {
            let a = randn(&mut r, n, n);
            let rho = spectral_radius(&a);
            a * (0.9 / rho)
        };
        let s = random_spd(&mut r, n, 0.1);
        let x = solve_dlyap(&a, &s).unwrap();
        let oracle = lyap_series(&a, &s);
        assert!((&x - &oracle).norm() < 1e-9 * oracle.norm());
        let xt = solve_dlyap_transposed(&a, &s).unwrap();
        let oracle_t = lyap_series(&a.transpose(), &s);
        assert!((&xt - &oracle_t).norm() < 1e-9 * oracle_t.norm());
    }
}

#[test]
fn running_covariance_matches_batch() {
    let mut r = rng(13);
    let sys = random_system(&mut r, 3, 2, 0.8);
    let (data, _) = solver::precollect(&sys, &zeros(3), 40, &mut noise(0.1, 1.0, 4)).unwrap();
    let d = data.log.d0();
    let t = data.log.len() as f64;
    let lambda = &d * d.transpose() / t;
    let xbar1 = data.log.x1() * d.transpose() / t;
    assert!((data.cov.lambda() - &lambda).amax() < 1e-12 * lambda.amax());
    assert!((data.cov.xbar1() - &xbar1).amax() < 1e-12 * xbar1.amax());
    let again = CovarianceData::from_log(&data.log);
    assert!((again.lambda() - &lambda).amax() < 1e-12 * lambda.amax());
}

#[test]
fn projector_matches_svd_null_space() {
    let mut r = rng(14);
    for (n, m, t) in [(2, 1, 5), (4, 4, 9), (4, 2, 30)] {
        let sys = random_system(&mut r, n, m, 0.7);
        let (data, _) =
            solver::precollect(&sys, &zeros(n), t, &mut noise(0.1, 1.0, t as u64)).unwrap();
        let pi = projection(&data.cov);
        let oracle = null_projector(&data.cov.xbar0());
        assert!((&pi - &oracle).amax() < 1e-11);
        assert!((&pi * &pi - &pi).amax() < 1e-11);
        assert!((&pi - pi.transpose()).amax() < 1e-12);
    }
}

#[test]
fn ls_identification_is_exact_without_noise() {
    let mut r = rng(15);
    let sys = random_system(&mut r, 3, 2, 0.9);
    let (data, _) = solver::precollect(&sys, &zeros(3), 20, &mut noise(0.0, 1.0, 1)).unwrap();
    let est = ls_identify(&data.cov).unwrap();
    assert!((est.a() - sys.a()).amax() < 1e-10);
    assert!((est.b() - sys.b()).amax() < 1e-10);
}

#[test]
fn model_gradient_matches_finite_differences() {
    let mut r = rng(16);
    for case in 0..10 {
        let (n, m) = (2 + case % 3, 1 + case % 2);
        let sys = random_system(&mut r, n, m, 0.7);
        let w = random_weights(&mut r, n, m);
        let theta = DecoupledPolicy::new(randn(&mut r, m, n) * 0.1, randn(&mut r, m, n)).unwrap();
        let g = model_grad(&sys, &w, &theta).unwrap();
        let f = |x: &Mat| model_cost(&sys, &w, &DecoupledPolicy::from_stacked(x)).unwrap();
        let x = theta.stacked();
        let mut fd = Mat::zeros(m, 2 * n);
        for i in 0..m {
            for j in 0..2 * n {
                let mut d = Mat::zeros(m, 2 * n);
                d[(i, j)] = 1.0;
                fd[(i, j)] = directional_fd(&f, &x, &d, 1e-6);
            }
        }
        assert!((&g - &fd).norm() < 1e-5 * g.norm(), "case {case}");
    }
}

#[test]
fn data_gradient_matches_finite_differences_on_feasible_directions() {
    let mut r = rng(17);
    let sys = presets::benchmark_system_full();
    let w = presets::benchmark_weights(4, 4);
    let (data, _) = solver::precollect(&sys, &zeros(4), 9, &mut noise(0.1, 1.0, 5)).unwrap();
    let cov = &data.cov;
    let est = ls_identify(cov).unwrap();
    let k0 = stabilizing_gain(&est, &w);
    let pi = projection(cov);
    for _ in 0..5 {
        let theta =
            DecoupledPolicy::new(&k0 + randn(&mut r, 4, 4) * 0.01, randn(&mut r, 4, 4)).unwrap();
        let xi = theta_to_xi(&theta, cov).unwrap();
        let g = data_grad(cov, &w, &xi).unwrap();
        let f = |x: &Mat| data_cost(cov, &w, &CovariancePolicy::from_stacked(x)).unwrap();
        let x = xi.stacked();
        for _ in 0..10 {
            let d = &pi * randn(&mut r, 8, 8);
            let exact = g.dot(&d);
            let fd = directional_fd(&f, &x, &d, 1e-6);
            assert!((exact - fd).abs() < 1e-5 * (g.norm() * d.norm()));
        }
    }
}

#[test]
fn preview_state_matches_explicit_sum() {
    let mut r = rng(18);
    let n = 3;
    let a = randn(&mut r, n, n);
    let a = &a * (0.8 / spectral_radius(&a));
    let q = random_spd(&mut r, n, 0.5);
    let refs: Vec<Vector> = (0..6)
        .map(|_| randn(&mut r, n, 1).column(0).into_owned())
        .collect();
    let v = preview_tracking_state(&a, &q, &refs).unwrap();
    let at = a.transpose();
    let mut oracle = Vector::zeros(n);
    let mut power = Mat::identity(n, n);
    for z in &refs[..refs.len() - 1] {
        oracle += &power * &q * z;
        power = &power * &at;
    }
    let inv = (Mat::identity(n, n) - &at).try_inverse().unwrap();
    oracle += power * inv * &q * refs.last().unwrap();
    assert!((v - oracle).norm() < 1e-10);
}

#[test]
fn model_cost_is_sum_of_setpoint_costs() {
    let mut r = rng(19);
    let sys = random_system(&mut r, 4, 2, 0.8);
    let w = random_weights(&mut r, 4, 2);
    let theta = DecoupledPolicy::new(Mat::zeros(2, 4), randn(&mut r, 2, 4)).unwrap();
    let c = model_cost(&sys, &w, &theta).unwrap();
    let split: f64 = (0..4)
        .map(|i| per_setpoint_cost(&sys, &w, &theta, i).unwrap())
        .sum();
    let alt = model_cost_alt(&sys, &w, &theta).unwrap();
    assert!((c - split).abs() < 1e-9 * (1.0 + c));
    assert!((c - alt).abs() < 1e-9 * (1.0 + c));
}
