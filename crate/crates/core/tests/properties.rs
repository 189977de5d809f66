mod common;

use common::*;
use deepo_core::*;
use proptest::prelude::*;

fn benchmark_data(seed: u64, t: usize, actuation: Actuation) -> (LtiSystem, CostWeights, Dataset) {
    let sys = presets::benchmark_system(actuation);
    let w = presets::benchmark_weights(4, sys.m());
    let (data, _) = solver::precollect(&sys, &zeros(4), t, &mut noise(0.1, 1.0, seed)).unwrap();
    (sys, w, data)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn reparameterization_roundtrip(seed in 0u64..10_000, t in 9usize..60) {
        let (_, _, data) = benchmark_data(seed, t, Actuation::Under);
        let mut r = rng(seed);
        let theta = DecoupledPolicy::new(randn(&mut r, 2, 4), randn(&mut r, 2, 4)).unwrap();
        let xi = theta_to_xi(&theta, &data.cov).unwrap();
        let back = xi_to_theta(&xi, &data.cov);
        prop_assert!((back.stacked() - theta.stacked()).amax() < 1e-10 * (1.0 + theta.stacked().amax()));
        let (rv, rh) = xi.constraint_residuals(&data.cov);
        prop_assert!(rv + rh < 1e-8);
    }

    #[test]
    fn projector_is_orthogonal(seed in 0u64..10_000, t in 9usize..40) {
        let (_, _, data) = benchmark_data(seed, t, Actuation::Full);
        let pi = projection(&data.cov);
        prop_assert!((&pi * &pi - &pi).amax() < 1e-11);
        prop_assert!((&pi - pi.transpose()).amax() < 1e-11);
        prop_assert!((data.cov.xbar0() * &pi).amax() < 1e-9);
    }

    #[test]
    fn scaling_matrix_lower_bound(seed in 0u64..10_000, t in 9usize..40) {
        let (_, _, data) = benchmark_data(seed, t, Actuation::Full);
        let pe = pe_check(&data.cov);
        let m = scaling_matrix(&data.cov).unwrap();
        prop_assert!(m.sigma_min >= pe.gamma.powi(4) * (1.0 - 1e-9));
    }

    #[test]
    fn data_cost_equals_identified_model_cost(seed in 0u64..10_000, t in 9usize..40) {
        let (_, w, data) = benchmark_data(seed, t, Actuation::Under);
        let est = ls_identify(&data.cov).unwrap();
        let theta = DecoupledPolicy::new(Mat::zeros(2, 4), randn(&mut rng(seed), 2, 4)).unwrap();
        if let Ok(model) = model_cost(&est, &w, &theta) {
            let xi = theta_to_xi(&theta, &data.cov).unwrap();
            let c = data_cost(&data.cov, &w, &xi).unwrap();
            prop_assert!((c - model).abs() < 1e-8 * (1.0 + model));
        }
    }

    #[test]
    fn kv_setpoint_roundtrip(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let sys = random_system(&mut r, 3, 2, 0.7);
        let w = random_weights(&mut r, 3, 2);
        let l = randn(&mut r, 2, 3);
        let a_cl = sys.a().clone();
        let kv = l_to_kv(&l, &a_cl, &w).unwrap();
        let back = kv_to_l(&kv, &a_cl, &w).unwrap();
        prop_assert!((back - &l).amax() < 1e-10 * (1.0 + l.amax()));
    }

    #[test]
    fn optimum_dominates_random_policies(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let sys = random_system(&mut r, 3, 2, 0.8);
        let w = random_weights(&mut r, 3, 2);
        let opt = optimal_gains(&sys, &w).unwrap();
        let best = model_cost(&sys, &w, &opt.decoupled).unwrap();
        let other = DecoupledPolicy::new(
            &opt.decoupled.k + randn(&mut r, 2, 3) * 0.05,
            &opt.decoupled.l + randn(&mut r, 2, 3) * 0.05,
        ).unwrap();
        if let Ok(c) = model_cost(&sys, &w, &other) {
            prop_assert!(c >= best - 1e-9 * (1.0 + best));
        }
    }
}

#[test]
fn offline_iterates_keep_constraints() {
    let (_, w, data) = benchmark_data(2, 40, Actuation::Under);
    let cfg = SolverConfig {
        eta: 1e-3,
        max_iters: 300,
        grad_tol: 0.0,
        ..Default::default()
    };
    let trace = offline_solve(&data.cov, &w, &DecoupledPolicy::zeros(4, 2), &cfg).unwrap();
    assert_eq!(trace.status, SolverStatus::MaxIters);
    for pair in trace.records.windows(2) {
        assert!(pair[1].cost <= pair[0].cost);
    }
    for rec in &trace.records {
        assert!(rec.v_residual + rec.h_residual < 1e-8);
    }
}
