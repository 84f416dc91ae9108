mod common;

use irgnm_core::fem::FemSpace;
use irgnm_core::qp::{solve_linearized_ivanov, Linearization, QpProblem, QpSettings};
use irgnm_core::radius::{find_radius, linearized_discrepancy, RadiusSearchConfig, SearchPhase};

#[test]
fn discrepancy_is_nonincreasing_in_the_radius() {
    let space = FemSpace::unit_square(8).unwrap();
    for seed in [3, 4] {
        let inst = common::instance(&space, seed, 1.0, 0.2);
        let lin = Linearization::new(&space, inst.kappa, &inst.u_k, &inst.y_k, &inst.g).unwrap();
        let d: Vec<f64> = (0..=16)
            .map(|i| {
                let rho = 0.125 * i as f64;
                let sol = solve_linearized_ivanov(&QpProblem {
                    lin: &lin,
                    rho,
                    settings: QpSettings::default(),
                })
                .unwrap();
                linearized_discrepancy(&lin, &sol).unwrap()
            })
            .collect();
        for w in d.windows(2) {
            assert!(w[1] <= w[0] + 1e-8, "{d:?}");
        }
    }
}

#[test]
fn accepted_radius_satisfies_the_band_recomputed_from_scratch() {
    let space = FemSpace::unit_square(8).unwrap();
    let cfg = RadiusSearchConfig::default();
    for seed in [5, 6, 7] {
        let inst = common::instance(&space, seed, 10.0, 0.2);
        let lin = Linearization::new(&space, inst.kappa, &inst.u_k, &inst.y_k, &inst.g).unwrap();
        let res = find_radius(&lin, &cfg, QpSettings::default()).unwrap();
        assert!(res.solution.converged);
        assert!(res.qp_solves >= res.trace.len() && res.qp_solves >= 1);
        let residual: Vec<f64> = inst.y_k.iter().zip(&inst.g).map(|(a, b)| a - b).collect();
        let big_d = space.l2_distance(&residual, &vec![0.0; residual.len()]).unwrap();
        let v = res.solution.v_field(&space);
        let lin_res: Vec<f64> = residual.iter().zip(v.values()).map(|(a, b)| a + b).collect();
        let d = space.l2_distance(&lin_res, &vec![0.0; lin_res.len()]).unwrap();
        assert!((d - res.d_rho).abs() <= 1e-12 * big_d);
        assert!(cfg.theta_low * big_d <= d && d <= cfg.theta_high * big_d);
        if res.phase == SearchPhase::Phase2 {
            assert!(res.trace.iter().any(|t| t.bracket.is_some()));
        }
    }
}

#[test]
fn invalid_thresholds_are_rejected() {
    let cfg = RadiusSearchConfig {
        theta_low: 0.9,
        theta_high: 0.5,
        ..Default::default()
    };
    assert!(cfg.validate().is_err());
    let cfg = RadiusSearchConfig {
        rho_start: 0.0,
        ..Default::default()
    };
    assert!(cfg.validate().is_err());
}
