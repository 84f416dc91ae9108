use std::fs;

use irgnm_core::experiment::{
    add_noise, evaluate_metrics, make_exact_source, run_experiment_suite, run_single, spots, synthesize_data,
    ExperimentConfig, SUMMARY_HEADER,
};
use irgnm_core::fem::{integrate_over_rect, FemSpace, NodalField, NormKind};
use irgnm_core::par::Execution;
use irgnm_core::semilinear::NewtonOptions;

#[test]
fn exact_source_has_unit_maximum() {
    let space = FemSpace::unit_square(32).unwrap();
    let u = make_exact_source(space.mesh());
    assert_eq!(space.norm(u.values(), NormKind::Linf).unwrap(), 1.0);
}

#[test]
fn two_grid_data_gap_shrinks_at_second_order() {
    // κ = 0: compare the projected fine-grid data with the direct coarse solve.
    let gap = |n: usize| {
        let space = FemSpace::unit_square(n).unwrap();
        let g = synthesize_data(&space, 2, 0.0, &NewtonOptions::default()).unwrap();
        let src = make_exact_source(space.mesh());
        let y = space.solve_laplacian(&space.mass_apply(src.values()).unwrap()).unwrap();
        let y = NodalField::from_interior(space.mesh(), &y).unwrap();
        space.l2_distance(g.values(), y.values()).unwrap() / space.l2_norm(&g)
    };
    let ratio = gap(8) / gap(16);
    assert!((3.0..=5.0).contains(&ratio), "{ratio}");
}

#[test]
fn data_for_a_positive_source_is_positive_inside() {
    let space = FemSpace::unit_square(32).unwrap();
    let g = synthesize_data(&space, 2, 1.0, &NewtonOptions::default()).unwrap();
    let mesh = space.mesh();
    assert!(mesh.interior_nodes().iter().all(|&v| g.values()[v] > 0.0));
}

#[test]
fn noise_realises_the_requested_level_exactly() {
    let space = FemSpace::unit_square(16).unwrap();
    let g = synthesize_data(&space, 2, 1.0, &NewtonOptions::default()).unwrap();
    for level in [0.001, 0.01, 0.1] {
        let (gd, delta) = add_noise(&space, &g, level, 5).unwrap();
        let dist = space.l2_distance(gd.values(), g.values()).unwrap();
        assert!((dist - delta).abs() <= 1e-14 * space.l2_norm(&g).max(1.0));
        assert!((delta - level * space.l2_norm(&g)).abs() <= 1e-15);
        assert!(gd.vanishes_on_boundary(space.mesh()));
    }
    let (a, _) = add_noise(&space, &g, 0.0, 5).unwrap();
    assert_eq!(a, g);
}

#[test]
fn spot_errors_follow_the_normalised_pairing() {
    let n = 32;
    let space = FemSpace::unit_square(n).unwrap();
    let mesh = space.mesh();
    let u_ex = make_exact_source(mesh);
    let rho = 0.5859;
    let u_rec = NodalField::from_values(mesh, u_ex.values().iter().map(|x| rho * x).collect()).unwrap();
    let cfg = ExperimentConfig {
        n_grid: 8,
        kappas: vec![1.0],
        noise_levels: vec![0.1],
        ..Default::default()
    };
    let run = run_single(&cfg, 1.0, 0.1).unwrap().report;
    let m = evaluate_metrics(mesh, u_rec.values(), u_ex.values(), &run);
    assert!((m.spot_errors[0] - (1.0 - rho)).abs() < 1e-12);
    assert_eq!(m.spot_errors[1], 0.0);
    let same = evaluate_metrics(mesh, u_ex.values(), u_ex.values(), &run);
    assert_eq!(same.l1_error, 0.0);
    assert_eq!(same.spot_errors, [0.0; 3]);
    for r in spots(n) {
        assert!((r.area() - 1.0 / (n * n) as f64).abs() < 1e-15);
        assert!(integrate_over_rect(mesh, &vec![1.0; mesh.n_vertices()], r) > 0.0);
    }
}

#[test]
fn empty_grid_gives_header_only() {
    let cfg = ExperimentConfig {
        kappas: vec![],
        ..Default::default()
    };
    let out = run_experiment_suite(&cfg, Execution::Sequential).unwrap();
    assert!(out.cells.is_empty() && out.all_succeeded());
    assert_eq!(out.summary_csv, format!("{SUMMARY_HEADER}\n"));
}

#[test]
fn suite_writes_reports_and_dumps() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        n_grid: 8,
        kappas: vec![1.0, 100.0],
        noise_levels: vec![0.05, 0.1],
        out_dir: Some(dir.path().to_path_buf()),
        dump_fields: true,
        ..Default::default()
    };
    let out = run_experiment_suite(&cfg, Execution::Parallel).unwrap();
    assert!(out.all_succeeded());
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary, out.summary_csv);
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines[0], "kappa,noise_pct,k_star,minimizations,rho_final,l1_error,spot1,spot2,spot3,stop_reason");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("1,5,") && lines[4].starts_with("100,10,"));

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("100_10/report.json")).unwrap()).unwrap();
    for key in [
        "config",
        "delta_abs",
        "k_star",
        "minimizations",
        "rho_final",
        "rho_history",
        "residual_history",
        "l1_error",
        "spot_errors",
        "stop_reason",
        "wall_clock_seconds",
    ] {
        assert!(report.get(key).is_some(), "missing {key}");
    }
    assert_eq!(report["spot_errors"].as_array().unwrap().len(), 3);
    assert_eq!(report["stop_reason"], "discrepancy_met");
    let k_star = report["k_star"].as_u64().unwrap() as usize;
    assert_eq!(report["rho_history"].as_array().unwrap().len(), k_star);
    assert_eq!(report["residual_history"].as_array().unwrap().len(), k_star + 1);

    let table = fs::read_to_string(dir.path().join("1_5/u_rec.csv")).unwrap();
    let mut rows = table.lines();
    assert_eq!(rows.next(), Some("x,y,value"));
    assert_eq!(rows.count(), 81);
    for name in ["u_ex.csv", "y_final.csv", "g_delta.csv", "steps/y_000.csv", "steps/v_000.csv"] {
        assert!(dir.path().join("1_5").join(name).is_file(), "{name}");
    }
}

#[test]
fn ten_percent_noise_final_radius_and_far_spot() {
    let mut rhos = Vec::new();
    for seed in 0..3 {
        let cfg = ExperimentConfig {
            seed,
            ..Default::default()
        };
        for kappa in [1.0, 100.0] {
            let cell = run_single(&cfg, kappa, 0.1).unwrap();
            assert!(cell.metrics.spot_errors[1] <= 1e-3);
            if kappa == 1.0 {
                rhos.push(cell.metrics.rho_final);
            }
        }
    }
    let mean = rhos.iter().sum::<f64>() / rhos.len() as f64;
    assert!((mean - 0.586).abs() <= 0.1, "{rhos:?}");
}
