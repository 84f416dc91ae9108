//! Experiment harness: exact source, data synthesis on a finer grid, noise,
//! metrics and report files.

use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fem::{integrate_over_rect, l1_norm, l2_project_interior, prolongate, FemError, FemSpace, Mesh, NodalField, Rect};
use crate::irgnm::{run_irgnm, OuterConfig, RadiusStart, RunError, RunReport, StopReason};
use crate::par::{with_jobs, Execution};
use crate::qp::{BoundsMode, QpSettings};
use crate::radius::RadiusSearchConfig;
use crate::semilinear::{solve_semilinear, NewtonOptions, PdeError};

pub const RNG_ALGORITHM: &str = "ChaCha8Rng (rand_chacha 0.9)";
pub const NORMAL_TRANSFORM: &str = "rand_distr 0.5 StandardNormal (ziggurat)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n_grid: usize,
    pub fine_factor: usize,
    pub kappas: Vec<f64>,
    /// Relative noise levels, e.g. `0.01` for 1%.
    pub noise_levels: Vec<f64>,
    pub seed: u64,
    pub tau: f64,
    pub theta_low: f64,
    pub theta_high: f64,
    pub rho_start: f64,
    #[serde(default)]
    pub radius_start: RadiusStart,
    pub gamma_final: f64,
    pub bounds: BoundsMode,
    pub max_gn: usize,
    pub out_dir: Option<PathBuf>,
    pub dump_fields: bool,
    /// Worker threads for the grid; `0` uses the global pool.
    pub jobs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_grid: 32,
            fine_factor: 2,
            kappas: vec![1.0, 100.0],
            noise_levels: vec![0.001, 0.01, 0.05, 0.1],
            seed: 0,
            tau: 2.0,
            theta_low: 0.51,
            theta_high: 0.98,
            rho_start: 100.0,
            radius_start: RadiusStart::Previous,
            gamma_final: 1e-9,
            bounds: BoundsMode::Nonneg,
            max_gn: 60,
            out_dir: None,
            dump_fields: false,
            jobs: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.n_grid == 0 {
            return Err(ExperimentError::Invalid("n_grid must be positive".into()));
        }
        if self.fine_factor == 0 {
            return Err(ExperimentError::Invalid("fine_factor must be positive".into()));
        }
        if let Some(d) = self.noise_levels.iter().find(|d| !(0.0..1.0).contains(*d)) {
            return Err(ExperimentError::Invalid(format!("noise level {d} outside [0, 1)")));
        }
        if let Some(k) = self.kappas.iter().find(|k| !(**k >= 0.0)) {
            return Err(ExperimentError::Invalid(format!("kappa {k} must be nonnegative")));
        }
        self.outer(1.0)
            .radius
            .validate()
            .map_err(|e| ExperimentError::Invalid(e.to_string()))
    }

    pub fn outer(&self, kappa: f64) -> OuterConfig {
        OuterConfig {
            tau: self.tau,
            kappa,
            max_gn: self.max_gn,
            radius: RadiusSearchConfig {
                rho_start: self.rho_start,
                theta_low: self.theta_low,
                theta_high: self.theta_high,
                ..Default::default()
            },
            qp: QpSettings {
                bounds: self.bounds,
                gamma_final: self.gamma_final,
                ..Default::default()
            },
            radius_start: self.radius_start,
            ..Default::default()
        }
    }
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Pde(#[from] PdeError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error("noise requested for vanishing data")]
    DegenerateNoise,
    #[error("invalid experiment configuration: {0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Indicator of the disk of radius 0.2 around (0.3, 0.3), sampled at the vertices.
pub fn make_exact_source(mesh: &Mesh) -> NodalField {
    NodalField::from_fn(mesh, |p| {
        let (dx, dy) = (p[0] - 0.3, p[1] - 0.3);
        if dx * dx + dy * dy <= 0.04 + 1e-12 {
            1.0
        } else {
            0.0
        }
    })
}

/// Solves the state equation for the exact source on a mesh `fine_factor`
/// times finer than `coarse` and L²-projects the state onto `coarse`.
pub fn synthesize_data(
    coarse: &FemSpace,
    fine_factor: usize,
    kappa: f64,
    newton: &NewtonOptions,
) -> Result<NodalField, ExperimentError> {
    let fine = FemSpace::unit_square(coarse.mesh().n_per_side() * fine_factor)?;
    let u_c = make_exact_source(coarse.mesh());
    let u_fine = prolongate(coarse.mesh(), fine.mesh(), u_c.values())?;
    let zero = vec![0.0; fine.mesh().n_vertices()];
    let y_fine = solve_semilinear(&fine, &u_fine, kappa, &zero, newton)?.y;
    let g = l2_project_interior(coarse, fine.mesh(), y_fine.values())?;
    Ok(NodalField::from_values(coarse.mesh(), g)?)
}

/// Adds Gaussian noise scaled so that `‖g^δ − g‖_{L²} = rel_level‖g‖_{L²}`.
/// Returns the noisy field and that distance.
pub fn add_noise(
    space: &FemSpace,
    g: &NodalField,
    rel_level: f64,
    seed: u64,
) -> Result<(NodalField, f64), ExperimentError> {
    if !(rel_level >= 0.0) {
        return Err(ExperimentError::Invalid("noise level must be nonnegative".into()));
    }
    if rel_level == 0.0 {
        return Ok((g.clone(), 0.0));
    }
    let g_norm = space.l2_norm(g);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let e: Vec<f64> = (0..space.n_interior()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let e = NodalField::from_interior(space.mesh(), &e)?;
    let e_norm = space.l2_norm(&e);
    if g_norm == 0.0 || e_norm == 0.0 {
        return Err(ExperimentError::DegenerateNoise);
    }
    let delta_abs = rel_level * g_norm;
    Ok((g.axpy(delta_abs / e_norm, &e), delta_abs))
}

/// Seed of one (κ, δ) cell; independent of the cell order in the grid.
pub fn cell_seed(seed: u64, kappa: f64, rel_level: f64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    seed ^ mix(mix(kappa.to_bits()) ^ rel_level.to_bits())
}

/// The three test spots of side `1/N`.
pub fn spots(n: usize) -> [Rect; 3] {
    let h = 1.0 / n as f64;
    let sq = |x0: f64, y0: f64| Rect {
        x0,
        x1: x0 + h,
        y0,
        y1: y0 + h,
    };
    [sq(0.3, 0.3), sq(0.7, 0.3), sq(0.3, 0.5)]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub l1_error: f64,
    pub spot_errors: [f64; 3],
    pub rho_final: f64,
    pub gn_iterations: usize,
    pub minimizations: usize,
}

pub fn evaluate_metrics(mesh: &Mesh, u_rec: &[f64], u_ex: &[f64], run: &RunReport) -> Metrics {
    let diff: Vec<f64> = u_rec.iter().zip(u_ex).map(|(a, b)| a - b).collect();
    let spot_errors = spots(mesh.n_per_side()).map(|r| integrate_over_rect(mesh, &diff, r).abs() / r.area());
    Metrics {
        l1_error: l1_norm(mesh, &diff),
        spot_errors,
        rho_final: run.rho_final,
        gn_iterations: run.k_star,
        minimizations: run.minimizations_total,
    }
}

/// Everything produced by one (κ, δ) run.
#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub kappa: f64,
    pub noise: f64,
    pub seed: u64,
    pub report: RunReport,
    pub metrics: Metrics,
    pub u_ex: NodalField,
    pub g: NodalField,
    pub g_delta: NodalField,
    pub wall_clock_seconds: f64,
}

pub fn run_single(cfg: &ExperimentConfig, kappa: f64, noise: f64) -> Result<CellOutcome, ExperimentError> {
    let start = Instant::now();
    let space = FemSpace::unit_square(cfg.n_grid)?;
    let outer = cfg.outer(kappa);
    let g = synthesize_data(&space, cfg.fine_factor, kappa, &outer.newton)?;
    let seed = cell_seed(cfg.seed, kappa, noise);
    let (g_delta, delta_abs) = add_noise(&space, &g, noise, seed)?;
    let u_0 = vec![0.0; space.mesh().n_vertices()];
    let report = run_irgnm(&space, &outer, &u_0, g_delta.values(), delta_abs)?;
    let u_ex = make_exact_source(space.mesh());
    let metrics = evaluate_metrics(space.mesh(), report.u_final.values(), u_ex.values(), &report);
    let wall = start.elapsed().as_secs_f64();
    log::info!(
        "kappa = {kappa}, noise = {}%: {} after {} steps, {} minimizations, rho = {:.4}, L1 = {:.4} ({wall:.1} s)",
        format_number(noise * 100.0),
        report.stop_reason.as_str(),
        report.k_star,
        report.minimizations_total,
        report.rho_final,
        metrics.l1_error
    );
    Ok(CellOutcome {
        kappa,
        noise,
        seed,
        report,
        metrics,
        u_ex,
        g,
        g_delta,
        wall_clock_seconds: wall,
    })
}

/// Shortest decimal form of a grid label (`1`, `100`, `0.1`).
pub fn format_number(x: f64) -> String {
    let s = format!("{:.9}", x);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

pub fn cell_dir_name(kappa: f64, noise: f64) -> String {
    format!("{}_{}", format_number(kappa), format_number(noise * 100.0))
}

pub const SUMMARY_HEADER: &str = "kappa,noise_pct,k_star,minimizations,rho_final,l1_error,spot1,spot2,spot3,stop_reason";

pub fn summary_row(cell: &CellOutcome) -> String {
    let m = &cell.metrics;
    format!(
        "{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
        format_number(cell.kappa),
        format_number(cell.noise * 100.0),
        m.gn_iterations,
        m.minimizations,
        m.rho_final,
        m.l1_error,
        m.spot_errors[0],
        m.spot_errors[1],
        m.spot_errors[2],
        cell.report.stop_reason.as_str()
    )
}

#[derive(Serialize)]
struct ReportConfig<'a> {
    #[serde(flatten)]
    experiment: &'a ExperimentConfig,
    kappa: f64,
    noise: f64,
}

#[derive(Serialize)]
struct RngInfo {
    algorithm: &'static str,
    normal_transform: &'static str,
    base_seed: u64,
    cell_seed: u64,
}

#[derive(Serialize)]
struct ReportJson<'a> {
    config: ReportConfig<'a>,
    delta_abs: f64,
    k_star: usize,
    minimizations: usize,
    rho_final: f64,
    rho_history: Vec<f64>,
    residual_history: &'a [f64],
    l1_error: f64,
    spot_errors: [f64; 3],
    stop_reason: StopReason,
    wall_clock_seconds: f64,
    rng: RngInfo,
    steps: &'a [crate::irgnm::GnRecord],
    failure: Option<&'a str>,
}

/// JSON report of one cell.
pub fn report_json(cfg: &ExperimentConfig, cell: &CellOutcome) -> Result<String, ExperimentError> {
    let r = &cell.report;
    let doc = ReportJson {
        config: ReportConfig {
            experiment: cfg,
            kappa: cell.kappa,
            noise: cell.noise,
        },
        delta_abs: r.delta_abs,
        k_star: r.k_star,
        minimizations: r.minimizations_total,
        rho_final: r.rho_final,
        rho_history: r.rho_history(),
        residual_history: &r.residual_history,
        l1_error: cell.metrics.l1_error,
        spot_errors: cell.metrics.spot_errors,
        stop_reason: r.stop_reason,
        wall_clock_seconds: cell.wall_clock_seconds,
        rng: RngInfo {
            algorithm: RNG_ALGORITHM,
            normal_transform: NORMAL_TRANSFORM,
            base_seed: cfg.seed,
            cell_seed: cell.seed,
        },
        steps: &r.records,
        failure: r.failure.as_deref(),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

fn write_field(path: &Path, mesh: &Mesh, field: &NodalField) -> Result<(), ExperimentError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    field.write_table(mesh, BufWriter::new(file)).map_err(io_err(path))
}

/// Writes `report.json` and, if requested, the field tables of one cell into `dir`.
pub fn write_cell(cfg: &ExperimentConfig, cell: &CellOutcome, dir: &Path) -> Result<(), ExperimentError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join("report.json");
    fs::write(&path, report_json(cfg, cell)?).map_err(io_err(&path))?;
    if cfg.dump_fields {
        let mesh = Mesh::unit_square(cfg.n_grid)?;
        write_field(&dir.join("u_rec.csv"), &mesh, &cell.report.u_final)?;
        write_field(&dir.join("u_ex.csv"), &mesh, &cell.u_ex)?;
        write_field(&dir.join("y_final.csv"), &mesh, &cell.report.y_final)?;
        write_field(&dir.join("g_delta.csv"), &mesh, &cell.g_delta)?;
        let steps = dir.join("steps");
        fs::create_dir_all(&steps).map_err(io_err(&steps))?;
        for (k, s) in cell.report.steps.iter().enumerate() {
            write_field(&steps.join(format!("y_{k:03}.csv")), &mesh, &s.y_k)?;
            write_field(&steps.join(format!("v_{k:03}.csv")), &mesh, &s.v_k)?;
        }
    }
    Ok(())
}

#[derive(Debug)]
pub struct SuiteOutcome {
    /// One entry per (κ, δ) cell in grid order.
    pub cells: Vec<Result<CellOutcome, ExperimentError>>,
    pub summary_csv: String,
}

impl SuiteOutcome {
    /// True when every run finished and met the discrepancy principle.
    pub fn all_succeeded(&self) -> bool {
        self.cells
            .iter()
            .all(|c| c.as_ref().is_ok_and(|c| c.report.stop_reason.is_success()))
    }
}

/// Runs every (κ, δ) cell, in parallel up to `cfg.jobs`, and writes the
/// output directory when one is configured.
pub fn run_experiment_suite(cfg: &ExperimentConfig, exec: Execution) -> Result<SuiteOutcome, ExperimentError> {
    cfg.validate()?;
    let grid: Vec<(f64, f64)> = cfg
        .kappas
        .iter()
        .flat_map(|&k| cfg.noise_levels.iter().map(move |&d| (k, d)))
        .collect();
    let cells = with_jobs(cfg.jobs, || exec.map(&grid, |&(k, d)| run_single(cfg, k, d)));

    let mut summary = String::new();
    summary.push_str(SUMMARY_HEADER);
    summary.push('\n');
    for (cell, &(k, d)) in cells.iter().zip(&grid) {
        match cell {
            Ok(c) => {
                summary.push_str(&summary_row(c));
                summary.push('\n');
            }
            Err(e) => {
                log::error!("kappa = {k}, noise = {}: {e}", format_number(d * 100.0));
                let _ = writeln!(
                    summary,
                    "{},{},,,,,,,,error",
                    format_number(k),
                    format_number(d * 100.0)
                );
            }
        }
    }
    if let Some(out) = &cfg.out_dir {
        fs::create_dir_all(out).map_err(io_err(out))?;
        for cell in cells.iter().flatten() {
            write_cell(cfg, cell, &out.join(cell_dir_name(cell.kappa, cell.noise)))?;
        }
        let path = out.join("summary.csv");
        fs::write(&path, &summary).map_err(io_err(&path))?;
    }
    Ok(SuiteOutcome {
        cells,
        summary_csv: summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_source_geometry() {
        let mesh = Mesh::unit_square(10).unwrap();
        let u = make_exact_source(&mesh);
        assert_eq!(u.values()[mesh.vertex_at(3, 3)], 1.0);
        assert_eq!(u.values()[mesh.vertex_at(7, 7)], 0.0);
        assert_eq!(u.values().iter().cloned().fold(0.0, f64::max), 1.0);
        assert!(u.vanishes_on_boundary(&mesh));
    }

    #[test]
    fn noise_has_exact_norm_and_is_reproducible() {
        let space = FemSpace::unit_square(8).unwrap();
        let g = NodalField::from_fn(space.mesh(), |p| p[0] * (1.0 - p[1]));
        let (gd, delta) = add_noise(&space, &g, 0.01, 7).unwrap();
        let dist = space.l2_distance(gd.values(), g.values()).unwrap();
        assert!((dist - 0.01 * space.l2_norm(&g)).abs() < 1e-14);
        assert_eq!(delta, 0.01 * space.l2_norm(&g));
        assert_eq!(add_noise(&space, &g, 0.01, 7).unwrap().0, gd);
        assert_ne!(add_noise(&space, &g, 0.01, 8).unwrap().0, gd);
        let (g0, d0) = add_noise(&space, &g, 0.0, 7).unwrap();
        assert_eq!((g0, d0), (g.clone(), 0.0));
        let zero = NodalField::zeros(space.mesh());
        assert!(matches!(add_noise(&space, &zero, 0.1, 1), Err(ExperimentError::DegenerateNoise)));
    }

    #[test]
    fn cell_seeds_differ_across_cells() {
        let mut seen = std::collections::HashSet::new();
        for k in [1.0, 100.0] {
            for d in [0.001, 0.01, 0.05, 0.1] {
                assert!(seen.insert(cell_seed(3, k, d)));
            }
        }
        assert_eq!(cell_seed(3, 1.0, 0.1), cell_seed(3, 1.0, 0.1));
    }

    #[test]
    fn labels() {
        assert_eq!(format_number(1.0), "1");
        assert_eq!(format_number(100.0), "100");
        assert_eq!(format_number(0.001 * 100.0), "0.1");
        assert_eq!(format_number(0.05 * 100.0), "5");
        assert_eq!(cell_dir_name(100.0, 0.01), "100_1");
    }

    #[test]
    fn synthesized_data_vanishes_on_boundary() {
        let space = FemSpace::unit_square(8).unwrap();
        let g = synthesize_data(&space, 2, 1.0, &NewtonOptions::default()).unwrap();
        let mesh = space.mesh();
        assert!((0..mesh.n_vertices()).filter(|&v| mesh.is_boundary(v)).all(|v| g.values()[v] == 0.0));
        assert!(space.l2_norm(&g) > 0.0);
    }
}
