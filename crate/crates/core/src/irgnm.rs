//! Outer Ivanov-regularized Gauss-Newton loop with discrepancy stopping.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fem::{FemError, FemSpace, NodalField};
use crate::qp::{Linearization, QpError, QpSettings};
use crate::radius::{find_radius, RadiusSearchConfig, SearchError};
use crate::semilinear::{solve_semilinear, NewtonOptions, PdeError};

/// Which form of the start condition is evaluated each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartCondition {
    /// `‖F'(u_k)(u_0 − u_k) + F(u_k) − g‖ ≥ Θ̃‖F(u_k) − g‖`.
    #[default]
    Derivative,
    /// State-space form with `y_0 = S(u_0)` in place of the linearized prediction.
    State,
}

/// Where Phase I of the radius search begins at steps `k ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusStart {
    /// Every step starts from the configured `rho_start`.
    Fixed,
    /// Steps after the first start from the previously accepted radius.
    #[default]
    Previous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterConfig {
    pub tau: f64,
    pub kappa: f64,
    pub max_gn: usize,
    pub radius: RadiusSearchConfig,
    pub qp: QpSettings,
    #[serde(skip)]
    pub newton: NewtonOptions,
    pub start_condition: StartCondition,
    #[serde(default)]
    pub radius_start: RadiusStart,
}

impl Default for OuterConfig {
    fn default() -> Self {
        Self {
            tau: 2.0,
            kappa: 1.0,
            max_gn: 60,
            radius: RadiusSearchConfig::default(),
            qp: QpSettings::default(),
            newton: NewtonOptions::default(),
            start_condition: StartCondition::Derivative,
            radius_start: RadiusStart::Previous,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RunError {
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
}

/// One accepted Gauss-Newton step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnRecord {
    pub k: usize,
    pub rho_k: f64,
    /// `‖F(u_k) − g‖`.
    pub nonlinear_discrepancy: f64,
    /// `‖F'(u_k)(u_{k+1} − u_k) + F(u_k) − g‖` at the accepted radius.
    pub linearized_discrepancy: f64,
    pub qp_solves: usize,
    /// Linear systems solved inside all subproblems of this step.
    pub ssn_iterations: usize,
    pub newton_iters: usize,
    pub case_a_margin: f64,
    pub case_a_satisfied: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    DiscrepancyMetAtStart,
    DiscrepancyMet,
    MaxGn,
    SearchFailure,
    PdeFailure,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::DiscrepancyMetAtStart => "discrepancy_met_at_start",
            StopReason::DiscrepancyMet => "discrepancy_met",
            StopReason::MaxGn => "max_gn",
            StopReason::SearchFailure => "search_failure",
            StopReason::PdeFailure => "pde_failure",
        }
    }

    pub fn is_success(self) -> bool {
        matches!(self, StopReason::DiscrepancyMetAtStart | StopReason::DiscrepancyMet)
    }
}

/// States and linearized states of one accepted step, kept so the band can
/// be re-checked after the run.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFields {
    pub y_k: NodalField,
    pub v_k: NodalField,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub config: OuterConfig,
    pub delta_abs: f64,
    pub records: Vec<GnRecord>,
    pub k_star: usize,
    pub u_final: NodalField,
    pub y_final: NodalField,
    pub stop_reason: StopReason,
    pub minimizations_total: usize,
    pub rho_final: f64,
    /// `‖F(u_k) − g‖` for `k = 0..=k_star`.
    pub residual_history: Vec<f64>,
    pub steps: Vec<StepFields>,
    /// Error message when the run ended on a failure.
    pub failure: Option<String>,
}

impl RunReport {
    pub fn rho_history(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.rho_k).collect()
    }
}

/// Evaluates the start condition; returns `(satisfied, margin)` with
/// `margin = LHS / (Θ̃ ‖y_k − g‖)`.
pub fn check_start_condition(
    lin: &Linearization,
    u_0: &[f64],
    theta_high: f64,
    form: StartCondition,
    y_0: Option<&[f64]>,
) -> Result<(bool, f64), QpError> {
    let space = lin.space();
    let mesh = space.mesh();
    let misfit = space.l2_distance(lin.y_k(), lin.g())?;
    let lhs = match form {
        StartCondition::Derivative => {
            let h: Vec<f64> = mesh
                .interior_nodes()
                .iter()
                .zip(lin.u_k())
                .map(|(&v, uk)| u_0[v] - uk)
                .collect();
            let v0 = lin.linearized_state(&h)?;
            lin.discrepancy(&v0)?
        }
        StartCondition::State => {
            let y_0 = y_0.ok_or(QpError::Invalid("state form needs y_0"))?;
            space.l2_distance(y_0, lin.g())?
        }
    };
    let margin = lhs / (theta_high * misfit);
    Ok((margin >= 1.0 - 1e-10, margin))
}

/// Runs the outer iteration from `u_0` for data `g_delta` with noise level `delta_abs`.
pub fn run_irgnm(
    space: &FemSpace,
    cfg: &OuterConfig,
    u_0: &[f64],
    g_delta: &[f64],
    delta_abs: f64,
) -> Result<RunReport, RunError> {
    if !(cfg.tau > 1.0) || cfg.max_gn == 0 || !(delta_abs >= 0.0) {
        return Err(RunError::InvalidConfig("need tau > 1, max_gn >= 1, delta_abs >= 0"));
    }
    let mesh = space.mesh();
    for f in [u_0, g_delta] {
        if f.len() != mesh.n_vertices() {
            return Err(FemError::FieldMismatch {
                expected: mesh.n_vertices(),
                actual: f.len(),
            }
            .into());
        }
    }
    let mut u_k = NodalField::from_interior(mesh, &NodalField::from_values(mesh, u_0.to_vec())?.interior_values(mesh))?;
    let mut y_prev = NodalField::zeros(mesh);
    let mut records = Vec::new();
    let mut residuals = Vec::new();
    let mut steps = Vec::new();
    let mut y_0: Option<NodalField> = None;
    let threshold = cfg.tau * delta_abs;

    let finish = |stop: StopReason,
                  records: Vec<GnRecord>,
                  residuals: Vec<f64>,
                  steps: Vec<StepFields>,
                  u: NodalField,
                  y: NodalField,
                  failure: Option<String>| {
        let minimizations_total = records.iter().map(|r: &GnRecord| r.qp_solves).sum();
        let rho_final = records.last().map_or(0.0, |r| r.rho_k);
        RunReport {
            config: cfg.clone(),
            delta_abs,
            k_star: records.len(),
            records,
            u_final: u,
            y_final: y,
            stop_reason: stop,
            minimizations_total,
            rho_final,
            residual_history: residuals,
            steps,
            failure,
        }
    };

    for k in 0.. {
        let newton = match solve_semilinear(space, u_k.values(), cfg.kappa, y_prev.values(), &cfg.newton) {
            Ok(rep) => rep,
            Err(PdeError::Fem(e)) => return Err(e.into()),
            Err(e) => {
                log::warn!("state solve failed at k = {k}: {e}");
                return Ok(finish(StopReason::PdeFailure, records, residuals, steps, u_k, y_prev, Some(e.to_string())));
            }
        };
        let y_k = newton.y;
        let misfit = space.l2_distance(y_k.values(), g_delta)?;
        residuals.push(misfit);
        if y_0.is_none() {
            y_0 = Some(y_k.clone());
        }
        if misfit <= threshold {
            let stop = if k == 0 {
                StopReason::DiscrepancyMetAtStart
            } else {
                StopReason::DiscrepancyMet
            };
            log::info!("k = {k}: discrepancy {misfit:.6e} <= {threshold:.6e}, stop");
            return Ok(finish(stop, records, residuals, steps, u_k, y_k, None));
        }
        if k == cfg.max_gn {
            return Ok(finish(StopReason::MaxGn, records, residuals, steps, u_k, y_k, None));
        }

        let lin = Linearization::new(space, cfg.kappa, u_k.values(), y_k.values(), g_delta)?;
        let (satisfied, margin) = check_start_condition(
            &lin,
            u_0,
            cfg.radius.theta_high,
            cfg.start_condition,
            y_0.as_ref().map(|y| y.values()),
        )?;
        if !satisfied {
            log::warn!("k = {k}: start condition violated (margin {margin:.6})");
        }
        let mut radius_cfg = cfg.radius;
        if let (RadiusStart::Previous, Some(prev)) = (cfg.radius_start, records.last()) {
            radius_cfg.rho_start = prev.rho_k;
        }
        let search = match find_radius(&lin, &radius_cfg, cfg.qp) {
            Ok(res) => res,
            Err(SearchError::Qp(e)) => return Err(e.into()),
            Err(e) => {
                log::warn!("radius search failed at k = {k}: {e}");
                return Ok(finish(StopReason::SearchFailure, records, residuals, steps, u_k, y_k, Some(e.to_string())));
            }
        };
        let rec = GnRecord {
            k,
            rho_k: search.rho,
            nonlinear_discrepancy: misfit,
            linearized_discrepancy: search.d_rho,
            qp_solves: search.qp_solves,
            ssn_iterations: search.trace.iter().map(|t| t.ssn_iterations).sum(),
            newton_iters: newton.step_sizes.len(),
            case_a_margin: margin,
            case_a_satisfied: satisfied,
        };
        if let Some(prev) = records.last() {
            let prev: &GnRecord = prev;
            log::debug!("k = {k}: residual ratio {:.4}", misfit / prev.nonlinear_discrepancy);
        }
        log::info!(
            "k = {k}: rho = {:.6}, discrepancy {:.6e}, linearized {:.6e}, qp solves {}, margin {:.4}",
            rec.rho_k,
            rec.nonlinear_discrepancy,
            rec.linearized_discrepancy,
            rec.qp_solves,
            rec.case_a_margin
        );
        records.push(rec);
        steps.push(StepFields {
            v_k: search.solution.v_field(space),
            y_k: y_k.clone(),
        });
        u_k = search.solution.u_field(space);
        y_prev = y_k;
    }
    unreachable!("the loop returns")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn data_already_explained_stops_at_start() {
        let space = FemSpace::unit_square(4).unwrap();
        let n = space.mesh().n_vertices();
        let u_0 = vec![0.0; n];
        let g = vec![0.01; n];
        let delta = space.l2_norm(&NodalField::from_values(space.mesh(), g.clone()).unwrap());
        let rep = run_irgnm(&space, &OuterConfig::default(), &u_0, &g, delta).unwrap();
        assert_eq!(rep.stop_reason, StopReason::DiscrepancyMetAtStart);
        assert_eq!(rep.k_star, 0);
        assert_eq!(rep.u_final.values(), &u_0[..]);
        assert_eq!(rep.minimizations_total, 0);
    }

    #[test]
    fn start_condition_holds_trivially_at_u0() {
        let space = FemSpace::unit_square(4).unwrap();
        let n = space.mesh().n_vertices();
        let z = vec![0.0; n];
        let g: Vec<f64> = space.mesh().vertices().iter().map(|p| p[0] * p[1]).collect();
        let lin = Linearization::new(&space, 1.0, &z, &z, &g).unwrap();
        let (ok, margin) = check_start_condition(&lin, &z, 0.98, StartCondition::Derivative, None).unwrap();
        assert!(ok);
        assert!((margin - 1.0 / 0.98).abs() < 1e-12);
    }

    #[test]
    fn invalid_tau_rejected() {
        let space = FemSpace::unit_square(2).unwrap();
        let z = vec![0.0; 9];
        let cfg = OuterConfig {
            tau: 1.0,
            ..Default::default()
        };
        assert!(matches!(run_irgnm(&space, &cfg, &z, &z, 0.0), Err(RunError::InvalidConfig(_))));
    }
}
