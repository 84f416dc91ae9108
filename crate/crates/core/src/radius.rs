//! A posteriori choice of the Ivanov radius: enlarge `ρ` in steps of
//! `ρ_start` until the linearized discrepancy falls below the band, then
//! bisect on `[0, ρ]`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qp::{
    solve_linearized_ivanov_from, Linearization, QpError, QpProblem, QpSettings, QpSolution, WarmStart,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusSearchConfig {
    pub rho_start: f64,
    pub theta_low: f64,
    pub theta_high: f64,
    pub max_phase1: usize,
    pub max_bisect: usize,
}

impl Default for RadiusSearchConfig {
    fn default() -> Self {
        Self {
            rho_start: 100.0,
            theta_low: 0.51,
            theta_high: 0.98,
            max_phase1: 200,
            max_bisect: 100,
        }
    }
}

impl RadiusSearchConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        if !(0.0 < self.theta_low && self.theta_low < self.theta_high && self.theta_high <= 1.0) {
            return Err(SearchError::InvalidConfig("need 0 < theta_low < theta_high <= 1"));
        }
        if !(self.rho_start > 0.0) {
            return Err(SearchError::InvalidConfig("rho_start must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchPhase {
    Phase1,
    Phase2,
}

/// One radius tried during a search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusTrial {
    pub rho: f64,
    pub d_rho: f64,
    pub phase: SearchPhase,
    /// Bisection bracket `[a, b]` in force when `ρ` was tried.
    pub bracket: Option<(f64, f64)>,
    pub ssn_iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadiusResult {
    pub rho: f64,
    pub solution: QpSolution,
    pub d_rho: f64,
    /// Subproblem solves, retries included.
    pub qp_solves: usize,
    pub phase: SearchPhase,
    pub trace: Vec<RadiusTrial>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SearchError {
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error("subproblem at rho = {rho} did not converge after a cold restart")]
    Nonconverged { rho: f64 },
    #[error("data misfit is zero; the band is empty")]
    ZeroMisfit,
    #[error("no radius up to {rho} brings the discrepancy below the band")]
    Phase1Exhausted { rho: f64 },
    #[error("bisection stalled in [{a}, {b}]")]
    BisectionExhausted { a: f64, b: f64 },
    #[error("invalid search configuration: {0}")]
    InvalidConfig(&'static str),
}

/// `d(ρ) = ‖y_k + v − g‖_{L²}` for the subproblem solution.
pub fn linearized_discrepancy(lin: &Linearization, solution: &QpSolution) -> Result<f64, QpError> {
    lin.discrepancy(&solution.v)
}

struct Searcher<'l, 'a> {
    lin: &'l Linearization<'a>,
    settings: QpSettings,
    qp_solves: usize,
    trace: Vec<RadiusTrial>,
}

impl Searcher<'_, '_> {
    /// Solves at `rho`, seeded by `seed` when given; a nonconverged result is
    /// retried once from a cold start.
    fn solve(&mut self, rho: f64, seed: Option<&QpSolution>) -> Result<(QpSolution, f64), SearchError> {
        let problem = QpProblem {
            lin: self.lin,
            rho,
            settings: self.settings,
        };
        let start = seed.map_or(WarmStart::Cold, WarmStart::From);
        self.qp_solves += 1;
        let mut sol = solve_linearized_ivanov_from(&problem, start)?;
        if !sol.converged {
            log::debug!("subproblem at rho = {rho} not converged, restarting cold");
            self.qp_solves += 1;
            sol = solve_linearized_ivanov_from(&problem, WarmStart::Cold)?;
            if !sol.converged {
                return Err(SearchError::Nonconverged { rho });
            }
        }
        let d = linearized_discrepancy(self.lin, &sol)?;
        Ok((sol, d))
    }

    fn record(&mut self, sol: &QpSolution, d: f64, phase: SearchPhase, bracket: Option<(f64, f64)>) {
        log::trace!("radius search {phase:?}: rho = {:.6e}, d = {d:.6e}, bracket {bracket:?}", sol.rho);
        self.trace.push(RadiusTrial {
            rho: sol.rho,
            d_rho: d,
            phase,
            bracket,
            ssn_iterations: sol.ssn_iterations,
        });
    }

    fn done(self, solution: QpSolution, d_rho: f64, phase: SearchPhase) -> RadiusResult {
        RadiusResult {
            rho: solution.rho,
            solution,
            d_rho,
            qp_solves: self.qp_solves,
            phase,
            trace: self.trace,
        }
    }
}

/// Finds `ρ` with `θ̃D ≤ d(ρ) ≤ Θ̃D`, `D = ‖y_k − g‖`.
pub fn find_radius(
    lin: &Linearization,
    cfg: &RadiusSearchConfig,
    settings: QpSettings,
) -> Result<RadiusResult, SearchError> {
    cfg.validate()?;
    let misfit = lin.discrepancy(&vec![0.0; lin.space().n_interior()])?;
    if misfit <= 0.0 {
        return Err(SearchError::ZeroMisfit);
    }
    let (low, high) = (cfg.theta_low * misfit, cfg.theta_high * misfit);
    let target = 0.5 * (cfg.theta_low + cfg.theta_high) * misfit;
    let in_band = |d: f64| low <= d && d <= high;
    let mut s = Searcher {
        lin,
        settings,
        qp_solves: 0,
        trace: Vec::new(),
    };

    let mut rho = cfg.rho_start;
    let mut last: Option<(QpSolution, f64)> = None;
    for _ in 0..cfg.max_phase1 {
        let (sol, d) = s.solve(rho, last.as_ref().map(|(q, _)| q))?;
        s.record(&sol, d, SearchPhase::Phase1, None);
        if in_band(d) {
            return Ok(s.done(sol, d, SearchPhase::Phase1));
        }
        let below = d < low;
        last = Some((sol, d));
        if below {
            break;
        }
        rho += cfg.rho_start;
    }
    let Some((upper_sol, upper_d)) = last.filter(|(_, d)| *d < low) else {
        return Err(SearchError::Phase1Exhausted { rho });
    };

    let (mut a, mut b) = (0.0, rho);
    let (zero_sol, d_a) = s.solve(0.0, None)?;
    s.record(&zero_sol, d_a, SearchPhase::Phase2, Some((a, b)));
    let side_a = d_a - target > 0.0;
    // The Phase I solve at ρ = b is the first bisection candidate.
    let (mut sol, mut d) = (upper_sol, upper_d);
    for _ in 0..cfg.max_bisect {
        if in_band(d) {
            return Ok(s.done(sol, d, SearchPhase::Phase2));
        }
        if (d - target > 0.0) == side_a {
            a = rho;
        } else {
            b = rho;
        }
        rho = 0.5 * (a + b);
        let (next, dn) = s.solve(rho, Some(&sol))?;
        s.record(&next, dn, SearchPhase::Phase2, Some((a, b)));
        sol = next;
        d = dn;
    }
    if in_band(d) {
        return Ok(s.done(sol, d, SearchPhase::Phase2));
    }
    Err(SearchError::BisectionExhausted { a, b })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{FemSpace, NodalField};
    use crate::qp::solve_linearized_ivanov;

    fn setup(space: &FemSpace) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mesh = space.mesh();
        let u_k = vec![0.0; mesh.n_vertices()];
        let y_k = vec![0.0; mesh.n_vertices()];
        // Data of a smooth bump source.
        let src = NodalField::from_fn(mesh, |p| {
            if (p[0] - 0.4).powi(2) + (p[1] - 0.5).powi(2) < 0.05 {
                1.0
            } else {
                0.0
            }
        });
        let mut src = src.into_values();
        for (v, b) in mesh.boundary_mask().iter().enumerate() {
            if *b {
                src[v] = 0.0;
            }
        }
        let rhs = space.mass_apply(&src).unwrap();
        let g = NodalField::from_interior(mesh, &space.solve_laplacian(&rhs).unwrap()).unwrap();
        (u_k, y_k, g.into_values())
    }

    #[test]
    fn discrepancy_matches_mass_quadratic_form() {
        let space = FemSpace::unit_square(4).unwrap();
        let (u_k, y_k, g) = setup(&space);
        let lin = Linearization::new(&space, 1.0, &u_k, &y_k, &g).unwrap();
        let problem = QpProblem {
            lin: &lin,
            rho: 0.5,
            settings: QpSettings::default(),
        };
        let sol = solve_linearized_ivanov(&problem).unwrap();
        let d = linearized_discrepancy(&lin, &sol).unwrap();
        let v = NodalField::from_interior(space.mesh(), &sol.v).unwrap();
        let r: Vec<f64> = (0..g.len()).map(|i| y_k[i] + v.values()[i] - g[i]).collect();
        let mr = space.mass().matvec(&r).unwrap();
        let q: f64 = r.iter().zip(&mr).map(|(a, b)| a * b).sum();
        assert!((d - q.sqrt()).abs() < 1e-12);
        // v = 0 gives the full misfit, v = g − y_k gives zero.
        let zero = vec![0.0; space.n_interior()];
        let full = space.l2_distance(&y_k, &g).unwrap();
        assert!((lin.discrepancy(&zero).unwrap() - full).abs() < 1e-14);
        let exact: Vec<f64> = space.mesh().interior_nodes().iter().map(|&i| g[i] - y_k[i]).collect();
        assert!(lin.discrepancy(&exact).unwrap() < 1e-14);
    }

    #[test]
    fn radius_lies_where_the_grid_crosses_the_band() {
        let space = FemSpace::unit_square(6).unwrap();
        let (u_k, y_k, g) = setup(&space);
        let lin = Linearization::new(&space, 1.0, &u_k, &y_k, &g).unwrap();
        let cfg = RadiusSearchConfig {
            rho_start: 4.0,
            ..Default::default()
        };
        let settings = QpSettings::default();
        let res = find_radius(&lin, &cfg, settings).unwrap();
        let misfit = space.l2_distance(&y_k, &g).unwrap();
        assert!(res.d_rho >= cfg.theta_low * misfit && res.d_rho <= cfg.theta_high * misfit);
        assert!(res.solution.converged);
        assert!(res.qp_solves >= res.trace.len());

        // Grid pre-evaluation of d(ρ); d must be monotone and the accepted
        // ρ must sit in the cells where d lies in the band.
        let grid: Vec<f64> = (0..=40).map(|i| 4.0 * i as f64 / 40.0).collect();
        let d: Vec<f64> = grid
            .iter()
            .map(|&rho| {
                let sol = solve_linearized_ivanov(&QpProblem {
                    lin: &lin,
                    rho,
                    settings,
                })
                .unwrap();
                assert!(sol.converged);
                linearized_discrepancy(&lin, &sol).unwrap()
            })
            .collect();
        for w in d.windows(2) {
            assert!(w[1] <= w[0] + 1e-8);
        }
        let cell = grid.windows(2).position(|w| w[0] <= res.rho && res.rho <= w[1]).unwrap();
        let (d_left, d_right) = (d[cell], d[cell + 1]);
        assert!(d_left >= cfg.theta_low * misfit - 1e-8);
        assert!(d_right <= cfg.theta_high * misfit + 1e-8);
    }

    #[test]
    fn band_hit_on_first_radius_costs_one_solve() {
        let space = FemSpace::unit_square(4).unwrap();
        let (u_k, y_k, g) = setup(&space);
        let lin = Linearization::new(&space, 1.0, &u_k, &y_k, &g).unwrap();
        let settings = QpSettings::default();
        let misfit = space.l2_distance(&y_k, &g).unwrap();
        // Choose ρ_start so that d(ρ_start) is the band midpoint.
        let probe = |rho| {
            let sol = solve_linearized_ivanov(&QpProblem {
                lin: &lin,
                rho,
                settings,
            })
            .unwrap();
            linearized_discrepancy(&lin, &sol).unwrap()
        };
        let rho_start = 0.3;
        let d = probe(rho_start);
        let cfg = RadiusSearchConfig {
            rho_start,
            theta_low: 0.9 * d / misfit,
            theta_high: (1.1 * d / misfit).min(1.0),
            ..Default::default()
        };
        let res = find_radius(&lin, &cfg, settings).unwrap();
        assert_eq!(res.qp_solves, 1);
        assert_eq!(res.phase, SearchPhase::Phase1);
        assert_eq!(res.rho, rho_start);
    }

    #[test]
    fn zero_misfit_rejected() {
        let space = FemSpace::unit_square(3).unwrap();
        let z = vec![0.0; space.mesh().n_vertices()];
        let lin = Linearization::new(&space, 1.0, &z, &z, &z).unwrap();
        assert!(matches!(
            find_radius(&lin, &RadiusSearchConfig::default(), QpSettings::default()),
            Err(SearchError::ZeroMisfit)
        ));
    }
}
