//! Damped Newton solver for `−Δy + κy³ = u` with homogeneous Dirichlet data.

use thiserror::Error;

use crate::fem::{assemble_operator, nonlinear_term, FemError, FemSpace, NodalField, NormKind, Reaction};
use crate::sparse::{SparseLu, DEFAULT_PIVOT_THRESHOLD};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// Target for `‖Φ(y)‖_{H⁻¹}`.
    pub tol: f64,
    /// Required residual reduction per accepted step.
    pub decrease_factor: f64,
    /// Smallest damping factor tried before giving up.
    pub step_halving_floor: f64,
    pub max_outer: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            decrease_factor: 0.8,
            step_halving_floor: (-30f64).exp2(),
            max_outer: 100,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PdeError {
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error("damping floor reached at Newton step {step} (residual history {history:?})")]
    DampingFloor { step: usize, history: Vec<f64> },
    #[error("no convergence in {max_outer} Newton steps (residual history {history:?})")]
    MaxIterations { max_outer: usize, history: Vec<f64> },
    #[error("invalid Newton options: {0}")]
    InvalidOptions(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonReport {
    /// Converged state on all vertices, zero on the boundary.
    pub y: NodalField,
    /// `‖Φ(ỹˡ)‖_{H⁻¹}` for every iterate, starting with the initial guess.
    pub residual_history: Vec<f64>,
    /// Accepted damping factor of every step.
    pub step_sizes: Vec<f64>,
}

impl NewtonReport {
    pub fn iterations(&self) -> usize {
        self.step_sizes.len()
    }
}

/// `Φ(y) = K₀y + n(y) − M u` on interior dofs, for `y` and `u` on all vertices.
pub fn state_residual(space: &FemSpace, y: &[f64], u: &[f64], kappa: f64) -> Result<Vec<f64>, FemError> {
    let mesh = space.mesh();
    let y_int: Vec<f64> = mesh.interior_nodes().iter().map(|&v| y[v]).collect();
    let mut r = space.stiffness().matvec(&y_int)?;
    let nl = nonlinear_term(mesh, y, kappa)?;
    let mu = space.mass_apply(u)?;
    for ((ri, ni), mi) in r.iter_mut().zip(&nl).zip(&mu) {
        *ri += ni - mi;
    }
    Ok(r)
}

/// Solves the semilinear state equation for the source `u` starting from `y_init`.
///
/// Boundary values of `y_init` are ignored.
pub fn solve_semilinear(
    space: &FemSpace,
    u: &[f64],
    kappa: f64,
    y_init: &[f64],
    opts: &NewtonOptions,
) -> Result<NewtonReport, PdeError> {
    if !(opts.decrease_factor > 0.0 && opts.decrease_factor < 1.0) {
        return Err(PdeError::InvalidOptions("decrease factor must lie in (0, 1)"));
    }
    if opts.tol <= 0.0 {
        return Err(PdeError::InvalidOptions("tolerance must be positive"));
    }
    let mesh = space.mesh();
    let mut y = NodalField::from_interior(mesh, &checked_interior(space, y_init)?)?;
    let mut phi = state_residual(space, y.values(), u, kappa)?;
    let mut norm = space.norm(&phi, NormKind::HMinus1)?;
    let mut history = vec![norm];
    let mut steps = Vec::new();

    while norm > opts.tol {
        if steps.len() >= opts.max_outer {
            return Err(PdeError::MaxIterations {
                max_outer: opts.max_outer,
                history,
            });
        }
        let jac = assemble_operator(
            mesh,
            &Reaction::ScaledSquare {
                field: y.values(),
                scale: 3.0 * kappa,
            },
        )?;
        let lu = SparseLu::factor_with(&jac, space.interior_ordering(), DEFAULT_PIVOT_THRESHOLD)
            .map_err(FemError::from)?;
        let rhs: Vec<f64> = phi.iter().map(|x| -x).collect();
        let d = lu.solve_refined(&jac, &rhs).map_err(FemError::from)?;
        let d = NodalField::from_interior(mesh, &d)?;

        let mut s = 1.0;
        loop {
            let trial = y.axpy(s, &d);
            let trial_phi = state_residual(space, trial.values(), u, kappa)?;
            let trial_norm = space.norm(&trial_phi, NormKind::HMinus1)?;
            if trial_norm <= opts.decrease_factor * norm {
                y = trial;
                phi = trial_phi;
                norm = trial_norm;
                break;
            }
            s *= 0.5;
            if s < opts.step_halving_floor {
                return Err(PdeError::DampingFloor {
                    step: steps.len(),
                    history,
                });
            }
        }
        history.push(norm);
        steps.push(s);
    }
    log::trace!("semilinear solve: {} steps, residual {norm:e}", steps.len());
    Ok(NewtonReport {
        y,
        residual_history: history,
        step_sizes: steps,
    })
}

fn checked_interior(space: &FemSpace, y: &[f64]) -> Result<Vec<f64>, FemError> {
    let mesh = space.mesh();
    if y.len() != mesh.n_vertices() {
        return Err(FemError::FieldMismatch {
            expected: mesh.n_vertices(),
            actual: y.len(),
        });
    }
    Ok(mesh.interior_nodes().iter().map(|&v| y[v]).collect())
}
