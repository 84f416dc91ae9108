//! Piecewise-linear finite elements on a uniform triangulation of the unit square.

mod assembly;
mod field;
mod integrate;
mod mesh;
mod quadrature;
mod space;
mod transfer;

pub use assembly::{
    assemble_mass, assemble_operator, assemble_operator_with, load_vector, nonlinear_term,
    restrict_rows, Reaction,
};
pub use field::NodalField;
pub use integrate::{integrate_over_rect, l1_norm, Rect};
pub use mesh::{build_unit_square_mesh, Mesh};
pub use quadrature::QuadratureRule;
pub use space::{compute_norm, FemSpace, NormKind};
pub use transfer::{l2_project, l2_project_interior, prolongate, transfer, TransferMode};

pub(crate) use space::dot;

use thiserror::Error;

use crate::sparse::SparseError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FemError {
    #[error("mesh needs at least one cell per side")]
    EmptyMesh,
    #[error("field has {actual} values, mesh expects {expected}")]
    FieldMismatch { expected: usize, actual: usize },
    #[error("reaction coefficient negative or not finite at vertex {vertex}")]
    NegativeCoefficient { vertex: usize },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("grid with {fine} cells per side does not refine {coarse}")]
    IncompatibleGrids { coarse: usize, fine: usize },
    #[error(transparent)]
    Sparse(#[from] SparseError),
}
