//! P1 element assembly on [`Mesh`].
//!
//! Operators acting on `H¹₀` live on interior degrees of freedom only; the
//! mass matrix is assembled on the full vertex set so data and controls
//! with nonzero boundary values can be integrated.

use super::mesh::barycentric_gradients;
use super::{FemError, Mesh, QuadratureRule};
use crate::par::Execution;
use crate::sparse::{SparseMatrix, TripletList};

/// Zero-order coefficient `c` in `∫ ∇φ_i·∇φ_j + c φ_i φ_j`.
#[derive(Debug, Clone, Copy)]
pub enum Reaction<'a> {
    /// Pure stiffness, `c ≡ 0`.
    Zero,
    /// Piecewise-linear coefficient given by nodal values.
    Nodal(&'a [f64]),
    /// `c = scale · y_h²` with `y_h` the P1 function of the given nodal values,
    /// the linearisation of `κ y³` when `scale = 3κ`.
    ScaledSquare { field: &'a [f64], scale: f64 },
}

impl Reaction<'_> {
    fn field(&self) -> Option<&[f64]> {
        match self {
            Reaction::Zero => None,
            Reaction::Nodal(c) => Some(c),
            Reaction::ScaledSquare { field, .. } => Some(field),
        }
    }
}

fn check_len(mesh: &Mesh, len: usize) -> Result<(), FemError> {
    if len != mesh.n_vertices() {
        return Err(FemError::FieldMismatch {
            expected: mesh.n_vertices(),
            actual: len,
        });
    }
    Ok(())
}

/// `∫ ∇φ_i·∇φ_j + c φ_i φ_j` on interior × interior degrees of freedom.
pub fn assemble_operator(mesh: &Mesh, reaction: &Reaction) -> Result<SparseMatrix, FemError> {
    assemble_operator_with(mesh, reaction, Execution::default())
}

pub fn assemble_operator_with(
    mesh: &Mesh,
    reaction: &Reaction,
    exec: Execution,
) -> Result<SparseMatrix, FemError> {
    if let Some(c) = reaction.field() {
        check_len(mesh, c.len())?;
        if let Reaction::Nodal(c) = reaction {
            if let Some(v) = c.iter().position(|&x| x < 0.0 || !x.is_finite()) {
                return Err(FemError::NegativeCoefficient { vertex: v });
            }
        }
    }
    let rule = QuadratureRule::degree6();
    let locals = exec.map_range(mesh.n_triangles(), |t| local_operator(mesh, t, reaction, &rule));
    let n = mesh.n_interior();
    let mut triplets = TripletList::with_capacity(9 * mesh.n_triangles());
    for (t, local) in locals.iter().enumerate() {
        let tri = mesh.triangles()[t];
        for a in 0..3 {
            let Some(row) = mesh.interior_index(tri[a]) else { continue };
            for b in 0..3 {
                if let Some(col) = mesh.interior_index(tri[b]) {
                    triplets.push(row, col, local[a][b]);
                }
            }
        }
    }
    Ok(SparseMatrix::from_triplets(&triplets, n, n)?)
}

fn local_operator(mesh: &Mesh, t: usize, reaction: &Reaction, rule: &QuadratureRule) -> [[f64; 3]; 3] {
    let coords = mesh.triangle_coords(t);
    let (grads, area) = barycentric_gradients(&coords);
    let mut local = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            local[a][b] = area * (grads[a][0] * grads[b][0] + grads[a][1] * grads[b][1]);
        }
    }
    let tri = mesh.triangles()[t];
    let weight_at = |bary: &[f64; 3]| -> f64 {
        match reaction {
            Reaction::Zero => 0.0,
            Reaction::Nodal(c) => (0..3).map(|k| bary[k] * c[tri[k]]).sum(),
            Reaction::ScaledSquare { field, scale } => {
                let y: f64 = (0..3).map(|k| bary[k] * field[tri[k]]).sum();
                scale * y * y
            }
        }
    };
    if !matches!(reaction, Reaction::Zero) {
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            let c = weight_at(p) * w * area;
            for a in 0..3 {
                for b in 0..3 {
                    local[a][b] += c * p[a] * p[b];
                }
            }
        }
    }
    local
}

/// Consistent mass matrix `∫ φ_i φ_j` over the full vertex set.
pub fn assemble_mass(mesh: &Mesh) -> SparseMatrix {
    let mut triplets = TripletList::with_capacity(9 * mesh.n_triangles());
    for t in 0..mesh.n_triangles() {
        let tri = mesh.triangles()[t];
        let area = mesh.signed_area(t);
        for a in 0..3 {
            for b in 0..3 {
                let v = if a == b { area / 6.0 } else { area / 12.0 };
                triplets.push(tri[a], tri[b], v);
            }
        }
    }
    let n = mesh.n_vertices();
    SparseMatrix::from_triplets(&triplets, n, n).expect("mesh indices are in range")
}

/// Rows of a full-vertex matrix restricted to interior nodes, with columns
/// either kept (`interior_cols = false`) or restricted too.
pub fn restrict_rows(mesh: &Mesh, full: &SparseMatrix, interior_cols: bool) -> SparseMatrix {
    if interior_cols {
        let map: Vec<Option<usize>> = (0..mesh.n_vertices()).map(|v| mesh.interior_index(v)).collect();
        full.select(mesh.interior_nodes(), &map, mesh.n_interior())
    } else {
        let map: Vec<Option<usize>> = (0..mesh.n_vertices()).map(Some).collect();
        full.select(mesh.interior_nodes(), &map, mesh.n_vertices())
    }
}

/// `n_i(y) = ∫ κ y_h³ φ_i` for interior `i`.
pub fn nonlinear_term(mesh: &Mesh, y: &[f64], kappa: f64) -> Result<Vec<f64>, FemError> {
    check_len(mesh, y.len())?;
    let mut out = vec![0.0; mesh.n_interior()];
    if kappa == 0.0 {
        return Ok(out);
    }
    let rule = QuadratureRule::degree6();
    for (t, tri) in mesh.triangles().iter().enumerate() {
        if tri.iter().all(|&v| y[v] == 0.0) {
            continue;
        }
        let area = mesh.signed_area(t);
        let mut local = [0.0; 3];
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            let yq: f64 = (0..3).map(|k| p[k] * y[tri[k]]).sum();
            let c = kappa * yq * yq * yq * w * area;
            for a in 0..3 {
                local[a] += c * p[a];
            }
        }
        for a in 0..3 {
            if let Some(i) = mesh.interior_index(tri[a]) {
                out[i] += local[a];
            }
        }
    }
    Ok(out)
}

/// `∫ f φ_i` for interior `i`, degree-6 quadrature.
pub fn load_vector(mesh: &Mesh, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
    let rule = QuadratureRule::degree6();
    let mut out = vec![0.0; mesh.n_interior()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let coords = mesh.triangle_coords(t);
        let area = mesh.signed_area(t);
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            let x = [
                p[0] * coords[0][0] + p[1] * coords[1][0] + p[2] * coords[2][0],
                p[0] * coords[0][1] + p[1] * coords[1][1] + p[2] * coords[2][1],
            ];
            let c = f(x) * w * area;
            for a in 0..3 {
                if let Some(i) = mesh.interior_index(tri[a]) {
                    out[i] += c * p[a];
                }
            }
        }
    }
    out
}
