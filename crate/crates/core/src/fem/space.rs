use std::sync::{Arc, OnceLock};

use super::assembly::{assemble_mass, assemble_operator, restrict_rows, Reaction};
use super::integrate::l1_norm;
use super::{FemError, Mesh, NodalField};
use crate::sparse::{
    column_minimum_degree, minimum_degree, BlockSymbolic, Ordering, SparseLu, SparseMatrix, DEFAULT_PIVOT_THRESHOLD,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    L2,
    L1,
    Linf,
    /// Dual norm of `H¹₀` for residual vectors on interior dofs, `sqrt(rᵀ K₀⁻¹ r)`.
    HMinus1,
}

/// A mesh together with the matrices every solver needs: full and interior
/// mass, the Dirichlet Laplacian `K₀` and its factorization.
#[derive(Debug)]
pub struct FemSpace {
    mesh: Mesh,
    mass: SparseMatrix,
    mass_rows: SparseMatrix,
    mass_interior: SparseMatrix,
    stiffness: SparseMatrix,
    stiffness_lu: SparseLu,
    interior_ordering: Arc<Ordering>,
    block_symbolic: OnceLock<Arc<BlockSymbolic>>,
    pivoting_ordering: OnceLock<Arc<Ordering>>,
}

impl FemSpace {
    pub fn new(mesh: Mesh) -> Result<Self, FemError> {
        let mass = assemble_mass(&mesh);
        let mass_rows = restrict_rows(&mesh, &mass, false);
        let mass_interior = restrict_rows(&mesh, &mass, true);
        let stiffness = assemble_operator(&mesh, &Reaction::Zero)?;
        let interior_ordering = Arc::new(minimum_degree(&stiffness));
        let stiffness_lu = SparseLu::factor_with(&stiffness, &interior_ordering, DEFAULT_PIVOT_THRESHOLD)?;
        Ok(Self {
            mesh,
            mass,
            mass_rows,
            mass_interior,
            stiffness,
            stiffness_lu,
            interior_ordering,
            block_symbolic: OnceLock::new(),
            pivoting_ordering: OnceLock::new(),
        })
    }

    pub fn unit_square(n: usize) -> Result<Self, FemError> {
        Self::new(Mesh::unit_square(n)?)
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn n_interior(&self) -> usize {
        self.mesh.n_interior()
    }

    /// Full-vertex mass matrix.
    pub fn mass(&self) -> &SparseMatrix {
        &self.mass
    }

    /// Mass matrix rows of interior nodes against all vertices.
    pub fn mass_rows(&self) -> &SparseMatrix {
        &self.mass_rows
    }

    pub fn mass_interior(&self) -> &SparseMatrix {
        &self.mass_interior
    }

    /// Dirichlet Laplacian `K₀` on interior dofs.
    pub fn stiffness(&self) -> &SparseMatrix {
        &self.stiffness
    }

    /// Fill-reducing ordering shared by every interior-pattern operator.
    pub fn interior_ordering(&self) -> &Arc<Ordering> {
        &self.interior_ordering
    }

    /// Block elimination structure of the interior pattern, shared by every
    /// system with one 2×2 block per interior node pair; built on first use.
    pub fn block_symbolic(&self) -> Arc<BlockSymbolic> {
        self.block_symbolic
            .get_or_init(|| {
                Arc::new(
                    BlockSymbolic::new(&self.stiffness, self.interior_ordering.clone())
                        .expect("stiffness pattern is square and symmetric"),
                )
            })
            .clone()
    }

    /// Column ordering for the scalar form of those block systems under
    /// unrestricted pivoting; `pattern` is only read on first use.
    pub fn pivoting_ordering(&self, pattern: &SparseMatrix) -> Arc<Ordering> {
        self.pivoting_ordering
            .get_or_init(|| Arc::new(column_minimum_degree(pattern)))
            .clone()
    }

    /// `∫ f φ_i` for interior `i` when `f` is the P1 function with the given nodal values.
    pub fn mass_apply(&self, field: &[f64]) -> Result<Vec<f64>, FemError> {
        self.check_full(field)?;
        Ok(self.mass_rows.matvec(field)?)
    }

    /// Solves `K₀ x = r`.
    pub fn solve_laplacian(&self, r: &[f64]) -> Result<Vec<f64>, FemError> {
        Ok(self.stiffness_lu.solve(r)?)
    }

    pub fn norm(&self, x: &[f64], kind: NormKind) -> Result<f64, FemError> {
        match kind {
            NormKind::L2 => {
                self.check_full(x)?;
                let mx = self.mass.matvec(x)?;
                Ok(dot(x, &mx).max(0.0).sqrt())
            }
            NormKind::L1 => {
                self.check_full(x)?;
                Ok(l1_norm(&self.mesh, x))
            }
            NormKind::Linf => {
                self.check_full(x)?;
                Ok(x.iter().fold(0.0, |m, v| m.max(v.abs())))
            }
            NormKind::HMinus1 => {
                if x.len() != self.mesh.n_interior() {
                    return Err(FemError::FieldMismatch {
                        expected: self.mesh.n_interior(),
                        actual: x.len(),
                    });
                }
                let z = self.stiffness_lu.solve(x)?;
                Ok(dot(x, &z).max(0.0).sqrt())
            }
        }
    }

    pub fn l2_norm(&self, field: &NodalField) -> f64 {
        self.norm(field.values(), NormKind::L2)
            .expect("field built on this mesh")
    }

    /// `‖a − b‖_{L²}` without materialising the difference field.
    pub fn l2_distance(&self, a: &[f64], b: &[f64]) -> Result<f64, FemError> {
        let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        self.norm(&diff, NormKind::L2)
    }

    fn check_full(&self, x: &[f64]) -> Result<(), FemError> {
        if x.len() != self.mesh.n_vertices() {
            return Err(FemError::FieldMismatch {
                expected: self.mesh.n_vertices(),
                actual: x.len(),
            });
        }
        Ok(())
    }
}

/// One-off norm evaluation; builds the matrices it needs on the fly.
pub fn compute_norm(mesh: &Mesh, x: &[f64], kind: NormKind) -> Result<f64, FemError> {
    FemSpace::new(mesh.clone())?.norm(x, kind)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::assembly::load_vector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_field_norms() {
        let mesh = Mesh::unit_square(4).unwrap();
        let ones = vec![1.0; mesh.n_vertices()];
        for kind in [NormKind::L2, NormKind::L1, NormKind::Linf] {
            assert!((compute_norm(&mesh, &ones, kind).unwrap() - 1.0).abs() < 1e-14);
        }
        let zero = vec![0.0; mesh.n_interior()];
        assert_eq!(compute_norm(&mesh, &zero, NormKind::HMinus1).unwrap(), 0.0);
        assert!(compute_norm(&mesh, &zero, NormKind::L2).is_err());
    }

    #[test]
    fn l2_matches_dense_quadrature_of_square() {
        // ∫ f_h² on each element with the degree-6 rule (exact for quadratics).
        let rule = crate::fem::QuadratureRule::degree6();
        for n in [2, 5, 8] {
            let space = FemSpace::unit_square(n).unwrap();
            let mesh = space.mesh();
            let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
            let vals: Vec<f64> = (0..mesh.n_vertices()).map(|_| rng.random_range(-2.0..2.0)).collect();
            let mut sq = 0.0;
            for (t, tri) in mesh.triangles().iter().enumerate() {
                let area = mesh.signed_area(t);
                for (p, w) in rule.points.iter().zip(&rule.weights) {
                    let f: f64 = (0..3).map(|k| p[k] * vals[tri[k]]).sum();
                    sq += w * area * f * f;
                }
            }
            let l2 = space.norm(&vals, NormKind::L2).unwrap();
            assert!((l2 - sq.sqrt()).abs() < 1e-10);
        }
    }

    #[test]
    fn hminus1_is_dual_to_energy_norm() {
        // For r = K₀ y: ‖r‖_{H⁻¹}² = yᵀ K₀ y.
        let space = FemSpace::unit_square(6).unwrap();
        let y: Vec<f64> = (0..space.n_interior()).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        let r = space.stiffness().matvec(&y).unwrap();
        let energy = dot(&y, &r).sqrt();
        assert!((space.norm(&r, NormKind::HMinus1).unwrap() - energy).abs() < 1e-12);
    }

    #[test]
    fn poisson_converges_at_second_order() {
        // y* = x(1−x)y(1−y), −Δy* = 2[x(1−x) + y(1−y)].
        let exact = |p: [f64; 2]| p[0] * (1.0 - p[0]) * p[1] * (1.0 - p[1]);
        let rhs = |p: [f64; 2]| 2.0 * (p[0] * (1.0 - p[0]) + p[1] * (1.0 - p[1]));
        let error = |n: usize| {
            let space = FemSpace::unit_square(n).unwrap();
            let b = load_vector(space.mesh(), rhs);
            let y = space.solve_laplacian(&b).unwrap();
            let yh = NodalField::from_interior(space.mesh(), &y).unwrap();
            // L² error against y* by degree-6 quadrature on each element.
            let rule = crate::fem::QuadratureRule::degree6();
            let mesh = space.mesh();
            let mut sq = 0.0;
            for (t, tri) in mesh.triangles().iter().enumerate() {
                let c = mesh.triangle_coords(t);
                let area = mesh.signed_area(t);
                for (p, w) in rule.points.iter().zip(&rule.weights) {
                    let f: f64 = (0..3).map(|k| p[k] * yh.values()[tri[k]]).sum();
                    let x = [
                        p[0] * c[0][0] + p[1] * c[1][0] + p[2] * c[2][0],
                        p[0] * c[0][1] + p[1] * c[1][1] + p[2] * c[2][1],
                    ];
                    sq += w * area * (f - exact(x)).powi(2);
                }
            }
            sq.sqrt()
        };
        let ratio = error(8) / error(16);
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }
}
