//! Moving P1 fields between nested uniform meshes.

use super::{FemError, FemSpace, Mesh};
use crate::sparse::SparseLu;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransferMode {
    /// Sample the fine field at the coarse vertices.
    Interpolate,
    L2Project,
}

/// Moves a fine-grid field to the coarse grid of `coarse`.
pub fn transfer(
    fine: &Mesh,
    coarse: &FemSpace,
    values: &[f64],
    mode: TransferMode,
) -> Result<Vec<f64>, FemError> {
    match mode {
        TransferMode::Interpolate => restrict_by_sampling(fine, coarse.mesh(), values),
        TransferMode::L2Project => l2_project(coarse, fine, values),
    }
}

fn restrict_by_sampling(fine: &Mesh, coarse: &Mesh, values: &[f64]) -> Result<Vec<f64>, FemError> {
    check_nested(coarse, fine)?;
    if values.len() != fine.n_vertices() {
        return Err(FemError::FieldMismatch {
            expected: fine.n_vertices(),
            actual: values.len(),
        });
    }
    let r = fine.n_per_side() / coarse.n_per_side();
    let nc = coarse.n_per_side();
    let mut out = Vec::with_capacity(coarse.n_vertices());
    for j in 0..=nc {
        for i in 0..=nc {
            out.push(values[fine.vertex_at(i * r, j * r)]);
        }
    }
    Ok(out)
}

/// Nodal interpolation of a coarse field onto a mesh refined by an integer factor.
pub fn prolongate(coarse: &Mesh, fine: &Mesh, values: &[f64]) -> Result<Vec<f64>, FemError> {
    check_nested(coarse, fine)?;
    if values.len() != coarse.n_vertices() {
        return Err(FemError::FieldMismatch {
            expected: coarse.n_vertices(),
            actual: values.len(),
        });
    }
    Ok(fine
        .vertices()
        .iter()
        .map(|&p| {
            let (t, bary) = coarse.locate(p);
            let tri = coarse.triangles()[t];
            (0..3).map(|k| bary[k] * values[tri[k]]).sum()
        })
        .collect())
}

/// `L²` projection of a fine P1 field onto the full coarse P1 space.
///
/// The right-hand side `∫ f φ_i^c` is exact: on every fine triangle both
/// factors are linear, so the product is integrated with the edge-midpoint rule.
pub fn l2_project(coarse: &FemSpace, fine: &Mesh, values: &[f64]) -> Result<Vec<f64>, FemError> {
    let rhs = projection_rhs(coarse, fine, values)?;
    let lu = SparseLu::factor(coarse.mass())?;
    Ok(lu.solve_refined(coarse.mass(), &rhs)?)
}

/// `L²` projection onto the coarse functions vanishing on the boundary.
/// Returns full nodal values with zero boundary entries.
pub fn l2_project_interior(coarse: &FemSpace, fine: &Mesh, values: &[f64]) -> Result<Vec<f64>, FemError> {
    let rhs = projection_rhs(coarse, fine, values)?;
    let cmesh = coarse.mesh();
    let rhs_in: Vec<f64> = cmesh.interior_nodes().iter().map(|&v| rhs[v]).collect();
    let m = coarse.mass_interior();
    let x = SparseLu::factor(m)?.solve_refined(m, &rhs_in)?;
    let mut out = vec![0.0; cmesh.n_vertices()];
    for (&v, xi) in cmesh.interior_nodes().iter().zip(x) {
        out[v] = xi;
    }
    Ok(out)
}

fn projection_rhs(coarse: &FemSpace, fine: &Mesh, values: &[f64]) -> Result<Vec<f64>, FemError> {
    let cmesh = coarse.mesh();
    check_nested(cmesh, fine)?;
    if values.len() != fine.n_vertices() {
        return Err(FemError::FieldMismatch {
            expected: fine.n_vertices(),
            actual: values.len(),
        });
    }
    let mut rhs = vec![0.0; cmesh.n_vertices()];
    let mids = [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]];
    for (t, tri) in fine.triangles().iter().enumerate() {
        let c = fine.triangle_coords(t);
        let area = fine.signed_area(t);
        let centroid = [(c[0][0] + c[1][0] + c[2][0]) / 3.0, (c[0][1] + c[1][1] + c[2][1]) / 3.0];
        let (ct, _) = cmesh.locate(centroid);
        let ctri = cmesh.triangles()[ct];
        let cc = cmesh.triangle_coords(ct);
        for m in mids {
            let x = [
                m[0] * c[0][0] + m[1] * c[1][0] + m[2] * c[2][0],
                m[0] * c[0][1] + m[1] * c[1][1] + m[2] * c[2][1],
            ];
            let f: f64 = (0..3).map(|k| m[k] * values[tri[k]]).sum();
            let lam = barycentric_in(&cc, x);
            for k in 0..3 {
                rhs[ctri[k]] += area / 3.0 * f * lam[k];
            }
        }
    }
    Ok(rhs)
}

fn barycentric_in(c: &[[f64; 2]; 3], x: [f64; 2]) -> [f64; 3] {
    let det = (c[1][0] - c[0][0]) * (c[2][1] - c[0][1]) - (c[2][0] - c[0][0]) * (c[1][1] - c[0][1]);
    let l1 = ((x[0] - c[0][0]) * (c[2][1] - c[0][1]) - (c[2][0] - c[0][0]) * (x[1] - c[0][1])) / det;
    let l2 = ((c[1][0] - c[0][0]) * (x[1] - c[0][1]) - (x[0] - c[0][0]) * (c[1][1] - c[0][1])) / det;
    [1.0 - l1 - l2, l1, l2]
}

fn check_nested(coarse: &Mesh, fine: &Mesh) -> Result<(), FemError> {
    let (nc, nf) = (coarse.n_per_side(), fine.n_per_side());
    if nf < nc || nf % nc != 0 {
        return Err(FemError::IncompatibleGrids { coarse: nc, fine: nf });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::NodalField;

    #[test]
    fn projection_reproduces_coarse_fields() {
        let space = FemSpace::unit_square(4).unwrap();
        let fine = Mesh::unit_square(8).unwrap();
        let f = NodalField::from_fn(space.mesh(), |p| (3.0 * p[0]).sin() + p[1] * p[1]);
        let up = prolongate(space.mesh(), &fine, f.values()).unwrap();
        let back = l2_project(&space, &fine, &up).unwrap();
        for (a, b) in back.iter().zip(f.values()) {
            assert!((a - b).abs() < 1e-11);
        }
    }

    #[test]
    fn projection_is_mass_orthogonal() {
        // ∫ (f − P f) φ_i = 0 for every coarse basis function.
        let space = FemSpace::unit_square(3).unwrap();
        let fine = Mesh::unit_square(6).unwrap();
        let f = NodalField::from_fn(&fine, |p| ((7.0 * p[0]).cos() * p[1]).exp());
        let pf = l2_project(&space, &fine, f.values()).unwrap();
        let pf_fine = prolongate(space.mesh(), &fine, &pf).unwrap();
        let diff: Vec<f64> = f.values().iter().zip(&pf_fine).map(|(a, b)| a - b).collect();
        let fine_mass = crate::fem::assemble_mass(&fine);
        let md = fine_mass.matvec(&diff).unwrap();
        for v in 0..space.mesh().n_vertices() {
            let mut hat = vec![0.0; space.mesh().n_vertices()];
            hat[v] = 1.0;
            let hat_fine = prolongate(space.mesh(), &fine, &hat).unwrap();
            let ip: f64 = hat_fine.iter().zip(&md).map(|(a, b)| a * b).sum();
            assert!(ip.abs() < 1e-13, "vertex {v}: {ip}");
        }
    }

    #[test]
    fn linear_fields_survive_both_modes() {
        let space = FemSpace::unit_square(4).unwrap();
        for factor in [1, 2, 3] {
            let fine = Mesh::unit_square(4 * factor).unwrap();
            let f = NodalField::from_fn(&fine, |p| p[0] + p[1]);
            let expected = NodalField::from_fn(space.mesh(), |p| p[0] + p[1]);
            for mode in [TransferMode::Interpolate, TransferMode::L2Project] {
                let out = transfer(&fine, &space, f.values(), mode).unwrap();
                for (a, b) in out.iter().zip(expected.values()) {
                    assert!((a - b).abs() < 1e-12, "{mode:?} factor {factor}");
                }
            }
            let ones = vec![1.0; fine.n_vertices()];
            for mode in [TransferMode::Interpolate, TransferMode::L2Project] {
                let out = transfer(&fine, &space, &ones, mode).unwrap();
                assert!(out.iter().all(|v| (v - 1.0).abs() < 1e-12));
            }
        }
    }

    #[test]
    fn same_grid_is_identity() {
        let space = FemSpace::unit_square(3).unwrap();
        let f = NodalField::from_fn(space.mesh(), |p| (5.0 * p[0] * p[1]).sin());
        for mode in [TransferMode::Interpolate, TransferMode::L2Project] {
            let out = transfer(space.mesh(), &space, f.values(), mode).unwrap();
            for (a, b) in out.iter().zip(f.values()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn non_nested_grids_rejected() {
        let space = FemSpace::unit_square(4).unwrap();
        let fine = Mesh::unit_square(6).unwrap();
        assert!(matches!(
            l2_project(&space, &fine, &vec![0.0; fine.n_vertices()]),
            Err(FemError::IncompatibleGrids { .. })
        ));
    }
}
