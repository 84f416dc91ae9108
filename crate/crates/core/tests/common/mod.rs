#![allow(dead_code)]

use irgnm_core::fem::{FemSpace, NodalField};
use irgnm_core::semilinear::{solve_semilinear, NewtonOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Linearization point and data for one seeded subproblem.
pub struct Instance {
    pub kappa: f64,
    pub u_k: Vec<f64>,
    pub y_k: Vec<f64>,
    pub g: Vec<f64>,
}

pub fn state(space: &FemSpace, u: &[f64], kappa: f64) -> Vec<f64> {
    let zero = vec![0.0; space.mesh().n_vertices()];
    solve_semilinear(space, u, kappa, &zero, &NewtonOptions::default())
        .unwrap()
        .y
        .into_values()
}

/// `u_k` uniform in `[0, u_max]` on interior nodes, data from a second
/// random source plus 5% uniform noise, zero on the boundary.
pub fn instance(space: &FemSpace, seed: u64, kappa: f64, u_max: f64) -> Instance {
    let mesh = space.mesh();
    let n = space.n_interior();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u_k: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..u_max)).collect();
    let u_k = NodalField::from_interior(mesh, &u_k).unwrap().into_values();
    let src: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.5)).collect();
    let src = NodalField::from_interior(mesh, &src).unwrap().into_values();
    let y_k = state(space, &u_k, kappa);
    let clean = state(space, &src, kappa);
    let scale = space.l2_distance(&clean, &vec![0.0; clean.len()]).unwrap();
    let g = clean
        .iter()
        .enumerate()
        .map(|(v, x)| if mesh.is_boundary(v) { 0.0 } else { x + 0.05 * scale * rng.random_range(-1.0..1.0) })
        .collect();
    Instance { kappa, u_k, y_k, g }
}
