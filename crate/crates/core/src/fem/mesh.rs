use super::FemError;

/// Uniform triangulation of the unit square with `2 N²` triangles.
///
/// Vertices are numbered row-major (`index = j (N + 1) + i` for the point
/// `(i/N, j/N)`); every cell is split along its lower-left to upper-right
/// diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    n_per_side: usize,
    h: f64,
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<bool>,
    interior_index: Vec<Option<usize>>,
    interior_nodes: Vec<usize>,
}

pub fn build_unit_square_mesh(n_per_side: usize) -> Result<Mesh, FemError> {
    Mesh::unit_square(n_per_side)
}

impl Mesh {
    pub fn unit_square(n: usize) -> Result<Self, FemError> {
        if n == 0 {
            return Err(FemError::EmptyMesh);
        }
        let side = n + 1;
        let mut vertices = Vec::with_capacity(side * side);
        let mut boundary = Vec::with_capacity(side * side);
        for j in 0..side {
            for i in 0..side {
                vertices.push([i as f64 / n as f64, j as f64 / n as f64]);
                boundary.push(i == 0 || j == 0 || i == n || j == n);
            }
        }
        let mut triangles = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let v00 = j * side + i;
                let v10 = v00 + 1;
                let v01 = v00 + side;
                let v11 = v01 + 1;
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
            }
        }
        let mut interior_index = vec![None; vertices.len()];
        let mut interior_nodes = Vec::new();
        for (v, on_boundary) in boundary.iter().enumerate() {
            if !on_boundary {
                interior_index[v] = Some(interior_nodes.len());
                interior_nodes.push(v);
            }
        }
        Ok(Self {
            n_per_side: n,
            h: 1.0 / n as f64,
            vertices,
            triangles,
            boundary,
            interior_index,
            interior_nodes,
        })
    }

    pub fn n_per_side(&self) -> usize {
        self.n_per_side
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn n_interior(&self) -> usize {
        self.interior_nodes.len()
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn vertex(&self, v: usize) -> [f64; 2] {
        self.vertices[v]
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.boundary[v]
    }

    /// Interior degree-of-freedom index of vertex `v`, if any.
    pub fn interior_index(&self, v: usize) -> Option<usize> {
        self.interior_index[v]
    }

    /// Vertex ids of the interior nodes, in degree-of-freedom order.
    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior_nodes
    }

    /// Vertex id of the grid point `(i/N, j/N)`.
    pub fn vertex_at(&self, i: usize, j: usize) -> usize {
        j * (self.n_per_side + 1) + i
    }

    pub fn triangle_coords(&self, t: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Signed area of triangle `t` (positive for counter-clockwise vertices).
    pub fn signed_area(&self, t: usize) -> f64 {
        let [p0, p1, p2] = self.triangle_coords(t);
        0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]))
    }

    /// Locates the triangle containing `p` (points on shared edges go to
    /// either neighbour) and returns it with the barycentric coordinates.
    pub fn locate(&self, p: [f64; 2]) -> (usize, [f64; 3]) {
        let n = self.n_per_side;
        let scaled = [p[0] * n as f64, p[1] * n as f64];
        let i = (scaled[0].floor().max(0.0) as usize).min(n - 1);
        let j = (scaled[1].floor().max(0.0) as usize).min(n - 1);
        let (fx, fy) = (scaled[0] - i as f64, scaled[1] - j as f64);
        let cell = j * n + i;
        // Lower triangle (v00, v10, v11) holds points with fy <= fx.
        if fy <= fx {
            (2 * cell, [1.0 - fx, fx - fy, fy])
        } else {
            (2 * cell + 1, [1.0 - fy, fx, fy - fx])
        }
    }
}

/// Gradients of the three barycentric coordinates and the area of a triangle.
pub(crate) fn barycentric_gradients(p: &[[f64; 2]; 3]) -> ([[f64; 2]; 3], f64) {
    let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    let inv = 1.0 / det;
    let grads = [
        [(p[1][1] - p[2][1]) * inv, (p[2][0] - p[1][0]) * inv],
        [(p[2][1] - p[0][1]) * inv, (p[0][0] - p[2][0]) * inv],
        [(p[0][1] - p[1][1]) * inv, (p[1][0] - p[0][0]) * inv],
    ];
    (grads, 0.5 * det)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_cells_is_an_error() {
        assert!(matches!(Mesh::unit_square(0), Err(FemError::EmptyMesh)));
    }

    #[test]
    fn counts() {
        let m = Mesh::unit_square(1).unwrap();
        assert_eq!((m.n_vertices(), m.n_triangles(), m.n_interior()), (4, 2, 0));

        let m = Mesh::unit_square(2).unwrap();
        assert_eq!((m.n_vertices(), m.n_triangles(), m.n_interior()), (9, 8, 1));
        assert_eq!(m.vertex(m.interior_nodes()[0]), [0.5, 0.5]);

        let m = Mesh::unit_square(32).unwrap();
        assert_eq!((m.n_vertices(), m.n_triangles(), m.n_interior()), (1089, 2048, 961));
    }

    #[test]
    fn triangles_positively_oriented_with_equal_area() {
        for n in [1, 3, 8] {
            let m = Mesh::unit_square(n).unwrap();
            let expected = 0.5 * m.h() * m.h();
            for t in 0..m.n_triangles() {
                assert!((m.signed_area(t) - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn boundary_mask_matches_geometry() {
        let m = Mesh::unit_square(5).unwrap();
        for (v, p) in m.vertices().iter().enumerate() {
            let on = p[0] == 0.0 || p[1] == 0.0 || p[0] == 1.0 || p[1] == 1.0;
            assert_eq!(m.is_boundary(v), on);
            assert_eq!(m.interior_index(v).is_none(), on);
        }
    }

    #[test]
    fn locate_returns_consistent_barycentrics() {
        let m = Mesh::unit_square(4).unwrap();
        for p in [[0.1, 0.05], [0.33, 0.9], [0.999, 0.001], [0.5, 0.5], [1.0, 1.0]] {
            let (t, bary) = m.locate(p);
            let coords = m.triangle_coords(t);
            let mut q = [0.0; 2];
            for k in 0..3 {
                assert!(bary[k] >= -1e-14);
                q[0] += bary[k] * coords[k][0];
                q[1] += bary[k] * coords[k][1];
            }
            assert!((q[0] - p[0]).abs() < 1e-14 && (q[1] - p[1]).abs() < 1e-14);
        }
    }
}
