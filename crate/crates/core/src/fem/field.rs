use std::io::{BufRead, Write};

use super::{FemError, Mesh};

/// Coefficients of a P1 function in the nodal basis, one per mesh vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalField {
    values: Vec<f64>,
}

impl NodalField {
    pub fn zeros(mesh: &Mesh) -> Self {
        Self {
            values: vec![0.0; mesh.n_vertices()],
        }
    }

    pub fn constant(mesh: &Mesh, value: f64) -> Self {
        Self {
            values: vec![value; mesh.n_vertices()],
        }
    }

    pub fn from_values(mesh: &Mesh, values: Vec<f64>) -> Result<Self, FemError> {
        if values.len() != mesh.n_vertices() {
            return Err(FemError::FieldMismatch {
                expected: mesh.n_vertices(),
                actual: values.len(),
            });
        }
        Ok(Self { values })
    }

    /// Nodal interpolant of `f`.
    pub fn from_fn(mesh: &Mesh, f: impl Fn([f64; 2]) -> f64) -> Self {
        Self {
            values: mesh.vertices().iter().map(|&p| f(p)).collect(),
        }
    }

    /// Extends interior degrees of freedom by zero boundary values.
    pub fn from_interior(mesh: &Mesh, interior: &[f64]) -> Result<Self, FemError> {
        if interior.len() != mesh.n_interior() {
            return Err(FemError::FieldMismatch {
                expected: mesh.n_interior(),
                actual: interior.len(),
            });
        }
        let mut values = vec![0.0; mesh.n_vertices()];
        for (&v, &x) in mesh.interior_nodes().iter().zip(interior) {
            values[v] = x;
        }
        Ok(Self { values })
    }

    pub fn interior_values(&self, mesh: &Mesh) -> Vec<f64> {
        mesh.interior_nodes().iter().map(|&v| self.values[v]).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn vanishes_on_boundary(&self, mesh: &Mesh) -> bool {
        self.values
            .iter()
            .zip(mesh.boundary_mask())
            .all(|(&x, &b)| !b || x == 0.0)
    }

    /// `self + alpha * other`.
    pub fn axpy(&self, alpha: f64, other: &NodalField) -> NodalField {
        NodalField {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + alpha * b)
                .collect(),
        }
    }

    /// Writes the `x,y,value` table, one row per vertex in vertex order.
    pub fn write_table<W: Write>(&self, mesh: &Mesh, mut out: W) -> std::io::Result<()> {
        writeln!(out, "x,y,value")?;
        for (p, v) in mesh.vertices().iter().zip(&self.values) {
            writeln!(out, "{:.16e},{:.16e},{:.16e}", p[0], p[1], v)?;
        }
        Ok(())
    }

    /// Reads a table written by [`NodalField::write_table`] back for `mesh`.
    pub fn read_table<R: BufRead>(mesh: &Mesh, input: R) -> Result<Self, FemError> {
        let mut values = Vec::with_capacity(mesh.n_vertices());
        for (lineno, line) in input.lines().enumerate() {
            let line = line.map_err(|e| FemError::Parse(e.to_string()))?;
            if lineno == 0 {
                if line.trim() != "x,y,value" {
                    return Err(FemError::Parse(format!("unexpected header {line:?}")));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let value = line
                .rsplit(',')
                .next()
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| FemError::Parse(format!("line {}: {line:?}", lineno + 1)))?;
            values.push(value);
        }
        Self::from_values(mesh, values)
    }
}

impl AsRef<[f64]> for NodalField {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_round_trip_is_exact() {
        let mesh = Mesh::unit_square(3).unwrap();
        let f = NodalField::from_fn(&mesh, |p| (p[0] * 7.3).sin() / 3.0 + p[1]);
        let mut buf = Vec::new();
        f.write_table(&mesh, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x,y,value\n"));
        assert_eq!(text.lines().count(), mesh.n_vertices() + 1);
        let back = NodalField::read_table(&mesh, &buf[..]).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn interior_extension() {
        let mesh = Mesh::unit_square(3).unwrap();
        let f = NodalField::from_interior(&mesh, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(f.vanishes_on_boundary(&mesh));
        assert_eq!(f.interior_values(&mesh), vec![1.0, 2.0, 3.0, 4.0]);
        assert!(NodalField::from_interior(&mesh, &[1.0]).is_err());
    }
}
