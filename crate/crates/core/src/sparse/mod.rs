//! Compressed-row sparse matrices and a direct sparse LU solver.
//!
//! Every linear system in the crate (stiffness, mass, Newton and KKT
//! systems) goes through [`SparseMatrix`] and [`SparseLu`].

mod block;
mod lu;
mod ordering;

pub use block::{block_residual, Block, BlockLu, BlockSymbolic};
pub use lu::{SparseLu, DEFAULT_PIVOT_THRESHOLD};
pub use ordering::{column_minimum_degree, minimum_degree, Ordering};

use thiserror::Error;

/// Relative residual target of [`solve`]: `‖Ax − b‖₂ ≤ LINEAR_TOL · max(1, ‖b‖₂)`.
pub const LINEAR_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SparseError {
    #[error("triplet ({row}, {col}) outside a {n_rows}x{n_cols} matrix")]
    IndexOutOfRange {
        row: usize,
        col: usize,
        n_rows: usize,
        n_cols: usize,
    },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("matrix is not square ({n_rows}x{n_cols})")]
    NotSquare { n_rows: usize, n_cols: usize },
    #[error("singular matrix: pivot {pivot:e} at elimination step {step} (column {column})")]
    Singular {
        step: usize,
        column: usize,
        pivot: f64,
    },
    #[error("solve residual {residual:e} above tolerance {tolerance:e}")]
    Inaccurate { residual: f64, tolerance: f64 },
}

/// A list of `(row, col, value)` contributions; duplicates are summed on assembly.
#[derive(Debug, Clone, Default)]
pub struct TripletList {
    entries: Vec<(usize, usize, f64)>,
}

impl TripletList {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(capacity: usize) -> Self {
        Self {
            entries: Vec::with_capacity(capacity),
        }
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        self.entries.push((row, col, value));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn extend_from(&mut self, other: &TripletList) {
        self.entries.extend_from_slice(&other.entries);
    }
}

impl From<Vec<(usize, usize, f64)>> for TripletList {
    fn from(entries: Vec<(usize, usize, f64)>) -> Self {
        Self { entries }
    }
}

impl FromIterator<(usize, usize, f64)> for TripletList {
    fn from_iter<I: IntoIterator<Item = (usize, usize, f64)>>(iter: I) -> Self {
        Self {
            entries: iter.into_iter().collect(),
        }
    }
}

/// Real matrix in compressed-row storage.
///
/// Column indices are strictly increasing within each row. Entries that
/// sum to zero during assembly are kept, so the sparsity pattern depends
/// only on which positions were touched.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Assembles a matrix from triplets, summing duplicates.
    pub fn from_triplets(
        triplets: &TripletList,
        n_rows: usize,
        n_cols: usize,
    ) -> Result<Self, SparseError> {
        let entries = triplets.entries();
        let mut counts = vec![0usize; n_rows + 1];
        for &(row, col, _) in entries {
            if row >= n_rows || col >= n_cols {
                return Err(SparseError::IndexOutOfRange {
                    row,
                    col,
                    n_rows,
                    n_cols,
                });
            }
            counts[row + 1] += 1;
        }
        for i in 0..n_rows {
            counts[i + 1] += counts[i];
        }

        // Bucket by row, keeping the triplet order inside a row.
        let mut next = counts.clone();
        let mut cols = vec![0usize; entries.len()];
        let mut vals = vec![0.0; entries.len()];
        for &(row, col, value) in entries {
            let slot = next[row];
            cols[slot] = col;
            vals[slot] = value;
            next[row] += 1;
        }

        let mut row_offsets = Vec::with_capacity(n_rows + 1);
        let mut col_indices = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        row_offsets.push(0);
        let mut order: Vec<usize> = Vec::new();
        for row in 0..n_rows {
            let (start, end) = (counts[row], counts[row + 1]);
            order.clear();
            order.extend(start..end);
            // Stable sort keeps the summation order of duplicates deterministic.
            order.sort_by_key(|&slot| cols[slot]);
            let mut last_col = usize::MAX;
            for &slot in &order {
                if cols[slot] == last_col {
                    *values.last_mut().expect("duplicate follows an entry") += vals[slot];
                } else {
                    last_col = cols[slot];
                    col_indices.push(cols[slot]);
                    values.push(vals[slot]);
                }
            }
            row_offsets.push(col_indices.len());
        }

        Ok(Self {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            row_offsets: vec![0; n_rows + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Self {
            n_rows: n,
            n_cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: diag.to_vec(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mutable access to the stored values; the pattern stays fixed.
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// True when both matrices store exactly the same positions.
    pub fn same_pattern(&self, other: &SparseMatrix) -> bool {
        self.n_rows == other.n_rows
            && self.n_cols == other.n_cols
            && self.row_offsets == other.row_offsets
            && self.col_indices == other.col_indices
    }

    /// Iterates over `(col, value)` of one row.
    pub fn row(&self, row: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_offsets[row]..self.row_offsets[row + 1];
        self.col_indices[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    /// Stored value at `(row, col)`, zero if the position is not stored.
    pub fn get(&self, row: usize, col: usize) -> f64 {
        let range = self.row_offsets[row]..self.row_offsets[row + 1];
        match self.col_indices[range.clone()].binary_search(&col) {
            Ok(pos) => self.values[range.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows.min(self.n_cols))
            .map(|i| self.get(i, i))
            .collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>, SparseError> {
        let mut y = vec![0.0; self.n_rows];
        self.matvec_into(x, &mut y)?;
        Ok(y)
    }

    /// `y = A x`, overwriting `y`.
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) -> Result<(), SparseError> {
        if x.len() != self.n_cols {
            return Err(SparseError::DimensionMismatch {
                expected: self.n_cols,
                actual: x.len(),
            });
        }
        if y.len() != self.n_rows {
            return Err(SparseError::DimensionMismatch {
                expected: self.n_rows,
                actual: y.len(),
            });
        }
        for (row, out) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_offsets[row]..self.row_offsets[row + 1] {
                acc += self.values[k] * x[self.col_indices[k]];
            }
            *out = acc;
        }
        Ok(())
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &c in &self.col_indices {
            counts[c + 1] += 1;
        }
        for i in 0..self.n_cols {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut col_indices = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for row in 0..self.n_rows {
            for k in self.row_offsets[row]..self.row_offsets[row + 1] {
                let c = self.col_indices[k];
                let slot = next[c];
                col_indices[slot] = row;
                values[slot] = self.values[k];
                next[c] += 1;
            }
        }
        SparseMatrix {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            row_offsets: counts,
            col_indices,
            values,
        }
    }

    /// Extracts the submatrix with the given rows and columns (in that order).
    ///
    /// `col_map[c]` gives the new column index of old column `c`, or `None`
    /// if the column is dropped.
    pub fn select(&self, rows: &[usize], col_map: &[Option<usize>], n_cols: usize) -> SparseMatrix {
        let mut row_offsets = Vec::with_capacity(rows.len() + 1);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        for &row in rows {
            for (c, v) in self.row(row) {
                if let Some(nc) = col_map[c] {
                    col_indices.push(nc);
                    values.push(v);
                }
            }
            row_offsets.push(col_indices.len());
        }
        // Monotone column maps keep every row sorted.
        SparseMatrix {
            n_rows: rows.len(),
            n_cols,
            row_offsets,
            col_indices,
            values,
        }
    }

    /// Checks the structural invariants of the compressed-row layout.
    pub fn check_invariants(&self) -> bool {
        if self.row_offsets.len() != self.n_rows + 1 || self.row_offsets[0] != 0 {
            return false;
        }
        if *self.row_offsets.last().unwrap() != self.col_indices.len()
            || self.col_indices.len() != self.values.len()
        {
            return false;
        }
        (0..self.n_rows).all(|row| {
            let (s, e) = (self.row_offsets[row], self.row_offsets[row + 1]);
            s <= e
                && self.col_indices[s..e].iter().all(|&c| c < self.n_cols)
                && self.col_indices[s..e].windows(2).all(|w| w[0] < w[1])
        })
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.n_cols]; self.n_rows];
        for (row, dense_row) in dense.iter_mut().enumerate() {
            for (c, v) in self.row(row) {
                dense_row[c] = v;
            }
        }
        dense
    }

    /// Infinity norm of the stored values, `max |a_ij|`.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Sparse matrix-vector product.
pub fn matvec(a: &SparseMatrix, x: &[f64]) -> Result<Vec<f64>, SparseError> {
    a.matvec(x)
}

/// Solves `A x = b` by sparse LU with a minimum-degree column ordering,
/// threshold partial pivoting and iterative refinement.
pub fn solve(a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>, SparseError> {
    let lu = SparseLu::factor(a)?;
    lu.solve_refined(a, b)
}

pub(crate) fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}
