//! Sparse LU with 2×2 block pivots for systems that couple two unknowns per
//! node, such as state/adjoint pairs.
//!
//! The block pattern is the (structurally symmetric) node pattern, so the
//! fill is that of a Cholesky factorization of the node graph and the
//! symbolic analysis can be shared by every matrix on the same pattern.
//! Pivots are never moved off the block diagonal.

use std::sync::Arc;

use super::{norm2, Ordering, SparseError, SparseMatrix, LINEAR_TOL};

/// Row-major 2×2 block `[a00, a01, a10, a11]`.
pub type Block = [f64; 4];

const NONE: usize = usize::MAX;

#[inline]
fn mul(a: &Block, b: &Block) -> Block {
    [
        a[0] * b[0] + a[1] * b[2],
        a[0] * b[1] + a[1] * b[3],
        a[2] * b[0] + a[3] * b[2],
        a[2] * b[1] + a[3] * b[3],
    ]
}

#[inline]
fn sub_mul(w: &mut Block, a: &Block, b: &Block) {
    w[0] -= a[0] * b[0] + a[1] * b[2];
    w[1] -= a[0] * b[1] + a[1] * b[3];
    w[2] -= a[2] * b[0] + a[3] * b[2];
    w[3] -= a[2] * b[1] + a[3] * b[3];
}

#[inline]
fn apply(a: &Block, x: [f64; 2]) -> [f64; 2] {
    [a[0] * x[0] + a[1] * x[1], a[2] * x[0] + a[3] * x[1]]
}

/// Elimination structure of a node pattern under a fixed ordering.
#[derive(Debug, Clone)]
pub struct BlockSymbolic {
    n: usize,
    ordering: Arc<Ordering>,
    // Strictly lower part of the filled pattern by rows, ascending columns.
    l_ptr: Vec<usize>,
    l_col: Vec<usize>,
    // Strictly upper part by rows, ascending columns.
    u_ptr: Vec<usize>,
    u_col: Vec<usize>,
    // Original pattern: row offsets and columns, to map values into place.
    a_ptr: Vec<usize>,
    a_col: Vec<usize>,
}

impl BlockSymbolic {
    /// Analyzes the pattern of `pattern`, which must be structurally symmetric.
    pub fn new(pattern: &SparseMatrix, ordering: Arc<Ordering>) -> Result<Self, SparseError> {
        let n = pattern.n_rows();
        if n != pattern.n_cols() {
            return Err(SparseError::NotSquare {
                n_rows: n,
                n_cols: pattern.n_cols(),
            });
        }
        if ordering.len() != n {
            return Err(SparseError::DimensionMismatch {
                expected: n,
                actual: ordering.len(),
            });
        }
        let perm = ordering.perm();
        let inv = ordering.inverse();

        // Elimination tree with path compression.
        let mut parent = vec![NONE; n];
        let mut ancestor = vec![NONE; n];
        for i in 0..n {
            for (c, _) in pattern.row(perm[i]) {
                let mut j = inv[c];
                while j != NONE && j < i {
                    let next = ancestor[j];
                    ancestor[j] = i;
                    if next == NONE {
                        parent[j] = i;
                    }
                    j = next;
                }
            }
        }

        // Row patterns of L from the row subtrees.
        let mut mark = vec![NONE; n];
        let mut l_ptr = Vec::with_capacity(n + 1);
        let mut l_col = Vec::new();
        let mut row = Vec::new();
        for i in 0..n {
            l_ptr.push(l_col.len());
            mark[i] = i;
            row.clear();
            for (c, _) in pattern.row(perm[i]) {
                let mut j = inv[c];
                while j < i && mark[j] != i {
                    mark[j] = i;
                    row.push(j);
                    j = parent[j];
                }
            }
            row.sort_unstable();
            l_col.extend_from_slice(&row);
        }
        l_ptr.push(l_col.len());

        let mut counts = vec![0usize; n + 1];
        for &k in &l_col {
            counts[k + 1] += 1;
        }
        for k in 0..n {
            counts[k + 1] += counts[k];
        }
        let u_ptr = counts.clone();
        let mut u_col = vec![0; l_col.len()];
        let mut next = counts;
        for i in 0..n {
            for &k in &l_col[l_ptr[i]..l_ptr[i + 1]] {
                u_col[next[k]] = i;
                next[k] += 1;
            }
        }

        Ok(Self {
            n,
            ordering,
            l_ptr,
            l_col,
            u_ptr,
            u_col,
            a_ptr: pattern.row_offsets().to_vec(),
            a_col: pattern.col_indices().to_vec(),
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Stored blocks of `L` and `U` including the diagonal.
    pub fn factor_blocks(&self) -> usize {
        2 * self.l_col.len() + self.n
    }

    fn check_pattern(&self, pattern: &SparseMatrix) -> bool {
        pattern.row_offsets() == self.a_ptr.as_slice() && pattern.col_indices() == self.a_col.as_slice()
    }
}

/// Numeric block factors `P A Pᵀ = L U` with unit block-lower `L`.
#[derive(Debug, Clone)]
pub struct BlockLu {
    symbolic: Arc<BlockSymbolic>,
    l_val: Vec<Block>,
    u_val: Vec<Block>,
    diag_inv: Vec<Block>,
}

impl BlockLu {
    /// Factors the block matrix whose blocks are given in the order of the
    /// stored entries of the analyzed pattern.
    pub fn factor(symbolic: Arc<BlockSymbolic>, blocks: &[Block]) -> Result<Self, SparseError> {
        let s = &*symbolic;
        let n = s.n;
        if blocks.len() != s.a_col.len() {
            return Err(SparseError::DimensionMismatch {
                expected: s.a_col.len(),
                actual: blocks.len(),
            });
        }
        let perm = s.ordering.perm();
        let inv = s.ordering.inverse();
        let mut l_val = vec![[0.0; 4]; s.l_col.len()];
        let mut u_val = vec![[0.0; 4]; s.u_col.len()];
        let mut diag_inv = vec![[0.0; 4]; n];
        let mut w = vec![[0.0f64; 4]; n];

        for i in 0..n {
            let (ls, le) = (s.l_ptr[i], s.l_ptr[i + 1]);
            let (us, ue) = (s.u_ptr[i], s.u_ptr[i + 1]);
            for &j in s.l_col[ls..le].iter().chain(&s.u_col[us..ue]) {
                w[j] = [0.0; 4];
            }
            w[i] = [0.0; 4];
            let r = perm[i];
            for q in s.a_ptr[r]..s.a_ptr[r + 1] {
                w[inv[s.a_col[q]]] = blocks[q];
            }
            for p in ls..le {
                let k = s.l_col[p];
                let lik = mul(&w[k], &diag_inv[k]);
                for q in s.u_ptr[k]..s.u_ptr[k + 1] {
                    sub_mul(&mut w[s.u_col[q]], &lik, &u_val[q]);
                }
                l_val[p] = lik;
            }
            let d = w[i];
            let det = d[0] * d[3] - d[1] * d[2];
            let scale = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if !det.is_finite() || det.abs() <= f64::EPSILON * scale * scale || scale == 0.0 {
                return Err(SparseError::Singular {
                    step: i,
                    column: perm[i],
                    pivot: det,
                });
            }
            diag_inv[i] = [d[3] / det, -d[1] / det, -d[2] / det, d[0] / det];
            for q in us..ue {
                u_val[q] = w[s.u_col[q]];
            }
        }
        Ok(Self {
            symbolic,
            l_val,
            u_val,
            diag_inv,
        })
    }

    /// Solves for interleaved unknowns `x[2i], x[2i+1]` of node `i`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, SparseError> {
        let s = &*self.symbolic;
        let n = s.n;
        if b.len() != 2 * n {
            return Err(SparseError::DimensionMismatch {
                expected: 2 * n,
                actual: b.len(),
            });
        }
        let perm = s.ordering.perm();
        let mut y: Vec<[f64; 2]> = (0..n).map(|i| [b[2 * perm[i]], b[2 * perm[i] + 1]]).collect();
        for i in 0..n {
            let mut yi = y[i];
            for p in s.l_ptr[i]..s.l_ptr[i + 1] {
                let t = apply(&self.l_val[p], y[s.l_col[p]]);
                yi[0] -= t[0];
                yi[1] -= t[1];
            }
            y[i] = yi;
        }
        for i in (0..n).rev() {
            let mut yi = y[i];
            for q in s.u_ptr[i]..s.u_ptr[i + 1] {
                let t = apply(&self.u_val[q], y[s.u_col[q]]);
                yi[0] -= t[0];
                yi[1] -= t[1];
            }
            y[i] = apply(&self.diag_inv[i], yi);
        }
        let mut x = vec![0.0; 2 * n];
        for i in 0..n {
            x[2 * perm[i]] = y[i][0];
            x[2 * perm[i] + 1] = y[i][1];
        }
        Ok(x)
    }

    /// Solves with up to three refinement steps against the block matrix
    /// `(pattern, blocks)`; returns the solution and its residual norm.
    pub fn solve_with_residual(
        &self,
        pattern: &SparseMatrix,
        blocks: &[Block],
        b: &[f64],
    ) -> Result<(Vec<f64>, f64), SparseError> {
        if !self.symbolic.check_pattern(pattern) {
            return Err(SparseError::DimensionMismatch {
                expected: self.symbolic.a_col.len(),
                actual: pattern.nnz(),
            });
        }
        let tol = LINEAR_TOL * norm2(b).max(1.0);
        let mut x = self.solve(b)?;
        let mut r = block_residual(pattern, blocks, &x, b);
        let mut res = norm2(&r);
        for _ in 0..3 {
            if res <= tol {
                break;
            }
            let dx = self.solve(&r)?;
            let candidate: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + d).collect();
            let r_new = block_residual(pattern, blocks, &candidate, b);
            let res_new = norm2(&r_new);
            if !(res_new < res) {
                break;
            }
            x = candidate;
            r = r_new;
            res = res_new;
        }
        Ok((x, res))
    }
}

/// `b − A x` for the block matrix, interleaved layout.
pub fn block_residual(pattern: &SparseMatrix, blocks: &[Block], x: &[f64], b: &[f64]) -> Vec<f64> {
    let offs = pattern.row_offsets();
    let cols = pattern.col_indices();
    let mut r = b.to_vec();
    for i in 0..pattern.n_rows() {
        let (mut r0, mut r1) = (0.0, 0.0);
        for q in offs[i]..offs[i + 1] {
            let c = cols[q];
            let t = apply(&blocks[q], [x[2 * c], x[2 * c + 1]]);
            r0 += t[0];
            r1 += t[1];
        }
        r[2 * i] -= r0;
        r[2 * i + 1] -= r1;
    }
    r
}
