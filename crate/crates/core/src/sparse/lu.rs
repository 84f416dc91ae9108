//! Left-looking sparse LU (Gilbert–Peierls) with threshold partial pivoting.
//!
//! Column `k` of the factors is obtained from a sparse triangular solve
//! `L \ A(:, q[k])` whose nonzero pattern is found by a depth-first search
//! through the columns of `L` computed so far.

use super::{norm2, Ordering, SparseError, SparseMatrix, LINEAR_TOL};

/// Diagonal entries are kept as pivots while `|a_diag| ≥ threshold · max |a_col|`.
pub const DEFAULT_PIVOT_THRESHOLD: f64 = 0.1;

const NONE: usize = usize::MAX;

/// LU factors with `P A Q = L U`, `L` unit lower triangular.
#[derive(Debug, Clone)]
pub struct SparseLu {
    n: usize,
    // L by columns, row indices in elimination-step numbering, unit diagonal first.
    l_ptr: Vec<usize>,
    l_idx: Vec<usize>,
    l_val: Vec<f64>,
    // U by columns, diagonal stored last.
    u_ptr: Vec<usize>,
    u_idx: Vec<usize>,
    u_val: Vec<f64>,
    // pinv[row] = step at which `row` was pivotal.
    pinv: Vec<usize>,
    col_perm: Vec<usize>,
}

impl SparseLu {
    /// Factors `a` with a fresh minimum-degree ordering.
    pub fn factor(a: &SparseMatrix) -> Result<Self, SparseError> {
        if a.n_rows() != a.n_cols() {
            return Err(SparseError::NotSquare {
                n_rows: a.n_rows(),
                n_cols: a.n_cols(),
            });
        }
        let ordering = super::minimum_degree(a);
        Self::factor_with(a, &ordering, DEFAULT_PIVOT_THRESHOLD)
    }

    /// Factors `a` using a precomputed column ordering.
    pub fn factor_with(
        a: &SparseMatrix,
        ordering: &Ordering,
        pivot_threshold: f64,
    ) -> Result<Self, SparseError> {
        let n = a.n_rows();
        if n != a.n_cols() {
            return Err(SparseError::NotSquare {
                n_rows: n,
                n_cols: a.n_cols(),
            });
        }
        if ordering.len() != n {
            return Err(SparseError::DimensionMismatch {
                expected: n,
                actual: ordering.len(),
            });
        }
        // Columns of A are the rows of Aᵀ.
        let at = a.transpose();
        let (a_ptr, a_idx, a_val) = (at.row_offsets(), at.col_indices(), at.values());

        let guess = 4 * a.nnz() + n;
        let mut l_ptr = Vec::with_capacity(n + 1);
        let mut l_idx: Vec<usize> = Vec::with_capacity(guess);
        let mut l_val: Vec<f64> = Vec::with_capacity(guess);
        let mut u_ptr = Vec::with_capacity(n + 1);
        let mut u_idx: Vec<usize> = Vec::with_capacity(guess);
        let mut u_val: Vec<f64> = Vec::with_capacity(guess);

        let mut pinv = vec![NONE; n];
        let mut x = vec![0.0; n];
        let mut reach = vec![0usize; n];
        let mut stack = vec![0usize; n];
        let mut pstack = vec![0usize; n];
        let mut mark = vec![usize::MAX; n];

        for k in 0..n {
            l_ptr.push(l_idx.len());
            u_ptr.push(u_idx.len());
            let col = ordering.perm()[k];
            let (cs, ce) = (a_ptr[col], a_ptr[col + 1]);

            // Pattern of L \ A(:, col) in topological order: reach[top..n].
            let mut top = n;
            for &start in &a_idx[cs..ce] {
                if mark[start] == k {
                    continue;
                }
                let mut head = 0usize;
                stack[0] = start;
                loop {
                    let j = stack[head];
                    let jcol = pinv[j];
                    if mark[j] != k {
                        mark[j] = k;
                        pstack[head] = if jcol == NONE { 0 } else { l_ptr[jcol] };
                    }
                    let end = if jcol == NONE { 0 } else { l_end(&l_ptr, jcol, l_idx.len()) };
                    let mut descended = false;
                    let mut p = pstack[head];
                    while p < end {
                        let i = l_idx[p];
                        p += 1;
                        if mark[i] != k {
                            pstack[head] = p;
                            head += 1;
                            stack[head] = i;
                            descended = true;
                            break;
                        }
                    }
                    if !descended {
                        top -= 1;
                        reach[top] = j;
                        if head == 0 {
                            break;
                        }
                        head -= 1;
                    }
                }
            }

            let mut col_max = 0.0f64;
            for p in cs..ce {
                x[a_idx[p]] = a_val[p];
                col_max = col_max.max(a_val[p].abs());
            }
            for &j in &reach[top..n] {
                let jcol = pinv[j];
                if jcol == NONE {
                    continue;
                }
                let xj = x[j];
                if xj == 0.0 {
                    continue;
                }
                // Skip the unit diagonal stored first.
                for p in l_ptr[jcol] + 1..l_end(&l_ptr, jcol, l_idx.len()) {
                    x[l_idx[p]] -= l_val[p] * xj;
                }
            }

            let mut best = NONE;
            let mut best_abs = -1.0f64;
            for &i in &reach[top..n] {
                if pinv[i] == NONE {
                    let v = x[i].abs();
                    if v > best_abs {
                        best_abs = v;
                        best = i;
                    }
                } else {
                    u_idx.push(pinv[i]);
                    u_val.push(x[i]);
                }
            }
            if pinv[col] == NONE && mark[col] == k && x[col].abs() >= pivot_threshold * best_abs {
                best = col;
            }
            let pivot = if best == NONE { 0.0 } else { x[best] };
            if best == NONE || !pivot.is_finite() || pivot.abs() <= f64::EPSILON * col_max {
                return Err(SparseError::Singular {
                    step: k,
                    column: col,
                    pivot,
                });
            }
            u_idx.push(k);
            u_val.push(pivot);
            pinv[best] = k;
            l_idx.push(best);
            l_val.push(1.0);
            for &i in &reach[top..n] {
                if pinv[i] == NONE {
                    l_idx.push(i);
                    l_val.push(x[i] / pivot);
                }
                x[i] = 0.0;
            }
        }
        l_ptr.push(l_idx.len());
        u_ptr.push(u_idx.len());
        for idx in &mut l_idx {
            *idx = pinv[*idx];
        }

        Ok(Self {
            n,
            l_ptr,
            l_idx,
            l_val,
            u_ptr,
            u_idx,
            u_val,
            pinv,
            col_perm: ordering.perm().to_vec(),
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of stored entries in `L` and `U` together.
    pub fn factor_nnz(&self) -> usize {
        self.l_val.len() + self.u_val.len()
    }

    /// Solves `A x = b` with the stored factors.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, SparseError> {
        if b.len() != self.n {
            return Err(SparseError::DimensionMismatch {
                expected: self.n,
                actual: b.len(),
            });
        }
        let mut y = vec![0.0; self.n];
        for (i, &bi) in b.iter().enumerate() {
            y[self.pinv[i]] = bi;
        }
        for k in 0..self.n {
            let yk = y[k];
            if yk != 0.0 {
                for p in self.l_ptr[k] + 1..self.l_ptr[k + 1] {
                    y[self.l_idx[p]] -= self.l_val[p] * yk;
                }
            }
        }
        for k in (0..self.n).rev() {
            let last = self.u_ptr[k + 1] - 1;
            y[k] /= self.u_val[last];
            let yk = y[k];
            if yk != 0.0 {
                for p in self.u_ptr[k]..last {
                    y[self.u_idx[p]] -= self.u_val[p] * yk;
                }
            }
        }
        let mut x = vec![0.0; self.n];
        for (k, &c) in self.col_perm.iter().enumerate() {
            x[c] = y[k];
        }
        Ok(x)
    }

    /// Solves with up to three steps of iterative refinement against `a`,
    /// stopping once `‖Ax − b‖₂ ≤ LINEAR_TOL · max(1, ‖b‖₂)`.
    ///
    /// Returns the best iterate and its residual norm; the caller decides
    /// whether a residual above tolerance is acceptable.
    pub fn solve_with_residual(
        &self,
        a: &SparseMatrix,
        b: &[f64],
    ) -> Result<(Vec<f64>, f64), SparseError> {
        let tol = LINEAR_TOL * norm2(b).max(1.0);
        let mut x = self.solve(b)?;
        let mut r = vec![0.0; self.n];
        let mut res = residual_into(a, &x, b, &mut r)?;
        for _ in 0..3 {
            if res <= tol {
                break;
            }
            let dx = self.solve(&r)?;
            let candidate: Vec<f64> = x.iter().zip(&dx).map(|(xi, di)| xi + di).collect();
            let mut r_new = vec![0.0; self.n];
            let res_new = residual_into(a, &candidate, b, &mut r_new)?;
            if res_new >= res {
                break;
            }
            x = candidate;
            r = r_new;
            res = res_new;
        }
        Ok((x, res))
    }

    /// Like [`SparseLu::solve_with_residual`] but fails when the tolerance is missed.
    pub fn solve_refined(&self, a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>, SparseError> {
        let tolerance = LINEAR_TOL * norm2(b).max(1.0);
        let (x, residual) = self.solve_with_residual(a, b)?;
        if residual > tolerance {
            return Err(SparseError::Inaccurate {
                residual,
                tolerance,
            });
        }
        Ok(x)
    }
}

#[inline]
fn l_end(l_ptr: &[usize], col: usize, current_len: usize) -> usize {
    // The column under construction has no end pointer yet.
    if col + 1 < l_ptr.len() {
        l_ptr[col + 1]
    } else {
        current_len
    }
}

fn residual_into(
    a: &SparseMatrix,
    x: &[f64],
    b: &[f64],
    r: &mut [f64],
) -> Result<f64, SparseError> {
    a.matvec_into(x, r)?;
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    Ok(norm2(r))
}
