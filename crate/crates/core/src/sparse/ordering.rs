use std::collections::BTreeSet;

use super::SparseMatrix;

/// A symmetric elimination order: `perm[k]` is the original index eliminated at step `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ordering {
    perm: Vec<usize>,
    inverse: Vec<usize>,
}

impl Ordering {
    pub fn identity(n: usize) -> Self {
        Self {
            perm: (0..n).collect(),
            inverse: (0..n).collect(),
        }
    }

    pub fn from_perm(perm: Vec<usize>) -> Self {
        let mut inverse = vec![usize::MAX; perm.len()];
        for (k, &p) in perm.iter().enumerate() {
            assert!(inverse[p] == usize::MAX, "index {p} repeated in permutation");
            inverse[p] = k;
        }
        Self { perm, inverse }
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn inverse(&self) -> &[usize] {
        &self.inverse
    }
}

/// Column ordering for factorizations that may pivot anywhere in a column:
/// minimum degree on the pattern of `AᵀA`, whose Cholesky fill bounds the
/// fill of `L` and `U` for every row exchange.
pub fn column_minimum_degree(a: &SparseMatrix) -> Ordering {
    let n = a.n_cols();
    let mut t = super::TripletList::new();
    for r in 0..a.n_rows() {
        let cols: Vec<usize> = a.row(r).map(|(c, _)| c).collect();
        for &i in &cols {
            for &j in &cols {
                t.push(i, j, 1.0);
            }
        }
    }
    let ata = SparseMatrix::from_triplets(&t, n, n).expect("indices come from a valid matrix");
    minimum_degree(&ata)
}

/// Minimum-degree ordering of the symmetrized pattern of `A + Aᵀ`.
///
/// Works on the explicit elimination graph; ties go to the smallest index,
/// so the result is deterministic.
pub fn minimum_degree(a: &SparseMatrix) -> Ordering {
    let n = a.n_rows();
    assert_eq!(n, a.n_cols(), "minimum degree needs a square pattern");

    let mut adj: Vec<Vec<u32>> = vec![Vec::new(); n];
    for row in 0..n {
        for (col, _) in a.row(row) {
            if col != row {
                adj[row].push(col as u32);
                adj[col].push(row as u32);
            }
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }

    let mut queue: BTreeSet<(usize, u32)> = adj
        .iter()
        .enumerate()
        .map(|(i, l)| (l.len(), i as u32))
        .collect();
    let mut perm = Vec::with_capacity(n);
    let mut merged: Vec<u32> = Vec::new();

    while let Some((_, pivot)) = queue.pop_first() {
        perm.push(pivot as usize);
        let clique = std::mem::take(&mut adj[pivot as usize]);
        for &u in &clique {
            let old = std::mem::take(&mut adj[u as usize]);
            queue.remove(&(old.len(), u));
            merged.clear();
            merged.reserve(old.len() + clique.len());
            let (mut i, mut j) = (0, 0);
            while i < old.len() || j < clique.len() {
                let next = match (old.get(i), clique.get(j)) {
                    (Some(&x), Some(&y)) if x == y => {
                        i += 1;
                        j += 1;
                        x
                    }
                    (Some(&x), Some(&y)) if x < y => {
                        i += 1;
                        x
                    }
                    (Some(_), Some(&y)) => {
                        j += 1;
                        y
                    }
                    (Some(&x), None) => {
                        i += 1;
                        x
                    }
                    (None, Some(&y)) => {
                        j += 1;
                        y
                    }
                    (None, None) => unreachable!(),
                };
                if next != u && next != pivot {
                    merged.push(next);
                }
            }
            adj[u as usize] = merged.clone();
            queue.insert((merged.len(), u));
        }
    }

    Ordering::from_perm(perm)
}
