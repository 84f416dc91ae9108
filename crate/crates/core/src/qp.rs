//! Semismooth Newton with Moreau-Yosida continuation for the box-constrained
//! linearized Ivanov subproblem
//!
//! ```text
//! min ½‖v + y_k − g‖²  s.t.  K(y_k) v = M(u − u_k),  lower ≤ u ≤ ρ.
//! ```
//!
//! Unknowns live on interior degrees of freedom. For fixed active sets the
//! block system is solved in the reduced form `(v, w)` with `w_i = u_i` on the
//! inactive set and `w_i = p_i` on the active sets; `u` is then known on the
//! active sets and `p = γu` on the inactive set.

use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fem::{assemble_operator, dot, FemError, FemSpace, NodalField, Reaction};
use crate::sparse::{
    norm2, Block, BlockLu, BlockSymbolic, SparseError, SparseLu, SparseMatrix, TripletList, DEFAULT_PIVOT_THRESHOLD,
    LINEAR_TOL,
};

/// Absolute KKT residual required for convergence.
pub const KKT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundsMode {
    /// `−ρ ≤ u ≤ ρ`.
    Symmetric,
    /// `0 ≤ u ≤ ρ`.
    #[default]
    Nonneg,
}

impl BoundsMode {
    pub fn lower(self, rho: f64) -> f64 {
        match self {
            BoundsMode::Symmetric => -rho,
            BoundsMode::Nonneg => 0.0,
        }
    }

    pub fn project(self, rho: f64, x: f64) -> f64 {
        x.clamp(self.lower(rho), rho)
    }
}

impl std::str::FromStr for BoundsMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "symmetric" => Ok(BoundsMode::Symmetric),
            "nonneg" => Ok(BoundsMode::Nonneg),
            other => Err(format!("unknown bounds mode {other:?} (expected symmetric or nonneg)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QpSettings {
    pub bounds: BoundsMode,
    pub gamma_0: f64,
    pub gamma_final: f64,
    pub i_max: usize,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            bounds: BoundsMode::Nonneg,
            gamma_0: 1.0,
            gamma_final: 1e-9,
            i_max: 30,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Sparse(#[from] SparseError),
    #[error("node {0} is in both active sets")]
    OverlappingSets(usize),
    #[error("invalid subproblem: {0}")]
    Invalid(&'static str),
}

/// Everything about one Gauss-Newton step that does not depend on `ρ`:
/// the linearized operator `K(y_k) = K₀ + 3κ y_k²` and the data.
#[derive(Debug)]
pub struct Linearization<'a> {
    space: &'a FemSpace,
    kappa: f64,
    operator: SparseMatrix,
    u_k: Vec<f64>,
    y_k: Vec<f64>,
    g: Vec<f64>,
    /// `M u_k` on interior rows.
    mass_u_k: Vec<f64>,
    /// `M(g − y_k)` on interior rows.
    mass_misfit: Vec<f64>,
    operator_lu: OnceLock<SparseLu>,
}

impl<'a> Linearization<'a> {
    /// `u_k`, `y_k` and `g` are full-vertex fields; `u_k` must vanish on the boundary.
    pub fn new(space: &'a FemSpace, kappa: f64, u_k: &[f64], y_k: &[f64], g: &[f64]) -> Result<Self, QpError> {
        let mesh = space.mesh();
        for f in [u_k, y_k, g] {
            if f.len() != mesh.n_vertices() {
                return Err(FemError::FieldMismatch {
                    expected: mesh.n_vertices(),
                    actual: f.len(),
                }
                .into());
            }
        }
        if kappa < 0.0 {
            return Err(QpError::Invalid("kappa must be nonnegative"));
        }
        let operator = assemble_operator(
            mesh,
            &Reaction::ScaledSquare {
                field: y_k,
                scale: 3.0 * kappa,
            },
        )?;
        let u_int: Vec<f64> = mesh.interior_nodes().iter().map(|&v| u_k[v]).collect();
        let mass_u_k = space.mass_interior().matvec(&u_int)?;
        let misfit: Vec<f64> = g.iter().zip(y_k).map(|(a, b)| a - b).collect();
        let mass_misfit = space.mass_apply(&misfit)?;
        Ok(Self {
            space,
            kappa,
            operator,
            u_k: u_int,
            y_k: y_k.to_vec(),
            g: g.to_vec(),
            mass_u_k,
            mass_misfit,
            operator_lu: OnceLock::new(),
        })
    }

    pub fn space(&self) -> &'a FemSpace {
        self.space
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// `K(y_k)` on interior dofs.
    pub fn operator(&self) -> &SparseMatrix {
        &self.operator
    }

    /// Interior values of `u_k`.
    pub fn u_k(&self) -> &[f64] {
        &self.u_k
    }

    pub fn y_k(&self) -> &[f64] {
        &self.y_k
    }

    pub fn g(&self) -> &[f64] {
        &self.g
    }

    /// Solves `K(y_k) x = r` on interior dofs.
    pub fn solve_operator(&self, r: &[f64]) -> Result<Vec<f64>, QpError> {
        if self.operator_lu.get().is_none() {
            let lu = SparseLu::factor_with(&self.operator, self.space.interior_ordering(), DEFAULT_PIVOT_THRESHOLD)?;
            let _ = self.operator_lu.set(lu);
        }
        let lu = self.operator_lu.get().expect("factor stored above");
        Ok(lu.solve_refined(&self.operator, r)?)
    }

    /// `v = K(y_k)⁻¹ M h` for an interior direction `h`: the derivative of
    /// the state map at `u_k` applied to `h`.
    pub fn linearized_state(&self, h: &[f64]) -> Result<Vec<f64>, QpError> {
        let mh = self.space.mass_interior().matvec(h)?;
        self.solve_operator(&mh)
    }

    /// `‖y_k + v − g‖_{L²}` for interior `v`.
    pub fn discrepancy(&self, v: &[f64]) -> Result<f64, QpError> {
        let vf = NodalField::from_interior(self.space.mesh(), v)?;
        let r: Vec<f64> = vf
            .values()
            .iter()
            .zip(&self.y_k)
            .zip(&self.g)
            .map(|((a, b), c)| a + b - c)
            .collect();
        Ok(self.space.norm(&r, crate::fem::NormKind::L2)?)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QpProblem<'l, 'a> {
    pub lin: &'l Linearization<'a>,
    pub rho: f64,
    pub settings: QpSettings,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeStatus {
    Inactive,
    Upper,
    Lower,
}

/// Diagnostics of one `γ` level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaLevel {
    pub gamma: f64,
    pub inner_iterations: usize,
    pub stable: bool,
    pub n_upper: usize,
    pub n_lower: usize,
    pub kkt_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    /// Control, linearized state and adjoint on interior dofs.
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub p: Vec<f64>,
    pub active_plus: Vec<usize>,
    pub active_minus: Vec<usize>,
    pub gamma_reached: f64,
    pub kkt_residual: f64,
    pub converged: bool,
    /// Linear solves performed.
    pub ssn_iterations: usize,
    pub trace: Vec<GammaLevel>,
    /// Objective at the first and at the last `γ` level.
    pub objective_first: f64,
    pub objective_final: f64,
    pub rho: f64,
}

impl QpSolution {
    pub fn u_field(&self, space: &FemSpace) -> NodalField {
        NodalField::from_interior(space.mesh(), &self.u).expect("interior length")
    }

    pub fn v_field(&self, space: &FemSpace) -> NodalField {
        NodalField::from_interior(space.mesh(), &self.v).expect("interior length")
    }

    /// Objective at the final level did not exceed the first-level value.
    pub fn objective_monotone(&self) -> bool {
        self.objective_final <= self.objective_first + 1e-9
    }
}

/// Classifies nodes from the adjoint: `A₊ = {p > ργ}`, `A₋ = {p < lower·γ}`.
pub fn classify(p: &[f64], rho: f64, gamma: f64, bounds: BoundsMode) -> Vec<NodeStatus> {
    let lower = bounds.lower(rho);
    p.iter()
        .map(|&pi| {
            if pi > rho * gamma {
                NodeStatus::Upper
            } else if pi < lower * gamma {
                NodeStatus::Lower
            } else {
                NodeStatus::Inactive
            }
        })
        .collect()
}

fn status_from_sets(n: usize, active_plus: &[usize], active_minus: &[usize]) -> Result<Vec<NodeStatus>, QpError> {
    let mut status = vec![NodeStatus::Inactive; n];
    for &i in active_plus {
        if i >= n {
            return Err(QpError::Invalid("active index out of range"));
        }
        status[i] = NodeStatus::Upper;
    }
    for &i in active_minus {
        if i >= n {
            return Err(QpError::Invalid("active index out of range"));
        }
        if status[i] == NodeStatus::Upper {
            return Err(QpError::OverlappingSets(i));
        }
        status[i] = NodeStatus::Lower;
    }
    Ok(status)
}

/// The full block system `H x = b` for `x = (v, p, u)`:
///
/// ```text
/// [ K   0         −M ] [v]   [ −M u_k         ]
/// [ M   K          0 ] [p] = [ M(g − y_k)     ]
/// [ 0  −(1/γ)As    I ] [u]   [ ρ1₊ + lower·1₋ ]
/// ```
///
/// with `As = I − diag(1₊ + 1₋)`.
pub fn assemble_kkt_system(
    problem: &QpProblem,
    gamma: f64,
    active_plus: &[usize],
    active_minus: &[usize],
) -> Result<(SparseMatrix, Vec<f64>), QpError> {
    let lin = problem.lin;
    let n = lin.space.n_interior();
    let status = status_from_sets(n, active_plus, active_minus)?;
    let k = &lin.operator;
    let m = lin.space.mass_interior();
    let mut t = TripletList::with_capacity(4 * k.nnz() + 2 * n);
    for r in 0..n {
        for (c, val) in k.row(r) {
            t.push(r, c, val);
            t.push(n + r, n + c, val);
        }
        for (c, val) in m.row(r) {
            t.push(r, 2 * n + c, -val);
            t.push(n + r, c, val);
        }
        if status[r] == NodeStatus::Inactive {
            t.push(2 * n + r, n + r, -1.0 / gamma);
        }
        t.push(2 * n + r, 2 * n + r, 1.0);
    }
    let h = SparseMatrix::from_triplets(&t, 3 * n, 3 * n)?;
    let lower = problem.settings.bounds.lower(problem.rho);
    let mut b = Vec::with_capacity(3 * n);
    b.extend(lin.mass_u_k.iter().map(|x| -x));
    b.extend_from_slice(&lin.mass_misfit);
    b.extend(status.iter().map(|s| match s {
        NodeStatus::Upper => problem.rho,
        NodeStatus::Lower => lower,
        NodeStatus::Inactive => 0.0,
    }));
    Ok((h, b))
}

/// Euclidean norm of the stacked optimality residuals
/// `(Kv − M(u − u_k), Mv + Kp − M(g − y_k), u − proj(p/γ))`.
pub fn kkt_residual(problem: &QpProblem, u: &[f64], v: &[f64], p: &[f64], gamma: f64) -> Result<f64, QpError> {
    let lin = problem.lin;
    let n = lin.space.n_interior();
    for x in [u, v, p] {
        if x.len() != n {
            return Err(FemError::FieldMismatch {
                expected: n,
                actual: x.len(),
            }
            .into());
        }
    }
    let m = lin.space.mass_interior();
    let kv = lin.operator.matvec(v)?;
    let mu = m.matvec(u)?;
    let mv = m.matvec(v)?;
    let kp = lin.operator.matvec(p)?;
    let mut sq = 0.0;
    for i in 0..n {
        let r1 = kv[i] - (mu[i] - lin.mass_u_k[i]);
        let r2 = mv[i] + kp[i] - lin.mass_misfit[i];
        let r3 = u[i] - problem.settings.bounds.project(problem.rho, p[i] / gamma);
        sq += r1 * r1 + r2 * r2 + r3 * r3;
    }
    Ok(sq.sqrt())
}

/// Objective `½‖v + y_k − g‖² + (γ/2)‖u‖²` in `L²`.
pub fn objective(lin: &Linearization, u: &[f64], v: &[f64], gamma: f64) -> Result<f64, QpError> {
    let d = lin.discrepancy(v)?;
    let mu = lin.space.mass_interior().matvec(u)?;
    Ok(0.5 * d * d + 0.5 * gamma * dot(u, &mu))
}

/// Reduced `(v, w)` system, stored as one 2×2 block per pair of nodes of
/// the operator pattern and factored with block pivots; values are rewritten
/// for each choice of active sets and `γ`.
struct ReducedSystem {
    blocks: Vec<Block>,
    symbolic: Arc<BlockSymbolic>,
}

impl ReducedSystem {
    fn new(lin: &Linearization) -> Result<Self, QpError> {
        let k = &lin.operator;
        if !k.same_pattern(lin.space.mass_interior()) {
            return Err(QpError::Invalid("operator and mass patterns differ"));
        }
        Ok(Self {
            blocks: vec![[0.0; 4]; k.nnz()],
            symbolic: lin.space.block_symbolic(),
        })
    }

    fn fill(&mut self, lin: &Linearization, status: &[NodeStatus], gamma: f64) {
        let k = lin.operator.values();
        let m = lin.space.mass_interior().values();
        let cols = lin.operator.col_indices();
        for (q, b) in self.blocks.iter_mut().enumerate() {
            *b = if status[cols[q]] == NodeStatus::Inactive {
                [k[q], -m[q], m[q], gamma * k[q]]
            } else {
                [k[q], 0.0, m[q], k[q]]
            };
        }
    }

    /// Scalar form of the current blocks with interleaved unknowns.
    fn to_scalar(&self, pattern: &SparseMatrix) -> Result<SparseMatrix, QpError> {
        let n = pattern.n_rows();
        let mut t = TripletList::with_capacity(4 * pattern.nnz());
        for r in 0..n {
            for q in pattern.row_offsets()[r]..pattern.row_offsets()[r + 1] {
                let c = pattern.col_indices()[q];
                let b = self.blocks[q];
                t.push(2 * r, 2 * c, b[0]);
                t.push(2 * r, 2 * c + 1, b[1]);
                t.push(2 * r + 1, 2 * c, b[2]);
                t.push(2 * r + 1, 2 * c + 1, b[3]);
            }
        }
        Ok(SparseMatrix::from_triplets(&t, 2 * n, 2 * n)?)
    }

    /// Solves for `(v, u, p)` with the given statuses.
    fn solve(
        &mut self,
        lin: &Linearization,
        status: &[NodeStatus],
        gamma: f64,
        rho: f64,
        lower: f64,
    ) -> Result<Iterate, QpError> {
        let n = status.len();
        self.fill(lin, status, gamma);
        let bound: Vec<f64> = status
            .iter()
            .map(|s| match s {
                NodeStatus::Upper => rho,
                NodeStatus::Lower => lower,
                NodeStatus::Inactive => 0.0,
            })
            .collect();
        let m_bound = lin.space.mass_interior().matvec(&bound)?;
        let mut rhs = vec![0.0; 2 * n];
        for i in 0..n {
            rhs[2 * i] = m_bound[i] - lin.mass_u_k[i];
            rhs[2 * i + 1] = lin.mass_misfit[i];
        }
        let pattern = &lin.operator;
        let tol = LINEAR_TOL * norm2(&rhs).max(1.0);
        let block = BlockLu::factor(self.symbolic.clone(), &self.blocks)
            .and_then(|lu| lu.solve_with_residual(pattern, &self.blocks, &rhs));
        let x = match block {
            Ok((x, res)) if res <= tol => x,
            other => {
                // Pivoting across node pairs with a column ordering that
                // bounds the fill for any row exchanges.
                log::debug!("block factorization rejected ({:?}), using scalar LU", other.map(|(_, r)| r));
                let a = self.to_scalar(pattern)?;
                let ordering = lin.space.pivoting_ordering(&a);
                let lu = SparseLu::factor_with(&a, &ordering, DEFAULT_PIVOT_THRESHOLD)?;
                let (x, res) = lu.solve_with_residual(&a, &rhs)?;
                if !res.is_finite() {
                    return Err(SparseError::Inaccurate { residual: res, tolerance: tol }.into());
                }
                x
            }
        };
        let v: Vec<f64> = (0..n).map(|i| x[2 * i]).collect();
        let mut u = vec![0.0; n];
        let mut p = vec![0.0; n];
        for i in 0..n {
            let w = x[2 * i + 1];
            if status[i] == NodeStatus::Inactive {
                u[i] = w;
                p[i] = gamma * w;
            } else {
                u[i] = bound[i];
                p[i] = w;
            }
        }
        Ok(Iterate {
            v,
            u,
            p,
            status: status.to_vec(),
        })
    }
}

#[derive(Debug, Clone)]
struct Iterate {
    v: Vec<f64>,
    u: Vec<f64>,
    p: Vec<f64>,
    /// Statuses the iterate was computed with.
    status: Vec<NodeStatus>,
}

/// Where the continuation starts.
#[derive(Debug, Clone, Copy)]
pub enum WarmStart<'s> {
    /// `γ = γ₀`, empty active sets, zero adjoint.
    Cold,
    /// Seed `(v, p, u)` and start at the `γ` the seed was computed with.
    From(&'s QpSolution),
}

/// Solves the subproblem from a cold start.
pub fn solve_linearized_ivanov(problem: &QpProblem) -> Result<QpSolution, QpError> {
    solve_linearized_ivanov_from(problem, WarmStart::Cold)
}

/// Cap on `γ` levels per solve, counting retried ones.
const MAX_LEVELS: usize = 400;
/// Softest reduction factor tried after failed levels, `2^(-1/64)`.
const MAX_FACTOR: f64 = 0.989_228_013_193_975_5;

fn status_key(status: &[NodeStatus]) -> u64 {
    use std::hash::{Hash, Hasher};
    let mut h = std::collections::hash_map::DefaultHasher::new();
    status.hash(&mut h);
    h.finish()
}

pub fn solve_linearized_ivanov_from(problem: &QpProblem, start: WarmStart) -> Result<QpSolution, QpError> {
    let s = &problem.settings;
    if !(problem.rho >= 0.0) || !problem.rho.is_finite() {
        return Err(QpError::Invalid("rho must be finite and nonnegative"));
    }
    if !(s.gamma_final > 0.0 && s.gamma_final <= s.gamma_0) || s.i_max == 0 {
        return Err(QpError::Invalid("need 0 < gamma_final <= gamma_0 and i_max >= 1"));
    }
    let lin = problem.lin;
    let n = lin.space.n_interior();
    let rho = problem.rho;
    let lower = s.bounds.lower(rho);
    let mut system = ReducedSystem::new(lin)?;

    let (mut gamma, mut current, mut p) = match start {
        WarmStart::Cold => (s.gamma_0, None, vec![0.0; n]),
        WarmStart::From(seed) => (seed.gamma_reached.max(s.gamma_final), None, seed.p.clone()),
    };
    let mut solves = 0;
    let mut trace = Vec::new();
    let mut objective_first = None;
    // Reduction factor of γ; softened after a level fails and restored
    // after each stable one.
    let mut factor = 0.5f64;
    let mut last_stable: Option<(f64, Iterate)> = None;

    let (kkt, objective_final, converged) = loop {
        let mut stable = false;
        let mut inner = 0;
        let mut seen: Vec<u64> = Vec::new();
        for i in 0..=s.i_max {
            let status = classify(&p, rho, gamma, s.bounds);
            if let Some(it) = &current {
                let it: &Iterate = it;
                let unchanged = it.status == status;
                // With no inactive node the system does not involve γ, so the
                // current iterate already solves this level's system.
                if unchanged && (i > 0 || !status.contains(&NodeStatus::Inactive)) {
                    stable = true;
                    break;
                }
            }
            let key = status_key(&status);
            if seen.contains(&key) {
                log::trace!("active sets cycle at gamma = {gamma:e}");
                break;
            }
            seen.push(key);
            let it = system.solve(lin, &status, gamma, rho, lower)?;
            solves += 1;
            inner += 1;
            p.clone_from(&it.p);
            current = Some(it);
        }
        let it = current.as_ref().expect("at least one solve per problem");
        let kkt = kkt_residual(problem, &it.u, &it.v, &it.p, gamma)?;
        let obj = objective(lin, &it.u, &it.v, gamma)?;
        objective_first.get_or_insert(obj);
        trace.push(GammaLevel {
            gamma,
            inner_iterations: inner,
            stable,
            n_upper: it.status.iter().filter(|&&x| x == NodeStatus::Upper).count(),
            n_lower: it.status.iter().filter(|&&x| x == NodeStatus::Lower).count(),
            kkt_residual: kkt,
        });
        if !stable && trace.len() < MAX_LEVELS && factor < MAX_FACTOR {
            if let Some((g_stable, it_stable)) = &last_stable {
                factor = factor.sqrt();
                gamma = g_stable * factor;
                p = it_stable.p.iter().map(|x| x * factor).collect();
                current = Some(it_stable.clone());
                continue;
            }
        }
        if gamma <= s.gamma_final || trace.len() >= MAX_LEVELS {
            break (kkt, obj, stable && kkt < KKT_TOL && gamma <= s.gamma_final);
        }
        if stable {
            last_stable = Some((gamma, it.clone()));
            factor = (factor * factor).max(0.5);
        }
        // Keep u = p/γ of the previous level as the initial guess, which
        // leaves the classification unchanged at the start of the next level.
        gamma *= factor;
        p.iter_mut().for_each(|x| *x *= factor);
    };

    let it = current.expect("at least one solve per problem");
    let objective_first = objective_first.unwrap_or(objective_final);
    if objective_final > objective_first + 1e-9 {
        log::warn!("objective increased along the continuation: {objective_first:e} -> {objective_final:e}");
    }
    let collect = |want: NodeStatus| -> Vec<usize> {
        it.status
            .iter()
            .enumerate()
            .filter(|(_, &st)| st == want)
            .map(|(i, _)| i)
            .collect()
    };
    Ok(QpSolution {
        active_plus: collect(NodeStatus::Upper),
        active_minus: collect(NodeStatus::Lower),
        u: it.u,
        v: it.v,
        p: it.p,
        gamma_reached: gamma,
        kkt_residual: kkt,
        converged,
        ssn_iterations: solves,
        trace,
        objective_first,
        objective_final,
        rho,
    })
}
