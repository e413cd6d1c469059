//! Homogeneous self-dual interior-point method with Nesterov–Todd scaling
//! and a Mehrotra predictor–corrector.
//!
//! The problem is brought to `min cᵀx  s.t.  A x = b,  x ∈ K` by appending a
//! slack column per inequality row, rows are equilibrated, and `b`, `c` are
//! normalised. Each iteration solves the normal equations
//! `A H⁻¹ Aᵀ Δy = r` twice with one factorisation. Blocks whose row matrices
//! share a small set of rank-one factors (diagonal selectors, rank-2 channel
//! embeddings) assemble their Schur contribution from those factors. Rows
//! that touch no PSD block and are coupled only through a few scalar
//! columns (cutting planes, say) are eliminated group by group before the
//! dense part is factored.

use std::collections::BTreeMap;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{
    kkt_residuals, norm, svec_len, ConicProblem, ConicSolution, IterationLog, Residuals, Sense,
    SolveStatus, SolverSettings,
};
use crate::error::Result;

const STEP_FRACTION: f64 = 0.99;
const REFINEMENT_STEPS: usize = 4;
/// Stop after this many iterations without a [`IMPROVEMENT`]-fold drop of
/// the residual estimate, once the best iterate is within [`PATIENCE_FROM`].
/// Far from the solution the residual can rise for a while as μ falls.
const PATIENCE: usize = 8;
const PATIENCE_FROM: f64 = 1e-3;
const IMPROVEMENT: f64 = 0.5;
const EXACT_CHECK_FACTOR: f64 = 1e3;

pub fn solve(problem: &ConicProblem, settings: &SolverSettings) -> Result<ConicSolution> {
    problem.validate()?;
    settings.validate()?;
    let model = Model::new(problem);
    if let Some(row) = model.inconsistent_row {
        let mut y = vec![0.0; problem.row_count()];
        y[row] = problem.rows[row].rhs.signum();
        return Ok(finish(problem, SolveStatus::Infeasible, vec![0.0; problem.var_count()], y, 0, Vec::new()));
    }
    Ok(Solver::new(&model, settings).run(problem))
}

/// Element of `K = R^n_+ × S^{n_1}_+ × ...` with blocks stored as full matrices.
#[derive(Debug, Clone)]
struct ConeVec {
    lp: Vec<f64>,
    psd: Vec<DMatrix<f64>>,
}

impl ConeVec {
    fn zeros(n_lp: usize, blocks: &[usize]) -> Self {
        Self { lp: vec![0.0; n_lp], psd: blocks.iter().map(|&n| DMatrix::zeros(n, n)).collect() }
    }

    fn identity(n_lp: usize, blocks: &[usize]) -> Self {
        Self { lp: vec![1.0; n_lp], psd: blocks.iter().map(|&n| DMatrix::identity(n, n)).collect() }
    }

    fn dot(&self, other: &Self) -> f64 {
        let lp: f64 = self.lp.iter().zip(&other.lp).map(|(a, b)| a * b).sum();
        lp + self.psd.iter().zip(&other.psd).map(|(a, b)| a.dot(b)).sum::<f64>()
    }

    fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    fn axpy(&mut self, alpha: f64, other: &Self) {
        for (a, b) in self.lp.iter_mut().zip(&other.lp) {
            *a += alpha * b;
        }
        for (a, b) in self.psd.iter_mut().zip(&other.psd) {
            a.zip_apply(b, |p, q| *p += alpha * q);
        }
    }

    fn scaled(&self, alpha: f64) -> Self {
        Self { lp: self.lp.iter().map(|v| v * alpha).collect(), psd: self.psd.iter().map(|m| m * alpha).collect() }
    }

    fn lin(a: f64, x: &Self, b: f64, y: &Self) -> Self {
        let mut out = x.scaled(a);
        out.axpy(b, y);
        out
    }
}

/// Rank-one factorisation `A_r = Σ_p coef[r, p] · u_p u_pᵀ` of every row
/// matrix of one block.
#[derive(Debug, Clone)]
struct LowRank {
    basis: DMatrix<f64>,
    coef: DMatrix<f64>,
}

#[derive(Debug, Clone)]
struct Block {
    /// Global (scaled) row index and coefficient matrix.
    rows: Vec<(usize, DMatrix<f64>)>,
    low_rank: Option<LowRank>,
}

/// Scaled standard-form data.
#[derive(Debug, Clone)]
struct Model {
    m: usize,
    /// Problem scalars followed by one slack per inequality row.
    lp_cols: Vec<Vec<(usize, f64)>>,
    n_lp_problem: usize,
    blocks: Vec<Block>,
    block_orders: Vec<usize>,
    b: DVector<f64>,
    c: ConeVec,
    /// Row equilibration factors; scaled row = d · original row.
    d: Vec<f64>,
    c_scale: f64,
    /// Scaled row index per original row (`None` for dropped empty rows).
    row_map: Vec<Option<usize>>,
    inconsistent_row: Option<usize>,
    b_norm: f64,
    c_norm: f64,
    partition: Option<RowPartition>,
}

/// Split of the rows for block elimination of the normal equations.
#[derive(Debug, Clone)]
struct RowPartition {
    /// Rows touching a PSD block, or left in the dense part.
    dense: Vec<usize>,
    /// Groups of scalar-only rows; rows of different groups share no column.
    groups: Vec<Vec<usize>>,
    /// Per row: `(group, local index)`, with group `usize::MAX` for dense rows.
    place: Vec<(usize, usize)>,
}

/// Below this many scalar-only rows block elimination is not worth it.
const MIN_ELIMINATED_ROWS: usize = 32;

impl RowPartition {
    fn new(m: usize, lp_cols: &[Vec<(usize, f64)>], blocks: &[Block]) -> Option<Self> {
        let mut touches_psd = vec![false; m];
        for blk in blocks {
            for (r, _) in &blk.rows {
                touches_psd[*r] = true;
            }
        }
        // union-find over scalar-only rows linked by shared columns
        let mut parent: Vec<usize> = (0..m).collect();
        fn find(parent: &mut [usize], mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        for col in lp_cols {
            let mut first = None;
            for &(r, _) in col {
                if touches_psd[r] {
                    continue;
                }
                match first {
                    None => first = Some(r),
                    Some(f) => {
                        let (a, b) = (find(&mut parent, f), find(&mut parent, r));
                        if a != b {
                            parent[a.max(b)] = a.min(b);
                        }
                    }
                }
            }
        }
        let mut by_root: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        let mut dense = Vec::new();
        for r in 0..m {
            if touches_psd[r] {
                dense.push(r);
            } else {
                let root = find(&mut parent, r);
                by_root.entry(root).or_default().push(r);
            }
        }
        let eliminated: usize = by_root.values().map(Vec::len).sum();
        let largest = by_root.values().map(Vec::len).max().unwrap_or(0);
        if eliminated < MIN_ELIMINATED_ROWS || 2 * largest > m {
            return None;
        }
        let groups: Vec<Vec<usize>> = by_root.into_values().collect();
        let mut place = vec![(usize::MAX, 0); m];
        for (i, &r) in dense.iter().enumerate() {
            place[r] = (usize::MAX, i);
        }
        for (g, rows) in groups.iter().enumerate() {
            for (i, &r) in rows.iter().enumerate() {
                place[r] = (g, i);
            }
        }
        Some(Self { dense, groups, place })
    }
}

impl Model {
    fn new(p: &ConicProblem) -> Self {
        let n_lp = p.cones.nonnegative;
        let orders = p.cones.psd.clone();
        let offsets: Vec<usize> = (0..orders.len()).map(|k| p.cones.block_offset(k)).collect();
        // svec position -> (i, j) per distinct order
        let mut pos_tables: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
        for &n in &orders {
            pos_tables.entry(n).or_insert_with(|| {
                let mut t = Vec::with_capacity(svec_len(n));
                for j in 0..n {
                    for i in j..n {
                        t.push((i, j));
                    }
                }
                t
            });
        }
        let locate = |col: usize| -> (usize, usize, usize) {
            let k = offsets.partition_point(|&o| o <= col) - 1;
            let (i, j) = pos_tables[&orders[k]][col - offsets[k]];
            (k, i, j)
        };

        let mut lp_entries: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        let mut block_rows: Vec<BTreeMap<usize, DMatrix<f64>>> = vec![BTreeMap::new(); orders.len()];
        let mut row_nonempty = vec![false; p.row_count()];
        for &(r, col, v) in &p.a {
            if v == 0.0 {
                continue;
            }
            row_nonempty[r] = true;
            if col < n_lp {
                *lp_entries.entry((col, r)).or_insert(0.0) += v;
            } else {
                let (k, i, j) = locate(col);
                let n = orders[k];
                let mat = block_rows[k].entry(r).or_insert_with(|| DMatrix::zeros(n, n));
                if i == j {
                    mat[(i, i)] += v;
                } else {
                    let h = v * std::f64::consts::FRAC_1_SQRT_2;
                    mat[(i, j)] += h;
                    mat[(j, i)] += h;
                }
            }
        }

        // drop empty rows; an unsatisfiable empty row is reported directly
        let mut row_map = vec![None; p.row_count()];
        let mut inconsistent_row = None;
        let mut m = 0;
        for (r, row) in p.rows.iter().enumerate() {
            if row_nonempty[r] {
                row_map[r] = Some(m);
                m += 1;
                continue;
            }
            let ok = match row.sense {
                Sense::Eq => row.rhs.abs() <= 1e-12,
                Sense::Le => row.rhs >= -1e-12,
                Sense::Ge => row.rhs <= 1e-12,
            };
            if !ok && inconsistent_row.is_none() {
                inconsistent_row = Some(r);
            }
        }

        // row norms of the original data
        let mut norm_sq = vec![0.0; m];
        for (&(_, r), v) in &lp_entries {
            if let Some(i) = row_map[r] {
                norm_sq[i] += v * v;
            }
        }
        for rows in &block_rows {
            for (&r, mat) in rows {
                if let Some(i) = row_map[r] {
                    norm_sq[i] += mat.norm_squared();
                }
            }
        }
        let d: Vec<f64> = norm_sq.iter().map(|&s| if s > 0.0 { 1.0 / s.sqrt() } else { 1.0 }).collect();

        // b stays unnormalized: after equilibration its entries are already
        // of natural size, and dividing by the norm lets a few large rows
        // push the rest below the attainable residual
        let mut b = DVector::zeros(m);
        for (r, row) in p.rows.iter().enumerate() {
            if let Some(i) = row_map[r] {
                b[i] = row.rhs * d[i];
            }
        }
        let b_norm = p.rows.iter().map(|r| r.rhs * r.rhs).sum::<f64>().sqrt();
        let c_norm = norm(&p.objective);
        let c_scale = c_norm.max(1.0);

        let mut lp_cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_lp];
        for (&(col, r), &v) in &lp_entries {
            if let Some(i) = row_map[r] {
                lp_cols[col].push((i, v * d[i]));
            }
        }
        for (r, row) in p.rows.iter().enumerate() {
            if let Some(i) = row_map[r] {
                let sign = match row.sense {
                    Sense::Le => 1.0,
                    Sense::Ge => -1.0,
                    Sense::Eq => continue,
                };
                lp_cols.push(vec![(i, sign * d[i])]);
            }
        }

        let mut c = ConeVec::zeros(lp_cols.len(), &orders);
        for (j, v) in p.objective[..n_lp].iter().enumerate() {
            c.lp[j] = v / c_scale;
        }
        for (k, &n) in orders.iter().enumerate() {
            let mat = super::smat(&p.objective[offsets[k]..offsets[k] + svec_len(n)], n);
            c.psd[k] = mat / c_scale;
        }

        let blocks: Vec<Block> = block_rows
            .into_iter()
            .zip(&orders)
            .map(|(rows, &n)| {
                let rows: Vec<(usize, DMatrix<f64>)> = rows
                    .into_iter()
                    .filter_map(|(r, mat)| row_map[r].map(|i| (i, mat * d[i])))
                    .collect();
                let low_rank = factorize_rows(n, &rows);
                Block { rows, low_rank }
            })
            .collect();

        let partition = RowPartition::new(m, &lp_cols, &blocks);
        Self {
            m,
            partition,
            lp_cols,
            n_lp_problem: n_lp,
            blocks,
            block_orders: orders,
            b,
            c,
            d,
            c_scale,
            row_map,
            inconsistent_row,
            b_norm,
            c_norm,
        }
    }

    fn n_lp(&self) -> usize {
        self.lp_cols.len()
    }

    fn degree(&self) -> f64 {
        (self.n_lp() + self.block_orders.iter().sum::<usize>()) as f64
    }

    fn a_mul(&self, x: &ConeVec) -> DVector<f64> {
        let mut out = DVector::zeros(self.m);
        for (col, &xj) in self.lp_cols.iter().zip(&x.lp) {
            for &(r, v) in col {
                out[r] += v * xj;
            }
        }
        for (blk, xk) in self.blocks.iter().zip(&x.psd) {
            let xs = xk.as_slice();
            for (r, a) in &blk.rows {
                out[*r] += a.as_slice().iter().zip(xs).map(|(p, q)| p * q).sum::<f64>();
            }
        }
        out
    }

    fn at_mul(&self, y: &DVector<f64>) -> ConeVec {
        let mut out = ConeVec::zeros(self.n_lp(), &self.block_orders);
        for (o, col) in out.lp.iter_mut().zip(&self.lp_cols) {
            *o = col.iter().map(|&(r, v)| v * y[r]).sum();
        }
        for (o, blk) in out.psd.iter_mut().zip(&self.blocks) {
            for (r, a) in &blk.rows {
                if y[*r] != 0.0 {
                    let yr = y[*r];
                    for (p, q) in o.as_mut_slice().iter_mut().zip(a.as_slice()) {
                        *p += yr * q;
                    }
                }
            }
        }
        out
    }
}

/// Factor every row matrix into shared rank-one terms when that makes the
/// Schur assembly cheaper than the dense path.
fn factorize_rows(n: usize, rows: &[(usize, DMatrix<f64>)]) -> Option<LowRank> {
    if rows.is_empty() {
        return None;
    }
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut unit_slot: Vec<Option<usize>> = vec![None; n];
    let mut coefs: Vec<Vec<(usize, f64)>> = Vec::with_capacity(rows.len());
    for (_, a) in rows {
        let scale = a.amax();
        let mut terms = Vec::new();
        let diagonal = (0..n).all(|j| (0..n).all(|i| i == j || a[(i, j)] == 0.0));
        if diagonal {
            for i in 0..n {
                if a[(i, i)] != 0.0 {
                    let slot = *unit_slot[i].get_or_insert_with(|| {
                        let mut e = DVector::zeros(n);
                        e[i] = 1.0;
                        basis.push(e);
                        basis.len() - 1
                    });
                    terms.push((slot, a[(i, i)]));
                }
            }
        } else {
            let eig = a.clone().symmetric_eigen();
            for (k, &lam) in eig.eigenvalues.iter().enumerate() {
                if lam.abs() <= 1e-13 * scale {
                    continue;
                }
                let mut v = eig.eigenvectors.column(k).into_owned();
                if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
                    if *first < 0.0 {
                        v = -v;
                    }
                }
                let slot = match basis.iter().position(|u| (u - &v).amax() <= 1e-12) {
                    Some(s) => s,
                    None => {
                        basis.push(v);
                        basis.len() - 1
                    }
                };
                terms.push((slot, lam));
            }
        }
        coefs.push(terms);
    }
    let r = basis.len();
    let mk = rows.len() as f64;
    let (nf, rf) = (n as f64, r as f64);
    let dense_cost = mk * 2.0 * nf.powi(3) + mk * mk * nf * nf * 0.5;
    let low_rank_cost = nf * nf * rf + nf * rf * rf + mk * rf * rf + mk * mk * rf;
    if low_rank_cost >= dense_cost {
        return None;
    }
    let basis = DMatrix::from_columns(&basis);
    let mut coef = DMatrix::zeros(rows.len(), r);
    for (i, terms) in coefs.iter().enumerate() {
        for &(p, v) in terms {
            coef[(i, p)] += v;
        }
    }
    // the factorisation must reproduce every row exactly enough
    for (i, (_, a)) in rows.iter().enumerate() {
        let mut rebuilt = DMatrix::zeros(n, n);
        for p in 0..r {
            if coef[(i, p)] != 0.0 {
                let u = basis.column(p);
                rebuilt.ger(coef[(i, p)], &u, &u, 1.0);
            }
        }
        if (rebuilt - a).norm() > 1e-11 * (1.0 + a.norm()) {
            return None;
        }
    }
    Some(LowRank { basis, coef })
}

/// Nesterov–Todd scaling of one PSD block: `W = R Rᵀ`, `Rᵀ Z R = R⁻¹ X R⁻ᵀ = Λ`.
struct NtScaling {
    r: DMatrix<f64>,
    r_inv: DMatrix<f64>,
    w: DMatrix<f64>,
    lambda: DVector<f64>,
    lx: DMatrix<f64>,
    lz: DMatrix<f64>,
}

fn cholesky_lower(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    Cholesky::new(symmetrize(m)).map(|c| c.l())
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn nt_scaling(x: &DMatrix<f64>, z: &DMatrix<f64>) -> Option<NtScaling> {
    let lx = cholesky_lower(x)?;
    let lz = cholesky_lower(z)?;
    let svd = (lz.transpose() * &lx).svd(false, true);
    let v = svd.v_t?.transpose();
    let sigma = svd.singular_values;
    if sigma.iter().any(|s| !(*s > 0.0)) {
        return None;
    }
    let inv_sqrt = sigma.map(|s| 1.0 / s.sqrt());
    let sqrt = sigma.map(f64::sqrt);
    let r = &lx * &v * DMatrix::from_diagonal(&inv_sqrt);
    let lx_inv = lx.clone().solve_lower_triangular(&DMatrix::identity(x.nrows(), x.nrows()))?;
    let r_inv = DMatrix::from_diagonal(&sqrt) * v.transpose() * lx_inv;
    let w = &r * r.transpose();
    Some(NtScaling { r, r_inv, w, lambda: sigma, lx, lz })
}

/// Largest `α` with `L Lᵀ + α·d ⪰ 0`.
fn max_step_psd(l: &DMatrix<f64>, d: &DMatrix<f64>) -> f64 {
    let Some(t) = l.solve_lower_triangular(d) else { return 0.0 };
    let Some(s) = l.solve_lower_triangular(&t.transpose()) else { return 0.0 };
    let min = symmetrize(&s).symmetric_eigenvalues().min();
    if min < 0.0 {
        -1.0 / min
    } else {
        f64::INFINITY
    }
}

fn max_step_lp(x: &[f64], dx: &[f64]) -> f64 {
    x.iter()
        .zip(dx)
        .filter(|(_, d)| **d < 0.0)
        .map(|(v, d)| -v / d)
        .fold(f64::INFINITY, f64::min)
}

struct Scaling {
    lp_d: Vec<f64>,
    nt: Vec<NtScaling>,
}

impl Scaling {
    fn hinv(&self, v: &ConeVec) -> ConeVec {
        ConeVec {
            lp: v.lp.iter().zip(&self.lp_d).map(|(a, d)| a * d).collect(),
            psd: v.psd.iter().zip(&self.nt).map(|(m, s)| &s.w * m * &s.w).collect(),
        }
    }
}

struct Direction {
    dx: ConeVec,
    dz: ConeVec,
    dy: DVector<f64>,
    dtau: f64,
    dkappa: f64,
}

struct NormalEquations {
    factor: SchurFactor,
}

enum SchurFactor {
    Dense(Cholesky<f64, Dyn>),
    /// Block elimination of the scalar-only row groups.
    Blocked {
        groups: Vec<EliminatedGroup>,
        /// Schur complement of the dense rows; `None` when there are none.
        dense: Option<Cholesky<f64, Dyn>>,
    },
}

struct EliminatedGroup {
    factor: Cholesky<f64, Dyn>,
    /// Coupling to the dense rows, `M_gd`.
    coupling: DMatrix<f64>,
    /// `M_gg⁻¹ M_gd`.
    solved: DMatrix<f64>,
}

impl SchurFactor {
    fn solve(&self, rhs: &DVector<f64>, partition: Option<&RowPartition>) -> DVector<f64> {
        match (self, partition) {
            (Self::Dense(f), _) => f.solve(rhs),
            (Self::Blocked { groups, dense }, Some(part)) => {
                let local: Vec<DVector<f64>> = part
                    .groups
                    .iter()
                    .zip(groups)
                    .map(|(rows, g)| g.factor.solve(&DVector::from_iterator(rows.len(), rows.iter().map(|&r| rhs[r]))))
                    .collect();
                let mut rd = DVector::from_iterator(part.dense.len(), part.dense.iter().map(|&r| rhs[r]));
                for (g, u) in groups.iter().zip(&local) {
                    rd -= g.coupling.tr_mul(u);
                }
                let yd = match dense {
                    Some(f) => f.solve(&rd),
                    None => rd,
                };
                let mut out = DVector::zeros(rhs.len());
                for (i, &r) in part.dense.iter().enumerate() {
                    out[r] = yd[i];
                }
                for ((rows, g), u) in part.groups.iter().zip(groups).zip(local) {
                    let y = u - &g.solved * &yd;
                    for (i, &r) in rows.iter().enumerate() {
                        out[r] = y[i];
                    }
                }
                out
            }
            (Self::Blocked { .. }, None) => unreachable!("blocked factor without a partition"),
        }
    }
}

/// Cholesky factor of `mat + reg·I`, escalating `reg` from `base` until the
/// factorisation succeeds or the shift becomes large relative to the diagonal.
fn regularized_cholesky(mat: &DMatrix<f64>, base: f64) -> Option<Cholesky<f64, Dyn>> {
    let max_diag = mat.diagonal().amax().max(1e-300);
    let mut reg = base;
    loop {
        let mut shifted = mat.clone();
        for i in 0..mat.nrows() {
            shifted[(i, i)] += reg;
        }
        if let Some(factor) = Cholesky::new(shifted) {
            return Some(factor);
        }
        reg = (reg * 100.0).max(1e-14 * max_diag);
        if reg > 1e-4 * max_diag {
            return None;
        }
    }
}

impl NormalEquations {
    /// Solves `A H⁻¹ Aᵀ p = rhs`. Refinement residuals come from the exact
    /// operator, which removes both the regularisation and the rounding of
    /// the assembled matrix.
    fn solve(&self, rhs: &DVector<f64>, model: &Model, scaling: &Scaling) -> DVector<f64> {
        let apply = |p: &DVector<f64>| model.a_mul(&scaling.hinv(&model.at_mul(p)));
        let part = model.partition.as_ref();
        let mut x = self.factor.solve(rhs, part);
        let mut r = rhs - apply(&x);
        let mut best = r.norm();
        for _ in 0..REFINEMENT_STEPS {
            if best <= 1e-15 * rhs.norm() {
                break;
            }
            let candidate = &x + self.factor.solve(&r, part);
            let r_candidate = rhs - apply(&candidate);
            let err = r_candidate.norm();
            if err >= best {
                break;
            }
            x = candidate;
            r = r_candidate;
            best = err;
        }
        x
    }
}

struct Solver<'a> {
    model: &'a Model,
    settings: &'a SolverSettings,
    x: ConeVec,
    z: ConeVec,
    y: DVector<f64>,
    tau: f64,
    kappa: f64,
}

struct Iterate {
    x: ConeVec,
    z: ConeVec,
    y: DVector<f64>,
    tau: f64,
    kappa: f64,
}

enum Outcome {
    Optimal,
    Infeasible(DVector<f64>),
    Unbounded(ConeVec),
    MaxIter,
}

impl<'a> Solver<'a> {
    fn new(model: &'a Model, settings: &'a SolverSettings) -> Self {
        Self {
            model,
            settings,
            x: ConeVec::identity(model.n_lp(), &model.block_orders),
            z: ConeVec::identity(model.n_lp(), &model.block_orders),
            y: DVector::zeros(model.m),
            tau: 1.0,
            kappa: 1.0,
        }
    }

    fn run(mut self, problem: &ConicProblem) -> ConicSolution {
        let model = self.model;
        let tol = self.settings.tolerance;
        let nu = model.degree();
        let mut trace = Vec::new();
        let mut outcome = Outcome::MaxIter;
        let mut iterations = 0;
        let mut stalled = 0;
        // iterate with the smallest residual estimate; late iterations of
        // degenerate problems can lose accuracy in the Schur solves
        let mut best: Option<(f64, Iterate)> = None;
        let mut since_best = 0;

        for iter in 0..=self.settings.max_iterations {
            iterations = iter;
            let ax = model.a_mul(&self.x);
            let aty = model.at_mul(&self.y);
            let r_p = &model.b * self.tau - &ax;
            let mut r_d = model.c.scaled(self.tau);
            r_d.axpy(-1.0, &aty);
            r_d.axpy(-1.0, &self.z);
            let cx = model.c.dot(&self.x);
            let by = model.b.dot(&self.y);
            let r_g = self.kappa + cx - by;
            let mu = (self.x.dot(&self.z) + self.tau * self.kappa) / (nu + 1.0);

            let est = self.estimate_residuals(&r_p, &r_d, cx, by);
            if best.as_ref().is_none_or(|(b, _)| est.max() < IMPROVEMENT * b) {
                best = Some((est.max(), self.snapshot()));
                since_best = 0;
            } else {
                since_best += 1;
            }
            // the estimate runs ahead of the exact residuals (slacks are
            // recomputed from x there), so check exactly once it is close
            if est.max() <= EXACT_CHECK_FACTOR * tol {
                let (x, y) = self.unscaled();
                let x = &x[..problem.var_count()];
                let exact = kkt_residuals(problem, x, &y, &implied_slacks(problem, x));
                if exact.max() <= tol {
                    outcome = Outcome::Optimal;
                    break;
                }
            }
            if let Some(cert) = self.infeasibility(&aty) {
                outcome = Outcome::Infeasible(cert);
                break;
            }
            if let Some(ray) = self.unboundedness(&ax, cx) {
                outcome = Outcome::Unbounded(ray);
                break;
            }
            let near = best.as_ref().is_some_and(|(b, _)| *b <= PATIENCE_FROM);
            if iter == self.settings.max_iterations || stalled >= 5 || (near && since_best >= PATIENCE) {
                break;
            }

            let Some(scaling) = self.scaling() else { break };
            let Some(normal) = self.normal_equations(&scaling) else { break };

            let hc = scaling.hinv(&model.c);
            let q = normal.solve(&(model.a_mul(&hc) + &model.b), model, &scaling);
            let mut dx2 = scaling.hinv(&model.at_mul(&q));
            dx2.axpy(-1.0, &hc);
            let denom = -model.c.dot(&dx2) + model.b.dot(&q);
            let ctx = DirectionContext { r_p: &r_p, r_d: &r_d, r_g, q: &q, dx2: &dx2, denom, scaling: &scaling, normal: &normal };

            // predictor
            let r_xs = self.x.scaled(-1.0);
            let aff = self.direction(&ctx, 1.0, &r_xs, -self.tau * self.kappa);
            let alpha_aff = self.max_step(&aff, &scaling).min(1.0);
            let sigma = (1.0 - alpha_aff).powi(3).clamp(0.0, 1.0);

            // corrector
            let r_xs = self.corrector_rhs(&aff, &scaling, sigma * mu);
            let r_tk = sigma * mu - self.tau * self.kappa - aff.dtau * aff.dkappa;
            let dir = self.direction(&ctx, 1.0 - sigma, &r_xs, r_tk);
            let alpha = (STEP_FRACTION * self.max_step(&dir, &scaling)).min(1.0);

            self.x.axpy(alpha, &dir.dx);
            self.z.axpy(alpha, &dir.dz);
            self.y.axpy(alpha, &dir.dy, 1.0);
            self.tau += alpha * dir.dtau;
            self.kappa += alpha * dir.dkappa;
            stalled = if alpha < 1e-8 { stalled + 1 } else { 0 };

            if self.settings.trace {
                trace.push(IterationLog {
                    iteration: iter + 1,
                    residuals: est,
                    mu,
                    step: alpha,
                    min_eig_x: min_eig(&self.x.psd),
                    min_eig_z: min_eig(&self.z.psd),
                });
            }
            log::trace!("ipm iter {iter}: mu={mu:.3e} res={:.3e} step={alpha:.3}", est.max());
        }

        if matches!(outcome, Outcome::MaxIter) {
            if let Some((_, it)) = best {
                self.restore(it);
            }
        }
        match outcome {
            Outcome::Optimal | Outcome::MaxIter => {
                let status = if matches!(outcome, Outcome::Optimal) { SolveStatus::Optimal } else { SolveStatus::MaxIter };
                let (x, y) = self.unscaled();
                finish(problem, status, x[..problem.var_count()].to_vec(), y, iterations, trace)
            }
            Outcome::Infeasible(cert) => {
                let y = map_rows_back(model, &cert);
                finish(problem, SolveStatus::Infeasible, vec![0.0; problem.var_count()], y, iterations, trace)
            }
            Outcome::Unbounded(ray) => {
                let x = flatten(model, problem, &ray);
                finish(problem, SolveStatus::Unbounded, x, vec![0.0; problem.row_count()], iterations, trace)
            }
        }
    }

    fn snapshot(&self) -> Iterate {
        Iterate { x: self.x.clone(), z: self.z.clone(), y: self.y.clone(), tau: self.tau, kappa: self.kappa }
    }

    fn restore(&mut self, it: Iterate) {
        self.x = it.x;
        self.z = it.z;
        self.y = it.y;
        self.tau = it.tau;
        self.kappa = it.kappa;
    }

    fn estimate_residuals(&self, r_p: &DVector<f64>, r_d: &ConeVec, cx: f64, by: f64) -> Residuals {
        let m = self.model;
        let unscaled_rp = r_p.iter().zip(&m.d).map(|(v, d)| (v / d).powi(2)).sum::<f64>().sqrt();
        let primal = unscaled_rp / self.tau / (1.0 + m.b_norm);
        let dual = m.c_scale / self.tau * r_d.norm() / (1.0 + m.c_norm);
        let f = m.c_scale / self.tau;
        let (pobj, dobj) = (cx * f, by * f);
        let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        Residuals { primal, dual, gap }
    }

    fn infeasibility(&self, aty: &ConeVec) -> Option<DVector<f64>> {
        let by = self.model.b.dot(&self.y);
        if by <= 0.0 || self.tau >= self.kappa {
            return None;
        }
        let mut res = aty.clone();
        res.axpy(1.0, &self.z);
        // measured on the normalised data so a few huge right-hand sides
        // cannot make the test trivially easy
        let ratio = res.norm() / by;
        (ratio <= self.settings.infeasibility_tolerance).then(|| {
            let y: DVector<f64> = DVector::from_iterator(self.y.len(), self.y.iter().zip(&self.model.d).map(|(v, d)| v * d));
            let norm = by;
            y / norm
        })
    }

    fn unboundedness(&self, ax: &DVector<f64>, cx: f64) -> Option<ConeVec> {
        if cx >= 0.0 || self.tau >= self.kappa {
            return None;
        }
        let unscaled = ax.iter().zip(&self.model.d).map(|(v, d)| (v / d).powi(2)).sum::<f64>().sqrt();
        let ratio = unscaled / (-self.model.c_scale * cx);
        (ratio <= self.settings.infeasibility_tolerance).then(|| self.x.scaled(1.0 / (-self.model.c_scale * cx)))
    }

    /// Primal variables (including slacks) and row multipliers in original units.
    fn unscaled(&self) -> (Vec<f64>, Vec<f64>) {
        let m = self.model;
        let fx = 1.0 / self.tau;
        let fy = m.c_scale / self.tau;
        let mut x = Vec::with_capacity(m.n_lp() + m.block_orders.iter().map(|&n| svec_len(n)).sum::<usize>());
        x.extend(self.x.lp[..m.n_lp_problem].iter().map(|v| v * fx));
        for blk in &self.x.psd {
            x.extend(super::svec(&(blk * fx)));
        }
        x.extend(self.x.lp[m.n_lp_problem..].iter().map(|v| v * fx));
        let ys: DVector<f64> = DVector::from_iterator(m.m, self.y.iter().zip(&m.d).map(|(v, d)| v * d * fy));
        (x, map_rows_back(m, &ys))
    }

    fn scaling(&self) -> Option<Scaling> {
        let lp_d = self.x.lp.iter().zip(&self.z.lp).map(|(x, z)| x / z).collect();
        let nt = self.x.psd.iter().zip(&self.z.psd).map(|(x, z)| nt_scaling(x, z)).collect::<Option<Vec<_>>>()?;
        Some(Scaling { lp_d, nt })
    }

    fn normal_equations(&self, scaling: &Scaling) -> Option<NormalEquations> {
        match &self.model.partition {
            None => {
                let mat = self.assemble_dense(scaling, self.model.m, |r| r);
                let factor = regularized_cholesky(&mat, self.settings.regularization)?;
                Some(NormalEquations { factor: SchurFactor::Dense(factor) })
            }
            Some(part) => self.blocked_normal_equations(scaling, part),
        }
    }

    /// `A H⁻¹ Aᵀ` restricted to the rows with `index(r) < size`.
    fn assemble_dense(&self, scaling: &Scaling, size: usize, index: impl Fn(usize) -> usize) -> DMatrix<f64> {
        let model = self.model;
        let mut mat = DMatrix::<f64>::zeros(size, size);
        for (col, &dj) in model.lp_cols.iter().zip(&scaling.lp_d) {
            for &(r1, v1) in col {
                let i1 = index(r1);
                if i1 >= size {
                    continue;
                }
                for &(r2, v2) in col {
                    let i2 = index(r2);
                    if i2 < size {
                        mat[(i1, i2)] += dj * v1 * v2;
                    }
                }
            }
        }
        for (blk, nt) in model.blocks.iter().zip(&scaling.nt) {
            match &blk.low_rank {
                Some(lr) => {
                    let wb = &nt.w * &lr.basis;
                    let g = lr.basis.transpose() * wb;
                    let e = g.component_mul(&g);
                    let t = &lr.coef * e * lr.coef.transpose();
                    for (a, (ra, _)) in blk.rows.iter().enumerate() {
                        for (b, (rb, _)) in blk.rows.iter().enumerate() {
                            mat[(index(*ra), index(*rb))] += t[(a, b)];
                        }
                    }
                }
                None => {
                    for (a, (ra, ma)) in blk.rows.iter().enumerate() {
                        let p = &nt.w * ma * &nt.w;
                        for (rb, mb) in &blk.rows[..=a] {
                            let v = mb.dot(&p);
                            let (ia, ib) = (index(*ra), index(*rb));
                            mat[(ia, ib)] += v;
                            if ia != ib {
                                mat[(ib, ia)] += v;
                            }
                        }
                    }
                }
            }
        }
        mat
    }

    fn blocked_normal_equations(&self, scaling: &Scaling, part: &RowPartition) -> Option<NormalEquations> {
        let model = self.model;
        let nd = part.dense.len();
        let dense_index = |r: usize| match part.place[r] {
            (usize::MAX, i) => i,
            _ => usize::MAX,
        };
        let mut schur = self.assemble_dense(scaling, nd, dense_index);
        let mut own: Vec<DMatrix<f64>> = part.groups.iter().map(|g| DMatrix::zeros(g.len(), g.len())).collect();
        let mut coupling: Vec<DMatrix<f64>> = part.groups.iter().map(|g| DMatrix::zeros(g.len(), nd)).collect();
        for (col, &dj) in model.lp_cols.iter().zip(&scaling.lp_d) {
            for &(r1, v1) in col {
                let (g1, i1) = part.place[r1];
                if g1 == usize::MAX {
                    continue;
                }
                for &(r2, v2) in col {
                    let (g2, i2) = part.place[r2];
                    let v = dj * v1 * v2;
                    if g2 == usize::MAX {
                        coupling[g1][(i1, i2)] += v;
                    } else {
                        debug_assert_eq!(g1, g2);
                        own[g1][(i1, i2)] += v;
                    }
                }
            }
        }
        let mut groups = Vec::with_capacity(own.len());
        for (mat, coupling) in own.iter().zip(coupling) {
            let factor = regularized_cholesky(mat, self.settings.regularization)?;
            let solved = factor.solve(&coupling);
            schur -= coupling.tr_mul(&solved);
            groups.push(EliminatedGroup { factor, coupling, solved });
        }
        let dense = if nd > 0 {
            schur = (&schur + schur.transpose()) * 0.5;
            Some(regularized_cholesky(&schur, self.settings.regularization)?)
        } else {
            None
        };
        Some(NormalEquations { factor: SchurFactor::Blocked { groups, dense } })
    }

    fn direction(&self, ctx: &DirectionContext<'_>, eta: f64, r_xs: &ConeVec, r_tk: f64) -> Direction {
        let model = self.model;
        let t = ctx.scaling.hinv(&ctx.r_d.scaled(eta));
        let rhs = ctx.r_p * eta + model.a_mul(&t) - model.a_mul(r_xs);
        let p = ctx.normal.solve(&rhs, model, ctx.scaling);
        let mut dx1 = ctx.scaling.hinv(&model.at_mul(&p));
        dx1.axpy(-1.0, &t);
        dx1.axpy(1.0, r_xs);
        let dtau = (eta * ctx.r_g + model.c.dot(&dx1) - model.b.dot(&p) + r_tk / self.tau)
            / (ctx.denom + self.kappa / self.tau);
        let dy = &p + ctx.q * dtau;
        let mut dx = dx1;
        dx.axpy(dtau, ctx.dx2);
        let mut dz = ConeVec::lin(eta, ctx.r_d, -1.0, &model.at_mul(&dy));
        dz.axpy(dtau, &model.c);
        let dkappa = (r_tk - self.kappa * dtau) / self.tau;
        Direction { dx, dz, dy, dtau, dkappa }
    }

    fn corrector_rhs(&self, aff: &Direction, scaling: &Scaling, sigma_mu: f64) -> ConeVec {
        let lp = (0..self.x.lp.len())
            .map(|j| (sigma_mu - self.x.lp[j] * self.z.lp[j] - aff.dx.lp[j] * aff.dz.lp[j]) / self.z.lp[j])
            .collect();
        let psd = scaling
            .nt
            .iter()
            .enumerate()
            .map(|(k, nt)| {
                let dxs = &nt.r_inv * &aff.dx.psd[k] * nt.r_inv.transpose();
                let dzs = nt.r.transpose() * &aff.dz.psd[k] * &nt.r;
                let prod = &dxs * &dzs;
                let n = nt.lambda.len();
                let mut u = DMatrix::zeros(n, n);
                for j in 0..n {
                    for i in 0..n {
                        let mut rhs = -0.5 * (prod[(i, j)] + prod[(j, i)]);
                        if i == j {
                            rhs += sigma_mu - nt.lambda[i] * nt.lambda[i];
                        }
                        u[(i, j)] = 2.0 * rhs / (nt.lambda[i] + nt.lambda[j]);
                    }
                }
                &nt.r * u * nt.r.transpose()
            })
            .collect();
        ConeVec { lp, psd }
    }

    fn max_step(&self, dir: &Direction, scaling: &Scaling) -> f64 {
        let mut alpha = max_step_lp(&self.x.lp, &dir.dx.lp).min(max_step_lp(&self.z.lp, &dir.dz.lp));
        for (k, nt) in scaling.nt.iter().enumerate() {
            alpha = alpha.min(max_step_psd(&nt.lx, &dir.dx.psd[k]));
            alpha = alpha.min(max_step_psd(&nt.lz, &dir.dz.psd[k]));
        }
        if dir.dtau < 0.0 {
            alpha = alpha.min(-self.tau / dir.dtau);
        }
        if dir.dkappa < 0.0 {
            alpha = alpha.min(-self.kappa / dir.dkappa);
        }
        alpha
    }
}

struct DirectionContext<'a> {
    r_p: &'a DVector<f64>,
    r_d: &'a ConeVec,
    r_g: f64,
    q: &'a DVector<f64>,
    dx2: &'a ConeVec,
    denom: f64,
    scaling: &'a Scaling,
    normal: &'a NormalEquations,
}

fn min_eig(blocks: &[DMatrix<f64>]) -> f64 {
    blocks.iter().map(|b| symmetrize(b).symmetric_eigenvalues().min()).fold(f64::INFINITY, f64::min)
}

fn map_rows_back(model: &Model, scaled: &DVector<f64>) -> Vec<f64> {
    model.row_map.iter().map(|r| r.map_or(0.0, |i| scaled[i])).collect()
}

/// Problem-layout vector of a scaled cone element (slacks dropped).
fn flatten(model: &Model, problem: &ConicProblem, v: &ConeVec) -> Vec<f64> {
    let mut x = Vec::with_capacity(problem.var_count());
    x.extend_from_slice(&v.lp[..model.n_lp_problem]);
    for blk in &v.psd {
        x.extend(super::svec(blk));
    }
    x
}

/// Row slacks `|b − a·x|` signed so that feasibility means `s ≥ 0`.
fn implied_slacks(problem: &ConicProblem, x: &[f64]) -> Vec<f64> {
    let activity = problem.row_activity(x);
    problem
        .rows
        .iter()
        .zip(&activity)
        .map(|(row, a)| match row.sense {
            Sense::Le => row.rhs - a,
            Sense::Ge => a - row.rhs,
            Sense::Eq => 0.0,
        })
        .collect()
}

fn finish(
    problem: &ConicProblem,
    status: SolveStatus,
    x: Vec<f64>,
    y: Vec<f64>,
    iterations: usize,
    trace: Vec<IterationLog>,
) -> ConicSolution {
    let s = implied_slacks(problem, &x);
    let residuals = kkt_residuals(problem, &x, &y, &s);
    let b: Vec<f64> = problem.rows.iter().map(|r| r.rhs).collect();
    ConicSolution {
        status,
        primal_objective: problem.objective_value(&x),
        dual_objective: super::dot(&b, &y) + problem.objective_offset,
        x,
        y,
        s,
        residuals,
        iterations,
        trace,
    }
}
