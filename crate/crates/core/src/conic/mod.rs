//! Standard-form conic programs over a nonnegative orthant and real
//! symmetric PSD blocks, and a primal-dual interior-point solver for them.
//!
//! # Layout
//!
//! The variable vector is `[nonneg (n_lp entries) | svec(X_1) | svec(X_2) | ...]`.
//! `svec` stacks the lower triangle column by column with off-diagonal
//! entries multiplied by `√2`, so `svec(A)·svec(X) = ⟨A, X⟩`. Each row is
//! `a_i·x (≤ | = | ≥) b_i`; the objective is `c·x + objective_offset`.
//!
//! The same layout is used by the JSON dump (see [`ConicProblem::to_json`]),
//! so external tools can rebuild the matrices from the triplets.

mod ipm;
mod residuals;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{embed_hermitian, recover_hermitian, CMatrix};

pub use ipm::solve;
pub use residuals::kkt_residuals;

/// Format tag written into problem dumps.
pub const FORMAT_TAG: &str = "cranopt-conic/1";
/// Description of the svec convention written into problem dumps.
pub const SVEC_CONVENTION: &str = "lower-triangle, column-major, off-diagonal scaled by sqrt(2)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sense {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = ">=")]
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConeLayout {
    pub nonnegative: usize,
    pub psd: Vec<usize>,
}

impl ConeLayout {
    pub fn var_count(&self) -> usize {
        self.nonnegative + self.psd.iter().map(|&n| svec_len(n)).sum::<usize>()
    }

    /// Offset of PSD block `k` in the variable vector.
    pub fn block_offset(&self, k: usize) -> usize {
        self.nonnegative + self.psd[..k].iter().map(|&n| svec_len(n)).sum::<usize>()
    }

    /// Barrier degree: orthant size plus the PSD block orders.
    pub fn degree(&self) -> usize {
        self.nonnegative + self.psd.iter().sum::<usize>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConicProblem {
    pub format: String,
    pub svec: String,
    pub cones: ConeLayout,
    pub objective: Vec<f64>,
    #[serde(default)]
    pub objective_offset: f64,
    pub rows: Vec<Row>,
    /// `(row, column, value)`; duplicates are summed.
    pub a: Vec<(usize, usize, f64)>,
}

impl ConicProblem {
    pub fn var_count(&self) -> usize {
        self.cones.var_count()
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.var_count();
        if self.objective.len() != n {
            return Err(Error::Dimension(format!(
                "objective has {} entries, cone layout needs {n}",
                self.objective.len()
            )));
        }
        if self.cones.psd.contains(&0) {
            return Err(Error::Dimension("PSD blocks must have order >= 1".into()));
        }
        if self.objective.iter().any(|v| !v.is_finite()) || !self.objective_offset.is_finite() {
            return Err(Error::Dimension("objective has non-finite entries".into()));
        }
        if self.rows.iter().any(|r| !r.rhs.is_finite()) {
            return Err(Error::Dimension("right-hand side has non-finite entries".into()));
        }
        for &(r, c, v) in &self.a {
            if r >= self.rows.len() || c >= n {
                return Err(Error::Dimension(format!("triplet ({r}, {c}) outside {}x{n}", self.rows.len())));
            }
            if !v.is_finite() {
                return Err(Error::Dimension(format!("triplet ({r}, {c}) is not finite")));
            }
        }
        Ok(())
    }

    /// `A x` row by row (without slacks).
    pub fn row_activity(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows.len()];
        for &(r, c, v) in &self.a {
            out[r] += v * x[c];
        }
        out
    }

    /// `A^T y`.
    pub fn transpose_mul(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.var_count()];
        for &(r, c, v) in &self.a {
            out[c] += v * y[r];
        }
        out
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        dot(&self.objective, x) + self.objective_offset
    }

    /// PSD block `k` of `x` as a full symmetric matrix.
    pub fn block_matrix(&self, x: &[f64], k: usize) -> DMatrix<f64> {
        let off = self.cones.block_offset(k);
        smat(&x[off..off + svec_len(self.cones.psd[k])], self.cones.psd[k])
    }

    /// Hermitian matrix held (embedded) in PSD block `k`.
    pub fn hermitian_block_matrix(&self, x: &[f64], k: usize) -> CMatrix {
        recover_hermitian(&self.block_matrix(x, k))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let problem: Self = serde_json::from_str(text)?;
        if problem.format != FORMAT_TAG {
            return Err(Error::Dimension(format!("unknown problem format {:?}", problem.format)));
        }
        problem.validate()?;
        Ok(problem)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIter,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.primal.max(self.dual).max(self.gap)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub residuals: Residuals,
    pub mu: f64,
    pub step: f64,
    /// Smallest eigenvalue over all PSD blocks of the primal iterate.
    pub min_eig_x: f64,
    /// Smallest eigenvalue over all PSD blocks of the dual slack.
    pub min_eig_z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConicSolution {
    pub status: SolveStatus,
    /// Primal variables in the problem layout.
    pub x: Vec<f64>,
    /// Row multipliers: `≤` rows carry `y ≤ 0`, `≥` rows `y ≥ 0`.
    pub y: Vec<f64>,
    /// Row slacks `|b - a·x|` for inequality rows, zero for equalities.
    pub s: Vec<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub residuals: Residuals,
    pub iterations: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<IterationLog>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Static diagonal regularisation of the Newton system.
    pub regularization: f64,
    /// Certificate tolerance for infeasibility / unboundedness.
    pub infeasibility_tolerance: f64,
    /// Record an [`IterationLog`] per iteration.
    #[serde(default)]
    pub trace: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 100,
            regularization: 1e-12,
            infeasibility_tolerance: 1e-8,
            trace: false,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) || !(self.infeasibility_tolerance > 0.0) {
            return Err(Error::InvalidConfig("solver tolerances must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be positive".into()));
        }
        if !(self.regularization >= 0.0) {
            return Err(Error::InvalidConfig("regularization must be non-negative".into()));
        }
        Ok(())
    }
}

/// Handle to a nonnegative scalar variable of a [`ConicBuilder`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LpVar(pub usize);

/// Handle to a PSD block of a [`ConicBuilder`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PsdBlock(pub usize);

/// A complex Hermitian `n × n` variable stored as a real `2n × 2n` block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HermitianBlock {
    pub block: PsdBlock,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RowId(pub usize);

#[derive(Debug, Clone, Copy)]
enum VarRef {
    Lp(usize),
    Psd { block: usize, index: usize },
}

/// Incremental construction of a [`ConicProblem`]. Variables and blocks may
/// be declared in any order; the final layout puts all scalars first.
#[derive(Debug, Default, Clone)]
pub struct ConicBuilder {
    lp_count: usize,
    blocks: Vec<usize>,
    rows: Vec<Row>,
    entries: Vec<(usize, VarRef, f64)>,
    objective: Vec<(VarRef, f64)>,
    offset: f64,
}

impl ConicBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn nonneg(&mut self) -> LpVar {
        self.lp_count += 1;
        LpVar(self.lp_count - 1)
    }

    pub fn psd_block(&mut self, order: usize) -> PsdBlock {
        self.blocks.push(order);
        PsdBlock(self.blocks.len() - 1)
    }

    pub fn row(&mut self, sense: Sense, rhs: f64) -> RowId {
        self.rows.push(Row { sense, rhs });
        RowId(self.rows.len() - 1)
    }

    pub fn coef_lp(&mut self, row: RowId, var: LpVar, value: f64) {
        if value != 0.0 {
            self.entries.push((row.0, VarRef::Lp(var.0), value));
        }
    }

    /// Adds `value` to the symmetric coefficient matrix at `(i, j)` and
    /// `(j, i)`; the row then contains `2·value·X_ij` for `i ≠ j`.
    pub fn coef_psd(&mut self, row: RowId, block: PsdBlock, i: usize, j: usize, value: f64) {
        if value != 0.0 {
            let (index, scale) = self.psd_slot(block, i, j);
            self.entries.push((row.0, VarRef::Psd { block: block.0, index }, value * scale));
        }
    }

    /// Adds `coef · ⟨A, X⟩` for a full symmetric `A`.
    pub fn coef_psd_matrix(&mut self, row: RowId, block: PsdBlock, a: &DMatrix<f64>, coef: f64) {
        let n = self.blocks[block.0];
        for j in 0..n {
            for i in j..n {
                let v = coef * 0.5 * (a[(i, j)] + a[(j, i)]);
                self.coef_psd(row, block, i, j, v);
            }
        }
    }

    pub fn hermitian_block(&mut self, n: usize) -> HermitianBlock {
        HermitianBlock { block: self.psd_block(2 * n), n }
    }

    /// Adds `coef · tr(W H)` for Hermitian `H`.
    pub fn coef_hermitian(&mut self, row: RowId, w: HermitianBlock, h: &CMatrix, coef: f64) {
        self.coef_psd_matrix(row, w.block, &embed_hermitian(h), 0.5 * coef);
    }

    /// Adds `coef · tr(W H)` to the objective.
    pub fn objective_hermitian(&mut self, w: HermitianBlock, h: &CMatrix, coef: f64) {
        let e = embed_hermitian(h);
        for j in 0..e.ncols() {
            for i in j..e.nrows() {
                self.objective_psd(w.block, i, j, 0.5 * coef * 0.5 * (e[(i, j)] + e[(j, i)]));
            }
        }
    }

    pub fn objective_lp(&mut self, var: LpVar, value: f64) {
        if value != 0.0 {
            self.objective.push((VarRef::Lp(var.0), value));
        }
    }

    pub fn objective_psd(&mut self, block: PsdBlock, i: usize, j: usize, value: f64) {
        if value != 0.0 {
            let (index, scale) = self.psd_slot(block, i, j);
            self.objective.push((VarRef::Psd { block: block.0, index }, value * scale));
        }
    }

    pub fn objective_offset(&mut self, value: f64) {
        self.offset += value;
    }

    fn psd_slot(&self, block: PsdBlock, i: usize, j: usize) -> (usize, f64) {
        let n = self.blocks[block.0];
        assert!(i < n && j < n, "entry ({i}, {j}) outside block of order {n}");
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        let scale = if r == c { 1.0 } else { std::f64::consts::SQRT_2 };
        (svec_index(n, r, c), scale)
    }

    pub fn build(self) -> ConicProblem {
        let cones = ConeLayout { nonnegative: self.lp_count, psd: self.blocks };
        let offsets: Vec<usize> = (0..cones.psd.len()).map(|k| cones.block_offset(k)).collect();
        let resolve = |v: VarRef| match v {
            VarRef::Lp(i) => i,
            VarRef::Psd { block, index } => offsets[block] + index,
        };
        let mut objective = vec![0.0; cones.var_count()];
        for (v, value) in self.objective {
            objective[resolve(v)] += value;
        }
        let a = self.entries.into_iter().map(|(r, v, value)| (r, resolve(v), value)).collect();
        ConicProblem {
            format: FORMAT_TAG.to_string(),
            svec: SVEC_CONVENTION.to_string(),
            cones,
            objective,
            objective_offset: self.offset,
            rows: self.rows,
            a,
        }
    }
}

pub fn svec_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Position of `(i, j)`, `i ≥ j`, inside `svec` of an order-`n` matrix.
pub fn svec_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i >= j && i < n);
    // columns 0..j hold n, n-1, ..., n-j+1 entries
    j * (2 * n - j + 1) / 2 + (i - j)
}

pub fn svec(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(svec_len(n));
    for j in 0..n {
        for i in j..n {
            if i == j {
                out.push(m[(i, j)]);
            } else {
                out.push(0.5 * (m[(i, j)] + m[(j, i)]) * std::f64::consts::SQRT_2);
            }
        }
    }
    out
}

pub fn smat(v: &[f64], n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    let mut k = 0;
    for j in 0..n {
        for i in j..n {
            if i == j {
                m[(i, j)] = v[k];
            } else {
                let x = v[k] * std::f64::consts::FRAC_1_SQRT_2;
                m[(i, j)] = x;
                m[(j, i)] = x;
            }
            k += 1;
        }
    }
    m
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svec_round_trip_preserves_inner_product() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 5.0, -1.0, 3.0, -1.0, 4.0]);
        let b = DMatrix::from_row_slice(3, 3, &[0.5, -1.0, 0.0, -1.0, 2.0, 1.5, 0.0, 1.5, 1.0]);
        let inner = a.component_mul(&b).sum();
        assert!((dot(&svec(&a), &svec(&b)) - inner).abs() < 1e-12);
        assert!((smat(&svec(&a), 3) - &a).amax() < 1e-15);
        for j in 0..3 {
            for i in j..3 {
                let idx = svec_index(3, i, j);
                let expected = (0..j).map(|c| 3 - c).sum::<usize>() + (i - j);
                assert_eq!(idx, expected);
            }
        }
    }

    #[test]
    fn builder_places_scalars_before_blocks() {
        let mut b = ConicBuilder::new();
        let blk = b.psd_block(2);
        let x = b.nonneg();
        let r = b.row(Sense::Ge, 1.0);
        b.coef_psd(r, blk, 1, 0, 0.5);
        b.coef_lp(r, x, 2.0);
        b.objective_psd(blk, 0, 0, 1.0);
        let p = b.build();
        assert_eq!(p.cones, ConeLayout { nonnegative: 1, psd: vec![2] });
        assert_eq!(p.var_count(), 4);
        // X = [[1, 0.25], [0.25, 3]], x = 0.1: row = 2*0.5*0.25 + 2*0.1
        let mut v = vec![0.1];
        v.extend(svec(&DMatrix::from_row_slice(2, 2, &[1.0, 0.25, 0.25, 3.0])));
        assert!((p.row_activity(&v)[0] - (0.25 + 0.2)).abs() < 1e-15);
        assert_eq!(p.objective_value(&v), 1.0);
    }

    #[test]
    fn json_round_trip() {
        let mut b = ConicBuilder::new();
        let blk = b.psd_block(2);
        let r = b.row(Sense::Eq, 1.0);
        b.coef_psd(r, blk, 0, 0, 1.0);
        b.coef_psd(r, blk, 1, 1, 1.0);
        b.objective_psd(blk, 0, 1, -1.0);
        b.objective_offset(2.5);
        let p = b.build();
        let back = ConicProblem::from_json(&p.to_json().unwrap()).unwrap();
        assert_eq!(back, p);
        let text = p.to_json().unwrap();
        assert!(text.contains("\"<=\"") || text.contains("\"=\""));
    }

    #[test]
    fn validate_rejects_bad_shapes() {
        let mut p = ConicBuilder::new().build();
        p.cones.nonnegative = 2;
        assert!(p.validate().is_err());
        p.objective = vec![0.0; 2];
        p.rows.push(Row { sense: Sense::Le, rhs: 1.0 });
        p.a.push((0, 5, 1.0));
        assert!(p.validate().is_err());
    }
}
