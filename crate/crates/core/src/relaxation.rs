//! Semidefinite relaxation of the joint power/backhaul problem.
//!
//! Each beamformer is lifted to `W_m = w_m w_mᴴ` and the rank constraint is
//! dropped. The coverage term `1 − Σ_l δ_{f,l} log(tr(W_m J_l) + θ) ≤ β_{f,m}`
//! is concave in the traces, so it is replaced by tangent cuts
//! (over-estimates of the log) and tightened round by round at the incumbent
//! traces: every linearised problem is a pure SDP and a relaxation of the
//! smoothed problem, and its optimum is a lower bound that rises
//! monotonically as cuts accumulate.
//!
//! Internally each pair `(m, l)` gets a hypograph variable
//! `s'_{m,l} = s_{m,l} − log θ ≥ 0` bounded above by every cut, and files
//! with identical cache rows share one `β`; this is equivalent to listing one
//! row per combination of tangents but keeps the row count linear.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::conic::{self, ConicBuilder, ConicProblem, HermitianBlock, LpVar, Sense, SolveStatus, SolverSettings};
use crate::costmodel::QosConfig;
use crate::error::{Error, Result};
use crate::linalg::{outer, trace_product, trace_re, CMatrix};
use crate::scenario::{CachePlacement, PopularityModel, Scenario, TimeSlot};

pub const DEFAULT_THETA: f64 = 0.01;
/// Largest usable backhaul weight; at `λ = 1` the power term vanishes and
/// the optimiser is degenerate.
pub const MAX_LAMBDA: f64 = 0.999;
/// Cut points within this relative distance are treated as duplicates. The
/// tangent gap next to an existing point is below `1.3e-7`, and nearly parallel
/// rows only hurt the conic solver.
pub const CUT_POINT_TOL: f64 = 5e-4;

/// `H_m = h_m h_mᴴ`.
pub fn lift_channel(h: &[Complex64]) -> CMatrix {
    outer(h)
}

/// Diagonal selector of the antennas of BS `l` (zero-based).
pub fn selection_matrix(l: usize, bs_count: usize, antennas_per_bs: usize) -> CMatrix {
    let n = bs_count * antennas_per_bs;
    let mut j = CMatrix::zeros(n, n);
    for i in l * antennas_per_bs..(l + 1) * antennas_per_bs {
        j[(i, i)] = Complex64::new(1.0, 0.0);
    }
    j
}

/// Everything the relaxed problem needs for one time slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftedScenario {
    pub bs_count: usize,
    pub antennas_per_bs: usize,
    /// Physical channels `h_m`.
    pub channels: Vec<Vec<Complex64>>,
    /// `H_m = h_m h_mᴴ` (physical units).
    pub lifted: Vec<CMatrix>,
    /// `delta[f][l]`.
    pub delta: Vec<Vec<f64>>,
    pub popularity: Vec<f64>,
    pub sinr_targets: Vec<f64>,
    pub sigma2: f64,
    pub p_max: f64,
    /// Backhaul weight, already clamped to [`MAX_LAMBDA`].
    pub lambda: f64,
    pub theta: f64,
}

impl LiftedScenario {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        channels: &[Vec<Complex64>],
        bs_count: usize,
        antennas_per_bs: usize,
        placement: &CachePlacement,
        popularity: &PopularityModel,
        qos: &QosConfig,
        sigma2: f64,
        theta: f64,
    ) -> Result<Self> {
        qos.validate()?;
        let n = bs_count * antennas_per_bs;
        if n == 0 {
            return Err(Error::Dimension("no transmit antennas".into()));
        }
        if channels.iter().any(|h| h.len() != n) {
            return Err(Error::Dimension(format!("channels must have {n} entries")));
        }
        if channels.iter().flatten().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::Dimension("channels must be finite".into()));
        }
        if qos.sinr_targets.len() != channels.len() {
            return Err(Error::Dimension(format!(
                "{} SINR targets for {} users",
                qos.sinr_targets.len(),
                channels.len()
            )));
        }
        if placement.delta.len() != popularity.probabilities.len() {
            return Err(Error::Dimension("placement and popularity disagree on the file count".into()));
        }
        if placement.delta.iter().any(|row| row.len() != bs_count) {
            return Err(Error::Dimension(format!("placement rows must have {bs_count} entries")));
        }
        if !(sigma2 > 0.0) {
            return Err(Error::InvalidConfig("noise power must be positive".into()));
        }
        if !(theta > 0.0 && theta <= 1.0) {
            return Err(Error::InvalidConfig(format!("theta {theta} outside (0, 1]")));
        }
        Ok(Self {
            bs_count,
            antennas_per_bs,
            channels: channels.to_vec(),
            lifted: channels.iter().map(|h| lift_channel(h)).collect(),
            delta: placement.delta.clone(),
            popularity: popularity.probabilities.clone(),
            sinr_targets: qos.sinr_targets.clone(),
            sigma2,
            p_max: qos.p_max,
            lambda: qos.lambda.min(MAX_LAMBDA),
            theta,
        })
    }

    pub fn from_slot(scenario: &Scenario, slot: &TimeSlot, qos: &QosConfig, theta: f64) -> Result<Self> {
        Self::new(
            &slot.channels,
            scenario.geometry.bs_count,
            scenario.channel.antennas_per_bs,
            &scenario.placement,
            &scenario.popularity,
            qos,
            scenario.noise_power_w(),
            theta,
        )
    }

    /// Power scale used when assembling SDPs: the mean interference-free
    /// power `γ σ² / ‖h‖²`, capped at `P_max`. Keeps the solver's unknowns
    /// near unity whatever the link budget.
    pub fn power_unit(&self) -> f64 {
        let users = self.user_count().max(1) as f64;
        let mean = self
            .channels
            .iter()
            .zip(&self.sinr_targets)
            .map(|(h, g)| g * self.sigma2 / h.iter().map(|v| v.norm_sqr()).sum::<f64>().max(f64::MIN_POSITIVE))
            .sum::<f64>()
            / users;
        if mean.is_finite() && mean > 0.0 {
            mean.min(self.p_max)
        } else {
            self.p_max
        }
    }

    pub fn user_count(&self) -> usize {
        self.channels.len()
    }

    pub fn dim(&self) -> usize {
        self.bs_count * self.antennas_per_bs
    }

    pub fn rates(&self) -> Vec<f64> {
        self.sinr_targets.iter().map(|&g| crate::costmodel::rate_of(g)).collect()
    }

    pub fn selection(&self, l: usize) -> CMatrix {
        selection_matrix(l, self.bs_count, self.antennas_per_bs)
    }

    /// `tr(W J_l)`: power of the antennas of BS `l`.
    pub fn bs_trace(&self, w: &CMatrix, l: usize) -> f64 {
        let a = self.antennas_per_bs;
        (l * a..(l + 1) * a).map(|i| w[(i, i)].re).sum()
    }

    /// Files grouped by identical cache rows; rows that are all zero are
    /// left out (their coverage requirement is the constant 1).
    pub fn file_groups(&self) -> Vec<FileGroup> {
        let mut groups: Vec<FileGroup> = Vec::new();
        for (f, row) in self.delta.iter().enumerate() {
            if row.iter().all(|&d| d == 0.0) {
                continue;
            }
            match groups.iter_mut().find(|g| &g.delta == row) {
                Some(g) => {
                    g.files.push(f);
                    g.weight += self.popularity[f];
                }
                None => groups.push(FileGroup { files: vec![f], delta: row.clone(), weight: self.popularity[f] }),
            }
        }
        groups
    }

    /// Total popularity of files no BS caches.
    pub fn uncached_weight(&self) -> f64 {
        self.delta
            .iter()
            .zip(&self.popularity)
            .filter(|(row, _)| row.iter().all(|&d| d == 0.0))
            .map(|(_, z)| z)
            .sum()
    }

    /// BSs that hold any cached content (only these get cuts).
    pub fn caching_bs(&self) -> Vec<bool> {
        (0..self.bs_count).map(|l| self.delta.iter().any(|row| row[l] > 0.0)).collect()
    }

    /// `max(0, 1 − Σ_l δ_l log(t_l + θ))`.
    pub fn coverage_requirement(&self, delta: &[f64], traces: &[f64]) -> f64 {
        let smooth: f64 = delta.iter().zip(traces).map(|(d, t)| d * (t.max(0.0) + self.theta).ln()).sum();
        (1.0 - smooth).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileGroup {
    pub files: Vec<usize>,
    pub delta: Vec<f64>,
    /// Summed popularity of the files in the group.
    pub weight: f64,
}

/// Tangent points `t₀` of `log(t + θ)` per `(m, l)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutPool {
    /// `points[m][l]`, ascending.
    pub points: Vec<Vec<Vec<f64>>>,
}

impl CutPool {
    /// Tangents at `0` and `p_max` for every pair.
    pub fn initial(users: usize, bs_count: usize, p_max: f64) -> Self {
        Self { points: vec![vec![vec![0.0, p_max]; bs_count]; users] }
    }

    /// Adds `t0` unless a point within relative distance [`CUT_POINT_TOL`]
    /// exists.
    pub fn add(&mut self, m: usize, l: usize, t0: f64) -> bool {
        if !t0.is_finite() || t0 < 0.0 {
            return false;
        }
        let pts = &mut self.points[m][l];
        if pts.iter().any(|&p| same_point(p, t0)) {
            return false;
        }
        let pos = pts.partition_point(|&p| p < t0);
        pts.insert(pos, t0);
        true
    }

    /// Keeps at most `keep` points for `(m, l)`: the point at 0, the closest
    /// points on either side of `near`, then those closest to `near` in
    /// `log(t + θ)`. Keeping the bracket stops the next iterate from
    /// escaping to where only the loose tangent at 0 remains.
    pub fn prune(&mut self, m: usize, l: usize, keep: usize, near: f64, theta: f64) {
        let pts = &mut self.points[m][l];
        if pts.len() <= keep || keep == 0 {
            return;
        }
        let near = near.max(0.0);
        let dist = |p: f64| ((p + theta) / (near + theta)).ln().abs();
        let mut kept: Vec<f64> = Vec::with_capacity(keep);
        if pts.first() == Some(&0.0) {
            kept.push(0.0);
        }
        let below = pts.iter().copied().rfind(|&p| p <= near);
        let above = pts.iter().copied().find(|&p| p > near);
        for p in [below, above].into_iter().flatten() {
            if kept.len() < keep && !kept.contains(&p) {
                kept.push(p);
            }
        }
        let mut rest: Vec<f64> = pts.iter().copied().filter(|p| !kept.contains(p)).collect();
        rest.sort_by(|a, b| dist(*a).total_cmp(&dist(*b)));
        let room = keep - kept.len();
        kept.extend(rest.into_iter().take(room));
        kept.sort_by(f64::total_cmp);
        *pts = kept;
    }

    /// Points bracketing `t` in the pool for `(m, l)`.
    pub fn bracket(&self, m: usize, l: usize, t: f64) -> (Option<f64>, Option<f64>) {
        let pts = &self.points[m][l];
        (pts.iter().copied().rfind(|&p| p <= t), pts.iter().copied().find(|&p| p > t))
    }

    /// `max(0, 1 − Σ_l δ_l ŝ_l)` where `ŝ_l` is the tightest tangent of
    /// `log(t_l + θ)` in the pool for `(m, l)`: the coverage requirement
    /// the linearised SDP sees at traces `t` of user `m`.
    pub fn model_requirement_for(&self, m: usize, delta: &[f64], traces: &[f64], theta: f64) -> f64 {
        let covered: f64 = delta
            .iter()
            .zip(traces)
            .zip(&self.points[m])
            .filter(|((d, _), _)| **d != 0.0)
            .map(|((d, &t), pts)| {
                let t = t.max(0.0);
                let tight = pts.iter().map(|&p| {
                    let (a, b) = tangent(p, theta);
                    a * t + b
                });
                d * tight.fold(f64::INFINITY, f64::min)
            })
            .sum();
        (1.0 - covered).max(0.0)
    }

    pub fn count(&self) -> usize {
        self.points.iter().flatten().map(Vec::len).sum()
    }

    /// Whether every point of `self` is also in `other`.
    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.points.iter().zip(&other.points).all(|(a, b)| {
            a.iter().zip(b).all(|(pa, pb)| pa.iter().all(|&p| pb.iter().any(|&q| same_point(p, q))))
        })
    }
}

fn same_point(a: f64, b: f64) -> bool {
    (a - b).abs() <= CUT_POINT_TOL * a.abs().max(b.abs()) || a == b
}

/// Tangent of `log(t + θ)` at `t0`: `(slope, intercept)`.
pub fn tangent(t0: f64, theta: f64) -> (f64, f64) {
    let slope = 1.0 / (t0 + theta);
    (slope, (t0 + theta).ln() - t0 * slope)
}

/// Where the pieces of a linearised SDP live in its variable vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpLayout {
    /// PSD block index per user.
    pub blocks: Vec<usize>,
    /// `beta[g][m]`: column of `β_{g,m}`; empty when the coverage part is omitted.
    pub beta: Vec<Vec<usize>>,
    /// `hypo[m][l]`: column of `s'_{m,l}`, if the pair has cuts.
    pub hypo: Vec<Vec<Option<usize>>>,
    /// `trace[m][l]`: column of the scalar copy of `tr(W'_m J_l)`.
    pub trace: Vec<Vec<Option<usize>>>,
    pub groups: Vec<FileGroup>,
    pub uncached_weight: f64,
    /// Whether coverage rows were emitted (false at `λ = 0`).
    pub with_coverage: bool,
    /// Watts per unit of the PSD blocks.
    pub power_unit: f64,
    /// Factor applied to the cost to form the SDP objective.
    pub objective_scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedSdp {
    pub problem: ConicProblem,
    pub layout: SdpLayout,
}

impl LinearizedSdp {
    /// Per-user Hermitian matrices `W_m` from a solution vector.
    pub fn beamformer_matrices(&self, x: &[f64]) -> Vec<CMatrix> {
        let unit = Complex64::new(self.layout.power_unit, 0.0);
        self.layout.blocks.iter().map(|&k| self.problem.hermitian_block_matrix(x, k) * unit).collect()
    }
}

/// Builds the SDP for the current cut pool.
///
/// The blocks hold `W_m / p` with `p` from [`LiftedScenario::power_unit`], so
/// SINR rows read `tr(W'_m H̃_m) − γ_m Σ_{n≠m} tr(W'_n H̃_m) ≥ γ_m` with
/// `H̃ = p H / σ²` and power rows `tr(W' J_l) ≤ P_max / p`. The objective is
/// the cost times `layout.objective_scale`.
pub fn assemble_linearized_sdp(lifted: &LiftedScenario, cuts: &CutPool) -> Result<LinearizedSdp> {
    let users = lifted.user_count();
    let n = lifted.dim();
    if cuts.points.len() != users || cuts.points.iter().any(|p| p.len() != lifted.bs_count) {
        return Err(Error::Dimension("cut pool does not match the scenario".into()));
    }
    let lambda = lifted.lambda;
    let with_coverage = lambda > 0.0;
    let groups = if with_coverage { lifted.file_groups() } else { Vec::new() };
    let caching = lifted.caching_bs();
    if with_coverage {
        for (m, per_bs) in cuts.points.iter().enumerate() {
            for (l, pts) in per_bs.iter().enumerate() {
                if caching[l] && pts.is_empty() {
                    return Err(Error::InvalidConfig(format!("no cuts for user {m}, BS {l}")));
                }
            }
        }
    }

    let unit = lifted.power_unit();
    let rates = lifted.rates();
    // objective in units of its largest coefficient, so the solver's absolute
    // gap tolerance is relative to the problem's own scale
    let max_rate = if groups.is_empty() { 0.0 } else { rates.iter().copied().fold(0.0, f64::max) };
    let objective_scale = 1.0 / ((1.0 - lambda) * unit).max(lambda * max_rate).max(f64::MIN_POSITIVE);
    let mut b = ConicBuilder::new();
    let blocks: Vec<HermitianBlock> = (0..users).map(|_| b.hermitian_block(n)).collect();
    let identity = CMatrix::identity(n, n);
    for &w in &blocks {
        b.objective_hermitian(w, &identity, (1.0 - lambda) * unit * objective_scale);
    }

    // SINR rows
    for m in 0..users {
        let scaled = &lifted.lifted[m] * Complex64::new(unit / lifted.sigma2, 0.0);
        let gamma = lifted.sinr_targets[m];
        let row = b.row(Sense::Ge, gamma);
        for (k, &w) in blocks.iter().enumerate() {
            let coef = if k == m { 1.0 } else { -gamma };
            b.coef_hermitian(row, w, &scaled, coef);
        }
    }
    // per-BS power rows
    let selections: Vec<CMatrix> = (0..lifted.bs_count).map(|l| lifted.selection(l)).collect();
    for sel in &selections {
        let row = b.row(Sense::Le, lifted.p_max / unit);
        for &w in &blocks {
            b.coef_hermitian(row, w, sel, 1.0);
        }
    }

    let mut hypo: Vec<Vec<Option<LpVar>>> = vec![vec![None; lifted.bs_count]; users];
    let mut trace: Vec<Vec<Option<LpVar>>> = vec![vec![None; lifted.bs_count]; users];
    let mut beta: Vec<Vec<LpVar>> = Vec::new();
    if with_coverage && !groups.is_empty() {
        let log_theta = lifted.theta.ln();
        for m in 0..users {
            for l in 0..lifted.bs_count {
                if !caching[l] {
                    continue;
                }
                let s = b.nonneg();
                hypo[m][l] = Some(s);
                // t = tr(W'_m J_l) as a scalar, so cut rows touch no PSD
                // block and the solver can eliminate them per user
                let t = b.nonneg();
                trace[m][l] = Some(t);
                let link = b.row(Sense::Eq, 0.0);
                b.coef_lp(link, t, 1.0);
                b.coef_hermitian(link, blocks[m], &selections[l], -1.0);
                for &t0 in &cuts.points[m][l] {
                    let (slope, intercept) = tangent(t0, lifted.theta);
                    let row = b.row(Sense::Le, intercept - log_theta);
                    b.coef_lp(row, s, 1.0);
                    b.coef_lp(row, t, -slope * unit);
                }
            }
        }
        for g in &groups {
            let total: f64 = g.delta.iter().sum();
            let mut per_user = Vec::with_capacity(users);
            for m in 0..users {
                let beta_var = b.nonneg();
                b.objective_lp(beta_var, lambda * g.weight * rates[m] * objective_scale);
                let row = b.row(Sense::Le, -1.0 + log_theta * total);
                b.coef_lp(row, beta_var, -1.0);
                for (l, &d) in g.delta.iter().enumerate() {
                    if d > 0.0 {
                        b.coef_lp(row, hypo[m][l].expect("caching BS has a hypograph variable"), -d);
                    }
                }
                per_user.push(beta_var);
            }
            beta.push(per_user);
        }
    }
    let uncached_weight = if with_coverage { lifted.uncached_weight() } else { 0.0 };
    if with_coverage {
        b.objective_offset(lambda * uncached_weight * rates.iter().sum::<f64>() * objective_scale);
    }

    let problem = b.build();
    let layout = SdpLayout {
        blocks: blocks.iter().map(|w| w.block.0).collect(),
        beta: beta.iter().map(|row| row.iter().map(|v| v.0).collect()).collect(),
        hypo: hypo.iter().map(|row| row.iter().map(|v| v.map(|s| s.0)).collect()).collect(),
        trace: trace.iter().map(|row| row.iter().map(|v| v.map(|t| t.0)).collect()).collect(),
        groups,
        uncached_weight,
        with_coverage,
        power_unit: unit,
        objective_scale,
    };
    Ok(LinearizedSdp { problem, layout })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelaxationConfig {
    pub theta: f64,
    /// Cuts are added for users whose coverage violation exceeds this.
    pub cut_tol: f64,
    /// Termination: largest coverage violation.
    pub violation_tol: f64,
    /// Termination: relative change of the linearised optimum.
    pub objective_rel_tol: f64,
    pub max_cut_rounds: usize,
    /// Cap on tangents kept per `(m, l)` (the point at 0 is always kept).
    pub max_cuts_per_pair: usize,
    /// Also cut at the log-space midpoints between the incumbent and its
    /// bracketing tangents.
    pub bracket_cuts: bool,
    /// Accept a non-optimal inner solve whose residuals are below this.
    pub accept_residual: f64,
    pub solver: SolverSettings,
}

impl Default for RelaxationConfig {
    fn default() -> Self {
        Self {
            theta: DEFAULT_THETA,
            cut_tol: 1e-7,
            violation_tol: 1e-6,
            objective_rel_tol: 1e-5,
            max_cut_rounds: 30,
            max_cuts_per_pair: 12,
            bracket_cuts: true,
            accept_residual: 1e-6,
            solver: SolverSettings::default(),
        }
    }
}

impl RelaxationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::InvalidConfig(format!("theta {} outside (0, 1]", self.theta)));
        }
        if self.max_cut_rounds == 0 || self.max_cuts_per_pair < 2 {
            return Err(Error::InvalidConfig("need at least one cut round and two cuts per pair".into()));
        }
        if !(self.violation_tol > 0.0 && self.objective_rel_tol > 0.0 && self.cut_tol >= 0.0) {
            return Err(Error::InvalidConfig("relaxation tolerances must be positive".into()));
        }
        self.solver.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RelaxationStatus {
    Converged,
    /// Round budget exhausted; the best iterate is returned.
    NotConverged,
    /// The SINR/power constraints admit no solution.
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxedSolution {
    pub status: RelaxationStatus,
    /// Per-user `W_m` in watts (empty when infeasible).
    pub w: Vec<CMatrix>,
    /// `beta[f][m]`, raised to the exact coverage requirement.
    pub beta: Vec<Vec<f64>>,
    /// Relaxed objective with the exact log coverage.
    pub objective: f64,
    /// Optimum of the last linearised SDP (a lower bound on `objective`'s
    /// problem).
    pub lower_bound: f64,
    pub power: f64,
    /// `traces[m][l] = tr(W_m J_l)`.
    pub traces: Vec<Vec<f64>>,
    pub max_violation: f64,
    pub rounds: usize,
    pub cut_count: usize,
    pub solver_iterations: usize,
    pub solver_status: SolveStatus,
    pub cuts: CutPool,
}

impl RelaxedSolution {
    fn infeasible(cuts: CutPool, rounds: usize, iterations: usize, status: SolveStatus) -> Self {
        Self {
            status: RelaxationStatus::Infeasible,
            w: Vec::new(),
            beta: Vec::new(),
            objective: f64::INFINITY,
            lower_bound: f64::INFINITY,
            power: 0.0,
            traces: Vec::new(),
            max_violation: 0.0,
            rounds,
            cut_count: cuts.count(),
            solver_iterations: iterations,
            solver_status: status,
            cuts,
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.status != RelaxationStatus::Infeasible
    }
}

struct RoundResult {
    w: Vec<CMatrix>,
    traces: Vec<Vec<f64>>,
    lp_beta: Vec<Vec<f64>>,
    objective: f64,
    status: SolveStatus,
}

fn usable(status: SolveStatus, residual: f64, config: &RelaxationConfig) -> bool {
    status == SolveStatus::Optimal || (status == SolveStatus::MaxIter && residual <= config.accept_residual)
}

/// Kelley outer approximation: solve, add tangents at the incumbent traces
/// of users whose coverage constraint is violated, repeat.
pub fn mm_optimize(lifted: &LiftedScenario, config: &RelaxationConfig) -> Result<RelaxedSolution> {
    config.validate()?;
    let users = lifted.user_count();
    let groups = lifted.file_groups();
    let caching = lifted.caching_bs();
    let with_coverage = lifted.lambda > 0.0 && !groups.is_empty();
    let mut cuts = CutPool::initial(users, lifted.bs_count, lifted.p_max);
    let mut iterations = 0;
    let mut best: Option<RoundResult> = None;
    let mut prev_objective: Option<f64> = None;
    let mut status = RelaxationStatus::NotConverged;
    let mut max_violation = 0.0;
    let mut rounds = 0;

    for round in 0..config.max_cut_rounds {
        rounds = round + 1;
        let sdp = assemble_linearized_sdp(lifted, &cuts)?;
        let sol = conic::solve(&sdp.problem, &config.solver)?;
        iterations += sol.iterations;
        if sol.status == SolveStatus::Infeasible {
            return Ok(RelaxedSolution::infeasible(cuts, rounds, iterations, sol.status));
        }
        if !usable(sol.status, sol.residuals.max(), config) {
            log::warn!("inner solve ended with {:?} (residual {:.2e})", sol.status, sol.residuals.max());
            if best.is_none() {
                return Err(Error::Numerical(format!(
                    "first relaxation round failed: {:?}, residual {:.2e}",
                    sol.status,
                    sol.residuals.max()
                )));
            }
            break;
        }
        let w = sdp.beamformer_matrices(&sol.x);
        let traces: Vec<Vec<f64>> =
            w.iter().map(|wm| (0..lifted.bs_count).map(|l| lifted.bs_trace(wm, l)).collect()).collect();
        // β implied by the cut model at the incumbent traces; the solver's β
        // can undershoot it by the inner residual, which is not an
        // outer-approximation gap
        let lp_beta: Vec<Vec<f64>> = sdp
            .layout
            .beta
            .iter()
            .zip(&groups)
            .map(|(row, group)| {
                row.iter()
                    .enumerate()
                    .map(|(m, &c)| sol.x[c].max(cuts.model_requirement_for(m, &group.delta, &traces[m], lifted.theta)))
                    .collect()
            })
            .collect();
        let current = RoundResult { w, traces: traces.clone(), lp_beta, objective: sol.primal_objective / sdp.layout.objective_scale, status: sol.status };

        // violation of the exact log constraint per user
        let mut user_violation = vec![0.0f64; users];
        if with_coverage {
            for (g, group) in groups.iter().enumerate() {
                for m in 0..users {
                    let need = lifted.coverage_requirement(&group.delta, &current.traces[m]);
                    user_violation[m] = user_violation[m].max(need - current.lp_beta[g][m]);
                }
            }
        }
        max_violation = user_violation.iter().copied().fold(0.0, f64::max);
        let change = prev_objective.map_or(f64::INFINITY, |p| {
            (current.objective - p).abs() / current.objective.abs().max(1e-12)
        });
        log::debug!(
            "cut round {rounds}: objective {:.8e}, violation {max_violation:.2e}, {} cuts, {} ipm iterations",
            current.objective,
            cuts.count(),
            sol.iterations
        );
        prev_objective = Some(current.objective);
        best = Some(current);
        if max_violation <= config.violation_tol && (change <= config.objective_rel_tol || !with_coverage) {
            status = RelaxationStatus::Converged;
            break;
        }

        let mut added = false;
        for m in 0..users {
            if user_violation[m] <= config.cut_tol {
                continue;
            }
            for l in 0..lifted.bs_count {
                if caching[l] {
                    let t = traces[m][l].max(0.0);
                    let (lo, hi) = cuts.bracket(m, l, t);
                    added |= cuts.add(m, l, t);
                    if config.bracket_cuts {
                        // log-space midpoints towards the neighbours shrink the
                        // bracket around the optimum about twice as fast
                        let theta = lifted.theta;
                        for p in [lo, hi].into_iter().flatten() {
                            added |= cuts.add(m, l, ((p + theta) * (t + theta)).sqrt() - theta);
                        }
                    }
                    cuts.prune(m, l, config.max_cuts_per_pair, t, lifted.theta);
                }
            }
        }
        if !added {
            // every incumbent trace already has a tangent within the
            // duplicate tolerance: further rounds would repeat this one
            if max_violation <= config.violation_tol {
                status = RelaxationStatus::Converged;
            }
            break;
        }
    }

    let best = best.expect("at least one round ran");
    Ok(finalize(lifted, &groups, best, cuts, status, max_violation, rounds, iterations))
}

#[allow(clippy::too_many_arguments)]
fn finalize(
    lifted: &LiftedScenario,
    groups: &[FileGroup],
    round: RoundResult,
    cuts: CutPool,
    status: RelaxationStatus,
    max_violation: f64,
    rounds: usize,
    iterations: usize,
) -> RelaxedSolution {
    let users = lifted.user_count();
    let files = lifted.delta.len();
    let rates = lifted.rates();
    let mut beta = vec![vec![1.0; users]; files];
    for f in 0..files {
        for m in 0..users {
            beta[f][m] = lifted.coverage_requirement(&lifted.delta[f], &round.traces[m]);
        }
    }
    // the solver's β can only sit above the exact requirement
    for (g, group) in groups.iter().enumerate() {
        if let Some(row) = round.lp_beta.get(g) {
            for &f in &group.files {
                for m in 0..users {
                    beta[f][m] = beta[f][m].max(row[m]);
                }
            }
        }
    }
    let power: f64 = round.w.iter().map(trace_re).sum();
    let backhaul: f64 = (0..files)
        .map(|f| (0..users).map(|m| lifted.popularity[f] * rates[m] * beta[f][m]).sum::<f64>())
        .sum();
    let lambda = lifted.lambda;
    RelaxedSolution {
        status,
        objective: lambda * backhaul + (1.0 - lambda) * power,
        lower_bound: round.objective,
        power,
        traces: round.traces,
        beta,
        w: round.w,
        max_violation,
        rounds,
        cut_count: cuts.count(),
        solver_iterations: iterations,
        solver_status: round.status,
        cuts,
    }
}

/// Re-solves the linearised SDP for a given pool and returns its optimum.
pub fn linearized_optimum(lifted: &LiftedScenario, cuts: &CutPool, settings: &SolverSettings) -> Result<f64> {
    let sdp = assemble_linearized_sdp(lifted, cuts)?;
    let sol = conic::solve(&sdp.problem, settings)?;
    match sol.status {
        SolveStatus::Optimal => Ok(sol.primal_objective / sdp.layout.objective_scale),
        s => Err(Error::Numerical(format!("linearised SDP ended with {s:?}"))),
    }
}

/// Worst violation of the exact relaxed constraints by `solution`
/// (SINR and power as relative violations, coverage and `β ≥ 0` absolute).
pub fn constraint_violation(lifted: &LiftedScenario, solution: &RelaxedSolution) -> f64 {
    let mut worst = 0.0f64;
    for m in 0..solution.w.len() {
        let h = &lifted.lifted[m];
        let signal = trace_product(&solution.w[m], h);
        let interference: f64 =
            (0..solution.w.len()).filter(|&n| n != m).map(|n| trace_product(&solution.w[n], h)).sum();
        let gamma = lifted.sinr_targets[m];
        let need = gamma * (interference + lifted.sigma2);
        worst = worst.max((need - signal) / need);
    }
    for l in 0..lifted.bs_count {
        let p: f64 = solution.w.iter().map(|w| lifted.bs_trace(w, l)).sum();
        worst = worst.max((p - lifted.p_max) / lifted.p_max);
    }
    for (f, row) in solution.beta.iter().enumerate() {
        for (m, &b) in row.iter().enumerate() {
            let need = lifted.coverage_requirement(&lifted.delta[f], &solution.traces[m]);
            worst = worst.max(need - b).max(-b);
        }
    }
    worst
}

/// Smallest eigenvalue over all `W_m`.
pub fn min_eigenvalue(solution: &RelaxedSolution) -> f64 {
    solution
        .w
        .iter()
        .map(|w| crate::linalg::hermitian_eigen(w).0.last().copied().unwrap_or(0.0))
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::kkt_residuals;
    use crate::costmodel::DEFAULT_P_MAX;
    use crate::scenario::{place_caches, zipf_popularity, CachingMode};
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn lift_channel_examples() {
        let h = lift_channel(&[c(1.0, 0.0), c(0.0, 1.0)]);
        assert_eq!(h[(0, 1)], c(0.0, -1.0));
        assert_eq!(h[(1, 0)], c(0.0, 1.0));
        assert_eq!(h[(1, 1)], c(1.0, 0.0));
        assert!(lift_channel(&[c(0.0, 0.0); 3]).iter().all(|v| *v == c(0.0, 0.0)));
        let g = [c(0.3, -1.2), c(2.0, 0.5), c(-0.7, 0.1), c(0.0, 0.9)];
        let norm2: f64 = g.iter().map(|v| v.norm_sqr()).sum();
        let (vals, _) = crate::linalg::hermitian_eigen(&lift_channel(&g));
        assert!((vals[0] - norm2).abs() < 1e-12);
        assert!(vals[1..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn selection_matrix_examples() {
        let j = selection_matrix(0, 2, 2);
        let diag: Vec<f64> = j.diagonal().iter().map(|v| v.re).collect();
        assert_eq!(diag, vec![1.0, 1.0, 0.0, 0.0]);
        for (bs, nt) in [(1, 1), (3, 2), (7, 2), (4, 3)] {
            let sum = (0..bs).fold(CMatrix::zeros(bs * nt, bs * nt), |acc, l| acc + selection_matrix(l, bs, nt));
            assert_eq!(sum, CMatrix::identity(bs * nt, bs * nt));
        }
        let w = outer(&[c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0), c(4.0, 0.0)]);
        assert!((trace_product(&w, &selection_matrix(1, 2, 2)) - 25.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn tangents_over_estimate_log(t0 in 0.0f64..5.0, theta in 1e-3f64..1.0) {
            let (slope, intercept) = tangent(t0, theta);
            for k in 0..=400 {
                let x = k as f64 * 0.025;
                prop_assert!((x + theta).ln() <= intercept + slope * x + 1e-12);
            }
        }
    }

    fn one_user(delta: f64, theta: f64, lambda: f64) -> LiftedScenario {
        let pop = PopularityModel { file_count: 1, zipf_alpha: 1.0, probabilities: vec![1.0] };
        let placement = CachePlacement { delta: vec![vec![delta]], cache_size: 1, mode: CachingMode::Uncoded, distinct_parity: false };
        let qos = QosConfig::uniform(1, 0.0, 1.0, lambda);
        LiftedScenario::new(&[vec![c(1.0, 0.0)]], 1, 1, &placement, &pop, &qos, 1.0, theta).unwrap()
    }

    #[test]
    fn coverage_rows_with_single_cut() {
        // one user, one BS, one cut at 0 with θ = 1: 1 − δ·tr(WJ) ≤ β
        let lifted = one_user(0.5, 1.0, 0.5);
        let cuts = CutPool { points: vec![vec![vec![0.0]]] };
        let sdp = assemble_linearized_sdp(&lifted, &cuts).unwrap();
        let p = &sdp.problem;
        let s_col = sdp.layout.hypo[0][0].unwrap();
        let t_col = sdp.layout.trace[0][0].unwrap();
        let b_col = sdp.layout.beta[0][0];
        assert_eq!(sdp.layout.power_unit, 1.0);
        let eval = |t: f64, beta: f64, s: f64| {
            let mut x = vec![0.0; p.var_count()];
            x[s_col] = s;
            x[t_col] = t;
            x[b_col] = beta;
            let off = p.cones.block_offset(sdp.layout.blocks[0]);
            // W = [[t]] embeds as diag(t, t)
            x[off] = t;
            x[off + 2] = t;
            let act = p.row_activity(&x);
            p.rows.iter().zip(&act).all(|(r, a)| match r.sense {
                Sense::Le => *a <= r.rhs + 1e-12,
                Sense::Ge => *a >= r.rhs - 1e-12,
                Sense::Eq => (a - r.rhs).abs() <= 1e-12,
            })
        };
        // t = 1 (SINR 1 ≥ γ = 1): β = 1 − 0.5 is exactly attainable
        assert!(eval(1.0, 0.5, 1.0));
        assert!(!eval(1.0, 0.49, 1.0));
        assert!(!eval(1.0, 0.49, 1.02));
    }

    #[test]
    fn lambda_zero_is_power_minimisation() {
        let lifted = one_user(0.5, 0.01, 0.0);
        let sdp = assemble_linearized_sdp(&lifted, &CutPool::initial(1, 1, 1.0)).unwrap();
        assert_eq!(sdp.problem.cones.nonnegative, 0);
        assert!(!sdp.layout.with_coverage);
        // objective is tr(W) = ½ tr(X)
        let obj = &sdp.problem.objective;
        assert_eq!(obj, &vec![0.5, 0.0, 0.5]);
    }

    fn small_network(mode: CachingMode, lambda: f64) -> LiftedScenario {
        let scenario = crate::scenario::Scenario::generate(
            crate::scenario::GeometryConfig { user_pool_size: 30, users_per_slot: 4, ..Default::default() },
            crate::scenario::ChannelParams::default(),
            zipf_popularity(20, 1.2).unwrap(),
            place_caches(&zipf_popularity(20, 1.2).unwrap(), 7, 3, mode).unwrap(),
            5,
        )
        .unwrap();
        let slot = scenario.slot(0).unwrap();
        let qos = QosConfig::uniform(4, 10.0, DEFAULT_P_MAX, lambda);
        LiftedScenario::from_slot(&scenario, &slot, &qos, DEFAULT_THETA).unwrap()
    }

    #[test]
    fn zero_cache_gives_unit_beta() {
        let lambda = 0.4;
        let lifted = small_network(CachingMode::None, lambda);
        let sol = mm_optimize(&lifted, &RelaxationConfig::default()).unwrap();
        assert_eq!(sol.status, RelaxationStatus::Converged);
        assert!(sol.beta.iter().flatten().all(|&b| (b - 1.0).abs() < 1e-9));
        let power_only = mm_optimize(&small_network(CachingMode::None, 0.0), &RelaxationConfig::default()).unwrap();
        let rates: f64 = lifted.rates().iter().sum();
        let expected = lambda * rates + (1.0 - lambda) * power_only.power;
        assert!((sol.objective - expected).abs() <= 1e-6 * expected, "{} vs {expected}", sol.objective);
    }

    #[test]
    fn cut_loop_converges_and_is_a_fixed_point() {
        let lifted = small_network(CachingMode::Coded { fraction: 0.5 }, 0.6);
        let config = RelaxationConfig::default();
        let sol = mm_optimize(&lifted, &config).unwrap();
        assert_eq!(sol.status, RelaxationStatus::Converged, "{sol:?}");
        assert!(constraint_violation(&lifted, &sol) <= 1e-6);
        assert!(min_eigenvalue(&sol) >= -1e-7);
        assert!(sol.lower_bound <= sol.objective + 1e-7);
        let again = linearized_optimum(&lifted, &sol.cuts, &config.solver).unwrap();
        assert!((again - sol.lower_bound).abs() <= 1e-8 * sol.lower_bound.abs().max(1.0), "{again} vs {}", sol.lower_bound);
    }

    #[test]
    fn more_cuts_never_lower_the_optimum() {
        let lifted = small_network(CachingMode::Uncoded, 0.8);
        let base = CutPool::initial(4, 7, DEFAULT_P_MAX);
        let mut more = base.clone();
        for m in 0..4 {
            for l in 0..7 {
                more.add(m, l, 5.0 * (l + 1) as f64);
            }
        }
        assert!(base.is_subset_of(&more));
        let settings = SolverSettings::default();
        let lo = linearized_optimum(&lifted, &base, &settings).unwrap();
        let hi = linearized_optimum(&lifted, &more, &settings).unwrap();
        assert!(hi >= lo - 1e-8 * lo.abs().max(1.0), "{hi} < {lo}");
    }

    #[test]
    fn linearised_sdp_solution_passes_kkt() {
        let lifted = small_network(CachingMode::Uncoded, 0.2);
        let sdp = assemble_linearized_sdp(&lifted, &CutPool::initial(4, 7, DEFAULT_P_MAX)).unwrap();
        let sol = conic::solve(&sdp.problem, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        let r = kkt_residuals(&sdp.problem, &sol.x, &sol.y, &sol.s);
        assert!(r.max() <= 1e-8, "{r:?}");
    }

    #[test]
    fn cut_pool_bookkeeping() {
        let mut pool = CutPool::initial(1, 1, 1.0);
        assert!(!pool.add(0, 0, 1.0 + 1e-12));
        assert!(pool.add(0, 0, 0.3));
        assert!(pool.add(0, 0, 0.31));
        assert!(pool.add(0, 0, 0.9));
        assert_eq!(pool.points[0][0], vec![0.0, 0.3, 0.31, 0.9, 1.0]);
        pool.prune(0, 0, 3, 0.305, 0.01);
        assert_eq!(pool.points[0][0], vec![0.0, 0.3, 0.31]);
    }
}
