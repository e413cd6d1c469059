//! Recovery of beamforming vectors from the relaxed `W_m`.
//!
//! When every `W_m` is numerically rank-one the principal eigenvector is the
//! beamformer. Otherwise candidates are drawn from `CN(0, W_m)`. By default
//! each sampled set of directions is then given the smallest powers that meet
//! every SINR target with equality (an `M × M` linear system); the
//! paper-faithful mode skips that step and simply accepts or rejects the raw
//! samples. The feasible candidate with the smallest exact cost wins, ties
//! going to the lowest trial index.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::costmodel::{check_constraints, inner, network_cost, Beamformers, ConstraintCheck, CostBreakdown, QosConfig};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigen, hermitian_sqrt, CMatrix};
use crate::relaxation::RelaxedSolution;
use crate::rng::{derive_seed, labels, rng_from_id};
use crate::scenario::{complex_normal, CachePlacement, PopularityModel, Scenario, TimeSlot};

pub const DEFAULT_RANK_TOL: f64 = 1e-6;
pub const DEFAULT_TRIALS: usize = 1000;
/// Relative slack allowed on SINR targets and power caps.
pub const FEASIBILITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundingConfig {
    /// Largest `λ₂/λ₁` still treated as rank-one.
    pub rank_tol: f64,
    pub trials: usize,
    /// Accept/reject raw Gaussian samples without power rebalancing.
    pub paper_faithful: bool,
    /// Relative tolerance on negative eigenvalues of `W_m`.
    pub psd_tol: f64,
}

impl Default for RoundingConfig {
    fn default() -> Self {
        Self { rank_tol: DEFAULT_RANK_TOL, trials: DEFAULT_TRIALS, paper_faithful: false, psd_tol: 1e-6 }
    }
}

impl RoundingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidConfig("rounding needs at least one trial".into()));
        }
        if !(self.rank_tol >= 0.0 && self.rank_tol < 1.0) {
            return Err(Error::InvalidConfig(format!("rank tolerance {} outside [0, 1)", self.rank_tol)));
        }
        if !(self.psd_tol >= 0.0) {
            return Err(Error::InvalidConfig("psd tolerance must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoundingMethod {
    Eigen,
    Randomized,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundingReport {
    pub method: RoundingMethod,
    /// `λ₂/λ₁` of each `W_m` (0 for a zero matrix).
    pub rank_ratios: Vec<f64>,
    pub trials_attempted: usize,
    pub feasible_trials: usize,
    /// Exact `λ C_BH + (1 − λ) C_P` of the reported beamformers.
    pub best_objective: Option<f64>,
    pub beamformers: Option<Beamformers>,
    pub cost: Option<CostBreakdown>,
    pub constraints: Option<ConstraintCheck>,
    pub sinr_ok: bool,
    pub power_ok: bool,
    pub paper_faithful: bool,
}

impl RoundingReport {
    fn failed(rank_ratios: Vec<f64>, trials: usize, paper_faithful: bool) -> Self {
        Self {
            method: RoundingMethod::Failed,
            rank_ratios,
            trials_attempted: trials,
            feasible_trials: 0,
            best_objective: None,
            beamformers: None,
            cost: None,
            constraints: None,
            sinr_ok: false,
            power_ok: false,
            paper_faithful,
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.method != RoundingMethod::Failed
    }
}

/// What the rounding step needs to know about one time slot.
#[derive(Debug, Clone, Copy)]
pub struct SlotContext<'a> {
    pub channels: &'a [Vec<Complex64>],
    pub bs_count: usize,
    pub antennas_per_bs: usize,
    pub sigma2: f64,
    pub placement: &'a CachePlacement,
    pub popularity: &'a PopularityModel,
    pub qos: &'a QosConfig,
}

impl<'a> SlotContext<'a> {
    pub fn new(scenario: &'a Scenario, slot: &'a TimeSlot, qos: &'a QosConfig) -> Self {
        Self {
            channels: &slot.channels,
            bs_count: scenario.geometry.bs_count,
            antennas_per_bs: scenario.channel.antennas_per_bs,
            sigma2: scenario.noise_power_w(),
            placement: &scenario.placement,
            popularity: &scenario.popularity,
            qos,
        }
    }

    fn evaluate(&self, vectors: Vec<Vec<Complex64>>) -> Option<Candidate> {
        let bf = Beamformers::new(self.bs_count, self.antennas_per_bs, vectors).ok()?;
        let check = check_constraints(&bf, self.channels, self.sigma2, self.qos);
        if !check.satisfied(FEASIBILITY_TOL) {
            return None;
        }
        let cost = network_cost(&bf, self.placement, self.popularity, self.qos);
        Some(Candidate { objective: cost.total, beamformers: bf, cost, check })
    }
}

struct Candidate {
    objective: f64,
    beamformers: Beamformers,
    cost: CostBreakdown,
    check: ConstraintCheck,
}

fn rank_ratio(values: &[f64]) -> f64 {
    match values {
        [] => 0.0,
        [l1, rest @ ..] if *l1 > 0.0 => rest.first().map_or(0.0, |l2| l2.max(0.0) / l1),
        _ => 0.0,
    }
}

fn normalize_phase(v: &mut [Complex64]) {
    let Some(pivot) = v.iter().copied().max_by(|a, b| a.norm_sqr().total_cmp(&b.norm_sqr())) else {
        return;
    };
    if pivot.norm() > 0.0 {
        let rot = pivot.conj() / pivot.norm();
        for x in v.iter_mut() {
            *x *= rot;
        }
    }
}

/// `sqrt(λ₁)·u₁` when `λ₂/λ₁ ≤ rank_tol`, phase-normalised so the largest
/// entry is real and nonnegative. A zero matrix yields the zero vector.
pub fn extract_rank1(w: &CMatrix, rank_tol: f64, psd_tol: f64) -> Result<Option<Vec<Complex64>>> {
    let (values, vectors) = hermitian_eigen(w);
    let l1 = values.first().copied().unwrap_or(0.0);
    let lmin = values.last().copied().unwrap_or(0.0);
    if lmin < -psd_tol * l1.abs().max(f64::MIN_POSITIVE) && lmin < -f64::MIN_POSITIVE {
        return Err(Error::NotPsd(lmin));
    }
    if l1 <= 0.0 {
        return Ok(Some(vec![Complex64::new(0.0, 0.0); w.nrows()]));
    }
    if rank_ratio(&values) > rank_tol {
        return Ok(None);
    }
    let scale = l1.sqrt();
    let mut v: Vec<Complex64> = vectors[0].iter().map(|x| x * scale).collect();
    normalize_phase(&mut v);
    Ok(Some(v))
}

/// Smallest powers giving every user exactly its SINR target along fixed
/// directions, or `None` when no nonnegative solution exists.
pub fn balance_powers(
    directions: &[Vec<Complex64>],
    channels: &[Vec<Complex64>],
    targets: &[f64],
    sigma2: f64,
) -> Option<Vec<f64>> {
    let m = directions.len();
    let mut a = DMatrix::<f64>::zeros(m, m);
    for k in 0..m {
        for (j, u) in directions.iter().enumerate() {
            let g = inner(&channels[k], u).norm_sqr();
            a[(k, j)] = if j == k { g / targets[k] } else { -g };
        }
    }
    let b = DVector::from_element(m, sigma2);
    let p = a.lu().solve(&b)?;
    // A is a Z-matrix, so a positive solution certifies it is an M-matrix
    // and that p is the componentwise minimum
    (p.iter().all(|&x| x > 0.0 && x.is_finite())).then(|| p.iter().copied().collect())
}

fn unit(v: &[Complex64]) -> Option<Vec<Complex64>> {
    let n = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    (n > 0.0 && n.is_finite()).then(|| v.iter().map(|x| x / n).collect())
}

fn scaled(directions: &[Vec<Complex64>], powers: &[f64]) -> Vec<Vec<Complex64>> {
    directions.iter().zip(powers).map(|(u, p)| u.iter().map(|x| x * p.sqrt()).collect()).collect()
}

fn balanced_candidate(ctx: &SlotContext<'_>, raw: &[Vec<Complex64>]) -> Option<Candidate> {
    let dirs = raw.iter().map(|v| unit(v)).collect::<Option<Vec<_>>>()?;
    let powers = balance_powers(&dirs, ctx.channels, &ctx.qos.sinr_targets, ctx.sigma2)?;
    ctx.evaluate(scaled(&dirs, &powers))
}

fn report(method: RoundingMethod, ratios: Vec<f64>, trials: usize, feasible: usize, best: Candidate, faithful: bool) -> RoundingReport {
    RoundingReport {
        method,
        rank_ratios: ratios,
        trials_attempted: trials,
        feasible_trials: feasible,
        best_objective: Some(best.objective),
        sinr_ok: best.check.min_sinr_ratio >= 1.0 - FEASIBILITY_TOL,
        power_ok: best.check.max_power_ratio <= 1.0 + FEASIBILITY_TOL,
        constraints: Some(best.check),
        beamformers: Some(best.beamformers),
        cost: Some(best.cost),
        paper_faithful: faithful,
    }
}

/// Gaussian randomisation. Trial `t` draws from its own stream derived from
/// `seed`, so the outcome does not depend on evaluation order and the first
/// `N` trials are the same whatever the trial budget.
pub fn gaussian_randomize(
    w_set: &[CMatrix],
    ctx: &SlotContext<'_>,
    config: &RoundingConfig,
    seed: u64,
) -> Result<RoundingReport> {
    config.validate()?;
    if w_set.len() != ctx.channels.len() {
        return Err(Error::Dimension(format!("{} covariances for {} users", w_set.len(), ctx.channels.len())));
    }
    let ratios: Vec<f64> = w_set.iter().map(|w| rank_ratio(&hermitian_eigen(w).0)).collect();
    let roots: Vec<CMatrix> = w_set.iter().map(hermitian_sqrt).collect();
    let n = ctx.bs_count * ctx.antennas_per_bs;

    let trial = |t: usize| -> Option<(f64, usize, Candidate)> {
        let mut rng = rng_from_id(derive_seed(seed, labels::TRIAL, t as u64));
        let raw: Vec<Vec<Complex64>> = roots
            .iter()
            .map(|s| {
                let xi = DVector::from_iterator(n, (0..n).map(|_| complex_normal(&mut rng)));
                (s * xi).iter().copied().collect()
            })
            .collect();
        let cand = if config.paper_faithful { ctx.evaluate(raw) } else { balanced_candidate(ctx, &raw) }?;
        Some((cand.objective, t, cand))
    };
    let outcomes: Vec<(f64, usize, Candidate)> = (0..config.trials).into_par_iter().filter_map(trial).collect();
    let feasible = outcomes.len();
    let best = outcomes
        .into_iter()
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, _, c)| c);
    Ok(match best {
        Some(best) => report(RoundingMethod::Randomized, ratios, config.trials, feasible, best, config.paper_faithful),
        None => RoundingReport::failed(ratios, config.trials, config.paper_faithful),
    })
}

/// Eigen-extraction when every `W_m` is rank-one, Gaussian randomisation
/// otherwise (or when the extracted vectors miss a constraint).
pub fn round_solution(
    relaxed: &RelaxedSolution,
    ctx: &SlotContext<'_>,
    config: &RoundingConfig,
    seed: u64,
) -> Result<RoundingReport> {
    config.validate()?;
    if !relaxed.is_feasible() || relaxed.w.is_empty() {
        return Ok(RoundingReport::failed(Vec::new(), 0, config.paper_faithful));
    }
    let ratios: Vec<f64> = relaxed.w.iter().map(|w| rank_ratio(&hermitian_eigen(w).0)).collect();
    let extracted = relaxed
        .w
        .iter()
        .map(|w| extract_rank1(w, config.rank_tol, config.psd_tol))
        .collect::<Result<Vec<_>>>()?;
    if let Some(vectors) = extracted.into_iter().collect::<Option<Vec<_>>>() {
        let cand = if config.paper_faithful { ctx.evaluate(vectors) } else { balanced_candidate(ctx, &vectors) };
        if let Some(best) = cand {
            return Ok(report(RoundingMethod::Eigen, ratios, 0, 0, best, config.paper_faithful));
        }
        log::debug!("rank-one extraction missed a constraint, falling back to randomisation");
    }
    gaussian_randomize(&relaxed.w, ctx, config, seed)
}
