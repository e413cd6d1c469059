//! Independent checks with known answers: the closed-form single-user power,
//! SDPs built backwards from a chosen optimal primal-dual pair, and a brute
//! force grid search over tiny 2×2 problems. The grid search reads the raw
//! problem triplets and shares nothing with the solver.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conic::{self, ConeLayout, ConicProblem, Row, Sense, SolveStatus, SolverSettings, FORMAT_TAG, SVEC_CONVENTION};
use crate::costmodel::{check_constraints, QosConfig, DEFAULT_P_MAX};
use crate::error::{Error, Result};
use crate::relaxation::{mm_optimize, LiftedScenario, RelaxationConfig, DEFAULT_THETA};
use crate::rng::{labels, SeedStreams};
use crate::rounding::{round_solution, RoundingConfig, SlotContext};
use crate::scenario::{zipf_popularity, CachePlacement, ChannelParams, GeometryConfig, Scenario};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub case: String,
    pub expected: f64,
    pub observed: f64,
    pub abs_error: f64,
    pub rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl OracleReport {
    /// Passes when the relative error `|obs − exp| / max(|exp|, 1)` is within
    /// `tolerance`.
    pub fn compare(case: impl Into<String>, expected: f64, observed: f64, tolerance: f64) -> Self {
        let abs_error = (observed - expected).abs();
        let rel_error = abs_error / expected.abs().max(1.0);
        Self { case: case.into(), expected, observed, abs_error, rel_error, tolerance, passed: rel_error <= tolerance }
    }

    /// Passes when `|obs − exp| / |exp| ≤ tolerance` (for small positive targets).
    pub fn relative(case: impl Into<String>, expected: f64, observed: f64, tolerance: f64) -> Self {
        let abs_error = (observed - expected).abs();
        let rel_error = if expected != 0.0 { abs_error / expected.abs() } else { abs_error };
        Self { case: case.into(), expected, observed, abs_error, rel_error, tolerance, passed: rel_error <= tolerance }
    }

    /// Passes when `observed ≤ tolerance` (residual-style checks against 0).
    pub fn at_most(case: impl Into<String>, observed: f64, tolerance: f64) -> Self {
        Self {
            case: case.into(),
            expected: 0.0,
            observed,
            abs_error: observed.abs(),
            rel_error: observed.abs(),
            tolerance,
            passed: observed.is_finite() && observed <= tolerance,
        }
    }

    /// A yes/no check (e.g. an expected infeasibility verdict).
    pub fn flag(case: impl Into<String>, passed: bool) -> Self {
        let v = if passed { 0.0 } else { 1.0 };
        Self { case: case.into(), expected: 0.0, observed: v, abs_error: v, rel_error: v, tolerance: 0.0, passed }
    }
}

impl fmt::Display for OracleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<4} {:<36} expected {:>14.7e}  observed {:>14.7e}  err {:>9.2e}  tol {:>8.1e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.case,
            self.expected,
            self.observed,
            self.rel_error,
            self.tolerance
        )
    }
}

/// Minimal transmit power for one user alone: `γ σ² / ‖h‖²`.
pub fn single_user_power_oracle(h: &[Complex64], gamma: f64, sigma2: f64) -> Result<f64> {
    let norm2: f64 = h.iter().map(|x| x.norm_sqr()).sum();
    if !(norm2 > 0.0) {
        return Err(Error::Infeasible("zero channel cannot reach any SINR target".into()));
    }
    Ok(gamma * sigma2 / norm2)
}

/// Matched-filter beamformer `sqrt(p*)·h/‖h‖` attaining the oracle power.
pub fn single_user_beamformer(h: &[Complex64], gamma: f64, sigma2: f64) -> Result<Vec<Complex64>> {
    let p = single_user_power_oracle(h, gamma, sigma2)?;
    let norm = h.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    Ok(h.iter().map(|x| x * (p.sqrt() / norm)).collect())
}

/// Shape of a generated SDP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpDims {
    pub nonnegative: usize,
    pub psd: Vec<usize>,
    pub equalities: usize,
    pub inequalities: usize,
}

impl SdpDims {
    fn var_count(&self) -> usize {
        self.nonnegative + self.psd.iter().map(|n| n * (n + 1) / 2).sum::<usize>()
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let nonnegative = rng.random_range(0..=4);
        let blocks = rng.random_range(1..=3);
        let psd: Vec<usize> = (0..blocks).map(|_| rng.random_range(1..=6)).collect();
        let mut dims = Self { nonnegative, psd, equalities: 0, inequalities: 0 };
        let n = dims.var_count();
        dims.equalities = rng.random_range(1..=n.saturating_sub(1).clamp(1, 10));
        dims.inequalities = rng.random_range(0..=3).min(n - dims.equalities);
        dims
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnownSdp {
    pub problem: ConicProblem,
    pub optimum: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

fn random_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
    g.qr().q()
}

fn pack(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for j in 0..n {
        for i in j..n {
            out.push(if i == j { m[(i, j)] } else { m[(i, j)] * std::f64::consts::SQRT_2 });
        }
    }
    out
}

/// Builds an SDP whose optimum is known: a strictly complementary pair
/// `(x*, z*)` and multipliers `y*` are drawn first, then `b = A x*` (plus
/// slack on inactive inequalities) and `c = Aᵀ y* + z*`.
pub fn random_sdp_with_known_optimum<R: Rng + ?Sized>(dims: &SdpDims, rng: &mut R) -> Result<KnownSdp> {
    let n = dims.var_count();
    let m = dims.equalities + dims.inequalities;
    if n == 0 || m == 0 {
        return Err(Error::InvalidConfig("generated SDP needs at least one variable and one row".into()));
    }
    if dims.psd.iter().any(|&k| k == 0 || k > 10) {
        return Err(Error::InvalidConfig("PSD blocks must have order 1..=10".into()));
    }
    if m > n {
        return Err(Error::InvalidConfig(format!("{m} rows for {n} variables")));
    }
    let mut x = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n);
    for _ in 0..dims.nonnegative {
        if rng.random_bool(0.5) {
            x.push(rng.random_range(0.5..2.0));
            z.push(0.0);
        } else {
            x.push(0.0);
            z.push(rng.random_range(0.5..2.0));
        }
    }
    for &k in &dims.psd {
        let q = random_orthogonal(k, rng);
        let rank = rng.random_range(0..=k);
        let xd = DVector::from_fn(k, |i, _| if i < rank { rng.random_range(0.5..2.0) } else { 0.0 });
        let zd = DVector::from_fn(k, |i, _| if i >= rank { rng.random_range(0.5..2.0) } else { 0.0 });
        x.extend(pack(&(&q * DMatrix::from_diagonal(&xd) * q.transpose())));
        z.extend(pack(&(&q * DMatrix::from_diagonal(&zd) * q.transpose())));
    }
    let a_dense = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
    let ax = &a_dense * DVector::from_column_slice(&x);
    let mut rows = Vec::with_capacity(m);
    let mut y = Vec::with_capacity(m);
    for i in 0..m {
        if i < dims.equalities {
            rows.push(Row { sense: Sense::Eq, rhs: ax[i] });
            y.push(rng.random_range(-1.0..1.0));
            continue;
        }
        let sense = if rng.random_bool(0.5) { Sense::Le } else { Sense::Ge };
        let sign = if sense == Sense::Ge { 1.0 } else { -1.0 };
        if rng.random_bool(0.5) {
            // active: positive multiplier of the right sign
            rows.push(Row { sense, rhs: ax[i] });
            y.push(sign * rng.random_range(0.5..1.5));
        } else {
            // inactive: slack away from the bound, zero multiplier
            let slack = rng.random_range(0.5..1.5);
            rows.push(Row { sense, rhs: ax[i] - sign * slack });
            y.push(0.0);
        }
    }
    let aty = a_dense.transpose() * DVector::from_column_slice(&y);
    let objective: Vec<f64> = (0..n).map(|j| aty[j] + z[j]).collect();
    let optimum = objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    let mut a = Vec::with_capacity(m * n);
    for i in 0..m {
        for j in 0..n {
            a.push((i, j, a_dense[(i, j)]));
        }
    }
    let problem = ConicProblem {
        format: FORMAT_TAG.to_string(),
        svec: SVEC_CONVENTION.to_string(),
        cones: ConeLayout { nonnegative: dims.nonnegative, psd: dims.psd.clone() },
        objective,
        objective_offset: 0.0,
        rows,
        a,
    };
    Ok(KnownSdp { problem, optimum, x, y })
}

/// Grid search settings for [`grid_check_tiny_sdp`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub step: f64,
    pub range: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { step: 1e-2, range: 3.0 }
    }
}

impl GridSpec {
    /// Admissible disagreement between the grid optimum and the true one.
    pub fn tolerance(&self, problem: &ConicProblem) -> f64 {
        let c: f64 = problem.objective.iter().map(|v| v.abs()).sum();
        4.0 * self.step * (1.0 + c)
    }
}

/// Enumerates `W = [[a, b], [b, c]]` with `a, c ∈ [0, range]`, `b² ≤ ac` on
/// a grid. Equalities hold to within half a grid cell. Returns the best
/// objective found, `None` when no grid point is feasible.
pub fn grid_check_tiny_sdp(problem: &ConicProblem, grid: &GridSpec) -> Result<Option<f64>> {
    Ok(grid_search(problem, grid)?.map(|(obj, _)| obj))
}

/// Grid optimum and its `(a, b, c)`.
fn grid_search(problem: &ConicProblem, grid: &GridSpec) -> Result<Option<(f64, [f64; 3])>> {
    if problem.cones.nonnegative != 0 || problem.cones.psd != [2] {
        return Err(Error::UnsupportedShape("grid check needs exactly one 2x2 PSD block".into()));
    }
    if problem.rows.len() > 3 {
        return Err(Error::UnsupportedShape(format!("{} rows (at most 3)", problem.rows.len())));
    }
    if !(grid.step > 0.0 && grid.range > 0.0) {
        return Err(Error::InvalidConfig("grid step and range must be positive".into()));
    }
    let mut coef = vec![[0.0f64; 3]; problem.rows.len()];
    for &(r, col, v) in &problem.a {
        if col >= 3 {
            return Err(Error::UnsupportedShape("triplet outside the 2x2 block".into()));
        }
        coef[r][col] += v;
    }
    let eq_slack: Vec<f64> =
        coef.iter().map(|a| 0.5 * grid.step * (a[0].abs() + std::f64::consts::SQRT_2 * a[1].abs() + a[2].abs())).collect();
    let cvec = &problem.objective;
    let steps = (grid.range / grid.step).round() as i64;
    let mut best: Option<(f64, [f64; 3])> = None;
    for ia in 0..=steps {
        let a = ia as f64 * grid.step;
        for ic in 0..=steps {
            let c = ic as f64 * grid.step;
            let bmax = ((a * c).sqrt() / grid.step + 1e-9).floor() as i64;
            for ib in -bmax..=bmax {
                let b = ib as f64 * grid.step;
                let v = [a, std::f64::consts::SQRT_2 * b, c];
                let feasible = problem.rows.iter().zip(&coef).zip(&eq_slack).all(|((row, k), &slack)| {
                    let act = k[0] * v[0] + k[1] * v[1] + k[2] * v[2];
                    match row.sense {
                        Sense::Le => act <= row.rhs,
                        Sense::Ge => act >= row.rhs,
                        Sense::Eq => (act - row.rhs).abs() <= slack,
                    }
                });
                if feasible {
                    let obj = cvec[0] * v[0] + cvec[1] * v[1] + cvec[2] * v[2] + problem.objective_offset;
                    if best.is_none_or(|(bst, _)| obj < bst) {
                        best = Some((obj, [a, b, c]));
                    }
                }
            }
        }
    }
    Ok(best)
}

fn tiny(objective: [f64; 3], offset: f64, rows: &[(Sense, [f64; 3], f64)]) -> ConicProblem {
    let mut a = Vec::new();
    for (r, (_, k, _)) in rows.iter().enumerate() {
        for (j, &v) in k.iter().enumerate() {
            if v != 0.0 {
                a.push((r, j, v));
            }
        }
    }
    ConicProblem {
        format: FORMAT_TAG.to_string(),
        svec: SVEC_CONVENTION.to_string(),
        cones: ConeLayout { nonnegative: 0, psd: vec![2] },
        objective: objective.to_vec(),
        objective_offset: offset,
        rows: rows.iter().map(|&(sense, _, rhs)| Row { sense, rhs }).collect(),
        a,
    }
}

/// Hand-written 2×2 cases: `min tr W, W₁₁ ≥ 1` (optimum 1), `W₁₁ ≤ −1`
/// (infeasible) and `λ_max(diag(1, 2))` written as `W = tI − A`.
pub fn fixed_tiny_sdps() -> Vec<(&'static str, ConicProblem, Option<f64>)> {
    vec![
        ("trace-with-floor", tiny([1.0, 0.0, 1.0], 0.0, &[(Sense::Ge, [1.0, 0.0, 0.0], 1.0)]), Some(1.0)),
        ("negative-diagonal", tiny([1.0, 0.0, 1.0], 0.0, &[(Sense::Le, [1.0, 0.0, 0.0], -1.0)]), None),
        (
            "lambda-max-diag-1-2",
            // t = W₂₂ + 2, W₁₁ − W₂₂ = 1, W₁₂ = 0
            tiny([0.0, 0.0, 1.0], 2.0, &[(Sense::Eq, [1.0, 0.0, -1.0], 1.0), (Sense::Eq, [0.0, 1.0, 0.0], 0.0)]),
            Some(2.0),
        ),
    ]
}

fn random_psd2<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> [f64; 3] {
    let q = random_orthogonal(2, rng);
    let d = DMatrix::from_diagonal(&DVector::from_vec(vec![rng.random_range(lo..hi), rng.random_range(lo..hi)]));
    let m = &q * d * q.transpose();
    [m[(0, 0)], m[(1, 0)] * std::f64::consts::SQRT_2, m[(1, 1)]]
}

/// A random bounded 2×2 problem: positive definite objective, one or two
/// `⟨A, W⟩ ≥ b` rows with `A ≻ 0`, and sometimes a pinned diagonal entry.
/// Draws are kept only when the grid optimum sits well inside the box, so the
/// box itself never decides the answer.
pub fn random_tiny_sdp<R: Rng + ?Sized>(rng: &mut R, grid: &GridSpec) -> Result<ConicProblem> {
    for _ in 0..100 {
        let objective = random_psd2(rng, 0.2, 2.0);
        let mut rows = Vec::new();
        for _ in 0..rng.random_range(1..=2) {
            rows.push((Sense::Ge, random_psd2(rng, 0.3, 2.0), rng.random_range(0.3..1.5)));
        }
        if rng.random_bool(0.5) {
            let k = rng.random_range(0..2) * 2;
            let mut a = [0.0; 3];
            a[k] = 1.0;
            rows.push((Sense::Eq, a, rng.random_range(0.2..1.5)));
        }
        let problem = tiny(objective, 0.0, &rows);
        if let Some((_, [a, _, c])) = grid_search(&problem, grid)? {
            if a <= grid.range - 0.5 && c <= grid.range - 0.5 {
                return Ok(problem);
            }
        }
    }
    Err(Error::Numerical("could not draw a bounded tiny SDP".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationConfig {
    pub seed: u64,
    pub single_user_cases: usize,
    pub sdp_cases: usize,
    pub grid_cases: usize,
    pub grid: GridSpec,
    /// Relative tolerance on the single-user relaxed power.
    pub power_tol: f64,
    /// Objective and KKT tolerance for generated SDPs.
    pub sdp_tol: f64,
    /// Relative SINR slack allowed for rounded single-user beamformers.
    pub sinr_tol: f64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            single_user_cases: 100,
            sdp_cases: 50,
            grid_cases: 20,
            grid: GridSpec::default(),
            power_tol: 1e-5,
            sdp_tol: 1e-7,
            sinr_tol: 1e-8,
        }
    }
}

/// Relaxed power and rounded SINR of one user alone in the default network.
pub fn single_user_suite(config: &ValidationConfig) -> Result<Vec<OracleReport>> {
    let geometry = GeometryConfig { users_per_slot: 1, ..Default::default() };
    let popularity = zipf_popularity(20, 1.2)?;
    let placement = CachePlacement::empty(popularity.file_count, geometry.bs_count);
    let scenario = Scenario::generate(geometry, ChannelParams::default(), popularity, placement, config.seed)?;
    let qos = QosConfig::uniform(1, 10.0, DEFAULT_P_MAX, 0.0);
    let relax = RelaxationConfig::default();
    let rounding = RoundingConfig::default();
    let sigma2 = scenario.noise_power_w();
    let per_case = (0..config.single_user_cases as u64)
        .into_par_iter()
        .map(|i| -> Result<Vec<OracleReport>> {
            let slot = scenario.slot(i)?;
            let h = &slot.channels[0];
            let expected = single_user_power_oracle(h, qos.sinr_targets[0], sigma2)?;
            let lifted = LiftedScenario::from_slot(&scenario, &slot, &qos, DEFAULT_THETA)?;
            let relaxed = mm_optimize(&lifted, &relax)?;
            let mut out = vec![OracleReport::relative(format!("single-user-{i:03}: power"), expected, relaxed.power, config.power_tol)];
            let ctx = SlotContext::new(&scenario, &slot, &qos);
            let rounded = round_solution(&relaxed, &ctx, &rounding, scenario.streams().stream_id(labels::ROUNDING, i))?;
            let shortfall = match &rounded.beamformers {
                Some(bf) => (1.0 - check_constraints(bf, &slot.channels, sigma2, &qos).min_sinr_ratio).max(0.0),
                None => f64::INFINITY,
            };
            out.push(OracleReport::at_most(format!("single-user-{i:03}: sinr shortfall"), shortfall, config.sinr_tol));
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_case.into_iter().flatten().collect())
}

/// Generated SDPs with known optima: objective error and exact KKT residuals.
pub fn known_sdp_suite(config: &ValidationConfig) -> Result<Vec<OracleReport>> {
    let streams = SeedStreams::new(config.seed);
    // KKT residuals of size ε move the objective by roughly ε(‖b‖ + ‖c‖), so
    // certify the objective with some headroom below the residual tolerance
    let settings = SolverSettings { tolerance: config.sdp_tol * 0.01, ..Default::default() };
    let per_case = (0..config.sdp_cases as u64)
        .into_par_iter()
        .map(|i| -> Result<Vec<OracleReport>> {
            let mut rng = streams.rng(labels::ORACLE, i);
            let dims = SdpDims::random(&mut rng);
            let known = random_sdp_with_known_optimum(&dims, &mut rng)?;
            let sol = conic::solve(&known.problem, &settings)?;
            let observed = if sol.status == SolveStatus::Optimal { sol.primal_objective } else { f64::NAN };
            let kkt = conic::kkt_residuals(&known.problem, &sol.x, &sol.y, &sol.s);
            Ok(vec![
                OracleReport::compare(format!("known-sdp-{i:02}: objective"), known.optimum, observed, config.sdp_tol),
                OracleReport::at_most(format!("known-sdp-{i:02}: kkt"), kkt.max(), config.sdp_tol),
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_case.into_iter().flatten().collect())
}

fn grid_report(name: &str, problem: &ConicProblem, grid: &GridSpec, settings: &SolverSettings) -> Result<OracleReport> {
    let best = grid_check_tiny_sdp(problem, grid)?;
    let sol = conic::solve(problem, settings)?;
    Ok(match best {
        Some(g) => {
            let observed = if sol.status == SolveStatus::Optimal { sol.primal_objective } else { f64::NAN };
            let abs_error = (observed - g).abs();
            let tolerance = grid.tolerance(problem);
            OracleReport {
                case: format!("grid-{name}"),
                expected: g,
                observed,
                abs_error,
                rel_error: abs_error,
                tolerance,
                passed: abs_error <= tolerance,
            }
        }
        None => OracleReport::flag(format!("grid-{name}: infeasible"), sol.status == SolveStatus::Infeasible),
    })
}

/// Tiny 2×2 problems compared against exhaustive grid search.
pub fn grid_suite(config: &ValidationConfig) -> Result<Vec<OracleReport>> {
    let settings = SolverSettings::default();
    let mut out: Vec<OracleReport> = fixed_tiny_sdps()
        .iter()
        .map(|(name, p, _)| grid_report(name, p, &config.grid, &settings))
        .collect::<Result<_>>()?;
    let streams = SeedStreams::new(config.seed);
    let random = (0..config.grid_cases as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = streams.rng("grid", i);
            let p = random_tiny_sdp(&mut rng, &config.grid)?;
            grid_report(&format!("random-{i:02}"), &p, &config.grid, &settings)
        })
        .collect::<Result<Vec<_>>>()?;
    out.extend(random);
    Ok(out)
}

/// Every oracle suite in order: single user, known-optimum SDPs, grid.
pub fn run_validation(config: &ValidationConfig) -> Result<Vec<OracleReport>> {
    let mut out = single_user_suite(config)?;
    out.extend(known_sdp_suite(config)?);
    out.extend(grid_suite(config)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_id;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn closed_form_power() {
        assert_eq!(single_user_power_oracle(&[c(1.0)], 1.0, 1.0).unwrap(), 1.0);
        let h = [c(2.0), c(0.0)];
        assert!((single_user_power_oracle(&h, 10.0, 1.0).unwrap() - 2.5).abs() < 1e-15);
        assert!(single_user_power_oracle(&h, 1e-12, 1.0).unwrap() < 1e-12);
        assert!(single_user_power_oracle(&[c(0.0), c(0.0)], 1.0, 1.0).is_err());
        let w = single_user_beamformer(&h, 10.0, 1.0).unwrap();
        assert!((w.iter().map(|x| x.norm_sqr()).sum::<f64>() - 2.5).abs() < 1e-12);
    }

    #[test]
    fn generated_pair_is_optimal_by_construction() {
        let mut rng = rng_from_id(7);
        for _ in 0..20 {
            let dims = SdpDims::random(&mut rng);
            let k = random_sdp_with_known_optimum(&dims, &mut rng).unwrap();
            let s: Vec<f64> = k
                .problem
                .row_activity(&k.x)
                .iter()
                .zip(&k.problem.rows)
                .map(|(a, r)| (a - r.rhs).abs())
                .collect();
            let res = conic::kkt_residuals(&k.problem, &k.x, &k.y, &s);
            assert!(res.max() < 1e-12, "{res:?}");
        }
    }

    #[test]
    fn degenerate_dims_are_rejected() {
        let mut rng = rng_from_id(1);
        let dims = SdpDims { nonnegative: 0, psd: vec![], equalities: 0, inequalities: 0 };
        assert!(random_sdp_with_known_optimum(&dims, &mut rng).is_err());
    }

    #[test]
    fn fixed_grid_cases() {
        let grid = GridSpec::default();
        for (name, p, expected) in fixed_tiny_sdps() {
            let got = grid_check_tiny_sdp(&p, &grid).unwrap();
            match (got, expected) {
                (Some(g), Some(e)) => assert!((g - e).abs() <= grid.step, "{name}: {g}"),
                (None, None) => {}
                other => panic!("{name}: {other:?}"),
            }
        }
    }

    #[test]
    fn grid_rejects_other_shapes() {
        let mut p = fixed_tiny_sdps().remove(0).1;
        p.cones.psd = vec![3];
        assert!(matches!(grid_check_tiny_sdp(&p, &GridSpec::default()), Err(Error::UnsupportedShape(_))));
    }
}
