//! Exact evaluation of SINR, file coverage, and the weighted network cost.
//!
//! Nothing here is relaxed: a BS serves a user when its beamformer block
//! carries more than `serve_threshold` watts, and a file is covered when the
//! cached fractions at the serving BSs add up to one.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{CachePlacement, PopularityModel};

/// Default serving threshold relative to `P_max`.
pub const DEFAULT_SERVE_THRESHOLD_REL: f64 = 1e-4;
/// Per-BS power cap in watts. The published link budget leaves every
/// 12-user slot infeasible at much smaller caps.
pub const DEFAULT_P_MAX: f64 = 100.0;

/// Per-user stacked beamformers `w_m = [w_{1,m}; ...; w_{L,m}]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Beamformers {
    pub bs_count: usize,
    pub antennas_per_bs: usize,
    pub vectors: Vec<Vec<Complex64>>,
}

impl Beamformers {
    pub fn new(bs_count: usize, antennas_per_bs: usize, vectors: Vec<Vec<Complex64>>) -> Result<Self> {
        let dim = bs_count * antennas_per_bs;
        for (m, w) in vectors.iter().enumerate() {
            if w.len() != dim {
                return Err(Error::Dimension(format!(
                    "beamformer {m} has {} entries, expected {dim}",
                    w.len()
                )));
            }
            if w.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
                return Err(Error::Dimension(format!("beamformer {m} has non-finite entries")));
            }
        }
        Ok(Self { bs_count, antennas_per_bs, vectors })
    }

    pub fn zeros(users: usize, bs_count: usize, antennas_per_bs: usize) -> Self {
        Self {
            bs_count,
            antennas_per_bs,
            vectors: vec![vec![Complex64::new(0.0, 0.0); bs_count * antennas_per_bs]; users],
        }
    }

    pub fn user_count(&self) -> usize {
        self.vectors.len()
    }

    pub fn block(&self, m: usize, l: usize) -> &[Complex64] {
        let n = self.antennas_per_bs;
        &self.vectors[m][l * n..(l + 1) * n]
    }

    /// `‖w_{l,m}‖²`
    pub fn block_power(&self, m: usize, l: usize) -> f64 {
        self.block(m, l).iter().map(|x| x.norm_sqr()).sum()
    }

    pub fn user_power(&self, m: usize) -> f64 {
        self.vectors[m].iter().map(|x| x.norm_sqr()).sum()
    }

    pub fn total_power(&self) -> f64 {
        (0..self.user_count()).map(|m| self.user_power(m)).sum()
    }

    /// Transmit power of BS `l` summed over users.
    pub fn bs_power(&self, l: usize) -> f64 {
        (0..self.user_count()).map(|m| self.block_power(m, l)).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QosConfig {
    /// Linear SINR targets `γ_m`.
    pub sinr_targets: Vec<f64>,
    /// Per-BS power cap in watts.
    pub p_max: f64,
    pub lambda: f64,
    /// A BS serves a user when its block power exceeds this (watts).
    pub serve_threshold: f64,
}

impl QosConfig {
    pub fn uniform(users: usize, gamma_db: f64, p_max: f64, lambda: f64) -> Self {
        Self {
            sinr_targets: vec![db_to_linear(gamma_db); users],
            p_max,
            lambda,
            serve_threshold: DEFAULT_SERVE_THRESHOLD_REL * p_max,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sinr_targets.iter().any(|&g| !(g > 0.0 && g.is_finite())) {
            return Err(Error::InvalidConfig("SINR targets must be positive".into()));
        }
        if !(self.p_max > 0.0 && self.p_max.is_finite()) {
            return Err(Error::InvalidConfig("P_max must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidConfig(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        if !(self.serve_threshold > 0.0) {
            return Err(Error::InvalidConfig("serving threshold must be positive".into()));
        }
        Ok(())
    }

    pub fn rates(&self) -> Vec<f64> {
        self.sinr_targets.iter().map(|&g| rate_of(g)).collect()
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub backhaul_cost: f64,
    pub power_cost: f64,
    pub total: f64,
    pub lambda: f64,
    /// `coverage[m][f]`: cached fraction of file `f` reachable by user `m`.
    pub coverage: Vec<Vec<f64>>,
    /// `missing[m][f]`: portion `X_{m,f}` that must come over the backhaul.
    pub missing: Vec<Vec<f64>>,
    /// `indicator[m][f]`: 1 when the serving caches cannot deliver the file.
    pub indicator: Vec<Vec<u8>>,
}

/// `h^H w`
pub fn inner(h: &[Complex64], w: &[Complex64]) -> Complex64 {
    h.iter().zip(w).map(|(a, b)| a.conj() * b).sum()
}

pub fn sinr_of(m: usize, beamformers: &Beamformers, channels: &[Vec<Complex64>], sigma2: f64) -> f64 {
    let h = &channels[m];
    let signal = inner(h, &beamformers.vectors[m]).norm_sqr();
    let interference: f64 = beamformers
        .vectors
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != m)
        .map(|(_, w)| inner(h, w).norm_sqr())
        .sum();
    signal / (interference + sigma2)
}

/// Achievable rate `log2(1 + γ)` in bits per channel use.
pub fn rate_of(gamma: f64) -> f64 {
    (1.0 + gamma).log2()
}

/// Cached fraction of file `f` held by the BSs that serve user `m`.
pub fn coverage(
    f: usize,
    m: usize,
    beamformers: &Beamformers,
    placement: &CachePlacement,
    serve_threshold: f64,
) -> f64 {
    placement.delta[f]
        .iter()
        .enumerate()
        .filter(|&(l, _)| beamformers.block_power(m, l) > serve_threshold)
        .map(|(_, &d)| d)
        .sum()
}

fn coverage_table(beamformers: &Beamformers, placement: &CachePlacement, threshold: f64) -> Vec<Vec<f64>> {
    (0..beamformers.user_count())
        .map(|m| {
            (0..placement.file_count())
                .map(|f| coverage(f, m, beamformers, placement, threshold))
                .collect()
        })
        .collect()
}

/// Backhaul cost written as `Σ Z_f {1 - coverage}^+ R_m`.
pub fn backhaul_max_form(coverage: &[Vec<f64>], popularity: &PopularityModel, rates: &[f64]) -> f64 {
    let mut total = 0.0;
    for (m, row) in coverage.iter().enumerate() {
        for (f, &c) in row.iter().enumerate() {
            total += popularity.probabilities[f] * (1.0 - c).max(0.0) * rates[m];
        }
    }
    total
}

/// Backhaul cost written as `Σ Z_f 1_{m,f} X_{m,f} R_m`.
pub fn backhaul_indicator_form(
    indicator: &[Vec<u8>],
    missing: &[Vec<f64>],
    popularity: &PopularityModel,
    rates: &[f64],
) -> f64 {
    let mut total = 0.0;
    for (m, (ind, miss)) in indicator.iter().zip(missing).enumerate() {
        for (f, (&i, &x)) in ind.iter().zip(miss).enumerate() {
            total += popularity.probabilities[f] * (f64::from(i) * x) * rates[m];
        }
    }
    total
}

pub fn network_cost(
    beamformers: &Beamformers,
    placement: &CachePlacement,
    popularity: &PopularityModel,
    qos: &QosConfig,
) -> CostBreakdown {
    let coverage = coverage_table(beamformers, placement, qos.serve_threshold);
    let missing: Vec<Vec<f64>> = coverage
        .iter()
        .map(|row| row.iter().map(|&c| (1.0 - c).max(0.0)).collect())
        .collect();
    let indicator: Vec<Vec<u8>> = coverage
        .iter()
        .map(|row| row.iter().map(|&c| u8::from(c < 1.0)).collect())
        .collect();
    let rates = qos.rates();
    let backhaul_cost = backhaul_indicator_form(&indicator, &missing, popularity, &rates);
    let power_cost = beamformers.total_power();
    CostBreakdown {
        backhaul_cost,
        power_cost,
        total: qos.lambda * backhaul_cost + (1.0 - qos.lambda) * power_cost,
        lambda: qos.lambda,
        coverage,
        missing,
        indicator,
    }
}

/// The objective of the relaxed problem evaluated at rank-one beamformers:
/// coverage is measured with the `log(‖w_{l,m}‖² + θ)` surrogate.
pub fn smoothed_objective(
    beamformers: &Beamformers,
    placement: &CachePlacement,
    popularity: &PopularityModel,
    qos: &QosConfig,
    theta: f64,
) -> f64 {
    let rates = qos.rates();
    let mut backhaul = 0.0;
    for (m, &rate) in rates.iter().enumerate().take(beamformers.user_count()) {
        let logs: Vec<f64> = (0..beamformers.bs_count)
            .map(|l| (beamformers.block_power(m, l) + theta).ln())
            .collect();
        for (f, row) in placement.delta.iter().enumerate() {
            let smooth: f64 = row.iter().zip(&logs).map(|(d, g)| d * g).sum();
            backhaul += popularity.probabilities[f] * (1.0 - smooth).max(0.0) * rate;
        }
    }
    qos.lambda * backhaul + (1.0 - qos.lambda) * beamformers.total_power()
}

/// Worst-case constraint ratios: `min_m SINR_m/γ_m` and `max_l P_l/P_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintCheck {
    pub min_sinr_ratio: f64,
    pub max_power_ratio: f64,
}

impl ConstraintCheck {
    pub fn satisfied(&self, rel_tol: f64) -> bool {
        self.min_sinr_ratio >= 1.0 - rel_tol && self.max_power_ratio <= 1.0 + rel_tol
    }
}

pub fn check_constraints(
    beamformers: &Beamformers,
    channels: &[Vec<Complex64>],
    sigma2: f64,
    qos: &QosConfig,
) -> ConstraintCheck {
    let min_sinr_ratio = (0..beamformers.user_count())
        .map(|m| sinr_of(m, beamformers, channels, sigma2) / qos.sinr_targets[m])
        .fold(f64::INFINITY, f64::min);
    let max_power_ratio = (0..beamformers.bs_count)
        .map(|l| beamformers.bs_power(l) / qos.p_max)
        .fold(0.0, f64::max);
    ConstraintCheck { min_sinr_ratio, max_power_ratio }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedStreams;
    use crate::scenario::{complex_normal, place_caches, zipf_popularity, CachingMode};
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn sinr_single_user_matched_beam() {
        let h = vec![c(1.0, 0.5), c(-0.3, 2.0)];
        let norm2: f64 = h.iter().map(|x| x.norm_sqr()).sum();
        let p = 0.7;
        let w: Vec<_> = h.iter().map(|x| x * (p / norm2).sqrt()).collect();
        let bf = Beamformers::new(1, 2, vec![w]).unwrap();
        let sigma2 = 0.01;
        let got = sinr_of(0, &bf, &[h], sigma2);
        assert!((got - p * norm2 / sigma2).abs() <= 1e-9 * got);
    }

    #[test]
    fn sinr_zero_beam_and_orthogonal_users() {
        let channels = vec![vec![c(2.0, 0.0), c(0.0, 0.0)], vec![c(0.0, 0.0), c(0.0, 3.0)]];
        let zero = Beamformers::zeros(2, 1, 2);
        assert_eq!(sinr_of(0, &zero, &channels, 1.0), 0.0);

        // Unit-power matched beams along orthogonal channels.
        let bf = Beamformers::new(1, 2, vec![vec![c(1.0, 0.0), c(0.0, 0.0)], vec![c(0.0, 0.0), c(0.0, 1.0)]])
            .unwrap();
        let sigma2 = 0.5;
        assert!((sinr_of(0, &bf, &channels, sigma2) - 4.0 / sigma2).abs() < 1e-12);
        assert!((sinr_of(1, &bf, &channels, sigma2) - 9.0 / sigma2).abs() < 1e-12);
    }

    #[test]
    fn rates() {
        assert_eq!(rate_of(1.0), 1.0);
        assert_eq!(rate_of(0.0), 0.0);
        assert!((rate_of(10.0) - 3.45943).abs() <= 1e-5);
    }

    fn coded_two_bs() -> (CachePlacement, PopularityModel) {
        let pop = zipf_popularity(4, 1.0).unwrap();
        let placement = place_caches(&pop, 2, 1, CachingMode::Coded { fraction: 0.5 }).unwrap();
        (placement, pop)
    }

    #[test]
    fn coverage_examples() {
        let (placement, _) = coded_two_bs();
        let both = Beamformers::new(2, 1, vec![vec![c(0.1, 0.0), c(0.0, 0.1)]]).unwrap();
        assert_eq!(coverage(0, 0, &both, &placement, 1e-6), 1.0);

        let none = Beamformers::zeros(1, 2, 1);
        assert_eq!(coverage(0, 0, &none, &placement, 1e-6), 0.0);

        let one = Beamformers::new(2, 1, vec![vec![c(0.1, 0.0), c(0.0, 0.0)]]).unwrap();
        assert_eq!(coverage(1, 0, &one, &placement, 1e-6), 0.5);
        let pop = zipf_popularity(4, 1.0).unwrap();
        let qos = QosConfig::uniform(1, 10.0, 1.0, 0.5);
        let cost = network_cost(&one, &placement, &pop, &QosConfig { serve_threshold: 1e-6, ..qos });
        assert_eq!(cost.missing[0][1], 0.5);
        assert_eq!(cost.indicator[0][1], 1);
        assert_eq!(cost.missing[0][2], 1.0);
    }

    #[test]
    fn no_caching_backhaul_level() {
        let pop = zipf_popularity(20, 1.2).unwrap();
        let placement = CachePlacement::empty(20, 7);
        let mut rng = SeedStreams::new(1).rng("bf", 0);
        let vectors = (0..12).map(|_| (0..14).map(|_| complex_normal(&mut rng)).collect()).collect();
        let bf = Beamformers::new(7, 2, vectors).unwrap();
        let qos = QosConfig::uniform(12, 10.0, 1.0, 0.7);
        let cost = network_cost(&bf, &placement, &pop, &qos);
        assert!((cost.backhaul_cost - 12.0 * 11f64.log2()).abs() <= 1e-9);
        assert!((cost.backhaul_cost - 41.5132).abs() <= 1e-3);
    }

    #[test]
    fn full_coverage_and_lambda_zero() {
        let pop = zipf_popularity(3, 1.0).unwrap();
        let placement = place_caches(&pop, 1, 3, CachingMode::Uncoded).unwrap();
        let bf = Beamformers::new(1, 1, vec![vec![c(0.3, 0.4)]]).unwrap();
        let qos = QosConfig::uniform(1, 10.0, 1.0, 0.0);
        let cost = network_cost(&bf, &placement, &pop, &qos);
        assert_eq!(cost.backhaul_cost, 0.0);
        assert_eq!(cost.total, cost.power_cost);
        assert!((cost.power_cost - 0.25).abs() < 1e-15);
    }

    #[test]
    fn phase_rotation_leaves_costs_unchanged() {
        let mut rng = SeedStreams::new(4).rng("bf", 0);
        let channels: Vec<Vec<Complex64>> =
            (0..3).map(|_| (0..4).map(|_| complex_normal(&mut rng)).collect()).collect();
        let vectors: Vec<Vec<Complex64>> =
            (0..3).map(|_| (0..4).map(|_| complex_normal(&mut rng) * 0.1).collect()).collect();
        let bf = Beamformers::new(2, 2, vectors.clone()).unwrap();
        let rotated = Beamformers::new(
            2,
            2,
            vectors
                .iter()
                .enumerate()
                .map(|(m, w)| w.iter().map(|x| x * Complex64::from_polar(1.0, 0.7 * m as f64 + 0.3)).collect())
                .collect(),
        )
        .unwrap();
        for m in 0..3 {
            let a = sinr_of(m, &bf, &channels, 0.1);
            let b = sinr_of(m, &rotated, &channels, 0.1);
            assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        }
        let pop = zipf_popularity(5, 1.0).unwrap();
        let placement = place_caches(&pop, 2, 2, CachingMode::Coded { fraction: 0.5 }).unwrap();
        let qos = QosConfig::uniform(3, 10.0, 1.0, 0.5);
        let a = network_cost(&bf, &placement, &pop, &qos);
        let b = network_cost(&rotated, &placement, &pop, &qos);
        assert_eq!(a.backhaul_cost, b.backhaul_cost);
        assert!((a.power_cost - b.power_cost).abs() <= 1e-14);
    }

    fn random_instance(seed: u64) -> (Beamformers, CachePlacement, PopularityModel, QosConfig) {
        use rand::Rng;
        let streams = SeedStreams::new(seed);
        let mut rng = streams.rng("instance", 0);
        let (bs, nt, users, files) = (3, 2, 4, 6);
        let pop = zipf_popularity(files, rng.random_range(0.0..2.0)).unwrap();
        let delta = (0..files).map(|_| (0..bs).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
        let placement = CachePlacement { delta, cache_size: 0, mode: CachingMode::Coded { fraction: 0.5 }, distinct_parity: true };
        let vectors = (0..users)
            .map(|_| {
                (0..bs * nt)
                    .map(|_| if rng.random_bool(0.3) { c(0.0, 0.0) } else { complex_normal(&mut rng) * 0.01 })
                    .collect()
            })
            .collect();
        let bf = Beamformers::new(bs, nt, vectors).unwrap();
        let qos = QosConfig::uniform(users, rng.random_range(0.0..15.0), 1.0, rng.random_range(0.0..1.0));
        (bf, placement, pop, qos)
    }

    proptest! {
        #[test]
        fn indicator_and_max_forms_agree(seed in any::<u64>()) {
            let (bf, placement, pop, qos) = random_instance(seed);
            let cost = network_cost(&bf, &placement, &pop, &qos);
            let rates = qos.rates();
            let max_form = backhaul_max_form(&cost.coverage, &pop, &rates);
            prop_assert_eq!(max_form, cost.backhaul_cost);
            prop_assert!(cost.missing.iter().flatten().all(|x| (0.0..=1.0).contains(x)));
            prop_assert_eq!(cost.total, qos.lambda * cost.backhaul_cost + (1.0 - qos.lambda) * cost.power_cost);
            prop_assert!(cost.backhaul_cost <= rates.iter().sum::<f64>() * (1.0 + 1e-12));
        }

        #[test]
        fn more_caching_never_raises_backhaul(seed in any::<u64>(), f in 0usize..6, l in 0usize..3, bump in 0.0f64..1.0) {
            let (bf, placement, pop, qos) = random_instance(seed);
            let before = network_cost(&bf, &placement, &pop, &qos).backhaul_cost;
            let mut bigger = placement.clone();
            bigger.delta[f][l] = (bigger.delta[f][l] + bump).min(1.0);
            let after = network_cost(&bf, &bigger, &pop, &qos).backhaul_cost;
            prop_assert!(after <= before + 1e-12);
        }
    }
}
