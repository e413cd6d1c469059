//! Monte-Carlo driver: λ-sweeps over cache modes and sizes, averaged over
//! time slots, and the saturated-backhaul gain table.
//!
//! Every (mode, S) pair reuses the same master seed, so user positions and
//! slot channels are identical across modes and the curves are paired. Slots
//! are evaluated in parallel but reduced in index order, so the output does
//! not depend on the number of threads.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::costmodel::{QosConfig, DEFAULT_P_MAX};
use crate::error::{Error, Result};
use crate::relaxation::{mm_optimize, LiftedScenario, RelaxationConfig, RelaxationStatus, RelaxedSolution, MAX_LAMBDA};
use crate::rng::labels;
use crate::rounding::{round_solution, RoundingConfig, RoundingMethod, RoundingReport, SlotContext};
use crate::scenario::{place_caches, zipf_popularity, CachingMode, ChannelParams, GeometryConfig, Scenario};

/// Cache mode as named in configs and CSV output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeName {
    None,
    Uncoded,
    Coded,
}

impl ModeName {
    pub const ALL: [ModeName; 3] = [ModeName::None, ModeName::Uncoded, ModeName::Coded];

    pub fn as_str(&self) -> &'static str {
        match self {
            ModeName::None => "none",
            ModeName::Uncoded => "uncoded",
            ModeName::Coded => "coded",
        }
    }
}

impl std::fmt::Display for ModeName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModeName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(ModeName::None),
            "uncoded" => Ok(ModeName::Uncoded),
            "coded" => Ok(ModeName::Coded),
            other => Err(Error::InvalidConfig(format!("unknown cache mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Desk,
    Paper,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            other => Err(Error::InvalidConfig(format!("unknown preset {other:?} (desk or paper)"))),
        }
    }
}

pub const DEFAULT_LAMBDAS: [f64; 6] = [0.01, 0.2, 0.4, 0.6, 0.8, 0.999];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub geometry: GeometryConfig,
    pub channel: ChannelParams,
    pub file_count: usize,
    pub zipf_alpha: f64,
    pub coded_fraction: f64,
    pub gamma_db: f64,
    /// Per-BS power cap in watts.
    pub p_max: f64,
    pub cache_sizes: Vec<usize>,
    pub modes: Vec<ModeName>,
    pub lambdas: Vec<f64>,
    pub slots: usize,
    pub seed: u64,
    pub relaxation: RelaxationConfig,
    pub rounding: RoundingConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::paper()
    }
}

impl ExperimentConfig {
    /// Full-size setting: 200-user pool, 100 slots.
    pub fn paper() -> Self {
        Self {
            geometry: GeometryConfig::default(),
            channel: ChannelParams::default(),
            file_count: 20,
            zipf_alpha: 1.2,
            coded_fraction: CachingMode::DEFAULT_CODED_FRACTION,
            gamma_db: 10.0,
            p_max: DEFAULT_P_MAX,
            cache_sizes: vec![3, 6, 9],
            modes: ModeName::ALL.to_vec(),
            lambdas: DEFAULT_LAMBDAS.to_vec(),
            slots: 100,
            seed: 1,
            relaxation: RelaxationConfig::default(),
            rounding: RoundingConfig::default(),
        }
    }

    /// Laptop-scale setting: 60-user pool, 20 slots.
    pub fn desk() -> Self {
        let mut c = Self::paper();
        c.geometry.user_pool_size = 60;
        c.slots = 20;
        c
    }

    pub fn preset(p: Preset) -> Self {
        match p {
            Preset::Desk => Self::desk(),
            Preset::Paper => Self::paper(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.channel.validate()?;
        self.relaxation.validate()?;
        self.rounding.validate()?;
        if self.slots == 0 {
            return Err(Error::InvalidConfig("slots must be at least 1".into()));
        }
        if self.lambdas.is_empty() || self.lambdas.iter().any(|l| !(0.0..=MAX_LAMBDA).contains(l)) {
            return Err(Error::InvalidConfig(format!("lambda values must lie in [0, {MAX_LAMBDA}]")));
        }
        if self.modes.is_empty() {
            return Err(Error::InvalidConfig("no cache modes selected".into()));
        }
        if self.modes.iter().any(|&m| m != ModeName::None) && self.cache_sizes.is_empty() {
            return Err(Error::InvalidConfig("caching modes need at least one cache size".into()));
        }
        if !(self.p_max > 0.0) {
            return Err(Error::InvalidConfig("p_max must be positive".into()));
        }
        // placement errors (cache larger than the library) surface here
        for &mode in &self.modes {
            for s in self.sizes_for(mode) {
                self.scenario(mode, s)?;
            }
        }
        Ok(())
    }

    pub fn caching_mode(&self, mode: ModeName) -> CachingMode {
        match mode {
            ModeName::None => CachingMode::None,
            ModeName::Uncoded => CachingMode::Uncoded,
            ModeName::Coded => CachingMode::Coded { fraction: self.coded_fraction },
        }
    }

    /// Cache sizes swept for `mode`; the no-cache mode runs once with `S = 0`.
    pub fn sizes_for(&self, mode: ModeName) -> Vec<usize> {
        match mode {
            ModeName::None => vec![0],
            _ => self.cache_sizes.clone(),
        }
    }

    /// The network for one (mode, S); the same seed gives the same users and
    /// slots for every mode.
    pub fn scenario(&self, mode: ModeName, cache_size: usize) -> Result<Scenario> {
        let popularity = zipf_popularity(self.file_count, self.zipf_alpha)?;
        let placement = place_caches(&popularity, self.geometry.bs_count, cache_size, self.caching_mode(mode))?;
        Scenario::generate(self.geometry.clone(), self.channel.clone(), popularity, placement, self.seed)
    }

    pub fn qos(&self, lambda: f64) -> QosConfig {
        QosConfig::uniform(self.geometry.users_per_slot, self.gamma_db, self.p_max, lambda)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }
}

/// Everything computed for one slot of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotReport {
    pub mode: ModeName,
    pub cache_size: usize,
    pub lambda: f64,
    pub slot: u64,
    pub relaxation_status: RelaxationStatus,
    pub relaxed_objective: f64,
    pub relaxed_lower_bound: f64,
    pub relaxed_power: f64,
    pub max_violation: f64,
    pub cut_rounds: usize,
    pub solver_iterations: usize,
    pub rounding: RoundingReport,
    /// Set when the slot failed numerically rather than being infeasible.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl SlotReport {
    pub fn is_feasible(&self) -> bool {
        self.error.is_none() && self.rounding.is_feasible()
    }

    pub fn power_cost(&self) -> Option<f64> {
        self.rounding.cost.as_ref().map(|c| c.power_cost)
    }

    pub fn backhaul_cost(&self) -> Option<f64> {
        self.rounding.cost.as_ref().map(|c| c.backhaul_cost)
    }

    fn errored(mode: ModeName, cache_size: usize, lambda: f64, slot: u64, err: &Error, paper_faithful: bool) -> Self {
        Self {
            mode,
            cache_size,
            lambda,
            slot,
            relaxation_status: RelaxationStatus::NotConverged,
            relaxed_objective: f64::NAN,
            relaxed_lower_bound: f64::NAN,
            relaxed_power: f64::NAN,
            max_violation: f64::NAN,
            cut_rounds: 0,
            solver_iterations: 0,
            rounding: RoundingReport {
                method: RoundingMethod::Failed,
                rank_ratios: Vec::new(),
                trials_attempted: 0,
                feasible_trials: 0,
                best_objective: None,
                beamformers: None,
                cost: None,
                constraints: None,
                sinr_ok: false,
                power_ok: false,
                paper_faithful,
            },
            error: Some(err.to_string()),
        }
    }
}

/// Relaxation → rounding → exact cost for one slot.
pub fn solve_slot(
    config: &ExperimentConfig,
    scenario: &Scenario,
    mode: ModeName,
    lambda: f64,
    slot_index: u64,
) -> Result<(SlotReport, RelaxedSolution)> {
    let slot = scenario.slot(slot_index)?;
    let qos = config.qos(lambda);
    let lifted = LiftedScenario::from_slot(scenario, &slot, &qos, config.relaxation.theta)?;
    let relaxed = mm_optimize(&lifted, &config.relaxation)?;
    let ctx = SlotContext::new(scenario, &slot, &qos);
    let seed = scenario.streams().stream_id(labels::ROUNDING, slot_index);
    let rounding = round_solution(&relaxed, &ctx, &config.rounding, seed)?;
    let report = SlotReport {
        mode,
        cache_size: scenario.placement.cache_size,
        lambda,
        slot: slot_index,
        relaxation_status: relaxed.status,
        relaxed_objective: relaxed.objective,
        relaxed_lower_bound: relaxed.lower_bound,
        relaxed_power: relaxed.power,
        max_violation: relaxed.max_violation,
        cut_rounds: relaxed.rounds,
        solver_iterations: relaxed.solver_iterations,
        rounding,
        error: None,
    };
    Ok((report, relaxed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub mode: ModeName,
    pub cache_size: usize,
    pub lambda: f64,
    /// Mean transmit power (W) over feasible slots.
    pub power_cost: f64,
    /// Mean backhaul cost over feasible slots.
    pub backhaul_cost: f64,
    pub infeasible: usize,
    pub slots: usize,
    /// Slots that failed numerically (also counted in `infeasible`).
    pub numerical_failures: usize,
}

impl SweepRecord {
    /// No feasible slot at all; the means are NaN.
    pub fn all_infeasible(&self) -> bool {
        self.infeasible == self.slots
    }
}

pub const CSV_HEADER: &str = "mode,S,lambda,power_cost,backhaul_cost,infeasible,slots";

pub fn records_to_csv(records: &[SweepRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.mode, r.cache_size, r.lambda, r.power_cost, r.backhaul_cost, r.infeasible, r.slots
        );
    }
    out
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    mode: ModeName,
    cache_size: usize,
    lambda: f64,
    scenario: usize,
}

/// Runs the full (mode, S, λ) × slot grid. Records come out in config order:
/// modes, then cache sizes, then λ.
pub fn run_tradeoff_sweep(config: &ExperimentConfig) -> Result<Vec<SweepRecord>> {
    Ok(run_sweep_detailed(config)?.0)
}

/// Like [`run_tradeoff_sweep`] but also returns every slot report.
pub fn run_sweep_detailed(config: &ExperimentConfig) -> Result<(Vec<SweepRecord>, Vec<SlotReport>)> {
    config.validate()?;
    let mut scenarios = Vec::new();
    let mut cells = Vec::new();
    for &mode in &config.modes {
        for s in config.sizes_for(mode) {
            scenarios.push(config.scenario(mode, s)?);
            for &lambda in &config.lambdas {
                cells.push(Cell { mode, cache_size: s, lambda, scenario: scenarios.len() - 1 });
            }
        }
    }
    let slots = config.slots as u64;
    let reports: Vec<SlotReport> = (0..cells.len() as u64 * slots)
        .into_par_iter()
        .map(|k| {
            let cell = cells[(k / slots) as usize];
            let slot = k % slots;
            match solve_slot(config, &scenarios[cell.scenario], cell.mode, cell.lambda, slot) {
                Ok((report, _)) => report,
                Err(err) => {
                    log::warn!("{} S={} λ={} slot {slot}: {err}", cell.mode, cell.cache_size, cell.lambda);
                    SlotReport::errored(cell.mode, cell.cache_size, cell.lambda, slot, &err, config.rounding.paper_faithful)
                }
            }
        })
        .collect();

    let records = cells
        .iter()
        .zip(reports.chunks(config.slots))
        .map(|(cell, chunk)| aggregate(cell, chunk))
        .collect();
    Ok((records, reports))
}

fn aggregate(cell: &Cell, reports: &[SlotReport]) -> SweepRecord {
    let (mut power, mut backhaul, mut feasible) = (0.0, 0.0, 0usize);
    for r in reports {
        if let (true, Some(cost)) = (r.is_feasible(), r.rounding.cost.as_ref()) {
            power += cost.power_cost;
            backhaul += cost.backhaul_cost;
            feasible += 1;
        }
    }
    if feasible == 0 {
        log::warn!("{} S={} λ={}: every slot infeasible", cell.mode, cell.cache_size, cell.lambda);
    }
    let n = feasible as f64;
    SweepRecord {
        mode: cell.mode,
        cache_size: cell.cache_size,
        lambda: cell.lambda,
        power_cost: if feasible > 0 { power / n } else { f64::NAN },
        backhaul_cost: if feasible > 0 { backhaul / n } else { f64::NAN },
        infeasible: reports.len() - feasible,
        slots: reports.len(),
        numerical_failures: reports.iter().filter(|r| r.error.is_some()).count(),
    }
}

/// Saturated-backhaul reductions at one cache size, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainRow {
    pub cache_size: usize,
    pub coded_vs_none: f64,
    pub uncoded_vs_none: f64,
    pub coded_vs_uncoded: f64,
}

/// `100·(1 − B_a/B_b)`; equal costs give 0.
pub fn reduction_percent(b_a: f64, b_b: f64) -> f64 {
    if b_a == b_b {
        0.0
    } else {
        100.0 * (1.0 - b_a / b_b)
    }
}

fn saturated(records: &[SweepRecord], mode: ModeName, cache_size: usize) -> Result<f64> {
    records
        .iter()
        .filter(|r| r.mode == mode && (r.cache_size == cache_size || mode == ModeName::None))
        .max_by(|a, b| a.lambda.total_cmp(&b.lambda))
        .map(|r| r.backhaul_cost)
        .ok_or_else(|| Error::MissingCell { mode: mode.to_string(), cache_size })
}

/// Percentage reductions of the saturated (largest-λ) backhaul for every
/// cached size present in `records`.
pub fn gain_table(records: &[SweepRecord]) -> Result<Vec<GainRow>> {
    let mut sizes: Vec<usize> =
        records.iter().filter(|r| r.mode != ModeName::None).map(|r| r.cache_size).collect();
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.is_empty() {
        return Err(Error::MissingCell { mode: ModeName::Coded.to_string(), cache_size: 0 });
    }
    sizes
        .into_iter()
        .map(|s| {
            let none = saturated(records, ModeName::None, s)?;
            let uncoded = saturated(records, ModeName::Uncoded, s)?;
            let coded = saturated(records, ModeName::Coded, s)?;
            Ok(GainRow {
                cache_size: s,
                coded_vs_none: reduction_percent(coded, none),
                uncoded_vs_none: reduction_percent(uncoded, none),
                coded_vs_uncoded: reduction_percent(coded, uncoded),
            })
        })
        .collect()
}

pub fn gain_table_text(rows: &[GainRow]) -> String {
    let mut out = String::from("S   coded/none  uncoded/none  coded/uncoded\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{:<3} {:>9.1}%  {:>11.1}%  {:>12.1}%",
            r.cache_size, r.coded_vs_none, r.uncoded_vs_none, r.coded_vs_uncoded
        );
    }
    out
}
