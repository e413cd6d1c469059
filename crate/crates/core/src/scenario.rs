//! Network geometry, channels, file popularity, and cache placement.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{labels, SeedStreams};

/// Planar position in km.
pub type Point = [f64; 2];

/// Distances below this are clamped before the path-loss law is applied.
pub const MIN_DISTANCE_KM: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryConfig {
    pub bs_count: usize,
    pub lattice_spacing_km: f64,
    pub user_pool_size: usize,
    /// Radius of the disk users are dropped in. The default of 1.2 km follows
    /// the plotted user cloud of the reference layout; the accompanying text
    /// quotes 0.8 km, so treat this as a tunable.
    pub user_disk_radius_km: f64,
    pub users_per_slot: usize,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            bs_count: 7,
            lattice_spacing_km: 0.8,
            user_pool_size: 200,
            user_disk_radius_km: 1.2,
            users_per_slot: 12,
        }
    }
}

impl GeometryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bs_count == 0 {
            return Err(Error::InvalidConfig("bs_count must be at least 1".into()));
        }
        if !(self.lattice_spacing_km > 0.0 && self.lattice_spacing_km.is_finite()) {
            return Err(Error::InvalidConfig("lattice spacing must be positive".into()));
        }
        if !(self.user_disk_radius_km > 0.0 && self.user_disk_radius_km.is_finite()) {
            return Err(Error::InvalidConfig("user disk radius must be positive".into()));
        }
        if self.users_per_slot == 0 || self.users_per_slot > self.user_pool_size {
            return Err(Error::InvalidConfig(format!(
                "users_per_slot ({}) must be in 1..={}",
                self.users_per_slot, self.user_pool_size
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub antennas_per_bs: usize,
    pub antenna_gain_dbi: f64,
    pub shadowing_std_db: f64,
    pub noise_psd_dbm_hz: f64,
    pub bandwidth_hz: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            antennas_per_bs: 2,
            antenna_gain_dbi: 10.0,
            shadowing_std_db: 8.0,
            noise_psd_dbm_hz: -172.0,
            bandwidth_hz: 10e6,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        if self.antennas_per_bs == 0 {
            return Err(Error::InvalidConfig("antennas_per_bs must be at least 1".into()));
        }
        if !(self.bandwidth_hz > 0.0) {
            return Err(Error::InvalidConfig("bandwidth must be positive".into()));
        }
        if !(self.shadowing_std_db >= 0.0) {
            return Err(Error::InvalidConfig("shadowing std must be non-negative".into()));
        }
        let sigma2 = self.noise_power_w();
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::InvalidConfig("noise power must be positive".into()));
        }
        Ok(())
    }

    /// Receiver noise power σ² in watts.
    pub fn noise_power_w(&self) -> f64 {
        let dbm = self.noise_psd_dbm_hz + 10.0 * self.bandwidth_hz.log10();
        10f64.powf((dbm - 30.0) / 10.0)
    }

    pub fn antenna_gain_linear(&self) -> f64 {
        10f64.powf(self.antenna_gain_dbi / 10.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopularityModel {
    pub file_count: usize,
    pub zipf_alpha: f64,
    pub probabilities: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum CachingMode {
    None,
    Uncoded,
    /// Each cached file contributes `fraction` of its parity bits per BS.
    Coded { fraction: f64 },
}

impl CachingMode {
    pub const DEFAULT_CODED_FRACTION: f64 = 0.5;

    pub fn name(&self) -> &'static str {
        match self {
            CachingMode::None => "none",
            CachingMode::Uncoded => "uncoded",
            CachingMode::Coded { .. } => "coded",
        }
    }
}

impl std::fmt::Display for CachingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CachePlacement {
    /// `delta[f][l]`: fraction of file `f` held by BS `l`.
    pub delta: Vec<Vec<f64>>,
    pub cache_size: usize,
    pub mode: CachingMode,
    /// Every BS stores a distinct subset of parity bits, so fractions held
    /// by different serving BSs add up toward recovery.
    pub distinct_parity: bool,
}

impl CachePlacement {
    pub fn file_count(&self) -> usize {
        self.delta.len()
    }

    pub fn bs_count(&self) -> usize {
        self.delta.first().map_or(0, Vec::len)
    }

    pub fn column_sum(&self, l: usize) -> f64 {
        self.delta.iter().map(|row| row[l]).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.delta.iter().flatten().all(|&d| d == 0.0)
    }

    /// An all-zero placement over `file_count` files and `bs_count` BSs.
    pub fn empty(file_count: usize, bs_count: usize) -> Self {
        Self {
            delta: vec![vec![0.0; bs_count]; file_count],
            cache_size: 0,
            mode: CachingMode::None,
            distinct_parity: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSlot {
    pub index: u64,
    pub selected_users: Vec<usize>,
    /// Row `m` is the stacked channel `h_m` (BS-major, `L * N_t` entries).
    pub channels: Vec<Vec<Complex64>>,
    pub slot_seed: u64,
}

impl TimeSlot {
    pub fn user_count(&self) -> usize {
        self.channels.len()
    }
}

/// Positions of a hexagonal lattice of `bs_count` sites, centre first, then
/// ring by ring in counter-clockwise order starting on the positive x axis.
pub fn build_lattice(config: &GeometryConfig) -> Result<Vec<Point>> {
    let rings = ring_count(config.bs_count).ok_or(Error::UnsupportedBsCount(config.bs_count))?;
    let s = config.lattice_spacing_km;
    let mut sites = vec![[0.0, 0.0]];
    for k in 1..=rings as i64 {
        let mut ring: Vec<(f64, Point)> = Vec::with_capacity(6 * k as usize);
        for q in -k..=k {
            for r in -k..=k {
                if hex_distance(q, r) != k {
                    continue;
                }
                let x = s * (q as f64 + r as f64 / 2.0);
                let y = s * (r as f64 * 3f64.sqrt() / 2.0);
                let mut angle = y.atan2(x);
                if angle < -1e-12 {
                    angle += 2.0 * std::f64::consts::PI;
                }
                ring.push((angle.max(0.0), [x, y]));
            }
        }
        ring.sort_by(|a, b| a.0.total_cmp(&b.0));
        sites.extend(ring.into_iter().map(|(_, p)| p));
    }
    Ok(sites)
}

fn ring_count(bs_count: usize) -> Option<usize> {
    (0..64).find(|&k| 1 + 3 * k * (k + 1) == bs_count)
}

fn hex_distance(q: i64, r: i64) -> i64 {
    (q.abs() + r.abs() + (q + r).abs()) / 2
}

/// Area-uniform points on the disk of `radius` around the origin.
pub fn sample_user_positions<R: Rng + ?Sized>(count: usize, radius: f64, rng: &mut R) -> Vec<Point> {
    (0..count)
        .map(|_| {
            let u: f64 = rng.random();
            let v: f64 = rng.random();
            let r = radius * u.sqrt();
            let phi = 2.0 * std::f64::consts::PI * v;
            [r * phi.cos(), r * phi.sin()]
        })
        .collect()
}

/// Path loss in dB at `d_km`, `148.1 + 37.6 log10(d)`, with the distance
/// floored at [`MIN_DISTANCE_KM`].
pub fn path_loss_db(d_km: f64) -> Result<f64> {
    if !(d_km > 0.0 && d_km.is_finite()) {
        return Err(Error::InvalidDistance(d_km));
    }
    Ok(148.1 + 37.6 * d_km.max(MIN_DISTANCE_KM).log10())
}

pub fn distance_km(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Power gain `10^(-ρ/10) · φ · ζ` for a given shadowing draw (dB).
pub fn large_scale_gain(d_km: f64, params: &ChannelParams, shadowing_db: f64) -> Result<f64> {
    let rho = path_loss_db(d_km)?;
    Ok(10f64.powf(-rho / 10.0) * params.antenna_gain_linear() * 10f64.powf(shadowing_db / 10.0))
}

/// Unit-variance circularly symmetric complex Gaussian sample.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Draws `h_{l,m}` for one BS/user pair: fresh shadowing and small-scale fading.
pub fn draw_channel<R: Rng + ?Sized>(
    bs: Point,
    user: Point,
    params: &ChannelParams,
    rng: &mut R,
) -> Result<Vec<Complex64>> {
    let mut d = distance_km(bs, user);
    if d <= 0.0 {
        d = MIN_DISTANCE_KM;
    }
    let shadow_db = if params.shadowing_std_db > 0.0 {
        params.shadowing_std_db * rng.sample::<f64, _>(StandardNormal)
    } else {
        0.0
    };
    let amplitude = large_scale_gain(d, params, shadow_db)?.sqrt();
    Ok((0..params.antennas_per_bs)
        .map(|_| complex_normal(rng) * amplitude)
        .collect())
}

/// Zipf request probabilities `Z_f ∝ f^-α`, most popular file first.
pub fn zipf_popularity(file_count: usize, alpha: f64) -> Result<PopularityModel> {
    if file_count == 0 {
        return Err(Error::InvalidConfig("file_count must be at least 1".into()));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidConfig(format!("zipf alpha must be >= 0, got {alpha}")));
    }
    let weights: Vec<f64> = (1..=file_count).map(|f| (f as f64).powf(-alpha)).collect();
    let total: f64 = weights.iter().sum();
    Ok(PopularityModel {
        file_count,
        zipf_alpha: alpha,
        probabilities: weights.into_iter().map(|w| w / total).collect(),
    })
}

/// Most-popular-first cache fill, identical at every BS.
///
/// Uncoded caches hold whole files `1..=S`. Coded caches hold a `fraction`
/// of the parity bits of files `1..=S/fraction`; a non-integral quotient puts
/// the remainder on the next file so every column still sums to `S`.
pub fn place_caches(
    popularity: &PopularityModel,
    bs_count: usize,
    cache_size: usize,
    mode: CachingMode,
) -> Result<CachePlacement> {
    let file_count = popularity.file_count;
    let mut column = vec![0.0; file_count];
    let mut distinct_parity = false;
    match mode {
        CachingMode::None => {
            return Ok(CachePlacement::empty(file_count, bs_count));
        }
        CachingMode::Uncoded => {
            if cache_size > file_count {
                return Err(Error::CacheCapacity { needed: cache_size, available: file_count });
            }
            column[..cache_size].iter_mut().for_each(|d| *d = 1.0);
        }
        CachingMode::Coded { fraction } => {
            if !(fraction > 0.0 && fraction <= 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "coded fraction must be in (0, 1], got {fraction}"
                )));
            }
            let ratio = cache_size as f64 / fraction;
            let whole = (ratio + 1e-9).floor() as usize;
            let remainder = cache_size as f64 - whole as f64 * fraction;
            let needed = if remainder > 1e-12 { whole + 1 } else { whole };
            if needed > file_count {
                return Err(Error::CacheCapacity { needed, available: file_count });
            }
            column[..whole].iter_mut().for_each(|d| *d = fraction);
            if remainder > 1e-12 {
                column[whole] = remainder;
            }
            distinct_parity = true;
        }
    }
    Ok(CachePlacement {
        delta: column.into_iter().map(|d| vec![d; bs_count]).collect(),
        cache_size,
        mode,
        distinct_parity,
    })
}

/// Picks `users_per_slot` distinct users uniformly and draws fresh channels
/// from every BS to each of them.
pub fn draw_time_slot<R: Rng + ?Sized>(
    index: u64,
    slot_seed: u64,
    bs_positions: &[Point],
    user_pool: &[Point],
    users_per_slot: usize,
    params: &ChannelParams,
    rng: &mut R,
) -> Result<TimeSlot> {
    if users_per_slot > user_pool.len() {
        return Err(Error::InvalidConfig(format!(
            "cannot select {users_per_slot} users from a pool of {}",
            user_pool.len()
        )));
    }
    let mut selected = rand::seq::index::sample(rng, user_pool.len(), users_per_slot).into_vec();
    selected.sort_unstable();
    let mut channels = Vec::with_capacity(selected.len());
    for &u in &selected {
        let mut h = Vec::with_capacity(bs_positions.len() * params.antennas_per_bs);
        for &bs in bs_positions {
            h.extend(draw_channel(bs, user_pool[u], params, rng)?);
        }
        channels.push(h);
    }
    Ok(TimeSlot { index, selected_users: selected, channels, slot_seed })
}

/// Everything one experiment needs besides the optimiser settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub master_seed: u64,
    pub geometry: GeometryConfig,
    pub channel: ChannelParams,
    pub bs_positions: Vec<Point>,
    pub user_positions: Vec<Point>,
    pub popularity: PopularityModel,
    pub placement: CachePlacement,
    /// Pre-drawn slots; slots not listed here are drawn on demand from the
    /// master seed.
    #[serde(default)]
    pub slots: Vec<TimeSlot>,
}

impl Scenario {
    pub fn generate(
        geometry: GeometryConfig,
        channel: ChannelParams,
        popularity: PopularityModel,
        placement: CachePlacement,
        master_seed: u64,
    ) -> Result<Self> {
        geometry.validate()?;
        channel.validate()?;
        if placement.bs_count() != geometry.bs_count && placement.file_count() > 0 {
            return Err(Error::Dimension(format!(
                "placement covers {} BSs, geometry has {}",
                placement.bs_count(),
                geometry.bs_count
            )));
        }
        if placement.file_count() != popularity.file_count {
            return Err(Error::Dimension(format!(
                "placement covers {} files, popularity has {}",
                placement.file_count(),
                popularity.file_count
            )));
        }
        let bs_positions = build_lattice(&geometry)?;
        let streams = SeedStreams::new(master_seed);
        let mut rng = streams.rng(labels::POSITIONS, 0);
        let user_positions =
            sample_user_positions(geometry.user_pool_size, geometry.user_disk_radius_km, &mut rng);
        Ok(Self {
            master_seed,
            geometry,
            channel,
            bs_positions,
            user_positions,
            popularity,
            placement,
            slots: Vec::new(),
        })
    }

    pub fn noise_power_w(&self) -> f64 {
        self.channel.noise_power_w()
    }

    pub fn streams(&self) -> SeedStreams {
        SeedStreams::new(self.master_seed)
    }

    /// Slot `index`: the stored copy if present, otherwise drawn from the
    /// `slot` stream of the master seed.
    pub fn slot(&self, index: u64) -> Result<TimeSlot> {
        if let Some(slot) = self.slots.iter().find(|s| s.index == index) {
            return Ok(slot.clone());
        }
        let streams = self.streams();
        let seed = streams.stream_id(labels::SLOT, index);
        let mut rng = crate::rng::rng_from_id(seed);
        draw_time_slot(
            index,
            seed,
            &self.bs_positions,
            &self.user_positions,
            self.geometry.users_per_slot,
            &self.channel,
            &mut rng,
        )
    }

    /// Same network and slots with a different cache placement.
    pub fn with_placement(&self, placement: CachePlacement) -> Self {
        Self { placement, ..self.clone() }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let scenario: Self = serde_json::from_str(text)?;
        scenario.geometry.validate()?;
        scenario.channel.validate()?;
        Ok(scenario)
    }
}
