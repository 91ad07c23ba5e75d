//! Block-level Monte Carlo simulation of the DTS protocol and of a
//! harvest-then-transmit (HTT) baseline.
//!
//! Every block draws the downlink gain `H` and then the uplink gain `G` from
//! one seeded ChaCha stream, whatever the protocol does with them, so runs
//! with the same seed see identical channels (common random numbers).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::battery::BatteryConfig;
use crate::error::{Error, Result};
use crate::stats::{sample_gain, SystemParams};

/// Number of batches used for the batch-means confidence interval.
pub const BATCHES: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BatteryMode {
    /// `L + 1` levels with floor/ceiling quantization.
    #[default]
    Discrete,
    /// Real-valued charge, no quantization (the `L → ∞` reference).
    Continuous,
}

impl BatteryMode {
    pub fn key(self) -> &'static str {
        match self {
            BatteryMode::Discrete => "discrete",
            BatteryMode::Continuous => "continuous",
        }
    }

    pub fn from_key(key: &str) -> Option<Self> {
        match key {
            "discrete" => Some(BatteryMode::Discrete),
            "continuous" => Some(BatteryMode::Continuous),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimConfig {
    /// Total blocks, warmup included.
    pub blocks: u64,
    pub seed: u64,
    pub battery: BatteryMode,
    /// Leading blocks excluded from all statistics.
    pub warmup: u64,
}

impl SimConfig {
    /// Discrete battery with the default warmup.
    pub fn new(blocks: u64, seed: u64) -> Self {
        SimConfig { blocks, seed, battery: BatteryMode::Discrete, warmup: Self::default_warmup(blocks) }
    }

    pub fn with_battery(mut self, battery: BatteryMode) -> Self {
        self.battery = battery;
        self
    }

    pub fn with_warmup(mut self, warmup: u64) -> Self {
        self.warmup = warmup;
        self
    }

    /// 1% of the run, at least 1000 blocks, but never more than a tenth of a
    /// short run.
    pub fn default_warmup(blocks: u64) -> u64 {
        (blocks / 100).max(1000).min(blocks / 10)
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks < 1 {
            return Err(Error::domain("block count must be at least 1"));
        }
        if self.warmup >= self.blocks {
            return Err(Error::domain(format!(
                "warmup ({}) must be smaller than the block count ({})",
                self.warmup, self.blocks
            )));
        }
        Ok(())
    }

    fn measured(&self) -> u64 {
        self.blocks - self.warmup
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimStats {
    /// Mean credited bits per measured block.
    pub avg_throughput: f64,
    /// 95% batch-means half-width on `avg_throughput`.
    pub confidence_halfwidth: f64,
    /// Fraction of harvest phases whose energy did not fit in the battery.
    pub overflow_probability: f64,
    /// Fraction of measured blocks with a successful transmission.
    pub it_fraction: f64,
    /// Battery occupancy per level, normalized to one.
    pub occupancy: Vec<f64>,
    pub measured_blocks: u64,
    pub it_blocks: u64,
    pub harvest_blocks: u64,
    pub overflow_blocks: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockMode {
    Harvest,
    Transmit,
}

/// One block of a traced run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockRecord {
    pub block: u64,
    pub mode: BlockMode,
    /// Battery charge at the start of the block, in joules.
    pub stored: f64,
    pub credited_bits: f64,
}

/// Per-block channel draws `(H, G)`.
struct ChannelStream {
    rng: ChaCha8Rng,
    n: u32,
    omega: f64,
}

impl ChannelStream {
    fn new(params: &SystemParams, seed: u64) -> Self {
        ChannelStream { rng: ChaCha8Rng::seed_from_u64(seed), n: params.n_antennas, omega: params.channel_variance }
    }

    fn next_block(&mut self) -> (f64, f64) {
        let h = sample_gain(self.n, self.omega, &mut self.rng);
        let g = sample_gain(self.n, self.omega, &mut self.rng);
        (h, g)
    }
}

/// Statistics accumulator over the measured blocks of one run.
struct Tally {
    measured: u64,
    seen: u64,
    batch_count: u64,
    batch_sums: Vec<f64>,
    batch_sizes: Vec<u64>,
    it_blocks: u64,
    harvest_blocks: u64,
    overflow_blocks: u64,
    histogram: Vec<u64>,
}

impl Tally {
    fn new(measured: u64, bins: usize) -> Self {
        let batch_count = BATCHES.min(measured).max(1);
        Tally {
            measured,
            seen: 0,
            batch_count,
            batch_sums: vec![0.0; batch_count as usize],
            batch_sizes: vec![0; batch_count as usize],
            it_blocks: 0,
            harvest_blocks: 0,
            overflow_blocks: 0,
            histogram: vec![0; bins],
        }
    }

    fn record(&mut self, bin: usize, credited: Option<f64>, harvest: Option<bool>) {
        let batch = (u128::from(self.seen) * u128::from(self.batch_count) / u128::from(self.measured)) as usize;
        self.seen += 1;
        self.batch_sizes[batch] += 1;
        self.histogram[bin] += 1;
        if let Some(bits) = credited {
            self.it_blocks += 1;
            self.batch_sums[batch] += bits;
        }
        if let Some(overflowed) = harvest {
            self.harvest_blocks += 1;
            if overflowed {
                self.overflow_blocks += 1;
            }
        }
    }

    /// `bits_per_success` is the payload of one successful block; the
    /// average is computed as `bits_per_success × it_fraction`.
    fn finish(self, bits_per_success: f64) -> SimStats {
        let m = self.measured as f64;
        let it_fraction = self.it_blocks as f64 / m;
        let avg_throughput = bits_per_success * it_fraction;
        let means: Vec<f64> = self
            .batch_sums
            .iter()
            .zip(&self.batch_sizes)
            .map(|(s, &n)| s / n as f64)
            .collect();
        let confidence_halfwidth = batch_halfwidth(&means);
        let overflow_probability = if self.harvest_blocks == 0 {
            0.0
        } else {
            self.overflow_blocks as f64 / self.harvest_blocks as f64
        };
        SimStats {
            avg_throughput,
            confidence_halfwidth,
            overflow_probability,
            it_fraction,
            occupancy: self.histogram.iter().map(|&c| c as f64 / m).collect(),
            measured_blocks: self.measured,
            it_blocks: self.it_blocks,
            harvest_blocks: self.harvest_blocks,
            overflow_blocks: self.overflow_blocks,
        }
    }
}

/// Student-t 95% half-width of the mean of `means`.
fn batch_halfwidth(means: &[f64]) -> f64 {
    let k = means.len();
    if k < 2 {
        return f64::INFINITY;
    }
    let kf = k as f64;
    let mean = means.iter().sum::<f64>() / kf;
    let var = means.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / (kf - 1.0);
    let t = StudentsT::new(0.0, 1.0, kf - 1.0)
        .expect("degrees of freedom are positive")
        .inverse_cdf(0.975);
    t * (var / kf).sqrt()
}

fn bin_of(stored: f64, capacity: f64, levels: u32) -> usize {
    ((stored / capacity * f64::from(levels)).floor().max(0.0) as usize).min(levels as usize)
}

/// Runs the DTS protocol.
pub fn simulate_dts(params: &SystemParams, cfg: &SimConfig) -> Result<SimStats> {
    simulate_dts_traced(params, cfg, |_| {})
}

/// Runs the DTS protocol, handing every block (warmup included) to `observer`.
pub fn simulate_dts_traced<F>(params: &SystemParams, cfg: &SimConfig, mut observer: F) -> Result<SimStats>
where
    F: FnMut(&BlockRecord),
{
    params.validate()?;
    cfg.validate()?;
    let battery = BatteryConfig::new(params.capacity, params.levels)?;
    let mut stream = ChannelStream::new(params, cfg.seed);
    let mut tally = Tally::new(cfg.measured(), params.levels as usize + 1);
    let top = params.levels;
    let requirement_numerator = params.snr_threshold() * params.noise_power;
    let harvest_gain = params.efficiency * params.ap_power;

    match cfg.battery {
        BatteryMode::Discrete => {
            let mut level: u32 = 0;
            for block in 0..cfg.blocks {
                let (h, g) = stream.next_block();
                let required = battery.quantize_requirement(requirement_numerator / g)?;
                let start = level;
                let (mode, credited, harvest) = if required.affordable_from(level) {
                    let cost = required.index().expect("affordable requirements are finite");
                    debug_assert!(cost <= level);
                    level -= cost;
                    (BlockMode::Transmit, Some(params.rate), None)
                } else {
                    let gained = battery.quantize_harvest(harvest_gain * h)?;
                    let overflow = u64::from(level) + u64::from(gained) > u64::from(top);
                    level = (level + gained.min(top)).min(top);
                    (BlockMode::Harvest, None, Some(overflow))
                };
                debug_assert!(level <= top);
                observer(&BlockRecord {
                    block,
                    mode,
                    stored: battery.level_energy(start)?,
                    credited_bits: credited.unwrap_or(0.0),
                });
                if block >= cfg.warmup {
                    tally.record(start as usize, credited, harvest);
                }
            }
        }
        BatteryMode::Continuous => {
            let capacity = params.capacity;
            let mut stored = 0.0f64;
            for block in 0..cfg.blocks {
                let (h, g) = stream.next_block();
                let required = requirement_numerator / g;
                let start = stored;
                let (mode, credited, harvest) = if stored >= required {
                    stored = (stored - required).max(0.0);
                    (BlockMode::Transmit, Some(params.rate), None)
                } else {
                    let gained = harvest_gain * h;
                    let overflow = stored + gained > capacity;
                    stored = (stored + gained).min(capacity);
                    (BlockMode::Harvest, None, Some(overflow))
                };
                debug_assert!((0.0..=capacity).contains(&stored));
                observer(&BlockRecord { block, mode, stored: start, credited_bits: credited.unwrap_or(0.0) });
                if block >= cfg.warmup {
                    tally.record(bin_of(start, capacity, top), credited, harvest);
                }
            }
        }
    }
    Ok(tally.finish(params.rate))
}

/// Overflow probability of the DTS protocol: the share of harvest blocks
/// whose credited energy would push the battery past its capacity.
pub fn measure_overflow(params: &SystemParams, cfg: &SimConfig) -> Result<f64> {
    Ok(simulate_dts(params, cfg)?.overflow_probability)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttOutcome {
    /// Throughput-maximizing harvest fraction.
    pub tau: f64,
    pub stats: SimStats,
    /// `(τ, average throughput)` for every grid point, in grid order.
    pub curve: Vec<(f64, f64)>,
}

/// Runs the delay-limited HTT baseline for every harvest fraction in
/// `tau_grid` on one common channel stream and returns the best one.
///
/// Each block harvests `min(ηPHτ, C)` during the first `τ` of the block and
/// then spends it on an uplink of length `1 − τ`. The transmission delivers
/// `R(1 − τ)` bits iff the stored energy reaches `(1 − τ)υN₀/G`. Energy is
/// not carried over to the next block. Only the battery's capacity (not its
/// level count) matters; the occupancy histogram bins the post-harvest charge
/// into `L + 1` levels.
pub fn simulate_htt(params: &SystemParams, cfg: &SimConfig, tau_grid: &[f64]) -> Result<HttOutcome> {
    params.validate()?;
    cfg.validate()?;
    if tau_grid.is_empty() {
        return Err(Error::domain("tau grid is empty"));
    }
    if let Some(t) = tau_grid.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
        return Err(Error::domain(format!("tau values must lie in (0, 1), got {t}")));
    }
    let capacity = params.capacity;
    let bins = params.levels as usize + 1;
    let requirement_numerator = params.snr_threshold() * params.noise_power;
    let harvest_gain = params.efficiency * params.ap_power;

    let mut stream = ChannelStream::new(params, cfg.seed);
    let mut tallies: Vec<Tally> = tau_grid.iter().map(|_| Tally::new(cfg.measured(), bins)).collect();
    for block in 0..cfg.blocks {
        let (h, g) = stream.next_block();
        if block < cfg.warmup {
            continue;
        }
        for (tally, &tau) in tallies.iter_mut().zip(tau_grid) {
            let harvested = harvest_gain * h * tau;
            let overflow = harvested > capacity;
            let stored = harvested.min(capacity);
            let required = (1.0 - tau) * requirement_numerator / g;
            let credited = (stored >= required).then_some(params.rate * (1.0 - tau));
            tally.record(bin_of(stored, capacity, params.levels), credited, Some(overflow));
        }
    }

    let all: Vec<SimStats> = tallies
        .into_iter()
        .zip(tau_grid)
        .map(|(t, &tau)| t.finish(params.rate * (1.0 - tau)))
        .collect();
    let best = all
        .iter()
        .enumerate()
        .fold(0, |b, (k, s)| if s.avg_throughput > all[b].avg_throughput { k } else { b });
    let curve = tau_grid.iter().zip(&all).map(|(&t, s)| (t, s.avg_throughput)).collect();
    Ok(HttOutcome { tau: tau_grid[best], stats: all[best].clone(), curve })
}

/// Evenly spaced harvest fractions `step, 2·step, …` strictly inside (0, 1).
pub fn uniform_tau_grid(step: f64) -> Vec<f64> {
    let count = (1.0 / step).round() as usize;
    (1..count).map(|k| k as f64 * step).filter(|t| *t > 0.0 && *t < 1.0).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::dbm_to_watts;

    fn point(levels: u32) -> SystemParams {
        SystemParams { levels, ..SystemParams::default() }
    }

    #[test]
    fn warmup_defaults() {
        assert_eq!(SimConfig::default_warmup(1_000_000), 10_000);
        assert_eq!(SimConfig::default_warmup(50_000), 1000);
        assert_eq!(SimConfig::default_warmup(1000), 100);
        assert!(SimConfig::new(1, 0).validate().is_ok());
        assert!(SimConfig::new(10, 0).with_warmup(10).validate().is_err());
        assert!(SimConfig { blocks: 0, seed: 0, battery: BatteryMode::Discrete, warmup: 0 }.validate().is_err());
    }

    #[test]
    fn negligible_power_never_transmits() {
        let p = SystemParams { ap_power: 1e-20, ..point(100) };
        let s = simulate_dts(&p, &SimConfig::new(20_000, 1)).unwrap();
        assert_eq!(s.avg_throughput, 0.0);
        assert_eq!(s.it_fraction, 0.0);
        assert_eq!(s.occupancy[0], 1.0);
    }

    #[test]
    fn throughput_is_rate_times_it_fraction() {
        for mode in [BatteryMode::Discrete, BatteryMode::Continuous] {
            let s = simulate_dts(&point(50), &SimConfig::new(50_000, 9).with_battery(mode)).unwrap();
            assert_eq!(s.avg_throughput, 3.0 * s.it_fraction);
            assert_eq!(s.it_blocks + s.harvest_blocks, s.measured_blocks);
            let mass: f64 = s.occupancy.iter().sum();
            assert!((mass - 1.0).abs() < 1e-12);
            assert!((0.0..=1.0).contains(&s.overflow_probability));
        }
    }

    #[test]
    fn battery_stays_in_range_and_it_is_affordable() {
        let p = SystemParams { ap_power: dbm_to_watts(36.0), ..point(40) };
        let battery = BatteryConfig::new(p.capacity, p.levels).unwrap();
        let mut prev: Option<BlockRecord> = None;
        simulate_dts_traced(&p, &SimConfig::new(30_000, 4), |r| {
            assert!(r.stored >= 0.0 && r.stored <= p.capacity * (1.0 + 1e-12));
            if let Some(prev) = prev {
                if prev.mode == BlockMode::Transmit {
                    assert!(r.stored < prev.stored);
                } else {
                    assert!(r.stored >= prev.stored);
                }
            }
            prev = Some(*r);
        })
        .unwrap();
        assert!(battery.level_energy(p.levels).is_ok());
    }

    #[test]
    fn continuous_battery_bounds() {
        let p = point(10);
        simulate_dts_traced(&p, &SimConfig::new(30_000, 4).with_battery(BatteryMode::Continuous), |r| {
            assert!(r.stored >= 0.0 && r.stored <= p.capacity);
        })
        .unwrap();
    }

    #[test]
    fn same_seed_same_stats() {
        let cfg = SimConfig::new(40_000, 77);
        let a = simulate_dts(&point(30), &cfg).unwrap();
        let b = simulate_dts(&point(30), &cfg).unwrap();
        assert_eq!(a, b);
        let c = simulate_dts(&point(30), &SimConfig::new(40_000, 78)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn huge_capacity_no_overflow() {
        let p = SystemParams { capacity: 1.0, ..point(100) };
        assert_eq!(measure_overflow(&p, &SimConfig::new(20_000, 2)).unwrap(), 0.0);
    }

    #[test]
    fn htt_tau_near_one_starves_transmission() {
        let grid = [0.5, 0.999_999];
        let out = simulate_htt(&point(300), &SimConfig::new(20_000, 3), &grid).unwrap();
        assert!(out.curve[1].1 < 1e-3 * out.curve[0].1);
        assert_eq!(out.tau, 0.5);
    }

    #[test]
    fn htt_validation() {
        let cfg = SimConfig::new(1000, 0);
        assert!(simulate_htt(&point(10), &cfg, &[]).is_err());
        assert!(simulate_htt(&point(10), &cfg, &[0.0]).is_err());
        assert!(simulate_htt(&point(10), &cfg, &[1.0]).is_err());
    }

    #[test]
    fn htt_best_tau_maximizes_curve() {
        let out = simulate_htt(&point(300), &SimConfig::new(20_000, 5), &uniform_tau_grid(0.05)).unwrap();
        let best = out.curve.iter().map(|c| c.1).fold(f64::MIN, f64::max);
        assert_eq!(out.stats.avg_throughput, best);
        assert!(out.tau > 0.0 && out.tau < 0.5);
    }

    #[test]
    fn tau_grid_construction() {
        let g = uniform_tau_grid(0.25);
        assert_eq!(g, vec![0.25, 0.5, 0.75]);
        assert_eq!(uniform_tau_grid(0.01).len(), 99);
    }

    #[test]
    fn halfwidth_of_constant_batches_is_zero() {
        assert_eq!(batch_halfwidth(&[1.0; 10]), 0.0);
        assert!(batch_halfwidth(&[1.0]).is_infinite());
    }
}
