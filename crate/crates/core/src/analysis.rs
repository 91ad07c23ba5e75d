//! Closed-form average throughput, optimal-rate search and parameter sweeps.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::markov::{stationary_distribution, SolveMethod, StationaryDistribution, TransitionMatrix};
use crate::stats::{ccdf_unchecked, dbm_to_watts, SystemParams};

/// `(√5 − 1) / 2`
const INV_PHI: f64 = 0.618_033_988_749_894_9;
/// Points of the coarse grid that brackets the optimal rate.
const COARSE_POINTS: usize = 41;

#[derive(Debug, Clone)]
pub struct ThroughputResult {
    /// Average throughput per normalized block, in `[0, R]`.
    pub throughput: f64,
    pub stationary: StationaryDistribution,
    pub params: SystemParams,
}

/// Average DTS throughput `R·Σ_{i≥1} π_i·Pr{G ≥ υN₀L/(iC)}`.
///
/// The empty state contributes nothing: no transmission can be afforded from it.
pub fn dts_throughput(params: &SystemParams) -> Result<ThroughputResult> {
    let z = TransitionMatrix::build(params)?;
    let stationary = stationary_distribution(&z, SolveMethod::Direct)?;
    let throughput = params.rate * transmit_probability(params, stationary.probs());
    Ok(ThroughputResult {
        throughput: throughput.clamp(0.0, params.rate),
        stationary,
        params: *params,
    })
}

/// `Pr{ε_T ≤ ε_R}` under the battery law `probs`.
pub fn transmit_probability(params: &SystemParams, probs: &[f64]) -> f64 {
    let scale = params.snr_threshold() * params.noise_power * f64::from(params.levels) / params.capacity;
    probs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(i, p)| p * ccdf_unchecked(scale / i as f64, params.n_antennas, params.channel_variance))
        .sum()
}

/// Same probability read off the matrix: the mass each state sends downwards
/// (every downward move is a transmission).
pub fn transmit_probability_from_matrix(z: &TransitionMatrix, probs: &[f64]) -> f64 {
    probs
        .iter()
        .enumerate()
        .map(|(i, p)| p * (0..i).map(|j| z.get(i, j)).sum::<f64>())
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateOptimum {
    pub rate: f64,
    pub throughput: f64,
    /// The best coarse-grid point sat on `r_min` or `r_max`.
    pub boundary: bool,
}

/// Maximizes `Φ(R)` over `[r_min, r_max]`: coarse grid, then golden-section
/// refinement on the bracket around the best grid point until it is narrower
/// than `resolution`.
pub fn optimal_rate(params: &SystemParams, r_min: f64, r_max: f64, resolution: f64) -> Result<RateOptimum> {
    if !(r_min.is_finite() && r_min > 0.0 && r_max.is_finite() && r_max >= r_min) {
        return Err(Error::domain(format!("need 0 < r_min <= r_max, got [{r_min}, {r_max}]")));
    }
    if !(resolution > 0.0) {
        return Err(Error::domain(format!("resolution must be > 0, got {resolution}")));
    }
    let phi = |rate: f64| -> Result<f64> { Ok(dts_throughput(&SystemParams { rate, ..*params })?.throughput) };

    if r_max == r_min {
        return Ok(RateOptimum { rate: r_min, throughput: phi(r_min)?, boundary: true });
    }

    let span = r_max - r_min;
    let points = COARSE_POINTS.min((span / resolution).ceil() as usize + 1).max(3);
    let step = span / (points - 1) as f64;
    let grid: Vec<f64> = (0..points).map(|k| if k + 1 == points { r_max } else { r_min + k as f64 * step }).collect();
    let values = grid.par_iter().map(|&r| phi(r)).collect::<Result<Vec<f64>>>()?;
    let best = values
        .iter()
        .enumerate()
        .fold(0, |b, (k, v)| if *v > values[b] { k } else { b });

    let boundary = best == 0 || best + 1 == points;
    let mut lo = grid[best.saturating_sub(1)];
    let mut hi = grid[(best + 1).min(points - 1)];
    let (mut best_rate, mut best_phi) = (grid[best], values[best]);

    let mut a = hi - INV_PHI * (hi - lo);
    let mut b = lo + INV_PHI * (hi - lo);
    let mut fa = phi(a)?;
    let mut fb = phi(b)?;
    while hi - lo > resolution {
        if fa >= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - INV_PHI * (hi - lo);
            fa = phi(a)?;
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + INV_PHI * (hi - lo);
            fb = phi(b)?;
        }
    }
    for (r, f) in [(a, fa), (b, fb)] {
        if f > best_phi {
            best_rate = r;
            best_phi = f;
        }
    }
    Ok(RateOptimum { rate: best_rate, throughput: best_phi, boundary })
}

/// Swept parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepAxis {
    /// AP power in dBm.
    PowerDbm,
    Rate,
    Capacity,
    Levels,
    Antennas,
}

impl SweepAxis {
    pub const ALL: [SweepAxis; 5] =
        [SweepAxis::PowerDbm, SweepAxis::Rate, SweepAxis::Capacity, SweepAxis::Levels, SweepAxis::Antennas];

    /// Config key naming the axis.
    pub fn key(self) -> &'static str {
        match self {
            SweepAxis::PowerDbm => "p_dbm",
            SweepAxis::Rate => "rate",
            SweepAxis::Capacity => "capacity",
            SweepAxis::Levels => "levels",
            SweepAxis::Antennas => "n_antennas",
        }
    }

    pub fn from_key(key: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.key() == key)
    }

    /// `base` with this axis set to `value`. Integer axes must receive
    /// integral values.
    pub fn apply(self, base: &SystemParams, value: f64) -> Result<SystemParams> {
        let mut p = *base;
        let as_count = |v: f64| -> Result<u32> {
            if v.fract() == 0.0 && v >= 1.0 && v <= f64::from(u32::MAX) {
                Ok(v as u32)
            } else {
                Err(Error::domain(format!("{} needs a positive integer, got {v}", self.key())))
            }
        };
        match self {
            SweepAxis::PowerDbm => p.ap_power = dbm_to_watts(value),
            SweepAxis::Rate => p.rate = value,
            SweepAxis::Capacity => p.capacity = value,
            SweepAxis::Levels => p.levels = as_count(value)?,
            SweepAxis::Antennas => p.n_antennas = as_count(value)?,
        }
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub grid: Vec<f64>,
    pub base: SystemParams,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::config("sweep grid is empty"));
        }
        self.base.validate()?;
        for &v in &self.grid {
            self.axis.apply(&self.base, v)?;
        }
        Ok(())
    }

    /// Parameters of every grid point, in grid order.
    pub fn points(&self) -> Vec<(f64, Result<SystemParams>)> {
        self.grid.iter().map(|&v| (v, self.axis.apply(&self.base, v))).collect()
    }
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: f64,
    /// Analytical throughput, or the reason this point failed.
    pub throughput: std::result::Result<f64, String>,
}

/// Evaluates the analytical throughput at every grid point (in parallel,
/// output in grid order). Point failures are recorded in the row.
pub fn sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    if spec.grid.is_empty() {
        return Err(Error::config("sweep grid is empty"));
    }
    Ok(spec
        .points()
        .into_par_iter()
        .map(|(value, params)| SweepRow {
            value,
            throughput: params
                .and_then(|p| dts_throughput(&p))
                .map(|r| r.throughput)
                .map_err(|e| e.to_string()),
        })
        .collect())
}
