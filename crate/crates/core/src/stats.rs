//! Channel-gain statistics and unit conversions.
//!
//! Every link in the model is Rayleigh faded: an `N`-antenna channel vector
//! has i.i.d. `CN(0, Ω)` entries, so the power gain `‖h‖²` is Gamma
//! distributed with integer shape `N` and scale `Ω` (an Erlang variable).

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Above this normalized argument `e^{-y}` is close enough to underflow that
/// the partial sum is accumulated in the log domain instead.
const LOG_DOMAIN_THRESHOLD: f64 = 600.0;

/// Physical and protocol constants of a single AP / source link.
///
/// Powers and energies are in watts / joules; throughput is measured per
/// normalized block, so the rate is in bits/s/Hz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    /// Number of AP antennas `N`.
    pub n_antennas: u32,
    /// AP transmit power `P` in watts.
    pub ap_power: f64,
    /// RF-to-DC conversion efficiency `η`.
    pub efficiency: f64,
    /// Per-antenna channel power-gain variance `Ω`.
    pub channel_variance: f64,
    /// Receiver noise power `N₀` in watts.
    pub noise_power: f64,
    /// Fixed uplink bit rate `R`.
    pub rate: f64,
    /// Battery capacity `C` in joules.
    pub capacity: f64,
    /// Number of discrete battery levels `L` (there are `L + 1` states).
    pub levels: u32,
}

impl Default for SystemParams {
    /// The reference operating point: N = 3, P = 30 dBm, η = 0.5, d = 10 m,
    /// α = 2, N₀ = −90 dBm, R = 3, C = 2e-5 J, L = 300.
    fn default() -> Self {
        SystemParams {
            n_antennas: 3,
            ap_power: 1.0,
            efficiency: 0.5,
            channel_variance: 1e-5,
            noise_power: 1e-12,
            rate: 3.0,
            capacity: 2e-5,
            levels: 300,
        }
    }
}

impl SystemParams {
    /// Checks every field invariant.
    pub fn validate(&self) -> Result<()> {
        if self.n_antennas < 1 {
            return Err(Error::domain("n_antennas must be at least 1"));
        }
        if self.levels < 1 {
            return Err(Error::domain("levels must be at least 1"));
        }
        let positive = [
            ("ap_power", self.ap_power),
            ("channel_variance", self.channel_variance),
            ("noise_power", self.noise_power),
            ("rate", self.rate),
            ("capacity", self.capacity),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::domain(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(Error::domain(format!(
                "efficiency must lie in (0, 1], got {}",
                self.efficiency
            )));
        }
        Ok(())
    }

    /// Replaces `Ω` by the path-loss model `10⁻³·d^(−α)`.
    pub fn with_pathloss(mut self, distance: f64, exponent: f64) -> Result<Self> {
        self.channel_variance = pathloss_variance(distance, exponent)?;
        Ok(self)
    }

    /// `υ = 2^R − 1`, the SNR needed to support rate `R`.
    pub fn snr_threshold(&self) -> f64 {
        self.rate.exp2() - 1.0
    }

    /// Energy of one battery unit, `C / L`.
    pub fn level_step(&self) -> f64 {
        self.capacity / f64::from(self.levels)
    }
}

/// `Pr{H > x}` for `H` Erlang with shape `n` and scale `omega`:
/// `exp(−x/Ω)·Σ_{k<n} (x/Ω)^k / k!`.
///
/// `x = +∞` is accepted and maps to exactly 0.
pub fn erlang_ccdf(x: f64, n: u32, omega: f64) -> Result<f64> {
    if x.is_nan() || x < 0.0 {
        return Err(Error::domain(format!("ccdf argument must be >= 0, got {x}")));
    }
    if n < 1 {
        return Err(Error::domain("shape must be at least 1"));
    }
    if !(omega.is_finite() && omega > 0.0) {
        return Err(Error::domain(format!("scale must be finite and > 0, got {omega}")));
    }
    Ok(ccdf_unchecked(x, n, omega))
}

/// [`erlang_ccdf`] without argument validation. Callers guarantee `x ≥ 0`,
/// `n ≥ 1`, `omega > 0`.
pub(crate) fn ccdf_unchecked(x: f64, n: u32, omega: f64) -> f64 {
    if x == f64::INFINITY {
        return 0.0;
    }
    let y = x / omega;
    if y == 0.0 {
        return 1.0;
    }
    if y == f64::INFINITY {
        return 0.0;
    }
    let sum = if y < LOG_DOMAIN_THRESHOLD {
        // t_{k+1} = t_k · y / (k+1), starting from t_0 = e^{-y}; every term is <= 1.
        let mut term = (-y).exp();
        let mut sum = term;
        for k in 1..n {
            term *= y / f64::from(k);
            sum += term;
        }
        sum
    } else {
        let ln_y = y.ln();
        let mut log_term = -y;
        let mut sum = log_term.exp();
        for k in 1..n {
            log_term += ln_y - f64::from(k).ln();
            sum += log_term.exp();
        }
        sum
    };
    sum.clamp(0.0, 1.0)
}

/// Draws `‖h‖² = Σ_k |h_k|²` with `h_k ~ CN(0, Ω)`, i.e. one Erlang(`n`, `omega`)
/// channel power gain.
pub fn sample_gain<R: Rng + ?Sized>(n: u32, omega: f64, rng: &mut R) -> f64 {
    let mut acc = 0.0;
    for _ in 0..n {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        acc += re * re + im * im;
    }
    // Each complex entry has variance Ω, split equally between I and Q.
    acc * 0.5 * omega
}

/// Converts a power in dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Converts a power in watts to dBm.
pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

/// Path-loss channel variance `Ω = 10⁻³·d^(−α)` (30 dB attenuation at 1 m).
pub fn pathloss_variance(distance: f64, exponent: f64) -> Result<f64> {
    if !(distance.is_finite() && distance > 0.0) {
        return Err(Error::domain(format!("distance must be > 0, got {distance}")));
    }
    if !(2.0..=5.0).contains(&exponent) {
        return Err(Error::domain(format!(
            "path-loss exponent must lie in [2, 5], got {exponent}"
        )));
    }
    Ok(1e-3 * distance.powf(-exponent))
}
