//! Experiment configuration and the command implementations behind the
//! `wpcn-dts` binary.
//!
//! Configs are flat `key = value` text; `#` starts a comment. Every emitted
//! CSV begins with a `# key = value` block that re-parses into the config
//! that produced it.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::analysis::{dts_throughput, optimal_rate, SweepAxis, SweepSpec};
use crate::error::{Error, Result};
use crate::markov::{stationary_distribution, SolveMethod, TransitionMatrix};
use crate::sim::{simulate_dts, simulate_dts_traced, simulate_htt, BatteryMode, BlockMode, SimConfig};
use crate::stats::{dbm_to_watts, pathloss_variance, SystemParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Analyze,
    Simulate,
    OptimizeRate,
    CompareHtt,
}

impl Command {
    pub fn key(self) -> &'static str {
        match self {
            Command::Analyze => "analyze",
            Command::Simulate => "simulate",
            Command::OptimizeRate => "optimize-rate",
            Command::CompareHtt => "compare-htt",
        }
    }

    pub fn from_key(key: &str) -> Option<Self> {
        [Command::Analyze, Command::Simulate, Command::OptimizeRate, Command::CompareHtt]
            .into_iter()
            .find(|c| c.key() == key)
    }
}

/// A power given either in dBm or in watts; kept as written so the metadata
/// echo reproduces it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Power {
    Dbm(f64),
    Watts(f64),
}

impl Power {
    pub fn watts(self) -> f64 {
        match self {
            Power::Dbm(d) => dbm_to_watts(d),
            Power::Watts(w) => w,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Channel {
    Variance(f64),
    Pathloss { distance: f64, alpha: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub command: Option<Command>,
    pub n_antennas: u32,
    pub ap_power: Power,
    pub eta: f64,
    pub channel: Channel,
    pub noise: Power,
    pub rate: f64,
    pub capacity: f64,
    pub levels: u32,
    pub blocks: u64,
    pub seed: u64,
    /// `None` selects [`SimConfig::default_warmup`].
    pub warmup: Option<u64>,
    pub battery: BatteryMode,
    pub axis: Option<SweepAxis>,
    pub grid: Vec<f64>,
    pub tau_grid: Vec<f64>,
    pub r_min: f64,
    pub r_max: f64,
    pub resolution: f64,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            command: None,
            n_antennas: 3,
            ap_power: Power::Dbm(30.0),
            eta: 0.5,
            channel: Channel::Pathloss { distance: 10.0, alpha: 2.0 },
            noise: Power::Dbm(-90.0),
            rate: 3.0,
            capacity: 2e-5,
            levels: 300,
            blocks: 1_000_000,
            seed: 1,
            warmup: None,
            battery: BatteryMode::Discrete,
            axis: None,
            grid: Vec::new(),
            tau_grid: (1..100).map(|k| f64::from(k) / 100.0).collect(),
            r_min: 0.5,
            r_max: 10.0,
            resolution: 1e-3,
            out: None,
        }
    }
}

const KEYS: &[&str] = &[
    "command", "n_antennas", "p_dbm", "p_watts", "eta", "omega", "distance", "alpha", "noise_dbm",
    "noise_watts", "rate", "capacity", "levels", "blocks", "seed", "warmup", "battery", "axis", "grid",
    "tau_grid", "r_min", "r_max", "resolution", "out",
];

/// Mutually exclusive spellings of one quantity within a single source.
const EXCLUSIVE: &[(&str, &str)] = &[
    ("p_dbm", "p_watts"),
    ("noise_dbm", "noise_watts"),
    ("omega", "distance"),
    ("omega", "alpha"),
];

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    let x: f64 = v.parse().map_err(|_| Error::config(format!("{key}: not a number: {v:?}")))?;
    if !x.is_finite() {
        return Err(Error::config(format!("{key}: must be finite, got {v:?}")));
    }
    Ok(x)
}

fn parse_int<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::config(format!("{key}: not a valid integer: {v:?}")))
}

/// Comma list (`1,2,5`) or inclusive range `start:stop:step`; empty means empty.
pub fn parse_grid(key: &str, v: &str) -> Result<Vec<f64>> {
    let v = v.trim();
    if v.is_empty() {
        return Ok(Vec::new());
    }
    if v.contains(':') {
        let parts: Vec<&str> = v.split(':').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(Error::config(format!("{key}: range must be start:stop:step, got {v:?}")));
        }
        let (start, stop, step) =
            (parse_f64(key, parts[0])?, parse_f64(key, parts[1])?, parse_f64(key, parts[2])?);
        if !(step > 0.0) || stop < start {
            return Err(Error::config(format!("{key}: need step > 0 and stop >= start in {v:?}")));
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        if count > 1_000_000 {
            return Err(Error::config(format!("{key}: range has too many points")));
        }
        return Ok((0..count).map(|k| start + k as f64 * step).collect());
    }
    v.split(',').map(|s| parse_f64(key, s.trim())).collect()
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

/// Splits `key = value` lines, dropping blanks and `#` comments.
fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::config(format!("line {}: expected key = value, got {raw:?}", n + 1)))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

impl ExperimentConfig {
    /// Parses config text on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_pairs(&parse_pairs(text)?)?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Recovers the config from the leading `# key = value` block of an
    /// emitted CSV.
    pub fn from_metadata(csv: &str) -> Result<Self> {
        let block: String = csv
            .lines()
            .take_while(|l| l.starts_with('#'))
            .map(|l| l.trim_start_matches('#').trim())
            .filter(|l| l.contains('='))
            .fold(String::new(), |mut acc, l| {
                acc.push_str(l);
                acc.push('\n');
                acc
            });
        Self::parse(&block)
    }

    /// Applies one source of settings (a file or the command-line flags).
    /// Spelling both halves of an exclusive pair in the same source is an error.
    pub fn apply_pairs(&mut self, pairs: &[(String, String)]) -> Result<()> {
        for (a, b) in EXCLUSIVE {
            let has = |k: &str| pairs.iter().any(|(key, _)| key == k);
            if has(a) && has(b) {
                return Err(Error::config(format!("{a} and {b} are mutually exclusive")));
            }
        }
        for (k, v) in pairs {
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "command" => {
                self.command = Some(
                    Command::from_key(v).ok_or_else(|| Error::config(format!("unknown command {v:?}")))?,
                )
            }
            "n_antennas" => self.n_antennas = parse_int(key, v)?,
            "p_dbm" => self.ap_power = Power::Dbm(parse_f64(key, v)?),
            "p_watts" => self.ap_power = Power::Watts(parse_f64(key, v)?),
            "eta" => self.eta = parse_f64(key, v)?,
            "omega" => self.channel = Channel::Variance(parse_f64(key, v)?),
            "distance" | "alpha" => {
                let x = parse_f64(key, v)?;
                let (mut distance, mut alpha) = match self.channel {
                    Channel::Pathloss { distance, alpha } => (distance, alpha),
                    Channel::Variance(_) => (10.0, 2.0),
                };
                if key == "distance" {
                    distance = x;
                } else {
                    alpha = x;
                }
                self.channel = Channel::Pathloss { distance, alpha };
            }
            "noise_dbm" => self.noise = Power::Dbm(parse_f64(key, v)?),
            "noise_watts" => self.noise = Power::Watts(parse_f64(key, v)?),
            "rate" => self.rate = parse_f64(key, v)?,
            "capacity" => self.capacity = parse_f64(key, v)?,
            "levels" => self.levels = parse_int(key, v)?,
            "blocks" => self.blocks = parse_int(key, v)?,
            "seed" => self.seed = parse_int(key, v)?,
            "warmup" => self.warmup = if v == "auto" { None } else { Some(parse_int(key, v)?) },
            "battery" => {
                self.battery =
                    BatteryMode::from_key(v).ok_or_else(|| Error::config(format!("unknown battery mode {v:?}")))?
            }
            "axis" => {
                self.axis = Some(SweepAxis::from_key(v).ok_or_else(|| Error::config(format!("unknown axis {v:?}")))?)
            }
            "grid" => self.grid = parse_grid(key, v)?,
            "tau_grid" => self.tau_grid = parse_grid(key, v)?,
            "r_min" => self.r_min = parse_f64(key, v)?,
            "r_max" => self.r_max = parse_f64(key, v)?,
            "resolution" => self.resolution = parse_f64(key, v)?,
            "out" => self.out = Some(PathBuf::from(v)),
            _ => return Err(Error::config(format!("unknown key {key:?} (known: {})", KEYS.join(", ")))),
        }
        Ok(())
    }

    pub fn system_params(&self) -> Result<SystemParams> {
        let channel_variance = match self.channel {
            Channel::Variance(o) => o,
            Channel::Pathloss { distance, alpha } => {
                pathloss_variance(distance, alpha).map_err(|e| Error::config(e.to_string()))?
            }
        };
        let p = SystemParams {
            n_antennas: self.n_antennas,
            ap_power: self.ap_power.watts(),
            efficiency: self.eta,
            channel_variance,
            noise_power: self.noise.watts(),
            rate: self.rate,
            capacity: self.capacity,
            levels: self.levels,
        };
        p.validate().map_err(|e| Error::config(e.to_string()))?;
        Ok(p)
    }

    pub fn sim_config(&self) -> Result<SimConfig> {
        let warmup = self.warmup.unwrap_or_else(|| SimConfig::default_warmup(self.blocks));
        let cfg = SimConfig { blocks: self.blocks, seed: self.seed, battery: self.battery, warmup };
        cfg.validate().map_err(|e| Error::config(e.to_string()))?;
        Ok(cfg)
    }

    fn sweep_spec(&self) -> Result<SweepSpec> {
        let axis = self.axis.ok_or_else(|| Error::config("this command needs an axis"))?;
        let spec = SweepSpec { axis, grid: self.grid.clone(), base: self.system_params()? };
        if spec.grid.is_empty() {
            return Err(Error::config("grid is empty"));
        }
        for &v in &spec.grid {
            axis.apply(&spec.base, v).map_err(|e| Error::config(e.to_string()))?;
        }
        Ok(spec)
    }

    /// Validates everything the selected command will use.
    pub fn validate(&self) -> Result<()> {
        let command = self.command.ok_or_else(|| Error::config("no command selected"))?;
        self.system_params()?;
        match command {
            Command::Analyze => {
                self.sweep_spec()?;
            }
            Command::Simulate => {
                self.sweep_spec()?;
                self.sim_config()?;
            }
            Command::CompareHtt => {
                self.sweep_spec()?;
                self.sim_config()?;
                if self.tau_grid.is_empty() || self.tau_grid.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
                    return Err(Error::config("tau_grid must be nonempty with values in (0, 1)"));
                }
            }
            Command::OptimizeRate => {
                if !(self.r_min > 0.0 && self.r_max >= self.r_min && self.resolution > 0.0) {
                    return Err(Error::config("need 0 < r_min <= r_max and resolution > 0"));
                }
            }
        }
        Ok(())
    }

    /// `# key = value` lines echoing every setting.
    pub fn metadata(&self) -> String {
        let mut s = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(s, "# {k} = {v}");
        };
        if let Some(c) = self.command {
            line("command", c.key().into());
        }
        line("n_antennas", self.n_antennas.to_string());
        match self.ap_power {
            Power::Dbm(d) => line("p_dbm", d.to_string()),
            Power::Watts(w) => line("p_watts", w.to_string()),
        }
        line("eta", self.eta.to_string());
        match self.channel {
            Channel::Variance(o) => line("omega", o.to_string()),
            Channel::Pathloss { distance, alpha } => {
                line("distance", distance.to_string());
                line("alpha", alpha.to_string());
            }
        }
        match self.noise {
            Power::Dbm(d) => line("noise_dbm", d.to_string()),
            Power::Watts(w) => line("noise_watts", w.to_string()),
        }
        line("rate", self.rate.to_string());
        line("capacity", self.capacity.to_string());
        line("levels", self.levels.to_string());
        line("blocks", self.blocks.to_string());
        line("seed", self.seed.to_string());
        line("warmup", self.warmup.map_or_else(|| "auto".into(), |w| w.to_string()));
        line("battery", self.battery.key().into());
        if let Some(a) = self.axis {
            line("axis", a.key().into());
        }
        line("grid", join(&self.grid));
        line("tau_grid", join(&self.tau_grid));
        line("r_min", self.r_min.to_string());
        line("r_max", self.r_max.to_string());
        line("resolution", self.resolution.to_string());
        if let Some(out) = &self.out {
            line("out", out.display().to_string());
        }
        s
    }
}

/// Debug outputs that are not part of the experiment definition.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Directory receiving `z_<k>.csv` and `pi_<k>.csv` per analyzed grid point.
    pub dump_chain: Option<PathBuf>,
    /// Per-block trace file for a single-point `simulate` run.
    pub trace: Option<PathBuf>,
}

/// Runs the selected command and returns the CSV text.
pub fn run(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<String> {
    cfg.validate()?;
    match cfg.command.expect("validated") {
        Command::Analyze => cmd_analyze(cfg, opts),
        Command::Simulate => cmd_simulate(cfg, opts),
        Command::OptimizeRate => cmd_optimize_rate(cfg),
        Command::CompareHtt => cmd_compare_htt(cfg),
    }
}

fn fmt_cell(v: std::result::Result<f64, &String>) -> String {
    match v {
        Ok(x) => x.to_string(),
        Err(_) => "NaN".into(),
    }
}

/// Appends `# error at <value>: ...` lines; fails if no point succeeded.
fn finish_with_errors(mut out: String, errors: Vec<(f64, String)>, total: usize) -> Result<String> {
    if !errors.is_empty() && errors.len() == total {
        return Err(Error::numerical(format!("every grid point failed; first: {}", errors[0].1)));
    }
    for (v, e) in errors {
        let _ = writeln!(out, "# error at {v}: {e}");
    }
    Ok(out)
}

pub fn cmd_analyze(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<String> {
    let spec = cfg.sweep_spec()?;
    if let Some(dir) = &opts.dump_chain {
        fs::create_dir_all(dir)?;
    }
    let rows: Vec<(f64, std::result::Result<f64, String>)> = spec
        .points()
        .into_par_iter()
        .enumerate()
        .map(|(k, (value, params))| {
            let outcome = params.and_then(|p| {
                if let Some(dir) = &opts.dump_chain {
                    let z = TransitionMatrix::build(&p)?;
                    let pi = stationary_distribution(&z, SolveMethod::Direct)?;
                    z.write_csv(fs::File::create(dir.join(format!("z_{k}.csv")))?)?;
                    pi.write_csv(fs::File::create(dir.join(format!("pi_{k}.csv")))?)?;
                }
                dts_throughput(&p).map(|r| r.throughput)
            });
            (value, outcome.map_err(|e| e.to_string()))
        })
        .collect();

    let mut out = cfg.metadata();
    out.push_str("axis,phi_analytical\n");
    let mut errors = Vec::new();
    for (v, r) in &rows {
        let _ = writeln!(out, "{v},{}", fmt_cell(r.as_ref().copied()));
        if let Err(e) = r {
            errors.push((*v, e.clone()));
        }
    }
    finish_with_errors(out, errors, rows.len())
}

pub fn cmd_simulate(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<String> {
    let spec = cfg.sweep_spec()?;
    let sim = cfg.sim_config()?;
    if opts.trace.is_some() && spec.grid.len() != 1 {
        return Err(Error::config("a block trace needs a single-point grid"));
    }
    let rows: Vec<(f64, std::result::Result<crate::sim::SimStats, String>)> = if let Some(path) = &opts.trace {
        let (value, params) = spec.points().remove(0);
        let p = params?;
        let mut w = std::io::BufWriter::new(fs::File::create(path)?);
        writeln!(w, "block,mode,stored,credited_bits")?;
        let mut io_err = None;
        let stats = simulate_dts_traced(&p, &sim, |r| {
            let mode = match r.mode {
                BlockMode::Harvest => "eh",
                BlockMode::Transmit => "it",
            };
            if io_err.is_none() {
                if let Err(e) = writeln!(w, "{},{mode},{},{}", r.block, r.stored, r.credited_bits) {
                    io_err = Some(e);
                }
            }
        });
        if let Some(e) = io_err {
            return Err(e.into());
        }
        w.flush()?;
        vec![(value, stats.map_err(|e| e.to_string()))]
    } else {
        spec.points()
            .into_par_iter()
            .map(|(value, params)| (value, params.and_then(|p| simulate_dts(&p, &sim)).map_err(|e| e.to_string())))
            .collect()
    };

    let mut out = cfg.metadata();
    out.push_str("axis,phi_sim,ci_halfwidth,overflow_prob,it_fraction\n");
    let mut errors = Vec::new();
    for (v, r) in &rows {
        match r {
            Ok(s) => {
                let _ = writeln!(
                    out,
                    "{v},{},{},{},{}",
                    s.avg_throughput, s.confidence_halfwidth, s.overflow_probability, s.it_fraction
                );
            }
            Err(e) => {
                let _ = writeln!(out, "{v},NaN,NaN,NaN,NaN");
                errors.push((*v, e.clone()));
            }
        }
    }
    finish_with_errors(out, errors, rows.len())
}

pub fn cmd_optimize_rate(cfg: &ExperimentConfig) -> Result<String> {
    let params = cfg.system_params()?;
    let best = optimal_rate(&params, cfg.r_min, cfg.r_max, cfg.resolution)?;
    let mut out = cfg.metadata();
    out.push_str("r_opt,phi_opt,boundary_optimum\n");
    let _ = writeln!(out, "{},{},{}", best.rate, best.throughput, best.boundary);
    Ok(out)
}

pub fn cmd_compare_htt(cfg: &ExperimentConfig) -> Result<String> {
    let spec = cfg.sweep_spec()?;
    let sim = cfg.sim_config()?;
    let tau_grid = cfg.tau_grid.clone();
    let rows: Vec<_> = spec
        .points()
        .into_par_iter()
        .map(|(value, params)| {
            let r = params.and_then(|p| {
                let analytical = dts_throughput(&p).map(|r| r.throughput).unwrap_or(f64::NAN);
                let dts = simulate_dts(&p, &sim)?;
                let htt = simulate_htt(&p, &sim, &tau_grid)?;
                Ok((analytical, dts, htt))
            });
            (value, r.map_err(|e| e.to_string()))
        })
        .collect();

    let mut out = cfg.metadata();
    out.push_str(
        "axis,phi_dts_analytical,phi_dts_sim,ci_dts,overflow_dts,phi_htt_sim,ci_htt,overflow_htt,tau_opt\n",
    );
    let mut errors = Vec::new();
    for (v, r) in &rows {
        match r {
            Ok((a, d, h)) => {
                let _ = writeln!(
                    out,
                    "{v},{a},{},{},{},{},{},{},{}",
                    d.avg_throughput,
                    d.confidence_halfwidth,
                    d.overflow_probability,
                    h.stats.avg_throughput,
                    h.stats.confidence_halfwidth,
                    h.stats.overflow_probability,
                    h.tau
                );
            }
            Err(e) => {
                let _ = writeln!(out, "{v},NaN,NaN,NaN,NaN,NaN,NaN,NaN,NaN");
                errors.push((*v, e.clone()));
            }
        }
    }
    finish_with_errors(out, errors, rows.len())
}
