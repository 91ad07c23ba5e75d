//! Discrete time-switching (DTS) protocol for a wireless-powered link.
//!
//! A multi-antenna access point beams RF energy to a battery-less source
//! that stores it in a discrete-level battery. At every block the source
//! transmits at a fixed rate if its stored energy covers the outage-free
//! requirement for the current uplink channel, and harvests otherwise.
//!
//! The crate provides
//! - [`stats`]: Erlang channel-gain law, sampler and unit conversions,
//! - [`battery`]: level quantization of harvested and required energy,
//! - [`markov`]: the battery transition matrix and its stationary law,
//! - [`analysis`]: closed-form throughput, optimal rate and sweeps,
//! - [`sim`]: block-level Monte Carlo for DTS and a harvest-then-transmit baseline,
//! - [`cli`]: experiment configs and the CSV-emitting commands.

pub mod analysis;
pub mod battery;
pub mod cli;
pub mod error;
pub mod markov;
pub mod sim;
pub mod stats;

pub use analysis::{dts_throughput, optimal_rate, sweep, RateOptimum, SweepAxis, SweepSpec, ThroughputResult};
pub use battery::{BatteryConfig, EnergyLevel};
pub use error::{Error, Result};
pub use markov::{stationary_distribution, SolveMethod, StationaryDistribution, TransitionMatrix};
pub use sim::{simulate_dts, simulate_htt, BatteryMode, HttOutcome, SimConfig, SimStats};
pub use stats::{dbm_to_watts, erlang_ccdf, pathloss_variance, sample_gain, SystemParams};
