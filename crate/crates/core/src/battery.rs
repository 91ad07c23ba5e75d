//! Discrete-level battery and the two energy quantizers.
//!
//! The battery holds one of `L + 1` uniformly spaced charge levels
//! `ε_i = i·C/L`. Harvested energy is rounded *down* to the largest level
//! strictly below it; the energy needed for a transmission is rounded *up*
//! to the smallest level strictly above it.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryConfig {
    capacity: f64,
    levels: u32,
}

/// Quantized transmit requirement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EnergyLevel {
    /// Battery level index in `0..=L`.
    Index(u32),
    /// The requirement is at least the full capacity: no storable amount suffices.
    Infeasible,
}

impl EnergyLevel {
    pub fn index(self) -> Option<u32> {
        match self {
            EnergyLevel::Index(i) => Some(i),
            EnergyLevel::Infeasible => None,
        }
    }

    /// True when a battery sitting at `stored` can cover this requirement.
    pub fn affordable_from(self, stored: u32) -> bool {
        match self {
            EnergyLevel::Index(i) => stored >= i,
            EnergyLevel::Infeasible => false,
        }
    }
}

impl BatteryConfig {
    pub fn new(capacity: f64, levels: u32) -> Result<Self> {
        if !(capacity.is_finite() && capacity > 0.0) {
            return Err(Error::domain(format!("capacity must be > 0, got {capacity}")));
        }
        if levels < 1 {
            return Err(Error::domain("battery needs at least one level"));
        }
        Ok(BatteryConfig { capacity, levels })
    }

    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    pub fn levels(&self) -> u32 {
        self.levels
    }

    /// Energy of one level step, `C / L`.
    pub fn step(&self) -> f64 {
        self.capacity / f64::from(self.levels)
    }

    /// `ε_i = i·C/L`.
    pub fn level_energy(&self, i: u32) -> Result<f64> {
        if i > self.levels {
            return Err(Error::domain(format!(
                "level {i} out of range 0..={}",
                self.levels
            )));
        }
        Ok(self.energy_of(i))
    }

    fn energy_of(&self, i: u32) -> f64 {
        f64::from(i) * self.capacity / f64::from(self.levels)
    }

    /// Largest `i` with `ε_i < energy`, capped at `L`; 0 when nothing qualifies.
    /// An exact hit `energy = ε_i` maps to `i − 1`.
    pub fn quantize_harvest(&self, energy: f64) -> Result<u32> {
        if energy.is_nan() || energy < 0.0 {
            return Err(Error::domain(format!(
                "harvested energy must be >= 0, got {energy}"
            )));
        }
        let top = self.levels;
        let units = energy / self.step();
        if units > f64::from(top) + 1.0 {
            return Ok(top);
        }
        let mut i = (units.ceil() - 1.0).clamp(0.0, f64::from(top)) as u32;
        // Settle float rounding against the exact `ε_i < energy` predicate.
        while i < top && self.energy_of(i + 1) < energy {
            i += 1;
        }
        while i > 0 && self.energy_of(i) >= energy {
            i -= 1;
        }
        Ok(i)
    }

    /// Smallest `i` with `ε_i > energy`, or [`EnergyLevel::Infeasible`] when
    /// `energy ≥ C`. An exact hit `energy = ε_i` maps to `i + 1`.
    pub fn quantize_requirement(&self, energy: f64) -> Result<EnergyLevel> {
        if energy.is_nan() || energy <= 0.0 {
            return Err(Error::domain(format!(
                "required energy must be > 0, got {energy}"
            )));
        }
        let top = self.levels;
        let units = energy / self.step();
        if units > f64::from(top) + 1.0 {
            return Ok(EnergyLevel::Infeasible);
        }
        let mut i = (units.floor() + 1.0).max(1.0) as u32;
        while i > 1 && self.energy_of(i - 1) > energy {
            i -= 1;
        }
        while i <= top && self.energy_of(i) <= energy {
            i += 1;
        }
        if i > top {
            Ok(EnergyLevel::Infeasible)
        } else {
            Ok(EnergyLevel::Index(i))
        }
    }
}
