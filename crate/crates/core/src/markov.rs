//! Battery-level Markov chain of the discrete time-switching protocol.
//!
//! State `S_i` means the battery holds `ε_i = i·C/L`. Within one block the
//! battery either harvests (it cannot afford the quantized transmit
//! requirement) or transmits and drops by exactly that requirement. The
//! resulting `(L+1)×(L+1)` transition matrix is built entry by entry from
//! eight disjoint cases and its stationary law gives the long-run battery
//! occupancy.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::stats::{ccdf_unchecked, SystemParams};

/// Largest supported `L` (dense storage; the solve is cubic in `L`).
pub const MAX_LEVELS: u32 = 2000;

/// Slack tolerated on an entry before it is considered a formula bug.
const ENTRY_SLACK: f64 = 1e-12;
/// Row-sum deviation that aborts construction.
const ROW_SUM_GUARD: f64 = 1e-9;

const POWER_ITERATION_CAP: usize = 1_000_000;
const POWER_ITERATION_TOL: f64 = 1e-13;
/// Relative pivot size below which the direct system is treated as singular.
const SINGULAR_PIVOT_RATIO: f64 = 1e-14;

/// The eight transition cases of the chain. Every `(i, j)` pair belongs to
/// exactly one of them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransitionCase {
    /// `S_0 → S_0`: nothing harvested.
    StayEmpty,
    /// `S_0 → S_L`: harvest reaches capacity.
    EmptyToFull,
    /// `S_0 → S_j`, `0 < j < L`.
    EmptyToPartial,
    /// `S_i → S_i`, `0 < i < L`: harvest block with nothing credited.
    StayPartial,
    /// `S_i → S_j`, `0 < i < j < L`.
    PartialCharge,
    /// `S_i → S_L`, `0 < i < L`.
    PartialToFull,
    /// `S_L → S_L`: requirement exceeds capacity, harvest is lost.
    StayFull,
    /// `S_j → S_i`, `i < j`: a transmission consumed `j − i` units.
    Discharge,
}

/// Case of the `from → to` transition for a battery with `levels` steps.
pub fn transition_case(from: u32, to: u32, levels: u32) -> Option<TransitionCase> {
    if from > levels || to > levels {
        return None;
    }
    let case = if to < from {
        TransitionCase::Discharge
    } else if from == 0 {
        if to == 0 {
            TransitionCase::StayEmpty
        } else if to == levels {
            TransitionCase::EmptyToFull
        } else {
            TransitionCase::EmptyToPartial
        }
    } else if from == levels {
        TransitionCase::StayFull
    } else if to == from {
        TransitionCase::StayPartial
    } else if to == levels {
        TransitionCase::PartialToFull
    } else {
        TransitionCase::PartialCharge
    };
    Some(case)
}

/// Row-stochastic transition matrix over battery levels `0..=L`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    entries: DMatrix<f64>,
}

impl TransitionMatrix {
    /// Builds the matrix for the given operating point.
    pub fn build(params: &SystemParams) -> Result<Self> {
        params.validate()?;
        if params.levels > MAX_LEVELS {
            return Err(Error::domain(format!(
                "levels {} exceeds the supported maximum {MAX_LEVELS}",
                params.levels
            )));
        }
        let levels = params.levels;
        let l = levels as usize;
        let n = params.n_antennas;
        let omega = params.channel_variance;

        // Harvest thresholds: ε_H ≥ k units iff H > k·C/(ηPL).
        let harvest_unit = params.capacity / (params.efficiency * params.ap_power * f64::from(levels));
        let harvest_tail: Vec<f64> = (0..=l + 1)
            .map(|k| ccdf_unchecked(k as f64 * harvest_unit, n, omega))
            .collect();

        // Requirement thresholds: ε_T ≤ k units iff G ≥ υN₀L/(kC); k = 0 is never affordable.
        let requirement_scale =
            params.snr_threshold() * params.noise_power * f64::from(levels) / params.capacity;
        let affordable: Vec<f64> = (0..=l)
            .map(|k| {
                if k == 0 {
                    0.0
                } else {
                    ccdf_unchecked(requirement_scale / k as f64, n, omega)
                }
            })
            .collect();

        let mut entries = DMatrix::<f64>::zeros(l + 1, l + 1);
        for i in 0..=l {
            let harvest_gate = 1.0 - affordable[i];
            for j in 0..=l {
                let case = transition_case(i as u32, j as u32, levels)
                    .expect("indices are within 0..=L");
                let p = match case {
                    TransitionCase::StayEmpty => 1.0 - harvest_tail[1],
                    TransitionCase::EmptyToFull => harvest_tail[l],
                    TransitionCase::EmptyToPartial => harvest_tail[j] - harvest_tail[j + 1],
                    TransitionCase::StayPartial => harvest_gate * (1.0 - harvest_tail[1]),
                    TransitionCase::PartialCharge => {
                        harvest_gate * (harvest_tail[j - i] - harvest_tail[j - i + 1])
                    }
                    TransitionCase::PartialToFull => harvest_gate * harvest_tail[l - i],
                    TransitionCase::StayFull => 1.0 - affordable[l],
                    TransitionCase::Discharge => affordable[i - j] - affordable[i - j - 1],
                };
                if !(-ENTRY_SLACK..=1.0 + ENTRY_SLACK).contains(&p) {
                    return Err(Error::numerical(format!(
                        "transition probability T[{i}][{j}] = {p} ({case:?}) outside [0, 1]"
                    )));
                }
                entries[(i, j)] = p.clamp(0.0, 1.0);
            }
        }

        let matrix = TransitionMatrix { entries };
        let err = matrix.max_row_sum_error();
        if err > ROW_SUM_GUARD {
            return Err(Error::numerical(format!(
                "transition matrix rows deviate from 1 by {err:e}"
            )));
        }
        Ok(matrix)
    }

    /// Wraps explicit rows after checking they form a stochastic matrix
    /// (entries in [0, 1], row sums within 1e-12 of one).
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n < 2 {
            return Err(Error::domain("transition matrix needs at least two states"));
        }
        let mut entries = DMatrix::<f64>::zeros(n, n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::domain(format!("row {i} has length {}, expected {n}", row.len())));
            }
            for (j, &p) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::domain(format!("entry ({i}, {j}) = {p} outside [0, 1]")));
                }
                entries[(i, j)] = p;
            }
        }
        let matrix = TransitionMatrix { entries };
        let err = matrix.max_row_sum_error();
        if err > 1e-12 {
            return Err(Error::domain(format!("rows are not stochastic (max error {err:e})")));
        }
        Ok(matrix)
    }

    /// Number of states, `L + 1`.
    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.entries[(from, to)]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.entries.row(i).iter().copied().collect()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn max_row_sum_error(&self) -> f64 {
        self.entries
            .row_iter()
            .map(|r| (r.sum() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Debug dump, row-major, header `i,j,p`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "i,j,p")?;
        for i in 0..self.size() {
            for j in 0..self.size() {
                writeln!(w, "{i},{j},{}", self.entries[(i, j)])?;
            }
        }
        Ok(())
    }
}

/// How to obtain the stationary law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolveMethod {
    /// Solve `(Zᵀ − I + B)π = 1` with `B` the all-ones matrix (LU, partial pivoting).
    #[default]
    Direct,
    /// Iterate `π ← Zᵀπ` from the uniform vector.
    PowerIteration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDistribution {
    probs: Vec<f64>,
    method: SolveMethod,
    /// `min |u_ii| / max |u_ii|` of the LU factor (direct solve only).
    pivot_ratio: Option<f64>,
    /// Iterations used (power iteration only).
    iterations: Option<usize>,
}

impl StationaryDistribution {
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn method(&self) -> SolveMethod {
        self.method
    }

    /// Conditioning indicator of the direct system; small values mean the
    /// chain is close to reducible.
    pub fn pivot_ratio(&self) -> Option<f64> {
        self.pivot_ratio
    }

    pub fn iterations(&self) -> Option<usize> {
        self.iterations
    }

    /// `‖Zᵀπ − π‖∞`.
    pub fn residual(&self, z: &TransitionMatrix) -> f64 {
        let pi = DVector::from_column_slice(&self.probs);
        let next = z.as_matrix().tr_mul(&pi);
        (next - pi).amax()
    }

    /// Total-variation distance to another probability vector of equal length.
    pub fn total_variation(&self, other: &[f64]) -> f64 {
        assert_eq!(self.probs.len(), other.len());
        0.5 * self
            .probs
            .iter()
            .zip(other)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }

    /// Debug dump, header `i,pi`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "i,pi")?;
        for (i, p) in self.probs.iter().enumerate() {
            writeln!(w, "{i},{p}")?;
        }
        Ok(())
    }
}

/// Stationary distribution of an irreducible row-stochastic matrix.
pub fn stationary_distribution(
    z: &TransitionMatrix,
    method: SolveMethod,
) -> Result<StationaryDistribution> {
    match method {
        SolveMethod::Direct => solve_direct(z),
        SolveMethod::PowerIteration => solve_power(z),
    }
}

fn solve_direct(z: &TransitionMatrix) -> Result<StationaryDistribution> {
    let n = z.size();
    let mut system = z.as_matrix().transpose();
    for i in 0..n {
        system[(i, i)] -= 1.0;
    }
    system.add_scalar_mut(1.0);

    let lu = system.lu();
    let diag = lu.u().diagonal();
    let largest = diag.amax();
    let smallest = diag.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    let pivot_ratio = if largest > 0.0 { smallest / largest } else { 0.0 };
    if !(pivot_ratio > SINGULAR_PIVOT_RATIO) {
        return Err(Error::numerical(format!(
            "stationary system is singular (pivot ratio {pivot_ratio:e}); chain may be reducible"
        )));
    }
    let rhs = DVector::from_element(n, 1.0);
    let solution = lu
        .solve(&rhs)
        .ok_or_else(|| Error::numerical("stationary system is singular"))?;

    let probs = normalize(solution.iter().copied().collect())?;
    Ok(StationaryDistribution {
        probs,
        method: SolveMethod::Direct,
        pivot_ratio: Some(pivot_ratio),
        iterations: None,
    })
}

fn solve_power(z: &TransitionMatrix) -> Result<StationaryDistribution> {
    let n = z.size();
    let mut pi = DVector::from_element(n, 1.0 / n as f64);
    for it in 1..=POWER_ITERATION_CAP {
        let next = z.as_matrix().tr_mul(&pi);
        let delta = (&next - &pi).amax();
        pi = next;
        if delta < POWER_ITERATION_TOL {
            let probs = normalize(pi.iter().copied().collect())?;
            return Ok(StationaryDistribution {
                probs,
                method: SolveMethod::PowerIteration,
                pivot_ratio: None,
                iterations: Some(it),
            });
        }
    }
    Err(Error::numerical(format!(
        "power iteration did not converge within {POWER_ITERATION_CAP} steps"
    )))
}

/// Clears round-off negatives and rescales to unit mass.
fn normalize(mut probs: Vec<f64>) -> Result<Vec<f64>> {
    for (i, p) in probs.iter_mut().enumerate() {
        if !p.is_finite() || *p < -1e-10 {
            return Err(Error::numerical(format!("stationary probability π[{i}] = {p}")));
        }
        *p = p.max(0.0);
    }
    let total: f64 = probs.iter().sum();
    if !(total > 0.0) {
        return Err(Error::numerical("stationary vector has zero mass"));
    }
    probs.iter_mut().for_each(|p| *p /= total);
    Ok(probs)
}
