//! Brute-force oracles shared by the integration tests. Nothing here calls
//! into the code paths it is used to check.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use wpcn_dts::TransitionMatrix;

#[derive(Debug, Clone)]
pub struct OracleReport {
    pub quantity: String,
    pub oracle: f64,
    pub primary: f64,
    pub abs_delta: f64,
    pub rel_delta: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl OracleReport {
    /// Pass iff `|primary − oracle| ≤ tolerance`.
    pub fn absolute(quantity: impl Into<String>, oracle: f64, primary: f64, tolerance: f64) -> Self {
        Self::build(quantity.into(), oracle, primary, tolerance, false)
    }

    /// Pass iff `|primary − oracle| ≤ tolerance·|oracle|`.
    pub fn relative(quantity: impl Into<String>, oracle: f64, primary: f64, tolerance: f64) -> Self {
        Self::build(quantity.into(), oracle, primary, tolerance, true)
    }

    fn build(quantity: String, oracle: f64, primary: f64, tolerance: f64, relative: bool) -> Self {
        let abs_delta = (primary - oracle).abs();
        let rel_delta = if oracle != 0.0 { abs_delta / oracle.abs() } else { abs_delta };
        let pass = if relative { rel_delta <= tolerance } else { abs_delta <= tolerance };
        OracleReport { quantity, oracle, primary, abs_delta, rel_delta, tolerance, pass }
    }
}

fn erlang_density(s: f64, n: u32) -> f64 {
    let mut factorial = 1.0;
    for k in 1..n {
        factorial *= f64::from(k);
    }
    s.powi(n as i32 - 1) * (-s).exp() / factorial
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

fn adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> Option<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let (flm, frm) = (f(lm), f(rm));
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return Some(left + right + delta / 15.0);
    }
    if depth == 0 {
        return None;
    }
    Some(
        adaptive(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)?
            + adaptive(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)?,
    )
}

/// `Pr{H > x}` for `H ~ Gamma(n, omega)` by adaptive Simpson integration of
/// the density over `[x/Ω, x/Ω + 60 + 12n]`.
pub fn ccdf_by_quadrature(x: f64, n: u32, omega: f64) -> Result<f64, String> {
    if x == 0.0 {
        return Ok(1.0);
    }
    let lo = x / omega;
    let hi = lo + 60.0 + 12.0 * f64::from(n);
    let f = |s: f64| erlang_density(s, n);
    let pieces = 64;
    let width = (hi - lo) / f64::from(pieces);
    let mut total = 0.0;
    for k in 0..pieces {
        let a = lo + f64::from(k) * width;
        let b = a + width;
        let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
        let whole = simpson(a, b, fa, fm, fb);
        total += adaptive(&f, a, b, fa, fm, fb, whole, 1e-15, 40)
            .ok_or_else(|| format!("quadrature did not converge on [{a}, {b}]"))?;
    }
    Ok(total)
}

/// Empirical state frequencies of a chain walked for `steps` transitions
/// from state 0, sampling each move from the current row.
pub fn occupancy_by_chain_walk(z: &TransitionMatrix, steps: u64, seed: u64) -> Vec<f64> {
    let n = z.size();
    let cumulative: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut acc = 0.0;
            z.row(i)
                .into_iter()
                .map(|p| {
                    acc += p;
                    acc
                })
                .collect()
        })
        .collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut counts = vec![0u64; n];
    let mut state = 0usize;
    for _ in 0..steps {
        counts[state] += 1;
        let row = &cumulative[state];
        let u: f64 = rng.random::<f64>() * row[n - 1];
        state = row.partition_point(|&c| c <= u).min(n - 1);
    }
    counts.iter().map(|&c| c as f64 / steps as f64).collect()
}

/// Stationary law from `(Zᵀ − I)π = 0` with the last equation replaced by
/// `Σπ = 1`, solved by Gaussian elimination with partial pivoting.
pub fn stationary_by_elimination(z: &TransitionMatrix) -> Vec<f64> {
    let n = z.size();
    let mut a = vec![vec![0.0; n + 1]; n];
    for (i, row) in a.iter_mut().enumerate().take(n - 1) {
        for j in 0..n {
            row[j] = z.get(j, i) - if i == j { 1.0 } else { 0.0 };
        }
    }
    for j in 0..n {
        a[n - 1][j] = 1.0;
    }
    a[n - 1][n] = 1.0;
    for col in 0..n {
        let pivot = (col..n).max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs())).unwrap();
        a.swap(col, pivot);
        let p = a[col][col];
        assert!(p.abs() > 1e-300, "singular elimination system");
        for r in col + 1..n {
            let factor = a[r][col] / p;
            if factor != 0.0 {
                for c in col..=n {
                    a[r][c] -= factor * a[col][c];
                }
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (a[r][n] - s) / a[r][r];
    }
    x
}

pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}
