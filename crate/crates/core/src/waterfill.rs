//! Scalar waterfilling over eigenvalue allocations.
//!
//! Both directions of the trade-off between `Σ λ_i d_i` and `½ Σ log(1/d_i)`
//! with `0 < d_i ≤ 1` are solved exactly by sorting and scanning the
//! breakpoints, never by bisection.

use crate::error::{Error, Result};

/// Relative threshold below which an eigenvalue is treated as nonpositive.
pub const EIG_RELATIVE_TOLERANCE: f64 = 1e-10;

/// Optimal allocations for one waterfilling solve.
#[derive(Debug, Clone, PartialEq)]
pub struct WaterfillSolution {
    /// `d_i ∈ (0, 1]`, in input order.
    pub allocations: Vec<f64>,
    /// Common value of `λ_i d_i` across active modes.
    pub water_level: f64,
    /// Indices with `d_i < 1`, ascending.
    pub active_set: Vec<usize>,
    /// Indices with `d_i = 1`, ascending.
    pub saturated_set: Vec<usize>,
    /// `½ Σ log(1/d_i)` in nats.
    pub achieved_rate: f64,
    /// `Σ λ_i d_i`.
    pub achieved_trace: f64,
}

/// `ε_eig = 1e-10 · max |λ_i|`.
pub fn eig_tolerance(lambdas: &[f64]) -> f64 {
    EIG_RELATIVE_TOLERANCE * lambdas.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

fn check_finite(lambdas: &[f64]) -> Result<()> {
    if lambdas.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(())
}

/// Indices of modes that can be compressed profitably (`λ_i > ε_eig`).
fn positive_modes(lambdas: &[f64]) -> Vec<usize> {
    let eps = eig_tolerance(lambdas);
    (0..lambdas.len()).filter(|&i| lambdas[i] > eps).collect()
}

fn uncompressed(lambdas: &[f64]) -> WaterfillSolution {
    let top = positive_modes(lambdas)
        .iter()
        .map(|&i| lambdas[i])
        .fold(0.0_f64, f64::max);
    WaterfillSolution {
        allocations: vec![1.0; lambdas.len()],
        water_level: top,
        active_set: Vec::new(),
        saturated_set: (0..lambdas.len()).collect(),
        achieved_rate: 0.0,
        achieved_trace: lambdas.iter().sum(),
    }
}

/// Fills in allocations from the chosen active modes and their common level.
fn assemble(lambdas: &[f64], active: &[usize], log_level: f64) -> WaterfillSolution {
    let mut allocations = vec![1.0; lambdas.len()];
    let mut rate = 0.0;
    for &i in active {
        let log_lambda = lambdas[i].ln();
        allocations[i] = (log_level - log_lambda).exp();
        rate += 0.5 * (log_lambda - log_level);
    }
    let mut active_set: Vec<usize> = active.to_vec();
    active_set.sort_unstable();
    let saturated_set = (0..lambdas.len())
        .filter(|i| active_set.binary_search(i).is_err())
        .collect();
    let achieved_trace = lambdas
        .iter()
        .zip(&allocations)
        .map(|(l, d)| l * d)
        .sum();
    WaterfillSolution {
        allocations,
        water_level: log_level.exp(),
        active_set,
        saturated_set,
        achieved_rate: rate,
        achieved_trace,
    }
}

/// Minimizes `Σ λ_i d_i` subject to `½ Σ log(1/d_i) ≤ rate`, `0 < d_i ≤ 1`.
///
/// Modes with `λ_i ≤ ε_eig` stay at `d_i = 1`. When any mode is positive the
/// rate constraint is active.
pub fn solve_min_trace_given_rate(lambdas: &[f64], rate: f64) -> Result<WaterfillSolution> {
    check_finite(lambdas)?;
    if !(rate >= 0.0) || !rate.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "rate must be finite and nonnegative, got {rate}"
        )));
    }
    let mut order = positive_modes(lambdas);
    if order.is_empty() || rate == 0.0 {
        return Ok(uncompressed(lambdas));
    }
    order.sort_by(|&a, &b| lambdas[b].total_cmp(&lambdas[a]));

    let mut sum_log = 0.0;
    let mut start = 0;
    while start < order.len() {
        let value = lambdas[order[start]];
        let mut end = start;
        while end < order.len() && lambdas[order[end]] == value {
            sum_log += lambdas[order[end]].ln();
            end += 1;
        }
        let log_level = (sum_log - 2.0 * rate) / end as f64;
        let accept = match order.get(end) {
            None => true,
            Some(&next) => log_level >= lambdas[next].ln(),
        };
        if accept {
            return Ok(assemble(lambdas, &order[..end], log_level));
        }
        start = end;
    }
    unreachable!("the last block is always accepted")
}

/// Minimizes `½ Σ log(1/d_i)` subject to `Σ λ_i d_i ≤ budget`, `0 < d_i ≤ 1`.
///
/// Returns all ones when `budget ≥ Σ λ_i` (up to summation rounding). Fails with
/// [`Error::Infeasible`] when the budget does not exceed the cost of the
/// nonpositive modes, which no finite rate can undercut.
pub fn solve_min_rate_given_budget(lambdas: &[f64], budget: f64) -> Result<WaterfillSolution> {
    check_finite(lambdas)?;
    if budget.is_nan() {
        return Err(Error::InvalidArgument("budget is NaN".into()));
    }
    let total: f64 = lambdas.iter().sum();
    // Budgets equal to Σλ up to summation rounding cost nothing.
    let slack = 8.0 * f64::EPSILON * lambdas.len() as f64 * lambdas.iter().map(|v| v.abs()).sum::<f64>();
    if budget >= total - slack {
        return Ok(uncompressed(lambdas));
    }
    let mut order = positive_modes(lambdas);
    let floor: f64 = {
        let eps = eig_tolerance(lambdas);
        lambdas.iter().filter(|&&v| v <= eps).sum()
    };
    let target = budget - floor;
    if !(target > 0.0) || order.is_empty() {
        return Err(Error::Infeasible { budget, floor });
    }
    order.sort_by(|&a, &b| lambdas[a].total_cmp(&lambdas[b]));

    // With ν in [λ_(j-1), λ_(j)], the cost is prefix_j + (p - j)·ν.
    let p = order.len();
    let mut prefix = 0.0;
    for j in 0..p {
        let level = (target - prefix) / (p - j) as f64;
        if level <= lambdas[order[j]] {
            let active: Vec<usize> = order[j..]
                .iter()
                .copied()
                .filter(|&i| lambdas[i] > level)
                .collect();
            let mut sol = assemble(lambdas, &active, level.ln());
            sol.water_level = level;
            return Ok(sol);
        }
        prefix += lambdas[order[j]];
    }
    // Only reachable through rounding when budget is within an ulp of Σλ.
    Ok(uncompressed(lambdas))
}
