//! Replication summaries and the Wilcoxon signed-rank test.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qd::Archive;

/// Largest effective sample size tested by exact enumeration.
pub const EXACT_MAX_N: usize = 25;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("no samples")]
    EmptyInput,
    #[error("paired samples differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("every paired difference is zero")]
    AllZeroDifferences,
    #[error("non-finite sample")]
    NonFinite,
}

/// Linear-interpolation quantile at `p`, position `h = (n - 1) p` in the
/// sorted sample.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// First quartile, median and third quartile.
pub fn quartiles(samples: &[f64]) -> Result<(f64, f64, f64), StatsError> {
    if samples.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    if samples.iter().any(|s| s.is_nan()) {
        return Err(StatsError::NonFinite);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok((quantile_sorted(&sorted, 0.25), quantile_sorted(&sorted, 0.5), quantile_sorted(&sorted, 0.75)))
}

pub fn median(samples: &[f64]) -> Result<f64, StatsError> {
    quartiles(samples).map(|q| q.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuartilePoint {
    pub frames: u64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    /// Replications contributing to this point.
    pub runs: usize,
}

/// Quartiles across replications on a shared frame grid. Each run is a
/// step function: its value at `g` is its last sample at or before `g`.
/// Grid points before every run's first sample are omitted.
pub fn quartile_curve(runs: &[Vec<(u64, f64)>], grid: &[u64]) -> Vec<QuartilePoint> {
    let mut out = Vec::with_capacity(grid.len());
    let mut values = Vec::with_capacity(runs.len());
    for &g in grid {
        values.clear();
        for run in runs {
            let k = run.partition_point(|&(f, _)| f <= g);
            if k > 0 && !run[k - 1].1.is_nan() {
                values.push(run[k - 1].1);
            }
        }
        if let Ok((q1, median, q3)) = quartiles(&values) {
            out.push(QuartilePoint { frames: g, q1, median, q3, runs: values.len() });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WilcoxonMethod {
    Exact,
    NormalApproximation,
}

impl WilcoxonMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            WilcoxonMethod::Exact => "exact",
            WilcoxonMethod::NormalApproximation => "normal-approximation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// `min(W+, W-)`.
    pub statistic: f64,
    pub p_value: f64,
    pub n_effective: usize,
    pub method: WilcoxonMethod,
}

/// Mid-ranks of `|d|`, doubled so that they are integers.
fn doubled_ranks(abs: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..abs.len()).collect();
    order.sort_by(|&a, &b| abs[a].total_cmp(&abs[b]));
    let mut ranks = vec![0u64; abs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && abs[order[j + 1]] == abs[order[i]] {
            j += 1;
        }
        // Positions i..=j (1-based i+1..=j+1) share the mean rank.
        let doubled = (i + 1 + j + 1) as u64;
        for &k in &order[i..=j] {
            ranks[k] = doubled;
        }
        i = j + 1;
    }
    ranks
}

/// Two-sided signed-rank test on the paired differences `x - y`.
pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64]) -> Result<WilcoxonResult, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let diffs: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let nonzero: Vec<f64> = diffs.into_iter().filter(|&d| d != 0.0).collect();
    if nonzero.is_empty() {
        return Err(StatsError::AllZeroDifferences);
    }
    let abs: Vec<f64> = nonzero.iter().map(|d| d.abs()).collect();
    let ranks = doubled_ranks(&abs);
    let plus: u64 = nonzero.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let total: u64 = ranks.iter().sum();
    let w2 = plus.min(total - plus);
    let n = nonzero.len();

    if n <= EXACT_MAX_N {
        Ok(WilcoxonResult {
            statistic: w2 as f64 / 2.0,
            p_value: exact_p(&ranks, w2),
            n_effective: n,
            method: WilcoxonMethod::Exact,
        })
    } else {
        Ok(WilcoxonResult {
            statistic: w2 as f64 / 2.0,
            p_value: normal_approx_p(&ranks, w2),
            n_effective: n,
            method: WilcoxonMethod::NormalApproximation,
        })
    }
}

/// `min(1, 2 P(T <= w2))` where `T` is the doubled positive-rank sum under
/// independent fair signs, counted by dynamic programming over sums.
fn exact_p(doubled: &[u64], w2: u64) -> f64 {
    let total: usize = doubled.iter().sum::<u64>() as usize;
    let mut counts = vec![0f64; total + 1];
    counts[0] = 1.0;
    let mut reach = 0;
    for &r in doubled {
        let r = r as usize;
        for s in (0..=reach).rev() {
            if counts[s] != 0.0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let tail: f64 = counts[..=w2 as usize].iter().sum();
    let p = 2.0 * tail / 2f64.powi(doubled.len() as i32);
    p.min(1.0)
}

/// Normal approximation with tie and continuity corrections, given doubled
/// ranks and the doubled statistic.
pub fn normal_approx_p(doubled: &[u64], w2: u64) -> f64 {
    let n = doubled.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    let mut tie_term = 0.0;
    let mut sorted = doubled.to_vec();
    sorted.sort_unstable();
    for group in sorted.chunk_by(|a, b| a == b) {
        let t = group.len() as f64;
        tie_term += t * t * t - t;
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    if var <= 0.0 {
        return 1.0;
    }
    let w = w2 as f64 / 2.0;
    let z = ((w - mean).abs() - 0.5).max(0.0) / var.sqrt();
    libm::erfc(z / std::f64::consts::SQRT_2).min(1.0)
}

/// Number of fitness values strictly above `threshold`.
pub fn count_above<I: IntoIterator<Item = f64>>(fitnesses: I, threshold: f64) -> usize {
    fitnesses.into_iter().filter(|&f| f > threshold).count()
}

/// Elites in `archive` whose fitness strictly exceeds `threshold`.
pub fn outperform_count(archive: &Archive, threshold: f64) -> usize {
    count_above(archive.iter().map(|(_, e)| e.fitness), threshold)
}
