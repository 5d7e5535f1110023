//! Order statistics shared by the experiment analysis and the simulator oracle.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Latency statistic a savings figure is computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistic {
    Mean,
    P95,
}

impl Statistic {
    pub const ALL: [Statistic; 2] = [Statistic::Mean, Statistic::P95];

    /// Evaluates the statistic over an ascending, nonempty sample.
    pub fn of_sorted(self, sorted: &[f64]) -> f64 {
        match self {
            Statistic::Mean => mean_sorted(sorted),
            Statistic::P95 => nearest_rank(sorted, 0.95),
        }
    }
}

impl fmt::Display for Statistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Statistic::Mean => "mean",
            Statistic::P95 => "p95",
        })
    }
}

/// Nearest-rank quantile: the element at 1-based rank ⌈q·n⌉ (at least 1).
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let n = sorted.len();
    let rank = ((q * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

/// Lower-middle element for even lengths.
pub fn median_sorted(sorted: &[f64]) -> f64 {
    nearest_rank(sorted, 0.5)
}

/// Mean summed in ascending order, so any permutation of the sample gives
/// the same bits.
pub fn mean_sorted(sorted: &[f64]) -> f64 {
    assert!(!sorted.is_empty(), "mean of an empty sample");
    sorted.iter().sum::<f64>() / sorted.len() as f64
}

pub fn sorted(values: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.into_iter().collect();
    v.sort_by(f64::total_cmp);
    v
}
