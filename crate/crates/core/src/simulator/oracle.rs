use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{LatencyDistribution, SimError};
use crate::stats::{sorted, Statistic};

/// Empirical samples are enumerated exhaustively when `n^k` stays within this bound.
pub const EXHAUSTIVE_LIMIT: u64 = 1_000_000;
/// Otherwise the minimum is resampled this many times.
pub const RESAMPLE_DRAWS: usize = 1_000_000;

/// Expected statistic of the fastest of `k` independent draws.
///
/// Constant and shifted-exponential distributions are solved in closed form
/// (the minimum of `k` exponentials with mean `m` is exponential with mean
/// `m/k`, whose 95th percentile is `(m/k)·ln 20`). Empirical distributions are
/// brute-forced over every `k`-tuple of samples, or resampled when there are
/// too many tuples.
pub fn min_of_k_oracle(distribution: &LatencyDistribution, k: usize, statistic: Statistic) -> Result<f64, SimError> {
    if k == 0 {
        return Err(SimError::ZeroK);
    }
    match distribution {
        LatencyDistribution::Constant { ms } => Ok(*ms),
        LatencyDistribution::ShiftedExponential { shift_ms, mean_ms } => {
            let scale = mean_ms / k as f64;
            Ok(match statistic {
                Statistic::Mean => shift_ms + scale,
                Statistic::P95 => shift_ms + scale * 20f64.ln(),
            })
        }
        LatencyDistribution::Empirical { samples_ms } => {
            if samples_ms.is_empty() {
                return Err(SimError::NoOracle("an empty sample list"));
            }
            let minima = if (samples_ms.len() as f64).powi(k as i32) <= EXHAUSTIVE_LIMIT as f64 {
                enumerate_minima(samples_ms, k)
            } else {
                resample_minima(samples_ms, k)
            };
            Ok(statistic.of_sorted(&sorted(minima)))
        }
        LatencyDistribution::LogNormal { .. } => Err(SimError::NoOracle("log-normal latencies")),
    }
}

fn enumerate_minima(samples: &[f64], k: usize) -> Vec<f64> {
    let n = samples.len();
    let mut digits = vec![0usize; k];
    let mut out = Vec::with_capacity(n.pow(k as u32));
    loop {
        out.push(digits.iter().map(|&i| samples[i]).fold(f64::INFINITY, f64::min));
        let mut pos = 0;
        loop {
            if pos == k {
                return out;
            }
            digits[pos] += 1;
            if digits[pos] < n {
                break;
            }
            digits[pos] = 0;
            pos += 1;
        }
    }
}

fn resample_minima(samples: &[f64], k: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0AC1E);
    (0..RESAMPLE_DRAWS)
        .map(|_| {
            (0..k)
                .map(|_| samples[rng.random_range(0..samples.len())])
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}
