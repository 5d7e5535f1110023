//! Per-level aggregation and savings analysis.
//!
//! For each replication level `k`, with `stat` the mean or 95th-percentile
//! latency and `extra(k)` the mean traffic (KB) a trial added over an
//! unreplicated lookup:
//!
//! - relative improvement: `100 · (stat(1) − stat(k)) / stat(1)`
//! - normalized savings:   `(stat(1) − stat(k)) / extra(k)`
//! - incremental savings:  `(stat(k−1) − stat(k)) / (extra(k) − extra(k−1))`
//!
//! Normalized savings at `k` is the traffic-weighted average of the
//! incremental savings up to `k`, which [`identity_residual`] checks.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::TrialRecord;
use crate::economics::{IncentiveModel, Threshold, BYTES_PER_KB};
use crate::stats::{mean_sorted, median_sorted, nearest_rank, Statistic};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("no trial records")]
    NoRecords,
    #[error("no completed trials at k = 1 to compare against")]
    NoBaseline,
    #[error("baseline {statistic} latency must be positive")]
    NonpositiveBaseline { statistic: Statistic },
    #[error("k = {k} added no traffic over the baseline")]
    NoExtraTraffic { k: usize },
    #[error("k = {k} added no traffic over k = {}", k - 1)]
    NonpositiveTrafficIncrement { k: usize },
    #[error("invalid record: {0}")]
    InvalidRecord(String),
}

/// Which bytes count as traffic.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrafficConvention {
    /// Queries plus every response received in the window, stragglers included.
    #[default]
    QueriesAndResponses,
    QueriesOnly,
}

/// How each trial's unreplicated traffic was determined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrafficBasis {
    /// From the trial's own accounting (one query plus the winning response).
    PerTrial,
    /// Records lacked per-server detail: extra traffic is the level's mean
    /// traffic minus the mean traffic of the k = 1 arm.
    K1Arm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationStats {
    pub k: usize,
    /// Completed trials, which the latency statistics are computed over.
    pub n: usize,
    /// All trials at this level, timed out or not; traffic is averaged over these.
    pub trials: usize,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub mean_extra_kb: f64,
}

impl ReplicationStats {
    pub fn stat(&self, statistic: Statistic) -> f64 {
        match statistic {
            Statistic::Mean => self.mean_ms,
            Statistic::P95 => self.p95_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmittedLevel {
    pub k: usize,
    pub trials: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregation {
    pub rows: Vec<ReplicationStats>,
    pub omitted: Vec<OmittedLevel>,
    pub basis: TrafficBasis,
    pub convention: TrafficConvention,
}

impl Aggregation {
    pub fn row(&self, k: usize) -> Option<&ReplicationStats> {
        self.rows.iter().find(|r| r.k == k)
    }
}

pub fn aggregate(records: &[TrialRecord]) -> Result<Aggregation, AnalysisError> {
    aggregate_with(records, TrafficConvention::default())
}

/// Summarizes records per replication level. Timed-out trials contribute no
/// latency sample but their traffic still counts.
pub fn aggregate_with(records: &[TrialRecord], convention: TrafficConvention) -> Result<Aggregation, AnalysisError> {
    if records.is_empty() {
        return Err(AnalysisError::NoRecords);
    }
    for r in records {
        r.validate().map_err(AnalysisError::InvalidRecord)?;
    }

    let basis = match convention {
        TrafficConvention::QueriesOnly => TrafficBasis::PerTrial,
        TrafficConvention::QueriesAndResponses if records.iter().all(|r| r.baseline_bytes.is_some()) => {
            TrafficBasis::PerTrial
        }
        TrafficConvention::QueriesAndResponses => TrafficBasis::K1Arm,
    };

    let mut by_k: BTreeMap<usize, Vec<&TrialRecord>> = BTreeMap::new();
    for r in records {
        by_k.entry(r.k).or_default().push(r);
    }

    let traffic = |r: &TrialRecord| match convention {
        TrafficConvention::QueriesAndResponses => r.total_bytes(),
        TrafficConvention::QueriesOnly => r.bytes_sent_total,
    };
    let extra_kb: BTreeMap<usize, f64> = match basis {
        TrafficBasis::PerTrial => by_k
            .iter()
            .map(|(&k, rs)| {
                let sum: u128 = rs
                    .iter()
                    .map(|r| u128::from(traffic(r) - per_trial_baseline(r, convention)))
                    .sum();
                (k, sum as f64 / rs.len() as f64 / BYTES_PER_KB)
            })
            .collect(),
        TrafficBasis::K1Arm => {
            let mean_total =
                |rs: &[&TrialRecord]| rs.iter().map(|r| u128::from(traffic(r))).sum::<u128>() as f64 / rs.len() as f64;
            let base = by_k.get(&1).map(|rs| mean_total(rs)).ok_or(AnalysisError::NoBaseline)?;
            by_k.iter()
                .map(|(&k, rs)| (k, (mean_total(rs) - base) / BYTES_PER_KB))
                .collect()
        }
    };

    let mut rows = Vec::new();
    let mut omitted = Vec::new();
    for (&k, rs) in &by_k {
        let mut latencies: Vec<f64> = rs.iter().filter_map(|r| r.latency_ms).collect();
        if latencies.is_empty() {
            omitted.push(OmittedLevel {
                k,
                trials: rs.len(),
                reason: "no completed trials".into(),
            });
            continue;
        }
        latencies.sort_by(f64::total_cmp);
        rows.push(ReplicationStats {
            k,
            n: latencies.len(),
            trials: rs.len(),
            mean_ms: mean_sorted(&latencies),
            median_ms: median_sorted(&latencies),
            p95_ms: nearest_rank(&latencies, 0.95),
            mean_extra_kb: if k == 1 { 0.0 } else { extra_kb[&k] },
        });
    }
    Ok(Aggregation {
        rows,
        omitted,
        basis,
        convention,
    })
}

fn per_trial_baseline(r: &TrialRecord, convention: TrafficConvention) -> u64 {
    match convention {
        TrafficConvention::QueriesAndResponses => r.baseline_bytes.expect("per-trial basis requires baselines"),
        TrafficConvention::QueriesOnly => r
            .per_server
            .iter()
            .map(|s| s.bytes_sent)
            .max()
            .unwrap_or(r.bytes_sent_total / r.k as u64),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerStatistic<T> {
    pub mean: T,
    pub p95: T,
}

impl<T> PerStatistic<T> {
    pub fn get(&self, statistic: Statistic) -> &T {
        match statistic {
            Statistic::Mean => &self.mean,
            Statistic::P95 => &self.p95,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SavingsFlag {
    /// Replication made latency worse.
    NegativeSavings,
    /// The traffic denominator was zero or negative; no value.
    NonpositiveTraffic,
}

/// A latency saving per KB of added traffic, or why there is none.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Savings {
    pub ms_per_kb: Option<f64>,
    pub flag: Option<SavingsFlag>,
}

impl Savings {
    fn compute(saved_ms: f64, traffic_kb: f64) -> Self {
        if traffic_kb <= 0.0 {
            return Savings {
                ms_per_kb: None,
                flag: Some(SavingsFlag::NonpositiveTraffic),
            };
        }
        let v = saved_ms / traffic_kb;
        Savings {
            ms_per_kb: Some(v),
            flag: (v < 0.0).then_some(SavingsFlag::NegativeSavings),
        }
    }

    pub fn meets(&self, threshold: Threshold) -> bool {
        self.ms_per_kb.is_some_and(|v| v >= threshold.ms_per_kb())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelImprovement {
    pub k: usize,
    pub pct: PerStatistic<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelSavings {
    pub k: usize,
    pub savings: PerStatistic<Savings>,
}

fn baseline(stats: &[ReplicationStats]) -> Result<&ReplicationStats, AnalysisError> {
    stats.iter().find(|r| r.k == 1).ok_or(AnalysisError::NoBaseline)
}

/// Percentage latency improvement of every level over k = 1.
pub fn relative_improvement(stats: &[ReplicationStats]) -> Result<Vec<LevelImprovement>, AnalysisError> {
    let base = baseline(stats)?;
    for statistic in Statistic::ALL {
        if base.stat(statistic) <= 0.0 {
            return Err(AnalysisError::NonpositiveBaseline { statistic });
        }
    }
    Ok(stats
        .iter()
        .map(|row| LevelImprovement {
            k: row.k,
            pct: PerStatistic {
                mean: 100.0 * (base.mean_ms - row.mean_ms) / base.mean_ms,
                p95: 100.0 * (base.p95_ms - row.p95_ms) / base.p95_ms,
            },
        })
        .collect())
}

fn ell_abs_lenient(stats: &[ReplicationStats]) -> Result<Vec<LevelSavings>, AnalysisError> {
    let base = baseline(stats)?;
    Ok(stats
        .iter()
        .filter(|row| row.k >= 2)
        .map(|row| LevelSavings {
            k: row.k,
            savings: PerStatistic {
                mean: Savings::compute(base.mean_ms - row.mean_ms, row.mean_extra_kb),
                p95: Savings::compute(base.p95_ms - row.p95_ms, row.mean_extra_kb),
            },
        })
        .collect())
}

fn ell_incr_lenient(stats: &[ReplicationStats]) -> Vec<LevelSavings> {
    stats
        .iter()
        .filter_map(|row| {
            let prev = stats.iter().find(|p| p.k + 1 == row.k)?;
            let delta = row.mean_extra_kb - prev.mean_extra_kb;
            Some(LevelSavings {
                k: row.k,
                savings: PerStatistic {
                    mean: Savings::compute(prev.mean_ms - row.mean_ms, delta),
                    p95: Savings::compute(prev.p95_ms - row.p95_ms, delta),
                },
            })
        })
        .collect()
}

/// Normalized latency savings of each level k ≥ 2 over k = 1.
pub fn ell_abs(stats: &[ReplicationStats]) -> Result<Vec<LevelSavings>, AnalysisError> {
    let rows = ell_abs_lenient(stats)?;
    if let Some(bad) = rows.iter().find(|r| r.savings.mean.ms_per_kb.is_none()) {
        return Err(AnalysisError::NoExtraTraffic { k: bad.k });
    }
    Ok(rows)
}

/// Incremental savings of each level whose predecessor is present.
pub fn ell_incr(stats: &[ReplicationStats]) -> Result<Vec<LevelSavings>, AnalysisError> {
    let rows = ell_incr_lenient(stats);
    if let Some(bad) = rows.iter().find(|r| r.savings.mean.ms_per_kb.is_none()) {
        return Err(AnalysisError::NonpositiveTrafficIncrement { k: bad.k });
    }
    Ok(rows)
}

/// Largest `k` such that every added server up to `k` saved at least
/// `threshold`; 1 when even the second server falls short.
pub fn recommend_k(incr: &[LevelSavings], statistic: Statistic, threshold: Threshold) -> usize {
    let mut k = 1;
    while let Some(row) = incr.iter().find(|r| r.k == k + 1) {
        if !row.savings.get(statistic).meets(threshold) {
            break;
        }
        k += 1;
    }
    k
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelAnalysis {
    pub k: usize,
    pub relative_improvement_pct: PerStatistic<f64>,
    /// Absent at k = 1.
    pub ell_abs: Option<PerStatistic<Savings>>,
    /// Absent at k = 1 and where level k − 1 is missing.
    pub ell_incr: Option<PerStatistic<Savings>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub statistic: Statistic,
    /// Incentive model the threshold came from; `None` for an explicit threshold.
    pub model: Option<IncentiveModel>,
    pub threshold: Threshold,
    pub recommended_k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub traffic_basis: TrafficBasis,
    pub traffic_convention: TrafficConvention,
    pub baseline: ReplicationStats,
    pub levels: Vec<ReplicationStats>,
    pub rows: Vec<LevelAnalysis>,
    pub omitted: Vec<OmittedLevel>,
    pub recommendations: Vec<Recommendation>,
    /// Mean-latency recommendation under the first threshold given, if any.
    pub recommended_k: Option<usize>,
    /// Largest relative gap between `stat(1) − stat(k)` and the sum of
    /// incremental savings times traffic increments.
    pub identity_max_residual: f64,
}

impl AnalysisReport {
    pub fn incremental(&self) -> Vec<LevelSavings> {
        self.rows
            .iter()
            .filter_map(|r| r.ell_incr.map(|savings| LevelSavings { k: r.k, savings }))
            .collect()
    }
}

/// Aggregates `records` and derives every savings figure, plus a
/// recommendation per (statistic, threshold).
pub fn build_report(
    records: &[TrialRecord],
    thresholds: &[(Option<IncentiveModel>, Threshold)],
    convention: TrafficConvention,
) -> Result<AnalysisReport, AnalysisError> {
    let agg = aggregate_with(records, convention)?;
    let base = baseline(&agg.rows)?.clone();
    let improvement = relative_improvement(&agg.rows)?;
    let abs = ell_abs_lenient(&agg.rows)?;
    let incr = ell_incr_lenient(&agg.rows);

    let rows = agg
        .rows
        .iter()
        .zip(&improvement)
        .map(|(row, imp)| LevelAnalysis {
            k: row.k,
            relative_improvement_pct: imp.pct,
            ell_abs: abs.iter().find(|a| a.k == row.k).map(|a| a.savings),
            ell_incr: incr.iter().find(|a| a.k == row.k).map(|a| a.savings),
        })
        .collect();

    let mut recommendations = Vec::new();
    for statistic in Statistic::ALL {
        for &(model, threshold) in thresholds {
            recommendations.push(Recommendation {
                statistic,
                model,
                threshold,
                recommended_k: recommend_k(&incr, statistic, threshold),
            });
        }
    }
    let recommended_k = recommendations.first().map(|r| r.recommended_k);
    let identity_max_residual = identity_residual(&agg.rows, &incr);

    Ok(AnalysisReport {
        traffic_basis: agg.basis,
        traffic_convention: agg.convention,
        baseline: base,
        levels: agg.rows,
        rows,
        omitted: agg.omitted,
        recommendations,
        recommended_k,
        identity_max_residual,
    })
}

/// Checks `stat(1) − stat(k) = Σ_{j=2..k} ell_incr(j) · Δextra(j)` for every
/// `k` reachable through a contiguous run of defined increments, and returns
/// the largest relative residual (0 when nothing is checkable).
pub fn identity_residual(stats: &[ReplicationStats], incr: &[LevelSavings]) -> f64 {
    let Some(base) = stats.iter().find(|r| r.k == 1) else {
        return 0.0;
    };
    let mut worst: f64 = 0.0;
    for statistic in Statistic::ALL {
        let mut sum = 0.0;
        let mut prev = base;
        while let (Some(row), Some(step)) = (
            stats.iter().find(|r| r.k == prev.k + 1),
            incr.iter().find(|r| r.k == prev.k + 1),
        ) {
            let Some(v) = step.savings.get(statistic).ms_per_kb else {
                break;
            };
            sum += v * (row.mean_extra_kb - prev.mean_extra_kb);
            let lhs = base.stat(statistic) - row.stat(statistic);
            let scale = lhs.abs().max(sum.abs());
            if scale > 0.0 {
                worst = worst.max((lhs - sum).abs() / scale);
            }
            prev = row;
        }
    }
    worst
}

fn fmt_savings(s: &Option<PerStatistic<Savings>>, statistic: Statistic) -> String {
    match s.map(|p| *p.get(statistic)) {
        None => "-".into(),
        Some(Savings {
            ms_per_kb: Some(v),
            flag,
        }) => {
            format!("{v:.2}{}", if flag.is_some() { "!" } else { "" })
        }
        Some(Savings { ms_per_kb: None, .. }) => "n/a".into(),
    }
}

/// Plain-text rendering of a report.
pub fn render_report(report: &AnalysisReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>3} {:>7} {:>7} {:>10} {:>10} {:>9} {:>8} {:>8} {:>10} {:>10} {:>10} {:>10}",
        "k",
        "n",
        "trials",
        "mean ms",
        "p95 ms",
        "extra KB",
        "mean %",
        "p95 %",
        "abs mean",
        "abs p95",
        "incr mean",
        "incr p95"
    );
    for (level, row) in report.levels.iter().zip(&report.rows) {
        let _ = writeln!(
            out,
            "{:>3} {:>7} {:>7} {:>10.2} {:>10.2} {:>9.4} {:>8.2} {:>8.2} {:>10} {:>10} {:>10} {:>10}",
            level.k,
            level.n,
            level.trials,
            level.mean_ms,
            level.p95_ms,
            level.mean_extra_kb,
            row.relative_improvement_pct.mean,
            row.relative_improvement_pct.p95,
            fmt_savings(&row.ell_abs, Statistic::Mean),
            fmt_savings(&row.ell_abs, Statistic::P95),
            fmt_savings(&row.ell_incr, Statistic::Mean),
            fmt_savings(&row.ell_incr, Statistic::P95),
        );
    }
    for o in &report.omitted {
        let _ = writeln!(out, "omitted k = {} ({} trials): {}", o.k, o.trials, o.reason);
    }
    for r in &report.recommendations {
        let source = r.model.map_or_else(|| "explicit".to_string(), |m| m.to_string());
        let _ = writeln!(
            out,
            "recommended k = {} for {} latency at {} ({source})",
            r.recommended_k, r.statistic, r.threshold
        );
    }
    out
}
