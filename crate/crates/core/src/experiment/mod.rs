//! Randomized replication trials and the analysis of their outcomes.
//!
//! A run ranks nothing itself: it takes an already ranked server list, then
//! for each trial draws a target name and a replication level `k` uniformly
//! from `1..=k_max` with the seeded generator and races one lookup across the
//! first `k` servers. Trials run one after another.

mod analysis;
mod records;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{encode_query, QuerySpec, QueryType};
use crate::resolver::{RacedResult, RankedServerList, ResolveError, Resolver, ServerAccount, Transport};

pub use analysis::{
    aggregate, aggregate_with, build_report, ell_abs, ell_incr, identity_residual, recommend_k, relative_improvement,
    render_report, Aggregation, AnalysisError, AnalysisReport, LevelAnalysis, LevelImprovement, LevelSavings,
    OmittedLevel, PerStatistic, Recommendation, ReplicationStats, Savings, SavingsFlag, TrafficBasis,
    TrafficConvention,
};
pub use records::{read_csv, read_json, write_csv, write_json, CSV_HEADER};

pub const DEFAULT_K_MAX: usize = 10;
pub const DEFAULT_TIMEOUT_MS: f64 = 30_000.0;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Resolve(#[from] ResolveError),
    #[error("trial records: {0}")]
    Records(String),
}

fn default_k_max() -> usize {
    DEFAULT_K_MAX
}

fn default_timeout_ms() -> f64 {
    DEFAULT_TIMEOUT_MS
}

fn default_qtype() -> QueryType {
    QueryType::A
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub targets: Vec<String>,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    pub trials: usize,
    /// Lookups with no winner within this long count as timed out; it is
    /// also how long each lookup keeps listening for stragglers.
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_qtype")]
    pub qtype: QueryType,
}

impl ExperimentConfig {
    pub fn new(targets: Vec<String>, trials: usize, seed: u64) -> Self {
        ExperimentConfig {
            targets,
            k_max: DEFAULT_K_MAX,
            trials,
            timeout_ms: DEFAULT_TIMEOUT_MS,
            seed,
            qtype: QueryType::A,
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::InvalidConfig(m));
        if self.targets.is_empty() {
            return bad("no targets".into());
        }
        if self.k_max == 0 {
            return bad("k_max must be at least 1".into());
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if !(self.timeout_ms.is_finite() && self.timeout_ms > 0.0) {
            return bad(format!("timeout {} ms must be positive", self.timeout_ms));
        }
        for t in &self.targets {
            if let Err(e) = encode_query(&QuerySpec::new(t.clone(), self.qtype, 0)) {
                return bad(format!("target {t:?}: {e}"));
            }
        }
        Ok(())
    }
}

/// Outcome of one raced lookup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub target: String,
    pub k: usize,
    pub latency_ms: Option<f64>,
    pub timed_out: bool,
    pub bytes_sent_total: u64,
    pub bytes_received_total: u64,
    /// When the trial started; the runner writes milliseconds since the run began.
    pub timestamp: String,
    /// Traffic an unreplicated lookup would have cost. Unknown for records
    /// imported from CSV.
    #[serde(default)]
    pub baseline_bytes: Option<u64>,
    #[serde(default)]
    pub winner_index: Option<usize>,
    #[serde(default)]
    pub per_server: Vec<ServerAccount>,
}

impl TrialRecord {
    pub fn from_result(target: impl Into<String>, k: usize, result: &RacedResult, timestamp: String) -> Self {
        TrialRecord {
            target: target.into(),
            k,
            latency_ms: result.latency_ms,
            timed_out: result.timed_out,
            bytes_sent_total: result.bytes_sent_total(),
            bytes_received_total: result.bytes_received_total(),
            timestamp,
            baseline_bytes: Some(result.baseline_bytes()),
            winner_index: result.winner_index,
            per_server: result.per_server.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.k == 0 {
            return Err(format!("{}: k must be at least 1", self.target));
        }
        if self.latency_ms.is_some() == self.timed_out {
            return Err(format!(
                "{}: latency must be present exactly when the trial did not time out",
                self.target
            ));
        }
        if let Some(ms) = self.latency_ms {
            if !(ms.is_finite() && ms >= 0.0) {
                return Err(format!("{}: latency {ms} invalid", self.target));
            }
        }
        if let Some(b) = self.baseline_bytes {
            if b > self.bytes_sent_total + self.bytes_received_total {
                return Err(format!("{}: baseline exceeds total traffic", self.target));
            }
        }
        Ok(())
    }

    pub fn total_bytes(&self) -> u64 {
        self.bytes_sent_total + self.bytes_received_total
    }
}

/// Runs `cfg.trials` sequential trials against the ranked servers.
pub fn run_experiment<T: Transport>(
    cfg: &ExperimentConfig,
    ranked: &RankedServerList,
    resolver: &Resolver<T>,
) -> Result<Vec<TrialRecord>, ExperimentError> {
    cfg.validate()?;
    if cfg.k_max > ranked.len() {
        return Err(ExperimentError::InvalidConfig(format!(
            "k_max {} exceeds the {} ranked servers",
            cfg.k_max,
            ranked.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let started = resolver.transport().elapsed_ms();
    let mut records = Vec::with_capacity(cfg.trials);
    for _ in 0..cfg.trials {
        let target = &cfg.targets[rng.random_range(0..cfg.targets.len())];
        let k = rng.random_range(1..=cfg.k_max);
        let id: u16 = rng.random();
        let timestamp = format!("{:.3}", resolver.transport().elapsed_ms() - started);
        let q = QuerySpec::new(target.clone(), cfg.qtype, id);
        let record = match resolver.resolve_raced(&q, ranked, k, cfg.timeout_ms) {
            Ok(result) => TrialRecord::from_result(target.clone(), k, &result, timestamp),
            Err(ResolveError::NoServerContacted(_)) => TrialRecord {
                target: target.clone(),
                k,
                latency_ms: None,
                timed_out: true,
                bytes_sent_total: 0,
                bytes_received_total: 0,
                timestamp,
                baseline_bytes: Some(0),
                winner_index: None,
                per_server: Vec::new(),
            },
            Err(e) => return Err(e.into()),
        };
        records.push(record);
    }
    Ok(records)
}
