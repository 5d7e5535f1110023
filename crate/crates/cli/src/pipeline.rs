use anyhow::{Context, Result};
use latbench_core::economics::{combined_threshold, Catalog, IncentiveInputs, IncentiveModel, Side, Threshold};
use latbench_core::experiment::{
    build_report, run_experiment, AnalysisReport, ExperimentConfig, TrafficConvention, TrialRecord,
};
use latbench_core::resolver::{RankedServerList, Resolver, Transport, UpstreamServer};
use latbench_core::stats::Statistic;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Deadline for each ranking probe.
pub const PROBE_DEADLINE_MS: f64 = 2_000.0;

/// Economic decision for one incentive model, judged on the saving of the
/// second server: replication pays exactly when that clears the threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelVerdict {
    pub model: IncentiveModel,
    pub threshold: Threshold,
    /// Incremental mean-latency saving at k = 2, ms/KB.
    pub measured_ms_per_kb: Option<f64>,
    pub cost_effective: bool,
    pub recommended_k: usize,
}

pub fn model_verdicts(report: &AnalysisReport) -> Vec<ModelVerdict> {
    let measured = report
        .rows
        .iter()
        .find(|r| r.k == 2)
        .and_then(|r| r.ell_incr)
        .and_then(|s| s.mean.ms_per_kb);
    report
        .recommendations
        .iter()
        .filter(|r| r.statistic == Statistic::Mean)
        .filter_map(|r| {
            let model = r.model?;
            Some(ModelVerdict {
                model,
                threshold: r.threshold,
                measured_ms_per_kb: measured,
                cost_effective: measured.is_some_and(|m| m >= r.threshold.ms_per_kb()),
                recommended_k: r.recommended_k,
            })
        })
        .collect()
}

/// Which plans and values to price the thresholds with.
#[derive(Debug, Clone, Default)]
pub struct Pricing {
    pub server_plan: Option<String>,
    pub client_plan: Option<String>,
    pub server_value: Option<String>,
    pub client_value: Option<String>,
}

fn costliest(catalog: &Catalog, side: Side) -> Option<String> {
    catalog
        .plans()
        .iter()
        .filter(|p| p.side == side)
        .max_by(|a, b| a.cost.dollars_per_byte().total_cmp(&b.cost.dollars_per_byte()))
        .map(|p| p.name.clone())
}

/// Incentive inputs for `pricing`. Unnamed plans default to the costliest
/// plan on each side, the least favorable pairing for replication.
pub fn pricing_inputs(catalog: &Catalog, pricing: &Pricing) -> Result<IncentiveInputs> {
    let server = pricing.server_plan.clone().or_else(|| costliest(catalog, Side::Server));
    let client = pricing.client_plan.clone().or_else(|| costliest(catalog, Side::Client));
    Ok(catalog.inputs(
        server.as_deref(),
        client.as_deref(),
        pricing.server_value.as_deref(),
        pricing.client_value.as_deref(),
    )?)
}

pub fn model_thresholds(
    catalog: &Catalog,
    models: &[IncentiveModel],
    pricing: &Pricing,
) -> Result<Vec<(Option<IncentiveModel>, Threshold)>> {
    let inputs = pricing_inputs(catalog, pricing)?;
    models
        .iter()
        .map(|&m| Ok((Some(m), combined_threshold(m, &inputs)?)))
        .collect()
}

/// Probes `servers` and ranks them, deriving query ids from `seed`.
pub fn rank<T: Transport>(
    resolver: &Resolver<T>,
    servers: &[UpstreamServer],
    probes: usize,
    names: &[String],
    seed: u64,
) -> Result<RankedServerList> {
    let mut ids = ChaCha8Rng::seed_from_u64(seed);
    ids.set_stream(1);
    Ok(resolver.probe_and_rank(servers, probes, names, PROBE_DEADLINE_MS, &mut ids)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineOutcome {
    pub ranked: RankedServerList,
    #[serde(skip)]
    pub records: Vec<TrialRecord>,
    pub report: AnalysisReport,
    pub verdicts: Vec<ModelVerdict>,
}

/// Ranks the servers, runs randomized trials, analyzes them, and prices the
/// outcome under each threshold.
pub fn end_to_end_pipeline<T: Transport>(
    resolver: &Resolver<T>,
    servers: &[UpstreamServer],
    probes: usize,
    cfg: &ExperimentConfig,
    thresholds: &[(Option<IncentiveModel>, Threshold)],
) -> Result<PipelineOutcome> {
    let ranked = rank(resolver, servers, probes, &cfg.targets, cfg.seed)?;
    let records = run_experiment(cfg, &ranked, resolver)?;
    let report = build_report(&records, thresholds, TrafficConvention::default()).context("analyzing trials")?;
    let verdicts = model_verdicts(&report);
    Ok(PipelineOutcome {
        ranked,
        records,
        report,
        verdicts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_to_the_costliest_pair() {
        let catalog = Catalog::builtin();
        let t = model_thresholds(&catalog, &[IncentiveModel::BothSelfish], &Pricing::default()).unwrap();
        assert!((t[0].1.ms_per_kb() - 9.55).abs() < 0.005);
        let pricing = Pricing {
            server_plan: Some("dreamhost".into()),
            client_plan: Some("att-dsl".into()),
            ..Pricing::default()
        };
        let t = model_thresholds(&catalog, &[IncentiveModel::SelfishServer], &pricing).unwrap();
        assert!((t[0].1.ms_per_kb() - 0.17).abs() < 0.005);
    }
}
