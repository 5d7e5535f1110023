//! Command-line front end: ranking, racing, experiments, simulation,
//! analysis and economic verdicts.
//!
//! Machine-readable output (JSON, CSV) goes to `--out` or standard output;
//! human-readable tables go to standard error. Exit status is 0 on success,
//! 1 on a usage error and 2 when the command itself fails.

mod output;
mod pipeline;

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use latbench_core::codec::{QuerySpec, QueryType};
use latbench_core::economics::{quadrant_table, render_quadrant_table, verdict, Catalog, IncentiveModel, Threshold};
use latbench_core::experiment::{
    build_report, read_csv, read_json, render_report, run_experiment, write_csv, write_json, ExperimentConfig,
    TrafficConvention, TrialRecord, DEFAULT_K_MAX, DEFAULT_TIMEOUT_MS,
};
use latbench_core::resolver::{
    RankedServerList, Resolver, UdpTransport, UpstreamServer, DEFAULT_DEADLINE_MS, DEFAULT_PROBES_PER_SERVER,
};
use latbench_core::simulator::{SimTransport, SimWorld};
use serde::Serialize;

pub use output::{write_atomic, RunManifest};
pub use pipeline::{
    end_to_end_pipeline, model_thresholds, model_verdicts, pricing_inputs, rank, ModelVerdict, PipelineOutcome, Pricing,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "latbench",
    version,
    about = "Measure and price the latency gained by replicating DNS lookups"
)]
struct Cli {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file or directory, depending on the command.
    #[arg(long, global = true, env = "LATBENCH_OUT")]
    out: Option<PathBuf>,
    /// `table` also prints a human-readable summary to standard error.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Table,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Probe upstream servers and rank them by mean latency.
    Rank {
        #[arg(long)]
        servers: PathBuf,
        #[arg(long, default_value_t = DEFAULT_PROBES_PER_SERVER)]
        probes: usize,
        /// Names to probe with; may be repeated.
        #[arg(long = "probe-name", default_value = "example.com")]
        probe_names: Vec<String>,
    },
    /// Race one lookup across the first k servers.
    Resolve {
        name: String,
        #[arg(short)]
        k: usize,
        /// Ranked server list, or a plain list used in the order given.
        #[arg(long)]
        servers: PathBuf,
        #[arg(long, default_value_t = DEFAULT_DEADLINE_MS)]
        deadline_ms: f64,
        #[arg(long, value_enum, default_value_t = Qtype::A)]
        qtype: Qtype,
    },
    /// Run randomized replication trials against real servers.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Ranked server list; a plain list is probed and ranked first.
        #[arg(long)]
        servers: PathBuf,
        #[arg(long, default_value_t = DEFAULT_PROBES_PER_SERVER)]
        probes: usize,
    },
    /// Run randomized trials against simulated servers.
    Simulate {
        #[arg(long)]
        world: PathBuf,
        #[arg(long)]
        trials: usize,
        #[arg(long, default_value_t = DEFAULT_K_MAX)]
        k_max: usize,
        #[arg(long, value_delimiter = ',', default_value = "example.com")]
        targets: Vec<String>,
        #[arg(long, default_value_t = DEFAULT_TIMEOUT_MS)]
        timeout_ms: f64,
        #[arg(long, default_value_t = DEFAULT_PROBES_PER_SERVER)]
        probes: usize,
    },
    /// Analyze trial records and recommend a replication level.
    Analyze {
        /// Trial CSV; a JSON sidecar of the same name is used when present.
        #[arg(long)]
        records: PathBuf,
        /// Explicit thresholds in ms/KB; may be repeated.
        #[arg(long, conflicts_with = "model")]
        threshold: Vec<f64>,
        #[command(flatten)]
        pricing: PricingArgs,
        #[arg(long, value_enum, default_value_t = Convention::QueriesAndResponses)]
        convention: Convention,
        /// Read only the CSV even if a sidecar exists.
        #[arg(long)]
        ignore_sidecar: bool,
    },
    /// Print the break-even table for every plan and value estimate.
    Thresholds {
        #[arg(long, default_value = "default")]
        plans: PathBuf,
    },
    /// Judge a measured saving under one incentive model.
    Verdict {
        /// Measured saving, ms/KB.
        #[arg(long)]
        ell: f64,
        #[command(flatten)]
        pricing: PricingArgs,
    },
}

#[derive(Debug, Args)]
struct PricingArgs {
    /// Incentive model; may be repeated. Defaults to all of them.
    #[arg(long, value_parser = parse_model)]
    model: Vec<IncentiveModel>,
    /// Plan catalog file, or `default` for the shipped one.
    #[arg(long, default_value = "default")]
    plans: PathBuf,
    #[arg(long)]
    server_plan: Option<String>,
    #[arg(long)]
    client_plan: Option<String>,
    #[arg(long)]
    server_value: Option<String>,
    #[arg(long)]
    client_value: Option<String>,
}

impl PricingArgs {
    fn models(&self) -> Vec<IncentiveModel> {
        if self.model.is_empty() {
            IncentiveModel::ALL.to_vec()
        } else {
            self.model.clone()
        }
    }

    fn pricing(&self) -> Pricing {
        Pricing {
            server_plan: self.server_plan.clone(),
            client_plan: self.client_plan.clone(),
            server_value: self.server_value.clone(),
            client_value: self.client_value.clone(),
        }
    }
}

fn parse_model(s: &str) -> Result<IncentiveModel, String> {
    s.parse::<IncentiveModel>().map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Qtype {
    A,
    Aaaa,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Convention {
    QueriesAndResponses,
    QueriesOnly,
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit status.
pub fn dispatch<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_FAILURE
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    let seed = cli.seed.unwrap_or(0);
    let out = cli.out.as_deref();
    let table = cli.format == Format::Table;
    match cli.command {
        Command::Rank {
            servers,
            probes,
            probe_names,
        } => {
            let servers = read_upstreams(&servers)?;
            let resolver = Resolver::new(UdpTransport::new()?);
            let ranked = rank(&resolver, &servers, probes, &probe_names, seed)?;
            if table {
                eprint!("{}", render_ranking(&ranked));
            }
            output::emit(out, &output::to_json(&ranked)?)
        }
        Command::Resolve {
            name,
            k,
            servers,
            deadline_ms,
            qtype,
        } => {
            let ranked = read_servers(&servers)?;
            let resolver = Resolver::new(UdpTransport::new()?);
            let qtype = match qtype {
                Qtype::A => QueryType::A,
                Qtype::Aaaa => QueryType::Aaaa,
            };
            let id = cli.seed.map_or_else(rand::random, |s| (s & 0xffff) as u16);
            let result = resolver.resolve_raced(&QuerySpec::new(name, qtype, id), &ranked, k, deadline_ms)?;
            if table {
                match (result.winner_index, result.latency_ms) {
                    (Some(i), Some(ms)) => eprintln!("answered by {} in {ms:.2} ms", result.per_server[i].label),
                    _ => eprintln!("no answer within {deadline_ms} ms"),
                }
            }
            output::emit(out, &output::to_json(&result)?)
        }
        Command::Run {
            config,
            servers,
            probes,
        } => {
            let dir = out.context("run needs --out <dir>")?;
            let mut cfg: ExperimentConfig = read_json_file(&config)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let mut manifest = RunManifest::start("run");
            manifest.config_paths = vec![config.clone(), servers.clone()];
            let resolver = Resolver::new(UdpTransport::new()?);
            let ranked = match serde_json::from_slice::<RankedServerList>(&read(&servers)?) {
                Ok(r) => r,
                Err(_) => rank(&resolver, &read_upstreams(&servers)?, probes, &cfg.targets, cfg.seed)?,
            };
            let records = run_experiment(&cfg, &ranked, &resolver)?;
            manifest.seeds.insert("experiment".into(), cfg.seed);
            write_run(dir, manifest, &ranked, &records, table)
        }
        Command::Simulate {
            world,
            trials,
            k_max,
            targets,
            timeout_ms,
            probes,
        } => {
            let sim = SimWorld::load(&world)?;
            let mut cfg = ExperimentConfig::new(targets, trials, seed);
            cfg.k_max = k_max;
            cfg.timeout_ms = timeout_ms;
            let mut manifest = RunManifest::start("simulate");
            manifest.config_paths = vec![world.clone()];
            manifest.seeds.insert("world".into(), sim.master_seed);
            manifest.seeds.insert("experiment".into(), seed);
            let servers = sim.servers();
            let resolver = Resolver::new(SimTransport::new(sim));
            let ranked = rank(&resolver, &servers, probes, &cfg.targets, seed)?;
            let records = run_experiment(&cfg, &ranked, &resolver)?;
            match out {
                Some(dir) => write_run(dir, manifest, &ranked, &records, table),
                None => {
                    let mut csv = Vec::new();
                    write_csv(&records, &mut csv)?;
                    output::emit(None, &csv)
                }
            }
        }
        Command::Analyze {
            records,
            threshold,
            pricing,
            convention,
            ignore_sidecar,
        } => {
            let sidecar = records.with_extension("json");
            let trials = if !ignore_sidecar && sidecar != records && sidecar.is_file() {
                read_json(fs::File::open(&sidecar)?).with_context(|| format!("reading {}", sidecar.display()))?
            } else {
                read_csv(fs::File::open(&records).with_context(|| format!("opening {}", records.display()))?)?
            };
            let thresholds = if threshold.is_empty() {
                let catalog = Catalog::load(&pricing.plans)?;
                model_thresholds(&catalog, &pricing.models(), &pricing.pricing())?
            } else {
                threshold
                    .iter()
                    .map(|&t| Ok((None, Threshold::from_ms_per_kb(t)?)))
                    .collect::<Result<Vec<_>>>()?
            };
            let convention = match convention {
                Convention::QueriesAndResponses => TrafficConvention::QueriesAndResponses,
                Convention::QueriesOnly => TrafficConvention::QueriesOnly,
            };
            let report = build_report(&trials, &thresholds, convention)?;
            if table {
                eprint!("{}", render_report(&report));
            }
            #[derive(Serialize)]
            struct Analysis<'a> {
                #[serde(flatten)]
                report: &'a latbench_core::experiment::AnalysisReport,
                verdicts: Vec<ModelVerdict>,
            }
            let verdicts = model_verdicts(&report);
            output::emit(
                out,
                &output::to_json(&Analysis {
                    report: &report,
                    verdicts,
                })?,
            )
        }
        Command::Thresholds { plans } => {
            let catalog = Catalog::load(&plans)?;
            let cells = quadrant_table(catalog.plans(), catalog.values())?;
            if table {
                eprint!("{}", render_quadrant_table(&cells));
            }
            output::emit(out, &output::to_json(&cells)?)
        }
        Command::Verdict { ell, pricing } => {
            let catalog = Catalog::load(&pricing.plans)?;
            let measured = Threshold::from_ms_per_kb(ell)?;
            let inputs = pricing_inputs(&catalog, &pricing.pricing())?;
            let decisions = pricing
                .models()
                .into_iter()
                .map(|m| verdict(measured, m, &inputs))
                .collect::<Result<Vec<_>, _>>()?;
            if table {
                for d in &decisions {
                    eprintln!(
                        "{:<22} measured {} vs threshold {}: {}",
                        d.model,
                        d.measured,
                        d.threshold,
                        if d.cost_effective {
                            "cost-effective"
                        } else {
                            "not cost-effective"
                        }
                    );
                }
            }
            if let [single] = decisions.as_slice() {
                output::emit(out, &output::to_json(single)?)
            } else {
                output::emit(out, &output::to_json(&decisions)?)
            }
        }
    }
}

fn write_run(
    dir: &Path,
    mut manifest: RunManifest,
    ranked: &RankedServerList,
    records: &[TrialRecord],
    table: bool,
) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let ranked_path = dir.join("ranked.json");
    write_atomic(&ranked_path, &output::to_json(ranked)?)?;
    let csv_path = dir.join("trials.csv");
    let mut csv = Vec::new();
    write_csv(records, &mut csv)?;
    write_atomic(&csv_path, &csv)?;
    let json_path = dir.join("trials.json");
    let mut json = Vec::new();
    write_json(records, &mut json)?;
    write_atomic(&json_path, &json)?;
    manifest.outputs = vec![ranked_path, csv_path, json_path];
    let path = manifest.finish(dir)?;
    if table {
        eprint!("{}", render_ranking(ranked));
        eprintln!("{} trials written to {}", records.len(), dir.display());
    }
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "{}", path.display())?;
    Ok(())
}

fn render_ranking(ranked: &RankedServerList) -> String {
    let mut s = String::new();
    for (i, e) in ranked.entries().iter().enumerate() {
        let mean = e
            .probe_mean_ms
            .map_or_else(|| "unreachable".to_string(), |m| format!("{m:.2} ms"));
        s.push_str(&format!(
            "{:>3}. {:<24} {:>12}  ({}/{} probes answered)\n",
            i + 1,
            e.server.label,
            mean,
            e.probes_ok,
            e.probes_sent
        ));
    }
    s
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn read_json_file<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_slice(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn read_upstreams(path: &Path) -> Result<Vec<UpstreamServer>> {
    let servers: Vec<UpstreamServer> = read_json_file(path)?;
    if servers.is_empty() {
        bail!("{} lists no servers", path.display());
    }
    Ok(servers)
}

/// Accepts either a ranked list or a plain list of upstreams.
fn read_servers(path: &Path) -> Result<RankedServerList> {
    let bytes = read(path)?;
    if let Ok(ranked) = serde_json::from_slice::<RankedServerList>(&bytes) {
        return Ok(ranked);
    }
    Ok(RankedServerList::in_given_order(read_upstreams(path)?)?)
}
