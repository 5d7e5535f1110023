//! Seeded in-process upstream DNS servers.
//!
//! Each upstream draws its latency (or a loss) from its own counter-based
//! random substream keyed by `(master_seed, upstream seed, lookup number)`,
//! so adding an upstream or changing `k` never perturbs another upstream's
//! draws. [`SimTransport`] runs lookups in virtual time; [`LoopbackWorld`]
//! serves the same world over real loopback UDP sockets.

mod loopback;
mod oracle;

use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{decode_query, encode_response, QuerySpec, QueryType, HEADER_LEN};
use crate::resolver::{Arrival, Flow, Transport, TransportError, TransportEvent, UpstreamServer};

pub use loopback::LoopbackWorld;
pub use oracle::{min_of_k_oracle, EXHAUSTIVE_LIMIT, RESAMPLE_DRAWS};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("upstream {label:?}: {reason}")]
    InvalidUpstream { label: String, reason: String },
    #[error("world has no upstreams")]
    EmptyWorld,
    #[error("replication level must be at least 1")]
    ZeroK,
    #[error("no analytic or brute-force oracle for {0}")]
    NoOracle(&'static str),
    #[error("world file: {0}")]
    File(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LatencyDistribution {
    Constant {
        ms: f64,
    },
    /// `shift_ms` plus an exponential with mean `mean_ms`.
    ShiftedExponential {
        shift_ms: f64,
        mean_ms: f64,
    },
    /// Log-latency (in log-ms) is normal with mean `mu` and deviation `sigma`.
    LogNormal {
        mu: f64,
        sigma: f64,
    },
    /// Uniform draw from the listed samples.
    Empirical {
        samples_ms: Vec<f64>,
    },
}

impl LatencyDistribution {
    pub fn name(&self) -> &'static str {
        match self {
            LatencyDistribution::Constant { .. } => "constant",
            LatencyDistribution::ShiftedExponential { .. } => "shifted_exponential",
            LatencyDistribution::LogNormal { .. } => "log_normal",
            LatencyDistribution::Empirical { .. } => "empirical",
        }
    }

    fn validate(&self) -> Result<(), String> {
        let ok = |x: f64| x.is_finite() && x >= 0.0;
        match self {
            LatencyDistribution::Constant { ms } if !ok(*ms) => Err(format!("constant latency {ms} invalid")),
            LatencyDistribution::ShiftedExponential { shift_ms, mean_ms } if !ok(*shift_ms) || !ok(*mean_ms) => {
                Err(format!("shifted exponential ({shift_ms}, {mean_ms}) invalid"))
            }
            LatencyDistribution::LogNormal { mu, sigma } if !ok(*mu) || !ok(*sigma) => {
                Err(format!("log-normal ({mu}, {sigma}) invalid"))
            }
            LatencyDistribution::Empirical { samples_ms } if samples_ms.is_empty() => {
                Err("empirical sample list is empty".into())
            }
            LatencyDistribution::Empirical { samples_ms } if !samples_ms.iter().all(|&x| ok(x)) => {
                Err("empirical samples must be finite and nonnegative".into())
            }
            _ => Ok(()),
        }
    }

    /// One latency draw in milliseconds.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            LatencyDistribution::Constant { ms } => *ms,
            LatencyDistribution::ShiftedExponential { shift_ms, mean_ms } => {
                if *mean_ms == 0.0 {
                    *shift_ms
                } else {
                    shift_ms + Exp::new(1.0 / mean_ms).expect("positive rate").sample(rng)
                }
            }
            LatencyDistribution::LogNormal { mu, sigma } => {
                LogNormal::new(*mu, *sigma).expect("validated parameters").sample(rng)
            }
            LatencyDistribution::Empirical { samples_ms } => samples_ms[rng.random_range(0..samples_ms.len())],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sample {
    Latency(f64),
    Lost,
}

fn default_response_bytes() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimUpstream {
    pub label: String,
    pub distribution: LatencyDistribution,
    #[serde(default)]
    pub loss_probability: f64,
    #[serde(default = "default_response_bytes")]
    pub response_bytes: usize,
    /// Substream key; defaults to the upstream's position in the world.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Response code this upstream answers with.
    #[serde(default)]
    pub rcode: u8,
}

impl SimUpstream {
    pub fn new(label: impl Into<String>, distribution: LatencyDistribution) -> Self {
        SimUpstream {
            label: label.into(),
            distribution,
            loss_probability: 0.0,
            response_bytes: default_response_bytes(),
            seed: None,
            rcode: 0,
        }
    }

    pub fn with_loss(mut self, p: f64) -> Self {
        self.loss_probability = p;
        self
    }

    pub fn with_response_bytes(mut self, n: usize) -> Self {
        self.response_bytes = n;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn with_rcode(mut self, rcode: u8) -> Self {
        self.rcode = rcode;
        self
    }

    fn validate(&self) -> Result<(), SimError> {
        let invalid = |reason: String| SimError::InvalidUpstream {
            label: self.label.clone(),
            reason,
        };
        self.distribution.validate().map_err(invalid)?;
        if !(0.0..=1.0).contains(&self.loss_probability) {
            return Err(invalid(format!(
                "loss probability {} outside [0, 1]",
                self.loss_probability
            )));
        }
        if self.response_bytes < HEADER_LEN {
            return Err(invalid(format!(
                "response of {} bytes is smaller than a header",
                self.response_bytes
            )));
        }
        if self.response_bytes > usize::from(u16::MAX) {
            return Err(invalid(format!(
                "response of {} bytes exceeds a datagram",
                self.response_bytes
            )));
        }
        if self.rcode > 15 {
            return Err(invalid(format!("rcode {} out of range", self.rcode)));
        }
        Ok(())
    }

    /// Draw number `lookup` from this upstream's substream. The loss coin and
    /// the latency are both drawn every time, so changing the loss
    /// probability leaves the latency sequence unchanged.
    pub fn sample(&self, master_seed: u64, default_seed: u64, lookup: u64) -> Sample {
        let mut rng = substream(master_seed, self.seed.unwrap_or(default_seed), lookup);
        let coin: f64 = rng.random();
        let latency = self.distribution.draw(&mut rng);
        if coin < self.loss_probability {
            Sample::Lost
        } else {
            Sample::Latency(latency)
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// ChaCha keyed by (master, upstream) with the lookup number as stream id.
fn substream(master_seed: u64, upstream_seed: u64, lookup: u64) -> ChaCha8Rng {
    let mut rng =
        ChaCha8Rng::seed_from_u64(splitmix64(master_seed) ^ splitmix64(upstream_seed.rotate_left(17) ^ 0x5EED));
    rng.set_stream(lookup);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimWorld {
    pub master_seed: u64,
    pub upstreams: Vec<SimUpstream>,
}

impl SimWorld {
    pub fn new(master_seed: u64, upstreams: Vec<SimUpstream>) -> Result<Self, SimError> {
        let world = SimWorld { master_seed, upstreams };
        world.validate()?;
        Ok(world)
    }

    /// `n` identical upstreams, labelled `sim-0`, `sim-1`, ….
    pub fn uniform(master_seed: u64, n: usize, template: SimUpstream) -> Result<Self, SimError> {
        let upstreams = (0..n)
            .map(|i| SimUpstream {
                label: format!("sim-{i}"),
                ..template.clone()
            })
            .collect();
        SimWorld::new(master_seed, upstreams)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.upstreams.is_empty() {
            return Err(SimError::EmptyWorld);
        }
        self.upstreams.iter().try_for_each(SimUpstream::validate)
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let world: SimWorld = serde_json::from_str(text).map_err(|e| SimError::File(e.to_string()))?;
        world.validate()?;
        Ok(world)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SimError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| SimError::File(format!("{}: {e}", path.display())))?;
        SimWorld::from_json(&text)
    }

    pub fn sample(&self, upstream: usize, lookup: u64) -> Sample {
        self.upstreams[upstream].sample(self.master_seed, upstream as u64, lookup)
    }

    /// Addresses the virtual transport answers on (198.18.0.0/15 benchmark space).
    pub fn servers(&self) -> Vec<UpstreamServer> {
        (0..self.upstreams.len())
            .map(|i| UpstreamServer::new(virtual_address(i), 53, self.upstreams[i].label.clone()))
            .collect()
    }

    /// Builds the reply upstream `i` sends for `query`, exactly
    /// `response_bytes` long.
    pub fn response_for(&self, upstream: usize, query: &QuerySpec) -> Vec<u8> {
        let u = &self.upstreams[upstream];
        let answer = if u.rcode == 0 {
            vec![answer_address(query)]
        } else {
            vec![]
        };
        encode_response(query, u.rcode, &answer, Some(u.response_bytes)).expect("response size validated")
    }
}

fn virtual_address(i: usize) -> IpAddr {
    IpAddr::V4(Ipv4Addr::new(
        198,
        18 + (i / 65_024) as u8,
        ((i / 254) % 256) as u8,
        (i % 254 + 1) as u8,
    ))
}

fn answer_address(query: &QuerySpec) -> IpAddr {
    let h = query.qname.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x100_0000_01b3)
    });
    match query.qtype {
        QueryType::A => IpAddr::V4(Ipv4Addr::new(203, 0, 113, (h % 254 + 1) as u8)),
        QueryType::Aaaa => IpAddr::V6(Ipv6Addr::new(0x2001, 0xdb8, 0, 0, 0, 0, 0, (h % 0xfffe + 1) as u16)),
    }
}

/// Virtual-time transport over a [`SimWorld`]. Every exchange consumes one
/// lookup number and advances the clock by the time the exchange lasted.
pub struct SimTransport {
    world: SimWorld,
    lookups: AtomicU64,
    clock_ms: Mutex<f64>,
}

impl SimTransport {
    pub fn new(world: SimWorld) -> Self {
        SimTransport {
            world,
            lookups: AtomicU64::new(0),
            clock_ms: Mutex::new(0.0),
        }
    }

    pub fn world(&self) -> &SimWorld {
        &self.world
    }

    pub fn lookups(&self) -> u64 {
        self.lookups.load(Ordering::Relaxed)
    }

    fn upstream_at(&self, target: &UpstreamServer) -> Option<usize> {
        (0..self.world.upstreams.len()).find(|&i| target.port == 53 && virtual_address(i) == target.address)
    }
}

impl Transport for SimTransport {
    fn exchange(
        &self,
        targets: &[UpstreamServer],
        query: &[u8],
        window_ms: f64,
        observer: &mut dyn FnMut(TransportEvent) -> Flow,
    ) -> Result<(), TransportError> {
        if !(window_ms.is_finite() && window_ms >= 0.0) {
            return Err(TransportError::Setup(format!("invalid window {window_ms} ms")));
        }
        let lookup = self.lookups.fetch_add(1, Ordering::Relaxed);
        let parsed = decode_query(query).ok();

        let mut arrivals = Vec::new();
        let mut sent = Vec::with_capacity(targets.len());
        for (server, target) in targets.iter().enumerate() {
            let Some(upstream) = self.upstream_at(target) else {
                sent.push((
                    server,
                    Err(format!("no simulated upstream at {}", target.socket_addr())),
                ));
                continue;
            };
            sent.push((server, Ok(query.len())));
            let Some(q) = &parsed else { continue };
            if let Sample::Latency(ms) = self.world.sample(upstream, lookup) {
                if ms <= window_ms {
                    arrivals.push(Arrival {
                        server,
                        at_ms: ms,
                        datagram: self.world.response_for(upstream, q),
                    });
                }
            }
        }
        arrivals.sort_by(|a, b| a.at_ms.total_cmp(&b.at_ms));

        let mut elapsed = window_ms;
        let mut stopped = false;
        for (server, result) in sent {
            stopped |= observer(TransportEvent::Sent { server, result }) == Flow::Stop;
        }
        if stopped {
            elapsed = 0.0;
        } else {
            for arrival in arrivals {
                let at = arrival.at_ms;
                if observer(TransportEvent::Reply(arrival)) == Flow::Stop {
                    elapsed = at;
                    break;
                }
            }
        }
        *self.clock_ms.lock().expect("clock lock") += elapsed;
        Ok(())
    }

    fn elapsed_ms(&self) -> f64 {
        *self.clock_ms.lock().expect("clock lock")
    }
}
