//! First-reply-wins DNS resolution over a ranked list of upstream servers.
//!
//! Each lookup is sent, with one transaction id, to the first `k` servers of
//! the ranking at once. The earliest decodable reply with rcode 0 wins; the
//! resolver keeps listening until every contacted server has answered or the
//! deadline passes, so late replies still land in the byte accounting.

mod transport;
mod udp;

use std::net::SocketAddr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{decode_response, encode_query, CodecError, QuerySpec, QueryType, ResponseSummary};

pub use transport::{Arrival, Flow, Transport, TransportError, TransportEvent, UpstreamServer};
pub use udp::UdpTransport;

pub const DEFAULT_DEADLINE_MS: f64 = 5_000.0;
pub const DEFAULT_PROBES_PER_SERVER: usize = 5;

#[derive(Debug, Error)]
pub enum ResolveError {
    #[error("replication level {k} outside 1..={available}")]
    BadReplication { k: usize, available: usize },
    #[error("deadline must be positive and finite, got {0} ms")]
    BadDeadline(f64),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("could not send the query to any of {0} servers")]
    NoServerContacted(usize),
    #[error("no servers to rank")]
    NoServers,
    #[error("no probe names given")]
    NoProbeNames,
    #[error("probes per server must be at least 1")]
    NoProbes,
    #[error("every server failed all probes")]
    AllUnreachable,
    #[error("ranked list: {0}")]
    InvalidRanking(String),
}

/// One server's position in the ranking and the probe results behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedServer {
    pub server: UpstreamServer,
    /// Mean probe latency; `None` when unprobed or every probe failed.
    pub probe_mean_ms: Option<f64>,
    pub probes_ok: usize,
    pub probes_sent: usize,
}

/// Servers in ascending order of mean probe latency, unreachable ones last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<RankedServer>", into = "Vec<RankedServer>")]
pub struct RankedServerList {
    entries: Vec<RankedServer>,
}

impl RankedServerList {
    pub fn new(entries: Vec<RankedServer>) -> Result<Self, ResolveError> {
        let mut seen = std::collections::HashSet::new();
        for e in &entries {
            if !seen.insert(e.server.socket_addr()) {
                return Err(ResolveError::InvalidRanking(format!(
                    "duplicate server {}",
                    e.server.socket_addr()
                )));
            }
        }
        let ordered = entries
            .windows(2)
            .all(|w| match (w[0].probe_mean_ms, w[1].probe_mean_ms) {
                (Some(a), Some(b)) => a <= b,
                (None, Some(_)) => false,
                _ => true,
            });
        if !ordered {
            return Err(ResolveError::InvalidRanking("probe means must be nondecreasing".into()));
        }
        Ok(RankedServerList { entries })
    }

    /// Takes the given order as the ranking, without probing.
    pub fn in_given_order(servers: Vec<UpstreamServer>) -> Result<Self, ResolveError> {
        RankedServerList::new(
            servers
                .into_iter()
                .map(|server| RankedServer {
                    server,
                    probe_mean_ms: None,
                    probes_ok: 0,
                    probes_sent: 0,
                })
                .collect(),
        )
    }

    pub fn entries(&self) -> &[RankedServer] {
        &self.entries
    }

    pub fn servers(&self) -> Vec<UpstreamServer> {
        self.entries.iter().map(|e| e.server.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl TryFrom<Vec<RankedServer>> for RankedServerList {
    type Error = ResolveError;
    fn try_from(entries: Vec<RankedServer>) -> Result<Self, Self::Error> {
        RankedServerList::new(entries)
    }
}

impl From<RankedServerList> for Vec<RankedServer> {
    fn from(list: RankedServerList) -> Self {
        list.entries
    }
}

/// Traffic and reply outcome for one contacted server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerAccount {
    pub label: String,
    pub address: SocketAddr,
    pub bytes_sent: u64,
    /// Every datagram received from this server inside the window, decodable or not.
    pub bytes_received: u64,
    pub replied: bool,
    pub reply_latency_ms: Option<f64>,
    pub rcode: Option<u8>,
    pub send_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RacedResult {
    pub winner_index: Option<usize>,
    pub latency_ms: Option<f64>,
    pub response: Option<ResponseSummary>,
    pub per_server: Vec<ServerAccount>,
    pub timed_out: bool,
    /// Size of the query datagram sent to each server.
    pub query_bytes: u64,
}

impl RacedResult {
    pub fn bytes_sent_total(&self) -> u64 {
        self.per_server.iter().map(|s| s.bytes_sent).sum()
    }

    pub fn bytes_received_total(&self) -> u64 {
        self.per_server.iter().map(|s| s.bytes_received).sum()
    }

    /// Traffic the lookup would have cost unreplicated: one query plus the
    /// winning response, or plus whatever the top-ranked server returned when
    /// nothing won.
    pub fn baseline_bytes(&self) -> u64 {
        let reply = match (&self.response, self.per_server.first()) {
            (Some(r), _) => r.wire_bytes as u64,
            (None, Some(first)) => first.bytes_received,
            (None, None) => 0,
        };
        self.query_bytes + reply
    }
}

pub struct Resolver<T> {
    transport: T,
}

impl<T: Transport> Resolver<T> {
    pub fn new(transport: T) -> Self {
        Resolver { transport }
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    /// Races `q` across the first `k` ranked servers.
    pub fn resolve_raced(
        &self,
        q: &QuerySpec,
        ranked: &RankedServerList,
        k: usize,
        deadline_ms: f64,
    ) -> Result<RacedResult, ResolveError> {
        if k == 0 || k > ranked.len() {
            return Err(ResolveError::BadReplication {
                k,
                available: ranked.len(),
            });
        }
        let targets: Vec<UpstreamServer> = ranked.entries[..k].iter().map(|e| e.server.clone()).collect();
        self.race(q, &targets, deadline_ms)
    }

    fn race(&self, q: &QuerySpec, targets: &[UpstreamServer], deadline_ms: f64) -> Result<RacedResult, ResolveError> {
        if !(deadline_ms.is_finite() && deadline_ms > 0.0) {
            return Err(ResolveError::BadDeadline(deadline_ms));
        }
        let query = encode_query(q)?;
        let mut per_server: Vec<ServerAccount> = targets
            .iter()
            .map(|t| ServerAccount {
                label: t.label.clone(),
                address: t.socket_addr(),
                bytes_sent: 0,
                bytes_received: 0,
                replied: false,
                reply_latency_ms: None,
                rcode: None,
                send_error: None,
            })
            .collect();
        let mut winner: Option<(usize, f64, ResponseSummary)> = None;
        let mut sends_reported = 0;
        let mut contacted = 0;
        let mut replied = 0;

        self.transport.exchange(targets, &query, deadline_ms, &mut |event| {
            match event {
                TransportEvent::Sent { server, result } => {
                    sends_reported += 1;
                    match result {
                        Ok(n) => {
                            per_server[server].bytes_sent += n as u64;
                            contacted += 1;
                        }
                        Err(e) => per_server[server].send_error = Some(e),
                    }
                }
                TransportEvent::Reply(arrival) => {
                    if arrival.at_ms > deadline_ms {
                        return Flow::Stop;
                    }
                    let account = &mut per_server[arrival.server];
                    account.bytes_received += arrival.datagram.len() as u64;
                    if !account.replied {
                        if let Ok(summary) = decode_response(&arrival.datagram, q.id) {
                            account.replied = true;
                            account.reply_latency_ms = Some(arrival.at_ms);
                            account.rcode = Some(summary.rcode);
                            replied += 1;
                            if summary.rcode == 0 && winner.is_none() {
                                winner = Some((arrival.server, arrival.at_ms, summary));
                            }
                        }
                    }
                }
            }
            if sends_reported == targets.len() && replied == contacted {
                Flow::Stop
            } else {
                Flow::Continue
            }
        })?;

        if contacted == 0 {
            return Err(ResolveError::NoServerContacted(targets.len()));
        }
        let timed_out = winner.is_none();
        let (winner_index, latency_ms, response) = match winner {
            Some((i, at, summary)) => (Some(i), Some(at), Some(summary)),
            None => (None, None, None),
        };
        Ok(RacedResult {
            winner_index,
            latency_ms,
            response,
            per_server,
            timed_out,
            query_bytes: query.len() as u64,
        })
    }

    /// Probes each server in turn with unreplicated lookups and ranks them by
    /// mean latency over successful probes. Ties keep input order.
    pub fn probe_and_rank<R: Rng + ?Sized>(
        &self,
        servers: &[UpstreamServer],
        probes_per_server: usize,
        probe_names: &[String],
        deadline_ms: f64,
        ids: &mut R,
    ) -> Result<RankedServerList, ResolveError> {
        if servers.is_empty() {
            return Err(ResolveError::NoServers);
        }
        if probes_per_server == 0 {
            return Err(ResolveError::NoProbes);
        }
        if probe_names.is_empty() {
            return Err(ResolveError::NoProbeNames);
        }

        let mut entries = Vec::with_capacity(servers.len());
        for server in servers {
            let mut total = 0.0;
            let mut ok = 0;
            for i in 0..probes_per_server {
                let q = QuerySpec::new(probe_names[i % probe_names.len()].clone(), QueryType::A, ids.random());
                match self.race(&q, std::slice::from_ref(server), deadline_ms) {
                    Ok(RacedResult {
                        latency_ms: Some(ms), ..
                    }) => {
                        total += ms;
                        ok += 1;
                    }
                    Ok(_) | Err(ResolveError::NoServerContacted(_)) => {}
                    Err(e) => return Err(e),
                }
            }
            entries.push(RankedServer {
                server: server.clone(),
                probe_mean_ms: (ok > 0).then(|| total / ok as f64),
                probes_ok: ok,
                probes_sent: probes_per_server,
            });
        }
        if entries.iter().all(|e| e.probe_mean_ms.is_none()) {
            return Err(ResolveError::AllUnreachable);
        }
        entries.sort_by(|a, b| match (a.probe_mean_ms, b.probe_mean_ms) {
            (Some(x), Some(y)) => x.total_cmp(&y),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => std::cmp::Ordering::Equal,
        });
        RankedServerList::new(entries)
    }
}
