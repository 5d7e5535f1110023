use std::fmt;
use std::net::{IpAddr, SocketAddr};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A recursive DNS server queries can be sent to.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "UpstreamFile")]
pub struct UpstreamServer {
    pub address: IpAddr,
    pub port: u16,
    pub label: String,
}

#[derive(Deserialize)]
struct UpstreamFile {
    address: IpAddr,
    port: Option<u16>,
    label: Option<String>,
}

impl TryFrom<UpstreamFile> for UpstreamServer {
    type Error = String;

    fn try_from(raw: UpstreamFile) -> Result<Self, Self::Error> {
        let port = raw.port.unwrap_or(53);
        if port == 0 {
            return Err(format!("{}: port must be nonzero", raw.address));
        }
        Ok(UpstreamServer {
            address: raw.address,
            port,
            label: raw.label.unwrap_or_else(|| raw.address.to_string()),
        })
    }
}

impl UpstreamServer {
    pub fn new(address: IpAddr, port: u16, label: impl Into<String>) -> Self {
        assert!(port != 0, "upstream port must be nonzero");
        UpstreamServer {
            address,
            port,
            label: label.into(),
        }
    }

    pub fn socket_addr(&self) -> SocketAddr {
        SocketAddr::new(self.address, self.port)
    }
}

impl fmt::Display for UpstreamServer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.label, self.socket_addr())
    }
}

/// A datagram received from one of the targets of an exchange.
#[derive(Debug, Clone, PartialEq)]
pub struct Arrival {
    /// Index into the exchange's target list.
    pub server: usize,
    /// Milliseconds since the first query of the exchange was sent.
    pub at_ms: f64,
    pub datagram: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TransportEvent {
    /// Outcome of sending the query to target `server`: bytes written, or why not.
    Sent {
        server: usize,
        result: Result<usize, String>,
    },
    Reply(Arrival),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    Continue,
    Stop,
}

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("transport setup failed: {0}")]
    Setup(String),
}

/// Carries one lookup's datagrams to a set of upstreams.
///
/// An exchange first reports one `Sent` event per target, in target order,
/// then every reply in arrival order. It ends when the observer returns
/// [`Flow::Stop`] or `window_ms` has elapsed since the first send; nothing
/// arriving later is reported.
pub trait Transport: Send + Sync {
    fn exchange(
        &self,
        targets: &[UpstreamServer],
        query: &[u8],
        window_ms: f64,
        observer: &mut dyn FnMut(TransportEvent) -> Flow,
    ) -> Result<(), TransportError>;

    /// Milliseconds on this transport's clock since it was created.
    fn elapsed_ms(&self) -> f64;
}

impl<T: Transport + ?Sized> Transport for &T {
    fn exchange(
        &self,
        targets: &[UpstreamServer],
        query: &[u8],
        window_ms: f64,
        observer: &mut dyn FnMut(TransportEvent) -> Flow,
    ) -> Result<(), TransportError> {
        (**self).exchange(targets, query, window_ms, observer)
    }

    fn elapsed_ms(&self) -> f64 {
        (**self).elapsed_ms()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upstream_file_defaults() {
        let list: Vec<UpstreamServer> =
            serde_json::from_str(r#"[{"address":"8.8.8.8"},{"address":"::1","port":5353,"label":"local"}]"#).unwrap();
        assert_eq!(list[0].port, 53);
        assert_eq!(list[0].label, "8.8.8.8");
        assert_eq!(list[1].socket_addr().to_string(), "[::1]:5353");
        assert!(serde_json::from_str::<UpstreamServer>(r#"{"address":"1.1.1.1","port":0}"#).is_err());
        assert!(serde_json::from_str::<UpstreamServer>(r#"{"address":"not-an-ip"}"#).is_err());
    }
}
