use std::io;
use std::net::{Ipv4Addr, Ipv6Addr, SocketAddr};
use std::sync::Arc;
use std::time::{Duration, Instant};

use tokio::net::UdpSocket;
use tokio::runtime::{Builder, Runtime};
use tokio::sync::mpsc;
use tokio::task::JoinSet;

use super::transport::{Arrival, Flow, Transport, TransportError, TransportEvent, UpstreamServer};

const MAX_DATAGRAM: usize = 65_535;

/// Real network transport: one connected UDP socket per target, all
/// queries sent back to back, replies collected concurrently.
pub struct UdpTransport {
    runtime: Runtime,
    epoch: Instant,
}

impl UdpTransport {
    pub fn new() -> io::Result<Self> {
        let runtime = Builder::new_current_thread().enable_io().enable_time().build()?;
        Ok(UdpTransport {
            runtime,
            epoch: Instant::now(),
        })
    }
}

async fn connect(target: SocketAddr) -> io::Result<UdpSocket> {
    let local: SocketAddr = if target.is_ipv4() {
        (Ipv4Addr::UNSPECIFIED, 0).into()
    } else {
        (Ipv6Addr::UNSPECIFIED, 0).into()
    };
    let socket = UdpSocket::bind(local).await?;
    socket.connect(target).await?;
    Ok(socket)
}

impl Transport for UdpTransport {
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
        self.runtime.block_on(async {
            let mut sockets = Vec::with_capacity(targets.len());
            for target in targets {
                sockets.push(connect(target.socket_addr()).await.map(Arc::new));
            }

            let start = Instant::now();
            let deadline = start + Duration::from_secs_f64(window_ms / 1000.0);
            let (tx, mut rx) = mpsc::unbounded_channel::<(usize, Instant, Vec<u8>)>();
            let mut readers = JoinSet::new();
            let mut sent = Vec::with_capacity(targets.len());
            for (server, socket) in sockets.into_iter().enumerate() {
                let result = match socket {
                    Ok(socket) => match socket.send(query).await {
                        Ok(n) => {
                            let tx = tx.clone();
                            readers.spawn(async move {
                                let mut buf = vec![0u8; MAX_DATAGRAM];
                                while let Ok(n) = socket.recv(&mut buf).await {
                                    if tx.send((server, Instant::now(), buf[..n].to_vec())).is_err() {
                                        break;
                                    }
                                }
                            });
                            Ok(n)
                        }
                        Err(e) => Err(e.to_string()),
                    },
                    Err(e) => Err(e.to_string()),
                };
                sent.push((server, result));
            }
            drop(tx);

            let mut stop = false;
            for (server, result) in sent {
                stop |= observer(TransportEvent::Sent { server, result }) == Flow::Stop;
            }
            while !stop {
                match tokio::time::timeout_at(deadline.into(), rx.recv()).await {
                    Ok(Some((server, at, datagram))) => {
                        let arrival = Arrival {
                            server,
                            at_ms: at.saturating_duration_since(start).as_secs_f64() * 1000.0,
                            datagram,
                        };
                        stop = observer(TransportEvent::Reply(arrival)) == Flow::Stop;
                    }
                    Ok(None) | Err(_) => break,
                }
            }
            readers.abort_all();
        });
        Ok(())
    }

    fn elapsed_ms(&self) -> f64 {
        self.epoch.elapsed().as_secs_f64() * 1000.0
    }
}
