use std::io;
use std::net::{Ipv4Addr, SocketAddr, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use super::{Sample, SimWorld};
use crate::codec::decode_query;
use crate::resolver::UpstreamServer;

const POLL: Duration = Duration::from_millis(20);

/// A [`SimWorld`] served in real time over loopback UDP, one socket and
/// thread per upstream. Replies are delayed by actual sleeps. Servers stop
/// when this value is dropped.
pub struct LoopbackWorld {
    servers: Vec<UpstreamServer>,
    stop: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
}

impl LoopbackWorld {
    pub fn spawn(world: &SimWorld) -> io::Result<Self> {
        let stop = Arc::new(AtomicBool::new(false));
        let mut servers = Vec::new();
        let mut threads = Vec::new();
        for (index, upstream) in world.upstreams.iter().enumerate() {
            let socket = UdpSocket::bind((Ipv4Addr::LOCALHOST, 0))?;
            socket.set_read_timeout(Some(POLL))?;
            let addr = socket.local_addr()?;
            servers.push(UpstreamServer::new(addr.ip(), addr.port(), upstream.label.clone()));
            let world = world.clone();
            let stop = Arc::clone(&stop);
            threads.push(thread::spawn(move || serve(world, index, socket, stop)));
        }
        Ok(LoopbackWorld { servers, stop, threads })
    }

    pub fn servers(&self) -> &[UpstreamServer] {
        &self.servers
    }
}

fn serve(world: SimWorld, index: usize, socket: UdpSocket, stop: Arc<AtomicBool>) {
    let mut buf = [0u8; 512];
    let mut lookup = 0u64;
    while !stop.load(Ordering::Relaxed) {
        let (n, peer): (usize, SocketAddr) = match socket.recv_from(&mut buf) {
            Ok(x) => x,
            Err(_) => continue,
        };
        let Ok(query) = decode_query(&buf[..n]) else { continue };
        let draw = world.sample(index, lookup);
        lookup += 1;
        if let Sample::Latency(ms) = draw {
            let reply = world.response_for(index, &query);
            let Ok(socket) = socket.try_clone() else { continue };
            thread::spawn(move || {
                thread::sleep(Duration::from_secs_f64(ms / 1000.0));
                let _ = socket.send_to(&reply, peer);
            });
        }
    }
}

impl Drop for LoopbackWorld {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}
