//! Transports feeding a [`Mailbox`]: an in-process channel on a virtual
//! clock, and loopback UDP on the wall clock.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::io;
use std::net::{SocketAddr, UdpSocket};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::codec::{decode_frame, encode_frame, CodecError, PoseFrame, FRAME_SIZE};
use super::mailbox::Mailbox;

#[derive(Debug)]
struct InFlight {
    arrival_ns: u64,
    seq: u32,
    bytes: Box<[u8; FRAME_SIZE]>,
}

impl PartialEq for InFlight {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}
impl Eq for InFlight {}
impl PartialOrd for InFlight {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for InFlight {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key().cmp(&other.key())
    }
}
impl InFlight {
    fn key(&self) -> (u64, u32) {
        (self.arrival_ns, self.seq)
    }
}

/// Frames arrive `delay + N(0, jitter_std)` after sending (never before
/// they were sent) or are lost with probability `drop_prob`. They travel
/// encoded, as they would on the wire.
#[derive(Debug)]
pub struct SimChannel {
    delay_ns: f64,
    jitter: Normal<f64>,
    drop_prob: f64,
    rng: ChaCha8Rng,
    queue: BinaryHeap<Reverse<InFlight>>,
}

impl SimChannel {
    /// Times in seconds.
    pub fn new(delay: f64, jitter_std: f64, drop_prob: f64, seed: u64) -> Self {
        SimChannel {
            delay_ns: delay * 1e9,
            jitter: Normal::new(0.0, jitter_std * 1e9).expect("jitter_std is finite and non-negative"),
            drop_prob,
            rng: ChaCha8Rng::seed_from_u64(seed),
            queue: BinaryHeap::new(),
        }
    }

    /// Returns the arrival time, or `None` if the frame is lost.
    pub fn send(&mut self, frame: PoseFrame, now_ns: u64) -> Option<u64> {
        // both draws happen for every frame so a drop does not shift later jitter
        let jitter = self.jitter.sample(&mut self.rng);
        let lost = self.rng.random::<f64>() < self.drop_prob;
        if lost {
            return None;
        }
        let arrival_ns = now_ns + (self.delay_ns + jitter).max(0.0).round() as u64;
        self.queue.push(Reverse(InFlight {
            arrival_ns,
            seq: frame.seq,
            bytes: Box::new(encode_frame(&frame)),
        }));
        Some(arrival_ns)
    }

    /// Writes every frame due by `now_ns` into `mailbox` in arrival order.
    /// Returns how many were delivered.
    pub fn deliver(&mut self, now_ns: u64, mailbox: &Mailbox) -> Result<usize, CodecError> {
        let mut n = 0;
        while self.queue.peek().is_some_and(|Reverse(f)| f.arrival_ns <= now_ns) {
            let Reverse(f) = self.queue.pop().unwrap();
            mailbox.write(decode_frame(&f.bytes[..])?);
            n += 1;
        }
        Ok(n)
    }

    pub fn in_flight(&self) -> usize {
        self.queue.len()
    }
}

/// Sends one encoded frame.
pub fn send_udp(socket: &UdpSocket, to: SocketAddr, frame: &PoseFrame) -> io::Result<()> {
    socket.send_to(&encode_frame(frame), to).map(|_| ())
}

/// Background thread decoding datagrams from `socket` into a mailbox.
pub struct UdpReceiver {
    stop: Arc<AtomicBool>,
    rejected: Arc<AtomicU64>,
    handle: Option<JoinHandle<io::Result<()>>>,
}

impl UdpReceiver {
    pub fn spawn(socket: UdpSocket, mailbox: Arc<Mailbox>) -> io::Result<Self> {
        socket.set_read_timeout(Some(Duration::from_millis(5)))?;
        let stop = Arc::new(AtomicBool::new(false));
        let rejected = Arc::new(AtomicU64::new(0));
        let (s, r) = (stop.clone(), rejected.clone());
        let handle = std::thread::spawn(move || {
            let mut buf = [0u8; 2 * FRAME_SIZE];
            while !s.load(Ordering::Relaxed) {
                match socket.recv(&mut buf) {
                    Ok(n) if n == FRAME_SIZE => match decode_frame(&buf[..n]) {
                        Ok(f) => mailbox.write(f),
                        Err(_) => {
                            r.fetch_add(1, Ordering::Relaxed);
                        }
                    },
                    Ok(_) => {
                        r.fetch_add(1, Ordering::Relaxed);
                    }
                    Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
                    Err(e) => return Err(e),
                }
            }
            Ok(())
        });
        Ok(UdpReceiver {
            stop,
            rejected,
            handle: Some(handle),
        })
    }

    /// Datagrams that were not valid frames.
    pub fn rejected(&self) -> u64 {
        self.rejected.load(Ordering::Relaxed)
    }

    pub fn stop(mut self) -> io::Result<()> {
        self.shutdown()
    }

    fn shutdown(&mut self) -> io::Result<()> {
        self.stop.store(true, Ordering::Relaxed);
        match self.handle.take() {
            Some(h) => h.join().unwrap_or_else(|_| Err(io::Error::other("receiver thread panicked"))),
            None => Ok(()),
        }
    }
}

impl Drop for UdpReceiver {
    fn drop(&mut self) {
        let _ = self.shutdown();
    }
}
