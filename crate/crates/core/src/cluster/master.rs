use std::collections::HashSet;
use std::io::BufReader;
use std::net::{TcpStream, ToSocketAddrs};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use log::{debug, info, warn};

use super::wire::{read_message, write_message, Message};
use super::{ClusterError, Result};
use crate::encoding::EncodedPartition;
use crate::solver::{run_solver, CodedInstance, Reply, RoundReplies, RunTrace, SolverConfig, SolverError, WorkerPool};
use crate::straggler::DelayKind;

enum Event {
    Message(usize, Message),
    Closed(usize, Option<ClusterError>),
}

/// Settings for a distributed run.
#[derive(Debug, Clone)]
pub struct DistributedOptions {
    /// Delay injected by each worker before replying; `None` for no delay.
    pub delays: Option<DelayKind>,
    pub delay_seed: u64,
    pub timeout_ms: u64,
}

impl Default for DistributedOptions {
    fn default() -> Self {
        Self {
            delays: None,
            delay_seed: 0,
            timeout_ms: 30_000,
        }
    }
}

/// Connections to `m` workers, node `i` being endpoint `i`.
pub struct ClusterPool {
    writers: Vec<Option<TcpStream>>,
    events: Receiver<Event>,
    readers: Vec<JoinHandle<()>>,
    timeout: Duration,
    closed: bool,
}

fn spawn_reader(node: usize, stream: TcpStream, tx: Sender<Event>) -> JoinHandle<()> {
    thread::spawn(move || {
        let mut r = BufReader::new(stream);
        loop {
            match read_message(&mut r) {
                Ok(Some(m)) => {
                    if tx.send(Event::Message(node, m)).is_err() {
                        return;
                    }
                }
                Ok(None) => {
                    let _ = tx.send(Event::Closed(node, None));
                    return;
                }
                Err(e) => {
                    let _ = tx.send(Event::Closed(node, Some(e)));
                    return;
                }
            }
        }
    })
}

impl ClusterPool {
    /// Connects to every endpoint and pushes partition `i` to endpoint `i`.
    pub fn connect<A: ToSocketAddrs>(
        endpoints: &[A],
        partitions: &[EncodedPartition],
        options: &DistributedOptions,
    ) -> Result<Self> {
        if endpoints.len() != partitions.len() {
            return Err(ClusterError::DimensionMismatch {
                expected: partitions.len(),
                found: endpoints.len(),
            });
        }
        let (tx, events) = mpsc::channel();
        let mut writers = Vec::with_capacity(endpoints.len());
        let mut readers = Vec::with_capacity(endpoints.len());
        for (node, addr) in endpoints.iter().enumerate() {
            let stream = TcpStream::connect(addr).map_err(|e| {
                warn!("worker {node}: {e}");
                ClusterError::ConnectionLost(node)
            })?;
            stream.set_nodelay(true)?;
            readers.push(spawn_reader(node, stream.try_clone()?, tx.clone()));
            writers.push(Some(stream));
        }
        let mut pool = Self {
            writers,
            events,
            readers,
            timeout: Duration::from_millis(options.timeout_ms),
            closed: false,
        };
        pool.load(partitions, options)?;
        Ok(pool)
    }

    fn load(&mut self, partitions: &[EncodedPartition], options: &DistributedOptions) -> Result<()> {
        let m = partitions.len();
        let delay_spec = options.delays.as_ref().map(|d| d.to_string()).unwrap_or_default();
        for (node, part) in partitions.iter().enumerate() {
            let msg = Message::LoadPartition {
                node_id: node as u32,
                nodes: m as u32,
                x: part.x.clone(),
                y: part.y.clone(),
                seed: options.delay_seed,
                delay_spec: delay_spec.clone(),
            };
            let w = self.writers[node].as_mut().expect("fresh connection");
            write_message(w, &msg).map_err(|_| ClusterError::ConnectionLost(node))?;
        }
        let deadline = Instant::now() + self.timeout;
        let mut acked = HashSet::new();
        while acked.len() < m {
            let event = self.next_event(deadline).map_err(|_| ClusterError::QuorumTimeout {
                round: 0,
                got: acked.len(),
                need: m,
            })?;
            match event {
                Event::Message(node, Message::Ack { .. }) => {
                    acked.insert(node);
                }
                Event::Message(node, Message::Error { message, .. }) => {
                    return Err(ClusterError::Remote { node, message });
                }
                Event::Message(node, other) => {
                    return Err(ClusterError::ProtocolOrderViolation(format!(
                        "worker {node} sent {:?} during load",
                        other.msg_type()
                    )));
                }
                Event::Closed(node, _) if acked.contains(&node) => {
                    warn!("worker {node} disconnected after loading");
                    self.writers[node] = None;
                }
                Event::Closed(node, _) => return Err(ClusterError::ConnectionLost(node)),
            }
        }
        info!("{m} workers loaded");
        Ok(())
    }

    fn next_event(&self, deadline: Instant) -> std::result::Result<Event, RecvTimeoutError> {
        self.events.recv_timeout(deadline.saturating_duration_since(Instant::now()))
    }

    pub fn nodes(&self) -> usize {
        self.writers.len()
    }

    pub fn live(&self) -> usize {
        self.writers.iter().filter(|w| w.is_some()).count()
    }

    /// Sends `request` to every live worker and collects the first `k`
    /// distinct replies tagged with `round`.
    pub fn master_round<T>(
        &mut self,
        round: u32,
        request: &Message,
        k: usize,
        extract: impl Fn(Message) -> Option<(u32, T)>,
    ) -> Result<RoundReplies<T>> {
        let start = Instant::now();
        for node in 0..self.writers.len() {
            if let Some(w) = self.writers[node].as_mut() {
                if write_message(w, request).is_err() {
                    warn!("worker {node} unreachable in round {round}");
                    self.writers[node] = None;
                }
            }
        }
        let deadline = start + self.timeout;
        let mut seen = HashSet::new();
        let mut replies = Vec::with_capacity(k);
        let timeout = |got| ClusterError::QuorumTimeout { round, got, need: k };
        while replies.len() < k {
            if replies.len() + self.live_unreplied(&seen) < k {
                return Err(timeout(replies.len()));
            }
            let event = match self.next_event(deadline) {
                Ok(e) => e,
                Err(_) => return Err(timeout(replies.len())),
            };
            match event {
                Event::Closed(node, err) => {
                    warn!("worker {node} disconnected: {err:?}");
                    self.writers[node] = None;
                }
                Event::Message(node, Message::Error { round: r, message }) if r == round => {
                    return Err(ClusterError::Remote { node, message });
                }
                Event::Message(node, msg) => {
                    let r = msg.round();
                    if r != round {
                        debug!("dropping round {r} reply from worker {node} in round {round}");
                        continue;
                    }
                    match extract(msg) {
                        Some((claimed, value)) if claimed as usize == node => {
                            if seen.insert(node) {
                                let ms = start.elapsed().as_secs_f64() * 1000.0;
                                replies.push(Reply::new(node, value, ms));
                            }
                        }
                        _ => debug!("dropping unexpected message from worker {node}"),
                    }
                }
            }
        }
        let elapsed_ms = start.elapsed().as_secs_f64() * 1000.0;
        replies.sort_by_key(|r| r.node);
        Ok(RoundReplies { replies, elapsed_ms })
    }

    fn live_unreplied(&self, seen: &HashSet<usize>) -> usize {
        (0..self.writers.len())
            .filter(|&i| self.writers[i].is_some() && !seen.contains(&i))
            .count()
    }

    /// Sends Shutdown to every worker and joins the reader threads.
    pub fn shutdown(&mut self) {
        if self.closed {
            return;
        }
        self.closed = true;
        for w in self.writers.iter_mut().flatten() {
            let _ = write_message(w, &Message::Shutdown);
            let _ = w.shutdown(std::net::Shutdown::Write);
        }
        for h in self.readers.drain(..) {
            let _ = h.join();
        }
    }
}

impl Drop for ClusterPool {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn pool_error(e: ClusterError) -> SolverError {
    SolverError::Pool(e.to_string())
}

impl WorkerPool for ClusterPool {
    fn nodes(&self) -> usize {
        self.writers.len()
    }

    fn gradient_round(&mut self, t: usize, w: &[f64], k: usize) -> crate::solver::Result<RoundReplies<Vec<f64>>> {
        let round = (2 * t) as u32;
        let request = Message::Broadcast { round, w: w.to_vec() };
        self.master_round(round, &request, k, |m| match m {
            Message::GradientReply { node_id, g, .. } => Some((node_id, g)),
            _ => None,
        })
        .map_err(pool_error)
    }

    fn line_search_round(&mut self, t: usize, d: &[f64], k: usize) -> crate::solver::Result<RoundReplies<f64>> {
        let round = (2 * t + 1) as u32;
        let request = Message::LineSearchRequest { round, d: d.to_vec() };
        self.master_round(round, &request, k, |m| match m {
            Message::LineSearchReply { node_id, value, .. } => Some((node_id, value)),
            _ => None,
        })
        .map_err(pool_error)
    }
}

/// Runs the configured solver against remote workers, one per partition.
pub fn run_distributed<A: ToSocketAddrs>(
    instance: &CodedInstance,
    config: &SolverConfig,
    endpoints: &[A],
    options: &DistributedOptions,
) -> Result<RunTrace> {
    if let Some(kind) = &options.delays {
        if kind.is_adversarial() {
            return Err(ClusterError::Malformed("adversarial delays are simulation-only".into()));
        }
        if kind.is_random() {
            info!("random injected delays: the fastest-k race is not reproducible across runs");
        }
    }
    let mut pool = ClusterPool::connect(endpoints, &instance.partitions, options)?;
    let result = run_solver(&mut instance.context(), &mut pool, config);
    pool.shutdown();
    Ok(result?)
}
