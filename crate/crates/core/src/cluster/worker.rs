use std::io::BufReader;
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use log::{debug, info, warn};

use super::wire::{read_message, write_message, Message};
use super::{ClusterError, Result};
use crate::encoding::EncodedPartition;
use crate::straggler::{sample_delays, DelayKind};

/// Everything a worker knows: its encoded block and how to delay replies.
#[derive(Debug, Clone)]
pub struct WorkerState {
    pub partition: EncodedPartition,
    pub node_id: usize,
    pub nodes: usize,
    pub delay: Option<(DelayKind, u64)>,
}

impl WorkerState {
    fn injected_delay(&self, round: u32) -> Duration {
        match &self.delay {
            Some((kind, seed)) => {
                let ms = sample_delays(kind, self.nodes, round as u64, *seed)[self.node_id];
                Duration::from_secs_f64(ms.max(0.0) / 1000.0)
            }
            None => Duration::ZERO,
        }
    }

    fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.partition.cols() {
            return Err(ClusterError::DimensionMismatch {
                expected: self.partition.cols(),
                found: v.len(),
            });
        }
        Ok(())
    }

    /// The reply to a request, computed without any delay.
    pub fn respond(&self, request: &Message) -> Result<Message> {
        let node_id = self.node_id as u32;
        match request {
            Message::Broadcast { round, w } => {
                self.check_len(w)?;
                Ok(Message::GradientReply {
                    round: *round,
                    node_id,
                    g: self.partition.gradient(w),
                })
            }
            Message::LineSearchRequest { round, d } => {
                self.check_len(d)?;
                Ok(Message::LineSearchReply {
                    round: *round,
                    node_id,
                    value: self.partition.curvature(d),
                })
            }
            other => Err(ClusterError::ProtocolOrderViolation(format!(
                "unexpected {:?} after load",
                other.msg_type()
            ))),
        }
    }
}

fn load_state(msg: Message) -> Result<WorkerState> {
    match msg {
        Message::LoadPartition {
            node_id,
            nodes,
            x,
            y,
            seed,
            delay_spec,
        } => {
            if node_id >= nodes {
                return Err(ClusterError::Malformed(format!("node {node_id} of {nodes}")));
            }
            let partition = EncodedPartition::new(node_id as usize, x, y)
                .map_err(|e| ClusterError::Malformed(e.to_string()))?;
            let delay = if delay_spec.is_empty() {
                None
            } else {
                let kind: DelayKind = delay_spec.parse()?;
                if kind.is_adversarial() {
                    return Err(ClusterError::Malformed("adversarial delays cannot be injected".into()));
                }
                Some((kind, seed))
            };
            Ok(WorkerState {
                partition,
                node_id: node_id as usize,
                nodes: nodes as usize,
                delay,
            })
        }
        other => Err(ClusterError::ProtocolOrderViolation(format!(
            "expected LoadPartition, got {:?}",
            other.msg_type()
        ))),
    }
}

fn error_reply(round: u32, e: &ClusterError) -> Message {
    Message::Error {
        round,
        message: e.to_string(),
    }
}

/// Serves one master connection until Shutdown or end of stream.
///
/// A reader thread forwards frames so a pending injected delay can be
/// abandoned as soon as a newer request arrives.
pub fn worker_serve(stream: TcpStream) -> Result<()> {
    stream.set_nodelay(true)?;
    let mut out = stream.try_clone()?;
    let (tx, rx) = mpsc::channel();
    let reader = thread::spawn(move || {
        let mut r = BufReader::new(stream);
        loop {
            let msg = read_message(&mut r);
            let stop = !matches!(msg, Ok(Some(_)));
            if tx.send(msg).is_err() || stop {
                break;
            }
        }
    });

    let mut state: Option<WorkerState> = None;
    let mut pending: Option<Message> = None;
    let result = loop {
        let msg = match pending.take() {
            Some(m) => m,
            None => match rx.recv() {
                Ok(Ok(Some(m))) => m,
                Ok(Ok(None)) | Err(_) => break Ok(()),
                Ok(Err(e)) => break Err(e),
            },
        };
        match msg {
            Message::Shutdown => {
                info!("shutdown received");
                break Ok(());
            }
            Message::LoadPartition { .. } => {
                let reply = match load_state(msg) {
                    Ok(s) => {
                        info!(
                            "loaded partition for node {} ({}x{})",
                            s.node_id,
                            s.partition.rows(),
                            s.partition.cols()
                        );
                        let ack = Message::Ack {
                            round: 0,
                            node_id: s.node_id as u32,
                        };
                        state = Some(s);
                        ack
                    }
                    Err(e) => error_reply(0, &e),
                };
                if let Err(e) = write_message(&mut out, &reply) {
                    break Err(e);
                }
            }
            request => {
                let round = request.round();
                let Some(s) = &state else {
                    let e = ClusterError::ProtocolOrderViolation("request before LoadPartition".into());
                    if let Err(e) = write_message(&mut out, &error_reply(round, &e)) {
                        break Err(e);
                    }
                    continue;
                };
                let delay = s.injected_delay(round);
                let mut superseded = false;
                if !delay.is_zero() {
                    match rx.recv_timeout(delay) {
                        Ok(next) => {
                            debug!("round {round} superseded while delayed");
                            pending = Some(match next {
                                Ok(Some(m)) => m,
                                Ok(None) | Err(_) => Message::Shutdown,
                            });
                            superseded = true;
                        }
                        Err(RecvTimeoutError::Timeout) => {}
                        Err(RecvTimeoutError::Disconnected) => {
                            pending = Some(Message::Shutdown);
                            superseded = true;
                        }
                    }
                }
                if superseded {
                    continue;
                }
                let reply = s.respond(&request).unwrap_or_else(|e| error_reply(round, &e));
                if let Err(e) = write_message(&mut out, &reply) {
                    break Err(e);
                }
            }
        }
    };
    let _ = out.shutdown(std::net::Shutdown::Both);
    let _ = reader.join();
    result
}

/// Binds `addr`, then accepts and serves a single master connection.
pub fn worker_listen<A: ToSocketAddrs>(addr: A) -> Result<()> {
    let listener = TcpListener::bind(addr)?;
    info!("listening on {}", listener.local_addr()?);
    worker_accept(&listener)
}

pub fn worker_accept(listener: &TcpListener) -> Result<()> {
    let (stream, peer) = listener.accept()?;
    info!("master connected from {peer}");
    let r = worker_serve(stream);
    if let Err(e) = &r {
        warn!("worker stopped: {e}");
    }
    r
}
