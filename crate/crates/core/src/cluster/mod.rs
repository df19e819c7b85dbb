//! Networked master/worker runtime over TCP.
//!
//! Workers hold only their encoded partition and answer gradient and
//! curvature requests. The master broadcasts each round, keeps the first `k`
//! distinct replies tagged with that round and drops everything else.

mod master;
mod wire;
mod worker;

pub use master::{run_distributed, ClusterPool, DistributedOptions};
pub use wire::{
    decode_frame, decode_message, encode_frame, encode_message, read_message, write_message, Frame, Message,
    MessageType, HEADER_LEN, MAX_PAYLOAD, WIRE_MAGIC,
};
pub use worker::{worker_accept, worker_listen, worker_serve, WorkerState};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("bad frame magic")]
    BadMagic,
    #[error("truncated frame")]
    Truncated,
    #[error("payload of {0} bytes exceeds the 1 GiB limit")]
    Oversize(u64),
    #[error("unknown message type {0}")]
    UnknownType(u8),
    #[error("malformed payload: {0}")]
    Malformed(String),
    #[error("protocol order violation: {0}")]
    ProtocolOrderViolation(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("round {round}: {got} of {need} replies before quorum became unreachable or timed out")]
    QuorumTimeout { round: u32, got: usize, need: usize },
    #[error("connection to worker {0} lost")]
    ConnectionLost(usize),
    #[error("worker {node} reported: {message}")]
    Remote { node: usize, message: String },
    #[error("bad delay spec: {0}")]
    Delay(#[from] crate::straggler::StragglerError),
    #[error("solver: {0}")]
    Solver(#[from] crate::solver::SolverError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ClusterError>;
