use std::net::{SocketAddr, TcpListener};
use std::thread::{self, JoinHandle};

use codedopt::cluster::*;
use codedopt::encoding::{build_fwht_subsampled, build_identity, EncodedPartition, FwhtOptions};
use codedopt::numerics::DenseMatrix;
use codedopt::problem::gen_synthetic;
use codedopt::solver::{Algorithm, CodedInstance, SolverConfig};
use codedopt::straggler::{DelayKind, DelayModel};

fn spawn_workers(m: usize) -> (Vec<SocketAddr>, Vec<JoinHandle<Result<()>>>) {
    let mut addrs = Vec::new();
    let mut handles = Vec::new();
    for _ in 0..m {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        addrs.push(listener.local_addr().unwrap());
        handles.push(thread::spawn(move || worker_accept(&listener)));
    }
    (addrs, handles)
}

fn join_all(handles: Vec<JoinHandle<Result<()>>>) {
    for h in handles {
        h.join().unwrap().unwrap();
    }
}

fn small_parts(m: usize) -> Vec<EncodedPartition> {
    (0..m)
        .map(|i| {
            let x = DenseMatrix::from_fn(2, 3, |r, c| (i + r + c) as f64);
            EncodedPartition::new(i, x, vec![1.0, i as f64]).unwrap()
        })
        .collect()
}

#[test]
fn full_quorum_without_delays() {
    let parts = small_parts(4);
    let (addrs, handles) = spawn_workers(4);
    let mut pool = ClusterPool::connect(&addrs, &parts, &DistributedOptions::default()).unwrap();
    let w = vec![0.0; 3];
    let r = pool
        .master_round(0, &Message::Broadcast { round: 0, w: w.clone() }, 4, |m| match m {
            Message::GradientReply { node_id, g, .. } => Some((node_id, g)),
            _ => None,
        })
        .unwrap();
    let nodes: Vec<usize> = r.replies.iter().map(|r| r.node).collect();
    assert_eq!(nodes, vec![0, 1, 2, 3]);
    for reply in &r.replies {
        assert_eq!(reply.value, parts[reply.node].gradient(&w));
    }
    pool.shutdown();
    join_all(handles);
}

#[test]
fn deterministic_delays_pick_fastest() {
    let parts = small_parts(4);
    let (addrs, handles) = spawn_workers(4);
    let opts = DistributedOptions {
        delays: Some(DelayKind::Deterministic(vec![250.0, 10.0, 150.0, 80.0])),
        ..Default::default()
    };
    let mut pool = ClusterPool::connect(&addrs, &parts, &opts).unwrap();
    for round in 0..3u32 {
        let r = pool
            .master_round(round, &Message::LineSearchRequest { round, d: vec![1.0, 0.0, -1.0] }, 2, |m| match m {
                Message::LineSearchReply { node_id, value, .. } => Some((node_id, value)),
                _ => None,
            })
            .unwrap();
        let nodes: Vec<usize> = r.replies.iter().map(|r| r.node).collect();
        assert_eq!(nodes, vec![1, 3]);
    }
    pool.shutdown();
    join_all(handles);
}

#[test]
fn killed_worker_breaks_full_quorum() {
    let parts = small_parts(3);
    let (mut addrs, mut handles) = spawn_workers(2);
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    addrs.push(listener.local_addr().unwrap());
    handles.push(thread::spawn(move || {
        let (mut s, _) = listener.accept().unwrap();
        let Some(Message::LoadPartition { node_id, .. }) = read_message(&mut s).unwrap() else {
            panic!("expected load");
        };
        write_message(&mut s, &Message::Ack { round: 0, node_id }).unwrap();
        Ok(())
    }));
    let opts = DistributedOptions {
        timeout_ms: 5_000,
        ..Default::default()
    };
    let mut pool = ClusterPool::connect(&addrs, &parts, &opts).unwrap();
    let err = pool.master_round(0, &Message::Broadcast { round: 0, w: vec![0.0; 3] }, 3, |m| match m {
        Message::GradientReply { node_id, g, .. } => Some((node_id, g)),
        _ => None,
    });
    assert!(matches!(err, Err(ClusterError::QuorumTimeout { need: 3, .. })), "{err:?}");
    pool.shutdown();
    join_all(handles);
}

#[test]
fn worker_reports_protocol_errors() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let h = thread::spawn(move || worker_accept(&listener));
    let mut s = std::net::TcpStream::connect(addr).unwrap();
    write_message(&mut s, &Message::Broadcast { round: 3, w: vec![1.0] }).unwrap();
    match read_message(&mut s).unwrap().unwrap() {
        Message::Error { round, message } => {
            assert_eq!(round, 3);
            assert!(message.contains("order"));
        }
        other => panic!("{other:?}"),
    }
    let part = &small_parts(1)[0];
    write_message(
        &mut s,
        &Message::LoadPartition {
            node_id: 0,
            nodes: 1,
            x: part.x.clone(),
            y: part.y.clone(),
            seed: 0,
            delay_spec: String::new(),
        },
    )
    .unwrap();
    assert!(matches!(read_message(&mut s).unwrap().unwrap(), Message::Ack { node_id: 0, .. }));
    write_message(&mut s, &Message::Broadcast { round: 4, w: vec![1.0] }).unwrap();
    assert!(matches!(read_message(&mut s).unwrap().unwrap(), Message::Error { round: 4, .. }));
    write_message(&mut s, &Message::Broadcast { round: 5, w: vec![0.0; 3] }).unwrap();
    match read_message(&mut s).unwrap().unwrap() {
        Message::GradientReply { round: 5, node_id: 0, g } => assert_eq!(g, part.gradient(&[0.0; 3])),
        other => panic!("{other:?}"),
    }
    write_message(&mut s, &Message::Shutdown).unwrap();
    h.join().unwrap().unwrap();
}

#[test]
fn identity_worker_gradient_at_zero() {
    let prob = gen_synthetic(16, 3, 0.0, 2).unwrap();
    let inst = CodedInstance::new(prob.clone(), build_identity(16), 4).unwrap();
    let (addrs, handles) = spawn_workers(4);
    let mut pool = ClusterPool::connect(&addrs, &inst.partitions, &DistributedOptions::default()).unwrap();
    let r = pool
        .master_round(0, &Message::Broadcast { round: 0, w: vec![0.0; 3] }, 4, |m| match m {
            Message::GradientReply { node_id, g, .. } => Some((node_id, g)),
            _ => None,
        })
        .unwrap();
    for reply in &r.replies {
        let rows = prob.x().row_block(4 * reply.node..4 * reply.node + 4).unwrap();
        let y = &prob.y()[4 * reply.node..4 * reply.node + 4];
        let expected: Vec<f64> = rows.tmatvec(y).unwrap().iter().map(|v| -v).collect();
        for (a, b) in reply.value.iter().zip(&expected) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }
    pool.shutdown();
    join_all(handles);
}

#[test]
fn distributed_matches_simulator() {
    let prob = gen_synthetic(64, 6, 0.0, 5).unwrap();
    let enc = build_fwht_subsampled(64, 2.0, 3, FwhtOptions::default()).unwrap();
    let inst = CodedInstance::new(prob, enc, 4).unwrap();
    let delays = DelayKind::Deterministic(vec![0.0, 40.0, 20.0, 60.0]);
    for algorithm in [Algorithm::Gd, Algorithm::Lbfgs] {
        let config = SolverConfig {
            algorithm,
            k: 3,
            max_iters: 10,
            ..Default::default()
        };
        let sim = inst.simulate(&config, &DelayModel::new(delays.clone(), 0), 0.0).unwrap();
        let (addrs, handles) = spawn_workers(4);
        let opts = DistributedOptions {
            delays: Some(delays.clone()),
            ..Default::default()
        };
        let real = run_distributed(&inst, &config, &addrs, &opts).unwrap();
        join_all(handles);
        assert_eq!(sim.len(), real.len());
        for (a, b) in sim.records.iter().zip(&real.records) {
            assert_eq!(a.a, b.a);
            for (x, y) in a.w.iter().zip(&b.w) {
                assert!((x - y).abs() <= 1e-12, "{x} vs {y}");
            }
        }
    }
}
