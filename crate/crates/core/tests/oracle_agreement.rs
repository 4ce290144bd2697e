mod common;

use std::collections::BTreeMap;

use hypermerw::broadcast::{infer_broadcast, kl_divergence, pivot_weighted_reference, BroadcastOptions};
use hypermerw::hypergraph::Orientation;
use hypermerw::merge::{infer_merge, merge_reference, MergeOptions};
use hypermerw::oracle::{broadcast_problem, kl_project_dense, local_optimality_probe, merge_problem};
use hypermerw::tensor::SymSparseTensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn max_entry_gap(joint: &BTreeMap<usize, SymSparseTensor>, k: usize, dense: &hypermerw::tensor::DenseTensor) -> f64 {
    let ours = joint[&k].to_dense();
    ours.data()
        .iter()
        .zip(dense.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

#[test]
fn broadcast_matches_dense_projection() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let n = 3 + (rand::Rng::gen_range(&mut rng, 0..2));
        let inst = common::random_instance(&mut rng, Orientation::OneTail, n, &[3]);
        let kernel = infer_broadcast(&inst.layers, &inst.p, &inst.weights, &BroadcastOptions::default()).unwrap();
        let reference = pivot_weighted_reference(&inst.layers, &inst.p, &inst.weights).unwrap();
        let joint = kernel.joint_layers();
        let ours = kl_divergence(&joint, &reference);

        let problem = broadcast_problem(&inst.layers, 3, &inst.p).unwrap();
        let sol = kl_project_dense(&problem, 1e-12, 500).unwrap();
        assert!((ours - sol.kl).abs() < 1e-9, "kl {ours} vs {}", sol.kl);
        assert!(max_entry_gap(&joint, 3, &sol.tensor) < 1e-9);
        let probe = local_optimality_probe(&problem, &sol, 100, 5).unwrap();
        assert!(probe >= -1e-14, "probe found lower KL: {probe}");
    }
}

#[test]
fn merge_matches_dense_projection() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10 {
        let n = 3 + (rand::Rng::gen_range(&mut rng, 0..2));
        let inst = common::random_instance(&mut rng, Orientation::OneHead, n, &[3]);
        let kernel = infer_merge(&inst.layers, &inst.p, &inst.weights, &MergeOptions::default()).unwrap();
        let reference = merge_reference(&inst.layers, &inst.p, &inst.weights).unwrap();
        let joint = kernel.joint_layers();
        let ours = kl_divergence(&joint, &reference);

        let problem = merge_problem(&inst.layers, 3, &inst.p).unwrap();
        let sol = kl_project_dense(&problem, 1e-12, 500).unwrap();
        assert!((ours - sol.kl).abs() < 1e-9, "kl {ours} vs {}", sol.kl);
        assert!(max_entry_gap(&joint, 3, &sol.tensor) < 1e-9);
    }
}
