//! Property-based invariants over randomized layers and topologies.

mod common;

use std::collections::HashSet;

use proptest::prelude::*;
use sparset::rng;
use sparset::topology::Link;
use sparset::{
    Activation, BatchMatrix, EvolutionConfig, SparseLayer, SparseWeights, WeightInitSpec,
};

fn arb_links(n_in: usize, n_out: usize) -> impl Strategy<Value = Vec<Link>> {
    proptest::collection::vec(
        (0..n_in as u32, 0..n_out as u32, -2.0f64..2.0),
        0..=n_in * n_out,
    )
    .prop_map(|triples| {
        let mut seen = HashSet::new();
        triples
            .into_iter()
            .filter(|(i, j, _)| seen.insert((*i, *j)))
            .map(|(i, j, w)| Link {
                in_idx: i,
                out_idx: j,
                weight: w,
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn prop_sparse_forward_matches_dense_oracle(
        links in arb_links(6, 5),
        input in proptest::collection::vec(-3.0f64..3.0, 18),
        act_idx in 0usize..5,
    ) {
        let act = [
            Activation::Identity,
            Activation::Relu,
            Activation::Sigmoid,
            Activation::Srelu,
            Activation::Softmax,
        ][act_idx];
        let layer = SparseLayer::new(SparseWeights::from_links(6, 5, links).unwrap(), act);
        let x = BatchMatrix::from_vec(3, 6, input).unwrap();
        let ours = layer.infer(&x).unwrap();
        let oracle = common::dense_forward(&layer, &x);
        for (a, b) in ours.data().iter().zip(oracle.data().iter()) {
            let rel = (a - b).abs() / a.abs().max(b.abs()).max(1e-12);
            prop_assert!(rel <= 1e-12, "{} vs {}", a, b);
        }
    }

    #[test]
    fn prop_softmax_outputs_are_distributions(
        links in arb_links(4, 6),
        input in proptest::collection::vec(-30.0f64..30.0, 8),
    ) {
        let layer = SparseLayer::new(
            SparseWeights::from_links(4, 6, links).unwrap(),
            Activation::Softmax,
        );
        let x = BatchMatrix::from_vec(2, 4, input).unwrap();
        let out = layer.infer(&x).unwrap();
        for r in 0..out.rows() {
            let sum: f64 = out.row(r).iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(out.row(r).iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn prop_snapshot_round_trips(links in arb_links(9, 7)) {
        let w = SparseWeights::from_links(9, 7, links).unwrap();
        let mut buf = Vec::new();
        w.write_snapshot(&mut buf).unwrap();
        let back = SparseWeights::read_snapshot(buf.as_slice()).unwrap();
        prop_assert_eq!(back.links(), w.links());
    }

    #[test]
    fn prop_evolve_conserves_count_and_uniqueness(
        links in arb_links(8, 8),
        zeta in 0.0f64..0.9,
        seed in 0u64..1000,
    ) {
        let mut w = SparseWeights::from_links(8, 8, links).unwrap();
        let nnz = w.nnz();
        let cfg = EvolutionConfig::new(4.0, zeta, seed).unwrap();
        let mut r = rng::seeded(seed);
        let delta = w.evolve(&cfg, &WeightInitSpec::default(), &mut r).unwrap();
        prop_assert_eq!(w.nnz(), nnz);
        prop_assert_eq!(delta.added.len(), delta.removed.len());
        let set: HashSet<(u32, u32)> = w.links().iter().map(|l| (l.in_idx, l.out_idx)).collect();
        prop_assert_eq!(set.len(), nnz);
        // Degrees always sum to nnz on both sides.
        let din: usize = w.degree_distribution(sparset::Side::Input).iter().sum();
        let dout: usize = w.degree_distribution(sparset::Side::Output).iter().sum();
        prop_assert_eq!(din, nnz);
        prop_assert_eq!(dout, nnz);
    }

    #[test]
    fn prop_rbm_conditionals_match_dense_formula(
        links in arb_links(5, 4),
        v_bits in 0u32..32,
    ) {
        let w = SparseWeights::from_links(5, 4, links).unwrap();
        let mut dense = vec![vec![0.0f64; 4]; 5];
        for l in w.links() {
            dense[l.in_idx as usize][l.out_idx as usize] = l.weight;
        }
        let model = sparset::RbmModel::from_parts(
            w,
            vec![0.1, -0.2, 0.3, 0.0, -0.4],
            vec![0.2, 0.0, -0.3, 0.5],
        )
        .unwrap();
        let v: Vec<f64> = (0..5).map(|i| f64::from(v_bits >> i & 1)).collect();
        let batch = BatchMatrix::from_vec(1, 5, v.clone()).unwrap();
        let probs = model.hidden_probabilities(&batch).unwrap();
        for j in 0..4 {
            let mut x = model.hidden_bias[j];
            for (i, &vi) in v.iter().enumerate() {
                x += dense[i][j] * vi;
            }
            let expect = 1.0 / (1.0 + (-x).exp());
            let rel = (probs.get(0, j) - expect).abs() / expect.abs().max(1e-12);
            prop_assert!(rel <= 1e-12);
        }
    }
}
