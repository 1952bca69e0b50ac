mod common;

use common::*;
use locl::matrix::Matrix;
use locl::ordering::*;
use proptest::prelude::*;
use rand::Rng;

fn tree_weight(edges: &[Edge]) -> f64 {
    tree_total(edges.iter().map(|e| e.weight).collect())
}

#[test]
fn mst_matches_prufer_enumeration() {
    let mut r = rng(2024);
    for trial in 0..100 {
        let m = 3 + trial % 5;
        let w = random_symmetric(m, &mut r);
        let c = CorrelationMatrix::from_matrix(w.clone()).unwrap();
        let got = tree_weight(&build_mst(&c).unwrap());
        let want = brute_force_max_tree(&abs_matrix(&w));
        assert_eq!(got, want, "m={m}");
    }
}

#[test]
fn prufer_oracle_counts_labeled_trees() {
    // Cayley: m^(m-2) sequences, each a distinct spanning tree.
    let m = 5;
    let mut seen = std::collections::BTreeSet::new();
    for code in 0..m * m * m {
        let seq = [code % m, (code / m) % m, code / (m * m)];
        let mut e: Vec<(usize, usize)> = prufer_decode(&seq, m)
            .into_iter()
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        e.sort_unstable();
        seen.insert(e);
    }
    assert_eq!(seen.len(), 125);
}

#[test]
fn k3_fixture() {
    let w = Matrix::from_rows(&[vec![1.0, 0.9, 0.1], vec![0.9, 1.0, -0.8], vec![0.1, -0.8, 1.0]]).unwrap();
    let edges = build_mst(&CorrelationMatrix::from_matrix(w).unwrap()).unwrap();
    let mut pairs: Vec<(usize, usize)> = edges.iter().map(|e| (e.a, e.b)).collect();
    pairs.sort_unstable();
    assert_eq!(pairs, vec![(0, 1), (1, 2)]);
    assert!((tree_weight(&edges) - 1.7).abs() < 1e-15);
}

#[test]
fn pearson_matches_two_pass_oracle() {
    let mut r = rng(50);
    let x = Matrix::from_vec(50, 6, (0..300).map(|_| r.gen_range(-3.0..3.0)).collect()).unwrap();
    let got = pearson_matrix(&x);
    let want = naive_pearson(&x);
    for i in 0..6 {
        for j in 0..6 {
            assert!((got.get(i, j) - want[(i, j)]).abs() < 1e-12);
        }
    }
}

#[test]
fn documented_orders() {
    let perm = |v, m| alternative_order(m, v, 0).unwrap().permutation;
    assert_eq!(perm(OrderingVariant::Original, 4), vec![0, 1, 2, 3]);
    assert_eq!(perm(OrderingVariant::Interleaved, 5), vec![0, 2, 4, 1, 3]);
    assert_eq!(
        alternative_order(10, OrderingVariant::Random, 9).unwrap(),
        alternative_order(10, OrderingVariant::Random, 9).unwrap()
    );
    let two = dfs_order(&[Edge::new(0, 1, 0.4)], 2).unwrap();
    assert_eq!(two.permutation, vec![0, 1]);
}

#[test]
fn split_fixtures() {
    let o = |m| alternative_order(m, OrderingVariant::Original, 0).unwrap();
    let s = split_features(&o(7), 0.0).unwrap();
    assert_eq!((s.subset1, s.subset2), (vec![0, 1, 2, 3], vec![4, 5, 6]));
    let s = split_features(&o(10), 0.1).unwrap();
    assert_eq!(s.subset1, (0..6).collect::<Vec<_>>());
    assert_eq!(s.subset2, (4..10).collect::<Vec<_>>());
    let s = split_features(&o(2), 0.0).unwrap();
    assert_eq!((s.subset1, s.subset2), (vec![0], vec![1]));
}

#[test]
fn mst_order_keeps_correlated_features_adjacent() {
    // Adjacency of the MST order beats the average random permutation.
    let mut r = rng(77);
    for _ in 0..10 {
        let x = locl::synthetic::correlated_blocks(&locl::synthetic::BlockSpec {
            rows: 300,
            features: 12,
            blocks: 3,
            seed: r.gen(),
            ..Default::default()
        })
        .unwrap()
        .x;
        let c = pearson_matrix(&x);
        let mst = adjacency_score(&c, &mst_order(&c).unwrap().permutation);
        let random_mean: f64 = (0..100)
            .map(|s| adjacency_score(&c, &alternative_order(12, OrderingVariant::Random, s).unwrap().permutation))
            .sum::<f64>()
            / 100.0;
        assert!(mst >= random_mean, "{mst} < {random_mean}");
    }
}

fn random_tree(m: usize, seed: u64) -> Vec<Edge> {
    let mut r = rng(seed);
    let seq: Vec<usize> = (0..m.saturating_sub(2)).map(|_| r.gen_range(0..m)).collect();
    let pairs = if m == 2 { vec![(0, 1)] } else { prufer_decode(&seq, m) };
    pairs.into_iter().map(|(a, b)| Edge::new(a, b, r.gen_range(0.0..1.0))).collect()
}

proptest! {
    #[test]
    fn dfs_order_is_a_permutation(m in 2usize..12, seed in any::<u64>()) {
        let o = dfs_order(&random_tree(m, seed), m).unwrap();
        let mut p = o.permutation.clone();
        p.sort_unstable();
        prop_assert_eq!(p, (0..m).collect::<Vec<_>>());
    }

    #[test]
    fn split_covers_all_features(m in 2usize..40, overlap in 0.0f64..0.5, seed in any::<u64>()) {
        let o = alternative_order(m, OrderingVariant::Random, seed).unwrap();
        if let Ok(s) = split_features(&o, overlap) {
            let mut all: Vec<usize> = s.subset1.iter().chain(&s.subset2).copied().collect();
            all.sort_unstable();
            all.dedup();
            prop_assert_eq!(all, (0..m).collect::<Vec<_>>());
            // Relative order preserved.
            let pos = |j: &usize| o.permutation.iter().position(|p| p == j).unwrap();
            prop_assert!(s.subset1.windows(2).all(|w| pos(&w[0]) < pos(&w[1])));
            prop_assert!(s.subset2.windows(2).all(|w| pos(&w[0]) < pos(&w[1])));
            if overlap * (m as f64) < 1.0 {
                prop_assert_eq!(s.subset1.len(), m.div_ceil(2));
                prop_assert_eq!(s.subset2.len(), m / 2);
            }
        }
    }

    #[test]
    fn mst_is_a_spanning_tree(m in 2usize..10, seed in any::<u64>()) {
        let w = random_symmetric(m, &mut rng(seed));
        let edges = build_mst(&CorrelationMatrix::from_matrix(w.clone()).unwrap()).unwrap();
        prop_assert_eq!(edges.len(), m - 1);
        for e in &edges {
            prop_assert_eq!(e.weight, w[(e.a, e.b)].abs());
        }
        prop_assert!(dfs_order(&edges, m).is_ok());
    }
}
