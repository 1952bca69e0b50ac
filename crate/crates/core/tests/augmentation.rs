mod common;

use common::rng;
use locl::augmentation::*;
use locl::Matrix;
use proptest::prelude::*;
use rand::Rng;

fn random_matrix(n: usize, w: usize, seed: u64) -> Matrix {
    let mut r = rng(seed);
    Matrix::from_vec(n, w, (0..n * w).map(|_| r.gen_range(-2.0..2.0)).collect()).unwrap()
}

#[test]
fn mask_rate_over_a_million_entries() {
    let m = sample_mask(1000, 1000, 0.3, 42).unwrap();
    assert!((0.295..=0.305).contains(&m.rate()), "{}", m.rate());
}

#[test]
fn zero_rate_is_identity() {
    let x = random_matrix(50, 9, 1);
    for mode in [CorruptionMode::Marginal, CorruptionMode::Zero] {
        let y = corrupt_view(&x, 0.0, mode, 5).unwrap();
        assert!(x.as_slice().iter().zip(y.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}

#[test]
fn full_mask_copies_the_source() {
    let x = random_matrix(6, 4, 2);
    let src = random_matrix(6, 4, 3);
    let mask = MaskBatch { mask: vec![1; 24], rows: 6, width: 4, p: 1.0, seed: 0 };
    assert_eq!(corrupt(&x, &mask, &src).unwrap(), src);
    let none = MaskBatch { mask: vec![0; 24], ..mask };
    assert_eq!(corrupt(&x, &none, &src).unwrap(), x);
}

#[test]
fn single_masked_cell() {
    let x = random_matrix(8, 5, 4);
    let src = marginal_source(&x, &mut rng(6));
    let mut mask = vec![0; 40];
    mask[3 * 5 + 2] = 1;
    let y = corrupt(&x, &MaskBatch { mask, rows: 8, width: 5, p: 0.0, seed: 0 }, &src).unwrap();
    for i in 0..8 {
        for j in 0..5 {
            if (i, j) != (3, 2) {
                assert_eq!(y[(i, j)].to_bits(), x[(i, j)].to_bits());
            }
        }
    }
    assert!(x.column(2).contains(&y[(3, 2)]));
}

#[test]
fn rates_and_shapes_are_validated() {
    assert!(sample_mask(2, 2, 1.0, 0).is_err());
    assert!(sample_mask(2, 2, -0.1, 0).is_err());
    let m = sample_mask(2, 2, 0.5, 0).unwrap();
    assert!(corrupt(&Matrix::zeros(3, 2), &m, &Matrix::zeros(3, 2)).is_err());
}

#[test]
fn branch_views_are_independent() {
    let a = sample_mask(100, 20, 0.3, view_seed(1, 0, 0, 1)).unwrap();
    let b = sample_mask(100, 20, 0.3, view_seed(1, 0, 0, 2)).unwrap();
    assert_ne!(a.mask, b.mask);
}

proptest! {
    #[test]
    fn corruption_only_permutes_column_values(seed in any::<u64>(), n in 1usize..30, w in 1usize..8, p in 0.0f64..0.99) {
        let x = random_matrix(n, w, seed);
        let y = corrupt_view(&x, p, CorruptionMode::Marginal, seed).unwrap();
        let mask = sample_mask(n, w, p, seed).unwrap();
        for j in 0..w {
            let col = x.column(j);
            for i in 0..n {
                if mask.get(i, j) {
                    prop_assert!(col.contains(&y[(i, j)]));
                } else {
                    prop_assert_eq!(y[(i, j)].to_bits(), x[(i, j)].to_bits());
                }
            }
        }
        // The replacement source itself is a per-column permutation.
        let src = marginal_source(&x, &mut rng(seed));
        for j in 0..w {
            let mut a = x.column(j);
            let mut b = src.column(j);
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn corruption_is_deterministic(seed in any::<u64>(), p in 0.0f64..0.99) {
        let x = random_matrix(10, 6, seed);
        prop_assert_eq!(
            corrupt_view(&x, p, CorruptionMode::Marginal, seed).unwrap(),
            corrupt_view(&x, p, CorruptionMode::Marginal, seed).unwrap()
        );
    }
}
