//! Property tests for the crate's algebraic invariants.

use proptest::prelude::*;

use spegcl::augment::{high_pass_features, low_pass_features};
use spegcl::encoder::Embedding;
use spegcl::linalg::Matrix;
use spegcl::objective::{info_nce, l_u};
use spegcl::spectral::{apply_mask, build_mask, dft2, fshift, idft2, ifshift, MaskKind};

fn matrix_strategy(max_dim: usize) -> impl Strategy<Value = Matrix> {
    (1..=max_dim, 1..=max_dim).prop_flat_map(|(r, c)| {
        proptest::collection::vec(-10.0f64..10.0, r * c)
            .prop_map(move |data| Matrix::from_vec(r, c, data))
    })
}

fn unit_vector(dim: usize) -> impl Strategy<Value = Embedding> {
    proptest::collection::vec(-1.0f64..1.0, dim)
        .prop_filter("non-degenerate", |v| {
            v.iter().map(|x| x * x).sum::<f64>().sqrt() > 1e-3
        })
        .prop_map(|v| Embedding::normalized(v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transform_roundtrip(x in matrix_strategy(24)) {
        let back = idft2(&dft2(&x).unwrap()).unwrap();
        prop_assert!(back.max_abs_diff(&x) < 1e-9);
    }

    #[test]
    fn parseval(x in matrix_strategy(24)) {
        let f = dft2(&x).unwrap();
        let time = x.energy();
        let freq = f.energy() / (x.rows() * x.cols()) as f64;
        prop_assert!((time - freq).abs() <= 1e-9 * time.max(1.0));
    }

    #[test]
    fn shift_roundtrip_bit_exact(x in matrix_strategy(24)) {
        let f = dft2(&x).unwrap();
        let back = ifshift(&fshift(&f).unwrap()).unwrap();
        prop_assert_eq!(f, back);
    }

    #[test]
    fn mask_partition_and_monotonicity(
        rows in 1usize..24,
        cols in 1usize..24,
        d1 in 0.0f64..20.0,
        d2 in 0.0f64..20.0,
    ) {
        let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        let low_small = build_mask(rows, cols, lo, MaskKind::Low).unwrap();
        let low_big = build_mask(rows, cols, hi, MaskKind::Low).unwrap();
        let high_small = build_mask(rows, cols, lo, MaskKind::High).unwrap();
        for m in 0..rows {
            for z in 0..cols {
                // Partition: low xor high covers each cell exactly once.
                prop_assert!(low_small.is_kept(m, z) ^ high_small.is_kept(m, z));
                // Monotonicity in the radius.
                prop_assert!(!low_small.is_kept(m, z) || low_big.is_kept(m, z));
            }
        }
    }

    #[test]
    fn masked_spectra_rebuild_signal(x in matrix_strategy(16), ratio in 0.0f64..=1.0) {
        let mut rebuilt = low_pass_features(&x, ratio).unwrap();
        rebuilt.add_assign(&high_pass_features(&x, ratio).unwrap());
        prop_assert!(rebuilt.max_abs_diff(&x) < 1e-9);
    }

    #[test]
    fn masked_field_energies_partition(x in matrix_strategy(16), d_low in 0.0f64..12.0) {
        let f = fshift(&dft2(&x).unwrap()).unwrap();
        let low = apply_mask(&f, &build_mask(x.rows(), x.cols(), d_low, MaskKind::Low).unwrap()).unwrap();
        let high = apply_mask(&f, &build_mask(x.rows(), x.cols(), d_low, MaskKind::High).unwrap()).unwrap();
        let total = f.energy();
        prop_assert!((low.energy() + high.energy() - total).abs() <= 1e-9 * total.max(1.0));
    }

    #[test]
    fn loss_sandwich(
        anchor in unit_vector(6),
        positive in unit_vector(6),
        negatives in proptest::collection::vec(unit_vector(6), 1..8),
        tau in 0.05f64..2.0,
    ) {
        let lu = l_u(&anchor, &negatives, tau).unwrap();
        let nce = info_nce(&anchor, &positive, &negatives, tau).unwrap();
        prop_assert!(lu <= nce + 1e-12);
        let slack = (1.0 - anchor.dot(&positive)) / tau;
        prop_assert!(nce <= lu + slack + 1e-12);
    }
}
