use proptest::prelude::*;
use puf_entropy::dataset::{bit_alias, derive_responses, normalize_bias, BiasVector, FrequencyMatrix};

fn frequencies() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..12, 1usize..10).prop_flat_map(|(devices, pairs)| {
        // small integer grid so ties occur
        prop::collection::vec(prop::collection::vec((1u32..6).prop_map(|v| 100.0 + v as f64), 2 * pairs), devices)
    })
}

proptest! {
    #[test]
    fn device_order_does_not_matter(rows in frequencies(), seed in any::<u64>()) {
        let mut order: Vec<usize> = (0..rows.len()).collect();
        let mut s = seed;
        for i in (1..order.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            order.swap(i, (s >> 33) as usize % (i + 1));
        }
        let shuffled: Vec<Vec<f64>> = order.iter().map(|&i| rows[i].clone()).collect();
        let a = bit_alias(&derive_responses(&FrequencyMatrix::from_rows(rows).unwrap()).unwrap());
        let b = bit_alias(&derive_responses(&FrequencyMatrix::from_rows(shuffled).unwrap()).unwrap());
        prop_assert_eq!(a, b);
    }

    #[test]
    fn bias_counts_are_integral(rows in frequencies()) {
        let devices = rows.len();
        let p = bit_alias(&derive_responses(&FrequencyMatrix::from_rows(rows).unwrap()).unwrap());
        for &v in p.values() {
            let c = v * devices as f64;
            prop_assert!((c - c.round()).abs() < 1e-9);
        }
    }

    #[test]
    fn normalization_is_idempotent(p in prop::collection::vec(0.0f64..=1.0, 1..64)) {
        let p = BiasVector::new(p).unwrap();
        let (once, mask) = normalize_bias(&p);
        let (twice, mask2) = normalize_bias(&once);
        prop_assert_eq!(&once, &twice);
        prop_assert!(mask2.0.iter().all(|&b| b == 0));
        for (i, &v) in once.values().iter().enumerate() {
            prop_assert!((0.5..=1.0).contains(&v));
            let orig = p.values()[i];
            prop_assert_eq!(v, if mask.is_flipped(i) { 1.0 - orig } else { orig });
        }
    }
}
