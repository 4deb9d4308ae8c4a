use proptest::prelude::*;
use relaxann::dataset::VectorDataset;
use relaxann::quantize::{adc_table, pq_encode, pq_train, KS};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn encoding_a_reconstruction_is_idempotent(
        values in proptest::collection::vec(-50.0f32..50.0, 8 * (KS + 64)),
        m in prop_oneof![Just(1usize), Just(2), Just(4), Just(8)],
        seed in any::<u64>(),
    ) {
        let base = VectorDataset::from_f32(8, values).unwrap();
        let book = pq_train(&base, m, 3, seed).unwrap();
        let codes = pq_encode(&base, &book).unwrap();
        let mut again = vec![0u8; m];
        for i in 0..codes.count() {
            let r = book.reconstruct(codes.code(i));
            book.encode_one(&r, &mut again);
            prop_assert_eq!(&again[..], codes.code(i));
        }
    }

    #[test]
    fn adc_tracks_reconstruction_distance(
        values in proptest::collection::vec(0.0f32..10.0, 4 * KS),
        q in proptest::collection::vec(0.0f32..10.0, 4),
    ) {
        let base = VectorDataset::from_f32(4, values).unwrap();
        let book = pq_train(&base, 2, 2, 9).unwrap();
        let codes = pq_encode(&base, &book).unwrap();
        let t = adc_table(&q, &book).unwrap();
        for i in 0..codes.count() {
            let r = book.reconstruct(codes.code(i));
            let want: f64 = q.iter().zip(&r).map(|(&a, &b)| (a as f64 - b as f64).powi(2)).sum();
            let got = t.distance(codes.code(i)) as f64;
            prop_assert!((got - want).abs() <= 1e-3 * want.max(1e-3));
        }
    }
}
