use proptest::prelude::*;
use relaxann::dataset::{
    brute_force_knn, encode_vectors, load_vectors, parse_vectors, read_ids, recall_at_k, write_ids, write_vectors,
    VecFormat, VectorDataset,
};

fn records(elem_bytes: usize) -> impl Strategy<Value = Vec<u8>> {
    (1usize..9, 1usize..12).prop_flat_map(move |(dim, n)| {
        proptest::collection::vec(any::<u8>(), dim * n * elem_bytes).prop_map(move |payload| {
            let mut out = Vec::new();
            for row in payload.chunks_exact(dim * elem_bytes) {
                out.extend_from_slice(&(dim as i32).to_le_bytes());
                out.extend_from_slice(row);
            }
            out
        })
    })
}

proptest! {
    #[test]
    fn fvecs_round_trip_is_bit_exact(bytes in records(4)) {
        let d = parse_vectors(&bytes, VecFormat::Fvecs).unwrap();
        prop_assert_eq!(encode_vectors(&d, VecFormat::Fvecs).unwrap(), bytes);
    }

    #[test]
    fn bvecs_round_trip_is_bit_exact(bytes in records(1)) {
        let d = parse_vectors(&bytes, VecFormat::Bvecs).unwrap();
        prop_assert_eq!(encode_vectors(&d, VecFormat::Bvecs).unwrap(), bytes);
    }

    #[test]
    fn ivecs_round_trip_is_bit_exact(bytes in records(4)) {
        let d = parse_vectors(&bytes, VecFormat::Ivecs).unwrap();
        prop_assert_eq!(encode_vectors(&d, VecFormat::Ivecs).unwrap(), bytes);
    }

    #[test]
    fn knn_is_permutation_invariant(
        values in proptest::collection::vec(-100.0f32..100.0, 3 * 40),
        q in proptest::collection::vec(-100.0f32..100.0, 3 * 4),
        seed in any::<u64>(),
    ) {
        let base = VectorDataset::from_f32(3, values).unwrap();
        let queries = VectorDataset::from_f32(3, q).unwrap();
        // Fisher-Yates with a tiny LCG keeps the permutation seed-driven.
        let mut perm: Vec<usize> = (0..base.count()).collect();
        let mut s = seed | 1;
        for i in (1..perm.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let shuffled = base.select(&perm);
        let a = brute_force_knn(&base, &queries, 5).unwrap();
        let b = brute_force_knn(&shuffled, &queries, 5).unwrap();
        prop_assert_eq!(&a.distances, &b.distances);
        let wide = brute_force_knn(&base, &queries, 6).unwrap();
        for qi in 0..queries.count() {
            // Ids are only comparable when no tie straddles a position.
            if wide.row_distances(qi).windows(2).all(|w| w[0] < w[1]) {
                let relabeled: Vec<u32> = b.row_ids(qi).iter().map(|&i| perm[i as usize] as u32).collect();
                prop_assert_eq!(relabeled, a.row_ids(qi).to_vec());
            }
        }
    }

    #[test]
    fn recall_of_truth_is_one(values in proptest::collection::vec(0u8..255, 4 * 30), k in 1usize..8) {
        let base = VectorDataset::from_u8(4, values).unwrap();
        let queries = base.select(&[0, 7, 29]);
        let t = brute_force_knn(&base, &queries, k).unwrap();
        let rows: Vec<Vec<u32>> = (0..3).map(|q| t.row_ids(q).to_vec()).collect();
        prop_assert_eq!(recall_at_k(&rows, &t, k).unwrap(), 1.0);
    }
}

#[test]
fn files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = VectorDataset::from_u8(3, (0..30).collect()).unwrap();
    let p = dir.path().join("a.bvecs");
    write_vectors(&p, &d, VecFormat::Bvecs).unwrap();
    assert_eq!(load_vectors(&p, VecFormat::Bvecs).unwrap(), d);
    let ids: Vec<i32> = vec![5, -1, 7, 8, 0, i32::MAX];
    let p = dir.path().join("g.ivecs");
    write_ids(&p, 3, &ids).unwrap();
    assert_eq!(read_ids(&p).unwrap(), (3, ids));
}
