#![allow(dead_code)]

use std::collections::HashSet;
use std::sync::Arc;

use relaxann::dataset::{gen_synthetic, ElemType, VectorDataset, VectorRef};
use relaxann::distance::l2_sq;
use relaxann::index::{build_index, BuildParams, GraphIndex};
use relaxann::quantize::{adc_table, pq_encode, pq_train, PqCodebook, PqCodes, PqData, KS};
use relaxann::storage::{Backend, BackendKind};

pub fn pq_for(base: &VectorDataset, m: usize, seed: u64) -> (PqCodebook, PqCodes) {
    let book = pq_train(base, m, 4, seed).unwrap();
    let codes = pq_encode(base, &book).unwrap();
    (book, codes)
}

pub fn build_with(base: &VectorDataset, m: usize, params: &BuildParams) -> GraphIndex {
    let (book, codes) = pq_for(base, m, params.seed);
    build_index(base, &book, &codes, params).unwrap()
}

/// Synthetic blobs split into `n` base vectors and `nq` queries, plus an index.
pub fn synthetic_index(
    n: usize,
    nq: usize,
    dim: usize,
    elem: ElemType,
    r: usize,
    seed: u64,
) -> (GraphIndex, VectorDataset) {
    let all = gen_synthetic(n + nq, dim, elem, seed, 16).unwrap();
    let (base, queries) = all.split_at(n);
    let idx = build_with(
        &base,
        dim / 2,
        &BuildParams {
            seed,
            ..BuildParams::new(r)
        },
    );
    (idx, queries)
}

/// Index over hand-placed points and edges. PQ uses one subspace whose
/// centroids are the points themselves, so PQ distances are exact.
pub fn hand_index(dim: usize, points: &[f32], adjacency: Vec<Vec<u32>>, entry: u32) -> GraphIndex {
    let n = points.len() / dim;
    assert!(n <= KS);
    let mut centroids = vec![1.0e6f32; KS * dim];
    centroids[..points.len()].copy_from_slice(points);
    let book = PqCodebook::from_parts(dim, 1, centroids).unwrap();
    let codes = PqCodes::from_parts(1, (0..n).map(|i| i as u8).collect()).unwrap();
    let vectors = VectorDataset::from_f32(dim, points.to_vec()).unwrap();
    let r = adjacency.iter().map(Vec::len).max().unwrap_or(0).max(1);
    GraphIndex::from_parts(vectors, adjacency, entry, r, PqData { book, codes }).unwrap()
}

pub fn memory_backend(idx: &Arc<GraphIndex>) -> Backend {
    Backend::from_index(idx.clone(), BackendKind::Memory, None).unwrap()
}

pub struct Reference {
    pub ids: Vec<u32>,
    pub distances: Vec<f32>,
    pub expanded: Vec<u32>,
}

/// Plain best-first search over the in-memory graph: a sorted candidate
/// vector truncated to `l`, expanding the closest unexpanded entry until
/// none is left. Candidates are ordered by (PQ distance, id), results by
/// (exact distance, id).
pub fn reference_search(idx: &GraphIndex, query: VectorRef<'_>, l: usize, k: usize) -> Reference {
    let pq = &idx.pq();
    let table = adc_table(&query.to_f32_vec(), &pq.book).unwrap();
    let score = |n: u32| {
        let code = pq.codes.code(n as usize);
        let mut acc = 0.0f32;
        for (s, &c) in code.iter().enumerate() {
            acc += table.entry(s, c as usize);
        }
        acc
    };
    let order = |a: &(f32, u32, bool), b: &(f32, u32, bool)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    let ep = idx.entry_point();
    let mut seen = HashSet::from([ep]);
    let mut list = vec![(score(ep), ep, false)];
    let mut expanded = Vec::new();
    let mut results: Vec<(f32, u32)> = Vec::new();
    while let Some(pos) = list.iter().position(|c| !c.2) {
        list[pos].2 = true;
        let node = list[pos].1;
        expanded.push(node);
        results.push((l2_sq(query, idx.vectors().row(node as usize)), node));
        for &nb in idx.neighbors(node as usize) {
            if seen.insert(nb) {
                list.push((score(nb), nb, false));
            }
        }
        list.sort_by(order);
        list.truncate(l);
    }
    results.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    results.truncate(k);
    Reference {
        ids: results.iter().map(|r| r.1).collect(),
        distances: results.iter().map(|r| r.0).collect(),
        expanded,
    }
}

/// Exact squared L2 in f64, independent of the library kernels.
pub fn exact_f64(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| (x as f64 - y as f64).powi(2)).sum()
}

pub mod protocol {
    use std::sync::atomic::{AtomicU64, Ordering};
    use std::sync::{Arc, OnceLock};
    use std::thread;
    use std::time::Duration;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use relaxann::iostack::{BufferSlot, IoMode, IoStack, IoStackConfig, SlotState};
    use relaxann::storage::{Backend, BackendKind, Page, PageStore};
    use relaxann::Error;

    pub const PAGES: usize = 256;

    fn fnv(bytes: &[u8]) -> u64 {
        bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3))
    }

    pub fn expected_page(node: u32) -> &'static Page {
        static PAGES_TABLE: OnceLock<Vec<Box<Page>>> = OnceLock::new();
        &PAGES_TABLE.get_or_init(|| (0..PAGES as u32).map(make_page).collect())[node as usize]
    }

    /// Page `n` holds a node-derived stream followed by its FNV-1a checksum.
    fn make_page(node: u32) -> Box<Page> {
        let mut p = Box::new([0u8; 4096]);
        let mut x = node as u64 ^ 0x9e37_79b9_7f4a_7c15;
        for b in p[..4088].iter_mut() {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            *b = x as u8;
        }
        let sum = fnv(&p[..4088]);
        p[4088..].copy_from_slice(&sum.to_le_bytes());
        p
    }

    pub fn checksum_ok(p: &Page) -> bool {
        fnv(&p[..4088]).to_le_bytes() == p[4088..]
    }

    #[derive(Default)]
    pub struct Checksummed {
        pub reads: AtomicU64,
    }

    impl PageStore for Checksummed {
        fn page_count(&self) -> usize {
            PAGES
        }

        fn read_page_into(&self, node: u32, buf: &mut Page) -> relaxann::Result<()> {
            if node as usize >= PAGES {
                return Err(Error::NodeOutOfRange { node, count: PAGES });
            }
            let p = expected_page(node);
            // Copy in two halves so a concurrent reader could observe a tear.
            buf[..2048].copy_from_slice(&p[..2048]);
            thread::yield_now();
            buf[2048..].copy_from_slice(&p[2048..]);
            self.reads.fetch_add(1, Ordering::Relaxed);
            Ok(())
        }
    }

    #[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
    pub struct Tally {
        pub submitted: u64,
        pub completed: u64,
        pub poisoned: u64,
    }

    /// One randomized round: `workers` threads each post a few reads
    /// (occasionally an invalid node) and check every page they get back.
    pub fn trial(seed: u64, workers: usize) -> Result<Tally, String> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let store = Arc::new(Checksummed::default());
        let backend = Backend::new(BackendKind::Memory, store.clone(), None).map_err(|e| e.to_string())?;
        let mode = if rng.gen_bool(0.5) { IoMode::WorkerLevel } else { IoMode::BatchBarrier };
        let config = IoStackConfig {
            workers,
            io_threads: rng.gen_range(0..=4),
            poll_interval: Duration::from_micros(rng.gen_range(5..200)),
            mode,
        };
        let plans: Vec<Vec<u32>> = (0..workers)
            .map(|_| {
                (0..rng.gen_range(1..=4))
                    .map(|_| if rng.gen_ratio(1, 50) { PAGES as u32 + 3 } else { rng.gen_range(0..PAGES as u32) })
                    .collect()
            })
            .collect();
        let io = IoStack::new(&backend, config).map_err(|e| e.to_string())?;
        let outcome: Vec<Result<(), String>> = io.serve(|| {
            thread::scope(|s| {
                let handles: Vec<_> = plans
                    .iter()
                    .enumerate()
                    .map(|(w, plan)| {
                        let io = &io;
                        s.spawn(move || -> Result<(), String> {
                            io.register_worker(w).map_err(|e| e.to_string())?;
                            let mut buffer = BufferSlot::A;
                            let mut last = 0;
                            let res = (|| {
                                for &node in plan {
                                    let epoch = io.submit(w, node, buffer).map_err(|e| e.to_string())?;
                                    if epoch != last + 1 {
                                        return Err(format!("worker {w}: epoch {epoch} after {last}"));
                                    }
                                    last = epoch;
                                    buffer = buffer.other();
                                    match io.await_completion(w, epoch, mode) {
                                        Ok(page) => {
                                            if node as usize >= PAGES {
                                                return Err(format!("worker {w}: invalid read succeeded"));
                                            }
                                            if !checksum_ok(&page) || page[..] != expected_page(node)[..] {
                                                return Err(format!("worker {w}: torn or wrong page {node}"));
                                            }
                                        }
                                        Err(Error::PoisonedCompletion { .. }) if node as usize >= PAGES => {}
                                        Err(e) => return Err(format!("worker {w}: {e}")),
                                    }
                                    if io.slot_state(w) != (SlotState::Empty, epoch) {
                                        return Err(format!("worker {w}: slot not released"));
                                    }
                                }
                                Ok(())
                            })();
                            io.leave(w).map_err(|e| e.to_string())?;
                            res
                        })
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().unwrap_or(Err("worker panicked".into()))).collect()
            })
        });
        outcome.into_iter().collect::<Result<Vec<()>, String>>()?;
        let m = io.metrics();
        let want: u64 = plans.iter().map(|p| p.len() as u64).sum();
        let bad: u64 = plans.iter().flatten().filter(|&&n| n as usize >= PAGES).count() as u64;
        if m.submitted != want || m.forwarded != want || m.completed + m.poisoned != want || m.poisoned != bad {
            return Err(format!("accounting: {m:?} for {want} requests, {bad} invalid"));
        }
        if store.reads.load(Ordering::Relaxed) != want - bad {
            return Err("store read count differs from completions".into());
        }
        Ok(Tally {
            submitted: m.submitted,
            completed: m.completed,
            poisoned: m.poisoned,
        })
    }
}
