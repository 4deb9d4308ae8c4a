//! Vamana construction: a random initial graph refined by two passes of
//! greedy search + alpha-pruned neighbour selection + back-edge insertion.
//!
//! Nodes are processed in batches. Within a batch every search and prune
//! reads the same graph snapshot and updates are applied in a fixed order,
//! so the result depends only on the seed, not on the thread count.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{max_degree_for_page, GraphIndex};
use crate::dataset::{VectorData, VectorDataset};
use crate::distance::Element;
use crate::error::{Error, Result};
use crate::quantize::{PqCodebook, PqCodes, PqData};

/// Entry point is the medoid of a sample of at most this many vectors.
pub const MEDOID_SAMPLE: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BuildParams {
    /// Maximum out-degree (R).
    pub max_degree: usize,
    /// Candidate list length during construction.
    pub l_build: usize,
    /// Pruning slack, applied to squared distances.
    pub alpha: f32,
    pub seed: u64,
}

impl BuildParams {
    /// Defaults: `alpha = 1.2`, `l_build = max(2R, 64)`.
    pub fn new(max_degree: usize) -> Self {
        Self {
            max_degree,
            l_build: (2 * max_degree).max(64),
            alpha: 1.2,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_degree == 0 {
            return Err(Error::params("max degree R must be >= 1"));
        }
        if self.l_build < self.max_degree {
            return Err(Error::params(format!(
                "L_build {} must be >= R {}",
                self.l_build, self.max_degree
            )));
        }
        if !(self.alpha >= 1.0) {
            return Err(Error::params(format!("alpha {} must be >= 1.0", self.alpha)));
        }
        Ok(())
    }
}

pub fn build_index(base: &VectorDataset, book: &PqCodebook, codes: &PqCodes, params: &BuildParams) -> Result<GraphIndex> {
    params.validate()?;
    let n = base.count();
    if n < 2 {
        return Err(Error::InsufficientPoints { needed: 2, got: n });
    }
    let cap = max_degree_for_page(base.dim(), base.elem().size())?;
    if params.max_degree > cap {
        return Err(Error::PageOverflow {
            payload: super::node_payload_bytes(base.dim(), base.elem().size(), params.max_degree)?,
            page: super::PAGE_SIZE,
        });
    }
    if book.dim() != base.dim() {
        return Err(Error::DimMismatch {
            expected: base.dim(),
            found: book.dim(),
        });
    }
    if codes.count() != n {
        return Err(Error::params(format!("{} PQ codes for {n} vectors", codes.count())));
    }
    let entry = sample_medoid(base, params.seed);
    let dim = base.dim();
    let adjacency = match base.data() {
        VectorData::U8(v) => vamana(v, dim, entry, params),
        VectorData::I8(v) => vamana(v, dim, entry, params),
        VectorData::F32(v) => vamana(v, dim, entry, params),
    };
    GraphIndex::from_parts(
        base.clone(),
        adjacency,
        entry,
        params.max_degree,
        PqData {
            book: book.clone(),
            codes: codes.clone(),
        },
    )
}

/// Medoid (under squared L2) of a seeded sample of at most
/// [`MEDOID_SAMPLE`] vectors. Under squared L2 the medoid is the sample
/// point closest to the sample mean.
pub fn sample_medoid(base: &VectorDataset, seed: u64) -> u32 {
    let n = base.count();
    let ids: Vec<usize> = if n <= MEDOID_SAMPLE {
        (0..n).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d65_646f_6964);
        let mut ids = rand::seq::index::sample(&mut rng, n, MEDOID_SAMPLE).into_vec();
        ids.sort_unstable();
        ids
    };
    let dim = base.dim();
    let mut mean = vec![0.0f64; dim];
    let mut row = vec![0.0f32; dim];
    for &i in &ids {
        base.row_f32_into(i, &mut row);
        for (m, &x) in mean.iter_mut().zip(&row) {
            *m += x as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= ids.len() as f64);
    let mut best = (f64::INFINITY, 0usize);
    for &i in &ids {
        base.row_f32_into(i, &mut row);
        let d: f64 = row.iter().zip(&mean).map(|(&x, &m)| (x as f64 - m).powi(2)).sum();
        if d < best.0 {
            best = (d, i);
        }
    }
    best.1 as u32
}

struct Points<'a, T> {
    data: &'a [T],
    dim: usize,
}

impl<'a, T: Element> Points<'a, T> {
    #[inline]
    fn row(&self, i: u32) -> &'a [T] {
        let i = i as usize;
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    fn dist(&self, a: u32, b: u32) -> f32 {
        T::l2_sq(self.row(a), self.row(b))
    }
}

/// Per-thread search scratch.
struct Scratch {
    stamp: Vec<u32>,
    gen: u32,
    /// Sorted by (dist, id); bool marks expanded.
    list: Vec<(f32, u32, bool)>,
    expanded: Vec<(f32, u32)>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Self {
            stamp: vec![0; n],
            gen: 0,
            list: Vec::new(),
            expanded: Vec::new(),
        }
    }

    fn reset(&mut self) {
        self.gen = self.gen.wrapping_add(1);
        if self.gen == 0 {
            self.stamp.fill(0);
            self.gen = 1;
        }
        self.list.clear();
        self.expanded.clear();
    }

    /// Returns true the first time `id` is seen since the last reset.
    fn mark(&mut self, id: u32) -> bool {
        let s = &mut self.stamp[id as usize];
        if *s == self.gen {
            false
        } else {
            *s = self.gen;
            true
        }
    }
}

fn cmp_pair(a: &(f32, u32), b: &(f32, u32)) -> std::cmp::Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Best-first search with exact distances; leaves the expanded set in
/// `scratch.expanded`.
fn greedy_search<T: Element>(pts: &Points<'_, T>, graph: &[Vec<u32>], entry: u32, target: u32, l: usize, s: &mut Scratch) {
    s.reset();
    let q = pts.row(target);
    s.mark(entry);
    s.list.push((T::l2_sq(q, pts.row(entry)), entry, false));
    let mut cursor = 0;
    while cursor < s.list.len() {
        let (d, u, _) = s.list[cursor];
        s.list[cursor].2 = true;
        s.expanded.push((d, u));
        for &v in &graph[u as usize] {
            if !s.mark(v) {
                continue;
            }
            let dv = T::l2_sq(q, pts.row(v));
            if s.list.len() >= l {
                let worst = s.list[l - 1];
                if cmp_pair(&(dv, v), &(worst.0, worst.1)).is_ge() {
                    continue;
                }
            }
            let pos = s
                .list
                .partition_point(|e| cmp_pair(&(e.0, e.1), &(dv, v)).is_lt());
            s.list.insert(pos, (dv, v, false));
            if s.list.len() > l {
                s.list.pop();
            }
        }
        cursor = s.list.iter().position(|e| !e.2).unwrap_or(s.list.len());
    }
}

/// Alpha-pruned neighbour selection: walk candidates by distance and drop
/// every later candidate `v` with `alpha * d(chosen, v) <= d(p, v)`.
fn robust_prune<T: Element>(pts: &Points<'_, T>, p: u32, mut cands: Vec<(f32, u32)>, alpha: f32, r: usize) -> Vec<u32> {
    cands.retain(|c| c.1 != p);
    cands.sort_unstable_by(cmp_pair);
    cands.dedup_by_key(|c| c.1);
    let mut alive = vec![true; cands.len()];
    let mut out = Vec::with_capacity(r);
    for i in 0..cands.len() {
        if !alive[i] {
            continue;
        }
        let chosen = cands[i].1;
        out.push(chosen);
        if out.len() == r {
            break;
        }
        for j in i + 1..cands.len() {
            if alive[j] && alpha * pts.dist(chosen, cands[j].1) <= cands[j].0 {
                alive[j] = false;
            }
        }
    }
    out
}

fn vamana<T: Element>(data: &[T], dim: usize, entry: u32, params: &BuildParams) -> Vec<Vec<u32>> {
    let pts = Points { data, dim };
    let n = data.len() / dim;
    let r = params.max_degree.min(n - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let mut graph: Vec<Vec<u32>> = (0..n as u32)
        .map(|i| {
            let mut picks = rand::seq::index::sample(&mut rng, n - 1, r).into_vec();
            picks.sort_unstable();
            picks
                .into_iter()
                .map(|j| if j as u32 >= i { j as u32 + 1 } else { j as u32 })
                .collect()
        })
        .collect();

    let max_batch = (n / 50).max(1);
    for alpha in [1.0f32, params.alpha] {
        let mut order: Vec<u32> = (0..n as u32).collect();
        order.shuffle(&mut rng);
        let mut start = 0;
        let mut batch = 1;
        while start < n {
            let end = (start + batch).min(n);
            refine_batch(&pts, &mut graph, entry, &order[start..end], alpha, r, params.l_build);
            start = end;
            batch = (batch * 2).min(max_batch);
        }
    }

    for (i, list) in graph.iter_mut().enumerate() {
        if list.is_empty() {
            let nearest = (0..n as u32)
                .filter(|&j| j as usize != i)
                .min_by(|&a, &b| cmp_pair(&(pts.dist(i as u32, a), a), &(pts.dist(i as u32, b), b)))
                .unwrap();
            list.push(nearest);
        }
    }
    graph
}

fn refine_batch<T: Element>(
    pts: &Points<'_, T>,
    graph: &mut [Vec<u32>],
    entry: u32,
    batch: &[u32],
    alpha: f32,
    r: usize,
    l_build: usize,
) {
    let n = graph.len();
    let snapshot: &[Vec<u32>] = graph;
    let updates: Vec<(u32, Vec<u32>)> = batch
        .par_iter()
        .map_init(
            || Scratch::new(n),
            |s, &p| {
                greedy_search(pts, snapshot, entry, p, l_build, s);
                let mut cands = std::mem::take(&mut s.expanded);
                for &v in &snapshot[p as usize] {
                    cands.push((pts.dist(p, v), v));
                }
                (p, robust_prune(pts, p, cands, alpha, r))
            },
        )
        .collect();

    let mut back: Vec<(u32, u32)> = Vec::new();
    for (p, list) in &updates {
        back.extend(list.iter().map(|&q| (q, *p)));
    }
    for (p, list) in updates {
        graph[p as usize] = list;
    }
    back.sort_unstable();
    back.dedup();

    let mut groups: Vec<(u32, Vec<u32>)> = Vec::new();
    for (q, p) in back {
        match groups.last_mut() {
            Some((gq, ps)) if *gq == q => ps.push(p),
            _ => groups.push((q, vec![p])),
        }
    }
    let snapshot: &[Vec<u32>] = graph;
    let fixes: Vec<(u32, Vec<u32>)> = groups
        .into_par_iter()
        .map(|(q, adds)| {
            let mut set = snapshot[q as usize].clone();
            for a in adds {
                if a != q && !set.contains(&a) {
                    set.push(a);
                }
            }
            if set.len() <= r {
                (q, set)
            } else {
                let cands = set.iter().map(|&v| (pts.dist(q, v), v)).collect();
                (q, robust_prune(pts, q, cands, alpha, r))
            }
        })
        .collect();
    for (q, list) in fixes {
        graph[q as usize] = list;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{gen_synthetic, ElemType};
    use crate::quantize::{pq_encode, pq_train};

    fn pq_for(base: &VectorDataset) -> (PqCodebook, PqCodes) {
        let m = crate::quantize::default_m(base.dim());
        // Tiny sets cannot train 256 centroids; tile them.
        let train = if base.count() < 256 {
            let ids: Vec<usize> = (0..256).map(|i| i % base.count()).collect();
            base.select(&ids)
        } else {
            base.clone()
        };
        let book = pq_train(&train, m, 2, 1).unwrap();
        let codes = pq_encode(base, &book).unwrap();
        (book, codes)
    }

    #[test]
    fn two_nodes_point_at_each_other() {
        let base = VectorDataset::from_f32(2, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let (book, codes) = pq_for(&base);
        let idx = build_index(&base, &book, &codes, &BuildParams::new(4)).unwrap();
        assert_eq!(idx.neighbors(0), &[1]);
        assert_eq!(idx.neighbors(1), &[0]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let one = VectorDataset::from_f32(2, vec![0.0, 0.0]).unwrap();
        let (book, codes) = pq_for(&one);
        assert!(build_index(&one, &book, &codes, &BuildParams::new(4)).is_err());
        let base = gen_synthetic(300, 8, ElemType::F32, 1, 3).unwrap();
        let (book, codes) = pq_for(&base);
        let mut p = BuildParams::new(8);
        p.max_degree = 0;
        assert!(build_index(&base, &book, &codes, &p).is_err());
        let mut p = BuildParams::new(8);
        p.l_build = 4;
        assert!(build_index(&base, &book, &codes, &p).is_err());
        let mut p = BuildParams::new(8);
        p.alpha = 0.9;
        assert!(build_index(&base, &book, &codes, &p).is_err());
        assert!(matches!(
            build_index(&base, &book, &codes, &BuildParams::new(2000)),
            Err(Error::PageOverflow { .. })
        ));
    }

    #[test]
    fn structural_invariants_and_determinism() {
        let base = gen_synthetic(1500, 16, ElemType::U8, 3, 10).unwrap();
        let (book, codes) = pq_for(&base);
        let mut p = BuildParams::new(16);
        p.seed = 42;
        let a = build_index(&base, &book, &codes, &p).unwrap();
        let b = build_index(&base, &book, &codes, &p).unwrap();
        assert_eq!(a.adjacency(), b.adjacency());
        for i in 0..a.count() {
            let list = a.neighbors(i);
            assert!(!list.is_empty() && list.len() <= 16);
            assert!(!list.contains(&(i as u32)));
            let mut s = list.to_vec();
            s.sort_unstable();
            s.dedup();
            assert_eq!(s.len(), list.len());
        }
        assert!(a.reachable_fraction() >= 0.99);
    }

    #[test]
    fn medoid_matches_pairwise_oracle() {
        let base = gen_synthetic(300, 5, ElemType::F32, 9, 4).unwrap();
        let m = sample_medoid(&base, 0) as usize;
        let mut best = (f64::INFINITY, 0);
        for i in 0..300 {
            let total: f64 = (0..300)
                .map(|j| crate::distance::l2_sq(base.row(i), base.row(j)) as f64)
                .sum();
            if total < best.0 {
                best = (total, i);
            }
        }
        assert_eq!(m, best.1);
    }

    #[test]
    fn prune_keeps_closest_and_respects_alpha() {
        let data: Vec<f32> = vec![0.0, 0.0, 1.0, 0.0, 2.0, 0.0, 0.0, 3.0];
        let pts = Points { data: &data, dim: 2 };
        let cands: Vec<(f32, u32)> = (1..4).map(|v| (pts.dist(0, v), v)).collect();
        // Node 2 lies behind node 1 on the same ray and is occluded; node 3 is not.
        assert_eq!(robust_prune(&pts, 0, cands.clone(), 1.0, 8), vec![1, 3]);
        assert_eq!(robust_prune(&pts, 0, cands, 1.0, 1), vec![1]);
    }
}
