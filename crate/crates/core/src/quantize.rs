//! Product quantization with 256 centroids per subspace and asymmetric
//! (query-to-code) distance tables.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::VectorDataset;
use crate::distance::l2_sq_f32;
use crate::error::{Error, Result};

/// Centroids per subspace; codes are one byte.
pub const KS: usize = 256;

/// Training uses at most this many base vectors.
pub const TRAIN_SAMPLE_MAX: usize = 100_000;

#[derive(Clone, Debug, PartialEq)]
pub struct PqCodebook {
    dim: usize,
    m: usize,
    sub_dim: usize,
    /// `m × KS × sub_dim`, subspace-major.
    centroids: Vec<f32>,
}

impl PqCodebook {
    pub fn from_parts(dim: usize, m: usize, centroids: Vec<f32>) -> Result<Self> {
        if m == 0 || dim == 0 || dim % m != 0 {
            return Err(Error::SubspaceMismatch { m, dim });
        }
        let sub_dim = dim / m;
        if centroids.len() != m * KS * sub_dim {
            return Err(Error::Corrupt(format!(
                "codebook has {} values, expected {}",
                centroids.len(),
                m * KS * sub_dim
            )));
        }
        Ok(Self {
            dim,
            m,
            sub_dim,
            centroids,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn sub_dim(&self) -> usize {
        self.sub_dim
    }

    pub fn centroids(&self) -> &[f32] {
        &self.centroids
    }

    pub fn centroid(&self, s: usize, c: usize) -> &[f32] {
        let off = (s * KS + c) * self.sub_dim;
        &self.centroids[off..off + self.sub_dim]
    }

    /// Nearest centroid per subspace; ties go to the smaller index.
    pub fn encode_one(&self, v: &[f32], out: &mut [u8]) {
        for s in 0..self.m {
            let sub = &v[s * self.sub_dim..(s + 1) * self.sub_dim];
            let mut best = (f32::INFINITY, 0usize);
            for c in 0..KS {
                let d = l2_sq_f32(sub, self.centroid(s, c));
                if d < best.0 {
                    best = (d, c);
                }
            }
            out[s] = best.1 as u8;
        }
    }

    pub fn reconstruct(&self, code: &[u8]) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.dim);
        for (s, &c) in code.iter().enumerate() {
            out.extend_from_slice(self.centroid(s, c as usize));
        }
        out
    }
}

/// Per-vector codes, `count × m` bytes.
#[derive(Clone, Debug, PartialEq)]
pub struct PqCodes {
    m: usize,
    codes: Vec<u8>,
}

impl PqCodes {
    pub fn from_parts(m: usize, codes: Vec<u8>) -> Result<Self> {
        if m == 0 || codes.len() % m != 0 {
            return Err(Error::Corrupt(format!("{} code bytes for m = {m}", codes.len())));
        }
        Ok(Self { m, codes })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn count(&self) -> usize {
        self.codes.len() / self.m
    }

    pub fn code(&self, i: usize) -> &[u8] {
        &self.codes[i * self.m..(i + 1) * self.m]
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.codes
    }
}

/// Codebook plus codes: everything a searcher keeps in memory.
#[derive(Clone, Debug, PartialEq)]
pub struct PqData {
    pub book: PqCodebook,
    pub codes: PqCodes,
}

/// Partial squared distances for one query: `m × KS`.
#[derive(Clone, Debug)]
pub struct AdcTable {
    m: usize,
    entries: Vec<f32>,
}

impl AdcTable {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn entry(&self, s: usize, c: usize) -> f32 {
        self.entries[s * KS + c]
    }

    pub fn entries(&self) -> &[f32] {
        &self.entries
    }

    /// Sum of table lookups; `code.len()` must equal `m`.
    #[inline]
    pub fn distance(&self, code: &[u8]) -> f32 {
        debug_assert_eq!(code.len(), self.m);
        let mut acc = 0.0f32;
        for (s, &c) in code.iter().enumerate() {
            acc += self.entries[s * KS + c as usize];
        }
        acc
    }
}

/// Trains one k-means codebook per subspace.
///
/// Seeding is k-means++ drawn from `seed`; `iters` Lloyd iterations follow.
/// Empty clusters are reseeded from the point farthest from its centroid.
pub fn pq_train(base: &VectorDataset, m: usize, iters: usize, seed: u64) -> Result<PqCodebook> {
    pq_train_with_history(base, m, iters, seed).map(|(book, _)| book)
}

/// Like [`pq_train`], also returning the mean squared reconstruction error
/// measured at each assignment step (entry `i` is after `i` updates).
pub fn pq_train_with_history(base: &VectorDataset, m: usize, iters: usize, seed: u64) -> Result<(PqCodebook, Vec<f64>)> {
    let dim = base.dim();
    if m == 0 || dim % m != 0 {
        return Err(Error::SubspaceMismatch { m, dim });
    }
    if base.count() < KS {
        return Err(Error::InsufficientPoints {
            needed: KS,
            got: base.count(),
        });
    }
    let sample = base.sample(TRAIN_SAMPLE_MAX, seed ^ 0x5eed_5a3b_1e00_0001);
    let n = sample.count();
    let sub_dim = dim / m;
    let flat = sample.to_f32();

    let per_sub: Vec<(Vec<f32>, Vec<f64>)> = (0..m)
        .into_par_iter()
        .map(|s| {
            let mut pts = Vec::with_capacity(n * sub_dim);
            for row in flat.chunks_exact(dim) {
                pts.extend_from_slice(&row[s * sub_dim..(s + 1) * sub_dim]);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s as u64 + 1);
            kmeans(&pts, sub_dim, iters, &mut rng)
        })
        .collect();

    let mut centroids = Vec::with_capacity(m * KS * sub_dim);
    let mut history = vec![0.0f64; iters + 1];
    for (c, h) in per_sub {
        centroids.extend_from_slice(&c);
        for (acc, v) in history.iter_mut().zip(h) {
            *acc += v;
        }
    }
    let book = PqCodebook::from_parts(dim, m, centroids)?;
    Ok((book, history))
}

fn nearest(p: &[f32], centroids: &[f32], dim: usize) -> (usize, f32) {
    let mut best = (0usize, f32::INFINITY);
    for (c, cent) in centroids.chunks_exact(dim).enumerate() {
        let d = l2_sq_f32(p, cent);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Returns centroids and the summed squared error per assignment step.
fn kmeans(pts: &[f32], dim: usize, iters: usize, rng: &mut ChaCha8Rng) -> (Vec<f32>, Vec<f64>) {
    let n = pts.len() / dim;
    let mut centroids = kmeanspp(pts, dim, rng);
    let mut history = Vec::with_capacity(iters + 1);
    let mut assign = vec![(0usize, 0.0f32); n];
    for it in 0..=iters {
        pts.par_chunks_exact(dim)
            .zip(assign.par_iter_mut())
            .for_each(|(p, a)| *a = nearest(p, &centroids, dim));
        history.push(assign.iter().map(|a| a.1 as f64).sum::<f64>() / n as f64);
        if it == iters {
            break;
        }
        let mut sums = vec![0.0f64; KS * dim];
        let mut counts = vec![0usize; KS];
        for (p, a) in pts.chunks_exact(dim).zip(&assign) {
            counts[a.0] += 1;
            for (acc, &x) in sums[a.0 * dim..(a.0 + 1) * dim].iter_mut().zip(p) {
                *acc += x as f64;
            }
        }
        let mut empties = Vec::new();
        for c in 0..KS {
            if counts[c] == 0 {
                empties.push(c);
                continue;
            }
            for j in 0..dim {
                centroids[c * dim + j] = (sums[c * dim + j] / counts[c] as f64) as f32;
            }
        }
        if !empties.is_empty() {
            // Farthest points first, ties by index.
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| assign[b].1.total_cmp(&assign[a].1).then(a.cmp(&b)));
            for (c, &p) in empties.iter().zip(&order) {
                centroids[c * dim..(c + 1) * dim].copy_from_slice(&pts[p * dim..(p + 1) * dim]);
            }
        }
    }
    (centroids, history)
}

fn kmeanspp(pts: &[f32], dim: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let n = pts.len() / dim;
    let mut centroids = Vec::with_capacity(KS * dim);
    let first = rng.gen_range(0..n);
    centroids.extend_from_slice(&pts[first * dim..(first + 1) * dim]);
    let mut d2: Vec<f32> = pts
        .par_chunks_exact(dim)
        .map(|p| l2_sq_f32(p, &centroids[0..dim]))
        .collect();
    for _ in 1..KS {
        let pick = match WeightedIndex::new(d2.iter().map(|&d| d as f64)) {
            Ok(w) => w.sample(rng),
            // Every point already coincides with a centroid.
            Err(_) => rng.gen_range(0..n),
        };
        let c = pts[pick * dim..(pick + 1) * dim].to_vec();
        d2.par_iter_mut()
            .zip(pts.par_chunks_exact(dim))
            .for_each(|(d, p)| *d = d.min(l2_sq_f32(p, &c)));
        centroids.extend_from_slice(&c);
    }
    centroids
}

pub fn pq_encode(base: &VectorDataset, book: &PqCodebook) -> Result<PqCodes> {
    if base.dim() != book.dim {
        return Err(Error::DimMismatch {
            expected: book.dim,
            found: base.dim(),
        });
    }
    let m = book.m;
    let mut codes = vec![0u8; base.count() * m];
    codes.par_chunks_mut(m.max(1)).enumerate().for_each_init(
        || vec![0.0f32; book.dim],
        |buf, (i, out)| {
            base.row_f32_into(i, buf);
            book.encode_one(buf, out);
        },
    );
    Ok(PqCodes { m, codes })
}

pub fn adc_table(query: &[f32], book: &PqCodebook) -> Result<AdcTable> {
    if query.len() != book.dim {
        return Err(Error::DimMismatch {
            expected: book.dim,
            found: query.len(),
        });
    }
    let mut entries = Vec::with_capacity(book.m * KS);
    for s in 0..book.m {
        let sub = &query[s * book.sub_dim..(s + 1) * book.sub_dim];
        for c in 0..KS {
            entries.push(l2_sq_f32(sub, book.centroid(s, c)));
        }
    }
    Ok(AdcTable { m: book.m, entries })
}

/// Checked asymmetric distance. Code bytes cannot exceed `KS` by
/// construction, so only the length is validated.
pub fn adc_distance(code: &[u8], table: &AdcTable) -> Result<f32> {
    if code.len() != table.m {
        return Err(Error::CodeLength {
            expected: table.m,
            found: code.len(),
        });
    }
    Ok(table.distance(code))
}

/// Default subspace count: the largest `m` with `dim / m` in {4, 8, 16},
/// preferring sub-dimension 4.
pub fn default_m(dim: usize) -> usize {
    for sub in [4, 8, 16] {
        if dim % sub == 0 {
            return dim / sub;
        }
    }
    if dim % 2 == 0 {
        dim / 2
    } else {
        dim
    }
}
