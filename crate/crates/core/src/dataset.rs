//! Vector datasets: the `.fvecs`/`.bvecs`/`.ivecs` formats, synthetic
//! clustered data, and exact k-NN ground truth.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::distributions::{Distribution, Uniform};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use rayon::prelude::*;

use crate::distance::{l2_sq, Element};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ElemType {
    U8,
    I8,
    F32,
}

impl ElemType {
    pub fn size(self) -> usize {
        match self {
            ElemType::U8 | ElemType::I8 => 1,
            ElemType::F32 => 4,
        }
    }

    pub fn code(self) -> u32 {
        match self {
            ElemType::U8 => 0,
            ElemType::I8 => 1,
            ElemType::F32 => 2,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(ElemType::U8),
            1 => Some(ElemType::I8),
            2 => Some(ElemType::F32),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ElemType::U8 => "u8",
            ElemType::I8 => "i8",
            ElemType::F32 => "f32",
        }
    }
}

impl std::str::FromStr for ElemType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "u8" => Ok(ElemType::U8),
            "i8" => Ok(ElemType::I8),
            "f32" => Ok(ElemType::F32),
            other => Err(Error::Config(format!("unknown element type `{other}`"))),
        }
    }
}

/// On-disk vector file flavours. Every record is a little-endian `i32`
/// dimension followed by that many elements.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VecFormat {
    Fvecs,
    Bvecs,
    Ivecs,
}

impl VecFormat {
    fn elem_bytes(self) -> usize {
        match self {
            VecFormat::Fvecs | VecFormat::Ivecs => 4,
            VecFormat::Bvecs => 1,
        }
    }

    /// Guess the format from a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "fvecs" => Some(VecFormat::Fvecs),
            "bvecs" => Some(VecFormat::Bvecs),
            "ivecs" => Some(VecFormat::Ivecs),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum VectorData {
    U8(Vec<u8>),
    I8(Vec<i8>),
    F32(Vec<f32>),
}

impl VectorData {
    fn len(&self) -> usize {
        match self {
            VectorData::U8(v) => v.len(),
            VectorData::I8(v) => v.len(),
            VectorData::F32(v) => v.len(),
        }
    }
}

/// Borrowed view of a single vector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum VectorRef<'a> {
    U8(&'a [u8]),
    I8(&'a [i8]),
    F32(&'a [f32]),
}

impl<'a> VectorRef<'a> {
    pub fn dim(&self) -> usize {
        match self {
            VectorRef::U8(v) => v.len(),
            VectorRef::I8(v) => v.len(),
            VectorRef::F32(v) => v.len(),
        }
    }

    pub fn elem(&self) -> ElemType {
        match self {
            VectorRef::U8(_) => ElemType::U8,
            VectorRef::I8(_) => ElemType::I8,
            VectorRef::F32(_) => ElemType::F32,
        }
    }

    pub fn to_f32_vec(&self) -> Vec<f32> {
        match self {
            VectorRef::U8(v) => v.iter().map(|&x| x as f32).collect(),
            VectorRef::I8(v) => v.iter().map(|&x| x as f32).collect(),
            VectorRef::F32(v) => v.to_vec(),
        }
    }

    /// Little-endian byte image, as stored in a node page.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        match self {
            VectorRef::U8(v) => v.to_vec(),
            VectorRef::I8(v) => v.iter().map(|&x| x as u8).collect(),
            VectorRef::F32(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
        }
    }

    pub fn to_owned_dataset(&self) -> VectorDataset {
        let dim = self.dim();
        let data = match self {
            VectorRef::U8(v) => VectorData::U8(v.to_vec()),
            VectorRef::I8(v) => VectorData::I8(v.to_vec()),
            VectorRef::F32(v) => VectorData::F32(v.to_vec()),
        };
        VectorDataset { dim, data }
    }
}

/// Row-major matrix of `count × dim` vectors of one element type.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorDataset {
    dim: usize,
    data: VectorData,
}

impl VectorDataset {
    pub fn new(dim: usize, data: VectorData) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDim(0));
        }
        if data.len() % dim != 0 {
            return Err(Error::Truncated(format!(
                "{} values is not a multiple of dim {dim}",
                data.len()
            )));
        }
        Ok(Self { dim, data })
    }

    pub fn from_f32(dim: usize, values: Vec<f32>) -> Result<Self> {
        Self::new(dim, VectorData::F32(values))
    }

    pub fn from_u8(dim: usize, values: Vec<u8>) -> Result<Self> {
        Self::new(dim, VectorData::U8(values))
    }

    pub fn from_i8(dim: usize, values: Vec<i8>) -> Result<Self> {
        Self::new(dim, VectorData::I8(values))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    pub fn elem(&self) -> ElemType {
        match self.data {
            VectorData::U8(_) => ElemType::U8,
            VectorData::I8(_) => ElemType::I8,
            VectorData::F32(_) => ElemType::F32,
        }
    }

    pub fn data(&self) -> &VectorData {
        &self.data
    }

    pub fn row(&self, i: usize) -> VectorRef<'_> {
        let r = i * self.dim..(i + 1) * self.dim;
        match &self.data {
            VectorData::U8(v) => VectorRef::U8(&v[r]),
            VectorData::I8(v) => VectorRef::I8(&v[r]),
            VectorData::F32(v) => VectorRef::F32(&v[r]),
        }
    }

    /// Writes row `i` widened to `f32` into `out`.
    pub fn row_f32_into(&self, i: usize, out: &mut [f32]) {
        let r = i * self.dim..(i + 1) * self.dim;
        match &self.data {
            VectorData::U8(v) => out.iter_mut().zip(&v[r]).for_each(|(o, &x)| *o = x as f32),
            VectorData::I8(v) => out.iter_mut().zip(&v[r]).for_each(|(o, &x)| *o = x as f32),
            VectorData::F32(v) => out.copy_from_slice(&v[r]),
        }
    }

    /// Whole dataset widened to `f32`.
    pub fn to_f32(&self) -> Vec<f32> {
        match &self.data {
            VectorData::U8(v) => v.iter().map(|&x| x as f32).collect(),
            VectorData::I8(v) => v.iter().map(|&x| x as f32).collect(),
            VectorData::F32(v) => v.clone(),
        }
    }

    /// New dataset holding the given rows, in order.
    pub fn select(&self, ids: &[usize]) -> VectorDataset {
        fn pick<T: Copy>(v: &[T], dim: usize, ids: &[usize]) -> Vec<T> {
            let mut out = Vec::with_capacity(ids.len() * dim);
            for &i in ids {
                out.extend_from_slice(&v[i * dim..(i + 1) * dim]);
            }
            out
        }
        let data = match &self.data {
            VectorData::U8(v) => VectorData::U8(pick(v, self.dim, ids)),
            VectorData::I8(v) => VectorData::I8(pick(v, self.dim, ids)),
            VectorData::F32(v) => VectorData::F32(pick(v, self.dim, ids)),
        };
        VectorDataset {
            dim: self.dim,
            data,
        }
    }

    /// Splits off the rows from `at` onwards.
    pub fn split_at(&self, at: usize) -> (VectorDataset, VectorDataset) {
        let head: Vec<usize> = (0..at.min(self.count())).collect();
        let tail: Vec<usize> = (at.min(self.count())..self.count()).collect();
        (self.select(&head), self.select(&tail))
    }

    /// Uniform sample without replacement of at most `max` rows (all rows, in
    /// order, when the dataset is small enough).
    pub fn sample(&self, max: usize, seed: u64) -> VectorDataset {
        if self.count() <= max {
            return self.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ids = sample(&mut rng, self.count(), max).into_vec();
        ids.sort_unstable();
        self.select(&ids)
    }
}

/// Reads a whole vector file.
///
/// `ivecs` payloads are kept bit-for-bit in `f32` storage (each `i32` is
/// reinterpreted, not converted); use [`read_ids`] to get them back as ids.
pub fn load_vectors(path: impl AsRef<Path>, format: VecFormat) -> Result<VectorDataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::file(path, e))?;
    parse_vectors(&bytes, format)
}

pub fn parse_vectors(bytes: &[u8], format: VecFormat) -> Result<VectorDataset> {
    let (dim, payload) = parse_records(bytes, format.elem_bytes())?;
    let data = match format {
        VecFormat::Bvecs => VectorData::U8(payload),
        VecFormat::Fvecs | VecFormat::Ivecs => VectorData::F32(
            payload
                .chunks_exact(4)
                .map(|c| f32::from_bits(u32::from_le_bytes([c[0], c[1], c[2], c[3]])))
                .collect(),
        ),
    };
    VectorDataset::new(dim, data)
}

/// Returns (dim, concatenated element bytes).
fn parse_records(bytes: &[u8], elem_bytes: usize) -> Result<(usize, Vec<u8>)> {
    let mut pos = 0;
    let mut dim: Option<usize> = None;
    let mut payload = Vec::with_capacity(bytes.len());
    let mut record = 0;
    while pos < bytes.len() {
        if bytes.len() - pos < 4 {
            return Err(Error::Truncated(format!("record {record}: partial header")));
        }
        let d = i32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap());
        if d <= 0 {
            return Err(Error::InvalidDim(d as i64));
        }
        let d = d as usize;
        match dim {
            None => dim = Some(d),
            Some(expected) if expected != d => {
                return Err(Error::InconsistentDim {
                    record,
                    expected,
                    found: d,
                })
            }
            _ => {}
        }
        pos += 4;
        let len = d * elem_bytes;
        if bytes.len() - pos < len {
            return Err(Error::Truncated(format!(
                "record {record}: {} of {len} payload bytes",
                bytes.len() - pos
            )));
        }
        payload.extend_from_slice(&bytes[pos..pos + len]);
        pos += len;
        record += 1;
    }
    match dim {
        Some(d) => Ok((d, payload)),
        None => Err(Error::Empty("vector file has no records")),
    }
}

pub fn write_vectors(path: impl AsRef<Path>, data: &VectorDataset, format: VecFormat) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_vectors(data, format)?;
    fs::write(path, bytes).map_err(|e| Error::file(path, e))
}

pub fn encode_vectors(data: &VectorDataset, format: VecFormat) -> Result<Vec<u8>> {
    let dim = data.dim();
    let mut out = Vec::with_capacity(data.count() * (4 + dim * format.elem_bytes()));
    match (format, &data.data) {
        (VecFormat::Bvecs, VectorData::U8(v)) => {
            for row in v.chunks_exact(dim) {
                out.extend_from_slice(&(dim as i32).to_le_bytes());
                out.extend_from_slice(row);
            }
        }
        (VecFormat::Fvecs | VecFormat::Ivecs, VectorData::F32(v)) => {
            for row in v.chunks_exact(dim) {
                out.extend_from_slice(&(dim as i32).to_le_bytes());
                for x in row {
                    out.extend_from_slice(&x.to_bits().to_le_bytes());
                }
            }
        }
        (f, _) => {
            return Err(Error::ElemMismatch(format!(
                "{:?} cannot hold {} vectors",
                f,
                data.elem().name()
            )))
        }
    }
    Ok(out)
}

/// Reads an `.ivecs` file as a row-major id matrix: (dim, ids).
pub fn read_ids(path: impl AsRef<Path>) -> Result<(usize, Vec<i32>)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::file(path, e))?;
    let (dim, payload) = parse_records(&bytes, 4)?;
    let ids = payload
        .chunks_exact(4)
        .map(|c| i32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((dim, ids))
}

pub fn write_ids(path: impl AsRef<Path>, dim: usize, ids: &[i32]) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::file(path, e))?;
    let mut w = BufWriter::new(file);
    for row in ids.chunks_exact(dim) {
        w.write_all(&(dim as i32).to_le_bytes())?;
        for id in row {
            w.write_all(&id.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Gaussian blobs plus the generating centers and labels.
#[derive(Clone, Debug)]
pub struct SyntheticSet {
    pub data: VectorDataset,
    /// `clusters × dim` centers in `f32`.
    pub centers: Vec<f32>,
    pub labels: Vec<u32>,
}

/// Gaussian blobs around `clusters` uniformly drawn centers. Deterministic for
/// a fixed seed.
pub fn gen_synthetic(count: usize, dim: usize, elem: ElemType, seed: u64, clusters: usize) -> Result<VectorDataset> {
    gen_synthetic_labeled(count, dim, elem, seed, clusters).map(|s| s.data)
}

pub fn gen_synthetic_labeled(
    count: usize,
    dim: usize,
    elem: ElemType,
    seed: u64,
    clusters: usize,
) -> Result<SyntheticSet> {
    if count == 0 {
        return Err(Error::Empty("synthetic count must be >= 1"));
    }
    if dim == 0 {
        return Err(Error::InvalidDim(0));
    }
    if clusters == 0 {
        return Err(Error::params("clusters must be >= 1"));
    }
    // Center range and per-coordinate spread, per element type.
    let (lo, hi, sigma) = match elem {
        ElemType::U8 => (24.0f32, 231.0f32, 14.0f32),
        ElemType::I8 => (-100.0, 100.0, 14.0),
        ElemType::F32 => (-1.0, 1.0, 0.12),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coord = Uniform::new_inclusive(lo, hi);
    let centers: Vec<f32> = (0..clusters * dim).map(|_| coord.sample(&mut rng)).collect();
    let pick = Uniform::new(0, clusters as u32);
    let noise = Normal::new(0.0f32, sigma).expect("positive sigma");
    let mut labels = Vec::with_capacity(count);
    let mut values = Vec::with_capacity(count * dim);
    for _ in 0..count {
        let c = pick.sample(&mut rng);
        labels.push(c);
        let center = &centers[c as usize * dim..(c as usize + 1) * dim];
        for &x in center {
            values.push(x + noise.sample(&mut rng));
        }
    }
    let data = match elem {
        ElemType::U8 => VectorData::U8(values.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect()),
        ElemType::I8 => VectorData::I8(values.iter().map(|v| v.round().clamp(-128.0, 127.0) as i8).collect()),
        ElemType::F32 => VectorData::F32(values),
    };
    Ok(SyntheticSet {
        data: VectorDataset::new(dim, data)?,
        centers,
        labels,
    })
}

/// Exact k nearest neighbours per query, `query_count × k`, rows sorted by
/// (distance, id).
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub query_count: usize,
    pub k: usize,
    pub ids: Vec<u32>,
    pub distances: Vec<f32>,
}

impl GroundTruth {
    pub fn row_ids(&self, q: usize) -> &[u32] {
        &self.ids[q * self.k..(q + 1) * self.k]
    }

    pub fn row_distances(&self, q: usize) -> &[f32] {
        &self.distances[q * self.k..(q + 1) * self.k]
    }

    /// Writes ids as `.ivecs` and distances as `.fvecs`.
    pub fn write(&self, ids_path: impl AsRef<Path>, dist_path: impl AsRef<Path>) -> Result<()> {
        let ids: Vec<i32> = self.ids.iter().map(|&i| i as i32).collect();
        write_ids(ids_path, self.k, &ids)?;
        let d = VectorDataset::from_f32(self.k, self.distances.clone())?;
        write_vectors(dist_path, &d, VecFormat::Fvecs)
    }

    /// Reads an id file and, optionally, its distance file.
    pub fn read(ids_path: impl AsRef<Path>, dist_path: Option<&Path>) -> Result<Self> {
        let (k, raw) = read_ids(ids_path)?;
        let query_count = raw.len() / k;
        let mut ids = Vec::with_capacity(raw.len());
        for id in raw {
            if id < 0 {
                return Err(Error::Corrupt(format!("negative id {id} in ground truth")));
            }
            ids.push(id as u32);
        }
        let distances = match dist_path {
            Some(p) => {
                let d = load_vectors(p, VecFormat::Fvecs)?;
                if d.dim() != k || d.count() != query_count {
                    return Err(Error::Corrupt("distance file does not match id file".into()));
                }
                d.to_f32()
            }
            None => vec![f32::NAN; ids.len()],
        };
        Ok(Self {
            query_count,
            k,
            ids,
            distances,
        })
    }
}

fn knn_row<T: Element>(base: &[T], dim: usize, query: &[T], k: usize) -> Vec<(f32, u32)> {
    let mut all: Vec<(f32, u32)> = base
        .chunks_exact(dim)
        .enumerate()
        .map(|(i, row)| (T::l2_sq(query, row), i as u32))
        .collect();
    let by_dist = |a: &(f32, u32), b: &(f32, u32)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < all.len() {
        all.select_nth_unstable_by(k, by_dist);
        all.truncate(k);
    }
    all.sort_unstable_by(by_dist);
    all
}

/// Brute-force exact k-NN under squared L2; ties go to the smaller id.
pub fn brute_force_knn(base: &VectorDataset, queries: &VectorDataset, k: usize) -> Result<GroundTruth> {
    if base.dim() != queries.dim() {
        return Err(Error::DimMismatch {
            expected: base.dim(),
            found: queries.dim(),
        });
    }
    if k == 0 {
        return Err(Error::params("k must be >= 1"));
    }
    if k > base.count() {
        return Err(Error::KTooLarge { k, count: base.count() });
    }
    let dim = base.dim();
    let rows: Vec<Vec<(f32, u32)>> = match (&base.data, &queries.data) {
        (VectorData::U8(b), VectorData::U8(q)) => q.par_chunks_exact(dim).map(|r| knn_row(b, dim, r, k)).collect(),
        (VectorData::I8(b), VectorData::I8(q)) => q.par_chunks_exact(dim).map(|r| knn_row(b, dim, r, k)).collect(),
        (VectorData::F32(b), VectorData::F32(q)) => q.par_chunks_exact(dim).map(|r| knn_row(b, dim, r, k)).collect(),
        _ => (0..queries.count())
            .into_par_iter()
            .map(|qi| {
                let q = queries.row(qi);
                let mut all: Vec<(f32, u32)> = (0..base.count()).map(|i| (l2_sq(q, base.row(i)), i as u32)).collect();
                all.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                all.truncate(k);
                all
            })
            .collect(),
    };
    let mut ids = Vec::with_capacity(rows.len() * k);
    let mut distances = Vec::with_capacity(rows.len() * k);
    for row in rows {
        for (d, i) in row {
            ids.push(i);
            distances.push(d);
        }
    }
    Ok(GroundTruth {
        query_count: queries.count(),
        k,
        ids,
        distances,
    })
}

/// Mean over queries of |result top-k ∩ truth top-k| / k.
pub fn recall_at_k<R: AsRef<[u32]>>(results: &[R], truth: &GroundTruth, k: usize) -> Result<f64> {
    if results.len() != truth.query_count {
        return Err(Error::RowCountMismatch {
            results: results.len(),
            truth: truth.query_count,
        });
    }
    if k == 0 || k > truth.k {
        return Err(Error::RowTooShort { row: 0, len: truth.k, k });
    }
    if results.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0usize;
    for (q, row) in results.iter().enumerate() {
        let row = row.as_ref();
        if row.len() < k {
            return Err(Error::RowTooShort { row: q, len: row.len(), k });
        }
        let gt = &truth.row_ids(q)[..k];
        total += row[..k].iter().filter(|id| gt.contains(id)).count();
    }
    Ok(total as f64 / (results.len() * k) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fvecs_bytes(rows: &[&[f32]]) -> Vec<u8> {
        let mut out = Vec::new();
        for r in rows {
            out.extend_from_slice(&(r.len() as i32).to_le_bytes());
            for x in *r {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    #[test]
    fn parses_single_fvecs_record() {
        let ds = parse_vectors(&fvecs_bytes(&[&[1.0, 2.0, 3.0, 4.0]]), VecFormat::Fvecs).unwrap();
        assert_eq!(ds.count(), 1);
        assert_eq!(ds.dim(), 4);
        assert_eq!(ds.row(0), VectorRef::F32(&[1.0, 2.0, 3.0, 4.0]));
    }

    #[test]
    fn bvecs_is_u8() {
        let mut bytes = Vec::new();
        for r in 0..3u8 {
            bytes.extend_from_slice(&128i32.to_le_bytes());
            bytes.extend((0..128).map(|i| (i as u8).wrapping_add(r)));
        }
        let ds = parse_vectors(&bytes, VecFormat::Bvecs).unwrap();
        assert_eq!(ds.elem(), ElemType::U8);
        assert_eq!(ds.dim(), 128);
        assert_eq!(ds.count(), 3);
    }

    #[test]
    fn rejects_inconsistent_dim() {
        let bytes = fvecs_bytes(&[&[1.0, 2.0, 3.0, 4.0], &[1.0, 2.0, 3.0, 4.0, 5.0]]);
        match parse_vectors(&bytes, VecFormat::Fvecs) {
            Err(Error::InconsistentDim { record: 1, expected: 4, found: 5 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_truncation_and_bad_dims() {
        let mut bytes = fvecs_bytes(&[&[1.0, 2.0]]);
        bytes.pop();
        assert!(matches!(parse_vectors(&bytes, VecFormat::Fvecs), Err(Error::Truncated(_))));
        let zero = 0i32.to_le_bytes();
        assert!(matches!(parse_vectors(&zero, VecFormat::Fvecs), Err(Error::InvalidDim(0))));
        let neg = (-3i32).to_le_bytes();
        assert!(matches!(parse_vectors(&neg, VecFormat::Bvecs), Err(Error::InvalidDim(-3))));
        assert!(matches!(parse_vectors(&[1, 0], VecFormat::Fvecs), Err(Error::Truncated(_))));
    }

    #[test]
    fn ivecs_round_trip_keeps_bits() {
        let tmp = tempfile::tempdir().unwrap();
        let p = tmp.path().join("gt.ivecs");
        let ids = vec![0, 7, -1, i32::MAX, 3, 2];
        write_ids(&p, 3, &ids).unwrap();
        assert_eq!(read_ids(&p).unwrap(), (3, ids.clone()));
        let ds = load_vectors(&p, VecFormat::Ivecs).unwrap();
        let back = encode_vectors(&ds, VecFormat::Ivecs).unwrap();
        assert_eq!(back, std::fs::read(&p).unwrap());
    }

    #[test]
    fn synthetic_is_deterministic() {
        let a = gen_synthetic(10, 4, ElemType::U8, 7, 2).unwrap();
        let b = gen_synthetic(10, 4, ElemType::U8, 7, 2).unwrap();
        assert_eq!(a, b);
        assert_eq!(encode_vectors(&a, VecFormat::Bvecs).unwrap(), encode_vectors(&b, VecFormat::Bvecs).unwrap());
        assert_ne!(a, gen_synthetic(10, 4, ElemType::U8, 8, 2).unwrap());
    }

    #[test]
    fn synthetic_rejects_empty() {
        assert!(gen_synthetic(0, 4, ElemType::F32, 1, 1).is_err());
        assert!(gen_synthetic(4, 0, ElemType::F32, 1, 1).is_err());
        assert!(gen_synthetic(4, 4, ElemType::F32, 1, 0).is_err());
    }

    #[test]
    fn synthetic_clusters_are_recoverable() {
        let s = gen_synthetic_labeled(1000, 16, ElemType::F32, 1, 8).unwrap();
        let dim = 16;
        let mut hits = 0;
        for i in 0..1000 {
            let row = match s.data.row(i) {
                VectorRef::F32(r) => r,
                _ => unreachable!(),
            };
            let mut best = (f32::INFINITY, 0);
            for c in 0..8 {
                let d: f32 = row
                    .iter()
                    .zip(&s.centers[c * dim..(c + 1) * dim])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                if d < best.0 {
                    best = (d, c);
                }
            }
            if best.1 as u32 == s.labels[i] {
                hits += 1;
            }
        }
        assert!(hits >= 900, "only {hits}/1000 recovered");
    }

    #[test]
    fn knn_small_example() {
        let base = VectorDataset::from_f32(2, vec![0.0, 0.0, 3.0, 4.0, 1.0, 1.0]).unwrap();
        let q = VectorDataset::from_f32(2, vec![0.0, 0.0]).unwrap();
        let gt = brute_force_knn(&base, &q, 2).unwrap();
        assert_eq!(gt.ids, vec![0, 2]);
        assert_eq!(gt.distances, vec![0.0, 2.0]);

        let all = brute_force_knn(&base, &q, 3).unwrap();
        assert_eq!(all.ids, vec![0, 2, 1]);
        assert_eq!(all.distances, vec![0.0, 2.0, 25.0]);
    }

    #[test]
    fn knn_identity_and_errors() {
        let base = gen_synthetic(50, 8, ElemType::U8, 3, 4).unwrap();
        let q = base.select(&[17]);
        let gt = brute_force_knn(&base, &q, 1).unwrap();
        assert_eq!(gt.distances[0], 0.0);
        assert_eq!(base.row(gt.ids[0] as usize), base.row(17));

        let other = gen_synthetic(5, 4, ElemType::U8, 3, 1).unwrap();
        assert!(matches!(brute_force_knn(&base, &other, 1), Err(Error::DimMismatch { .. })));
        assert!(matches!(brute_force_knn(&base, &q, 51), Err(Error::KTooLarge { .. })));
    }

    #[test]
    fn knn_breaks_ties_by_id() {
        let base = VectorDataset::from_u8(1, vec![5, 3, 7, 3]).unwrap();
        let q = VectorDataset::from_u8(1, vec![5]).unwrap();
        let gt = brute_force_knn(&base, &q, 4).unwrap();
        assert_eq!(gt.ids, vec![0, 1, 2, 3]);
    }

    #[test]
    fn recall_examples() {
        let truth = GroundTruth {
            query_count: 2,
            k: 2,
            ids: vec![1, 2, 3, 4],
            distances: vec![0.0; 4],
        };
        assert_eq!(recall_at_k(&[vec![1, 2], vec![3, 4]], &truth, 2).unwrap(), 1.0);
        assert_eq!(recall_at_k(&[vec![5, 6], vec![7, 8]], &truth, 2).unwrap(), 0.0);
        assert_eq!(recall_at_k(&[vec![2, 1], vec![4, 9]], &truth, 2).unwrap(), 0.75);
        assert!(matches!(
            recall_at_k(&[vec![1, 2]], &truth, 2),
            Err(Error::RowCountMismatch { .. })
        ));
    }

    #[test]
    fn ground_truth_file_round_trip() {
        let tmp = tempfile::tempdir().unwrap();
        let base = gen_synthetic(40, 3, ElemType::F32, 5, 2).unwrap();
        let q = gen_synthetic(6, 3, ElemType::F32, 6, 2).unwrap();
        let gt = brute_force_knn(&base, &q, 5).unwrap();
        let (pi, pd) = (tmp.path().join("gt.ivecs"), tmp.path().join("gt.fvecs"));
        gt.write(&pi, &pd).unwrap();
        assert_eq!(GroundTruth::read(&pi, Some(&pd)).unwrap(), gt);
    }
}
