use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;
use std::sync::Arc;

use super::{GraphIndex, IndexHeader, IndexMeta, NodePage, HEADER_LEN, PAGE_SIZE};
use crate::dataset::{ElemType, VectorData, VectorDataset};
use crate::error::{Error, Result};
use crate::quantize::{PqCodebook, PqCodes, PqData, KS};

/// Fills in the PQ section and page-region offsets of a header.
pub(super) fn layout(mut h: IndexHeader) -> IndexHeader {
    let m = h.pq_m as u64;
    let sub_dim = h.dim as u64 / m.max(1);
    let centroid_bytes = m * KS as u64 * sub_dim * 4;
    let code_bytes = h.count * m;
    h.pq_offset = HEADER_LEN as u64;
    h.pq_len = centroid_bytes + code_bytes;
    let end = h.pq_offset + h.pq_len;
    h.page_base = end.div_ceil(PAGE_SIZE as u64) * PAGE_SIZE as u64;
    h
}

pub fn write_index(idx: &GraphIndex, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::file(path, e))?;
    let mut w = BufWriter::with_capacity(1 << 20, file);
    let h = idx.header();
    w.write_all(&h.encode())?;
    for c in idx.pq().book.centroids() {
        w.write_all(&c.to_le_bytes())?;
    }
    w.write_all(idx.pq().codes.as_bytes())?;
    let written = h.pq_offset + h.pq_len;
    w.write_all(&vec![0u8; (h.page_base - written) as usize])?;
    let mut page = [0u8; PAGE_SIZE];
    for node in 0..idx.count() {
        idx.encode_page(node, &mut page);
        w.write_all(&page)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_index_header(path: impl AsRef<Path>) -> Result<IndexHeader> {
    let path = path.as_ref();
    let mut f = File::open(path).map_err(|e| Error::file(path, e))?;
    read_header(&mut f)
}

fn read_header(f: &mut File) -> Result<IndexHeader> {
    let mut b = [0u8; HEADER_LEN];
    let mut got = 0;
    while got < HEADER_LEN {
        let n = f.read(&mut b[got..])?;
        if n == 0 {
            return Err(Error::Truncated(format!("index header is {got} bytes")));
        }
        got += n;
    }
    IndexHeader::decode(&b)
}

fn read_pq(f: &mut File, h: &IndexHeader) -> Result<PqData> {
    let m = h.pq_m as usize;
    if m == 0 || h.dim() % m != 0 {
        return Err(Error::Corrupt(format!("pq_m {m} does not divide dim {}", h.dim)));
    }
    let expected = layout(*h);
    if expected.pq_len != h.pq_len || expected.page_base != h.page_base {
        return Err(Error::Corrupt("section offsets disagree with header fields".into()));
    }
    let file_len = f.metadata()?.len();
    let needed = h.page_base + h.count * PAGE_SIZE as u64;
    if file_len < needed {
        return Err(Error::Truncated(format!("index file is {file_len} bytes, need {needed}")));
    }
    f.seek(SeekFrom::Start(h.pq_offset))?;
    let mut r = BufReader::new(f);
    let n_cent = m * KS * (h.dim() / m);
    let mut raw = vec![0u8; n_cent * 4];
    r.read_exact(&mut raw)?;
    let centroids = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let mut codes = vec![0u8; h.count() * m];
    r.read_exact(&mut codes)?;
    Ok(PqData {
        book: PqCodebook::from_parts(h.dim(), m, centroids)?,
        codes: PqCodes::from_parts(m, codes)?,
    })
}

/// Header and PQ section only; pages stay on disk.
pub fn read_index_meta(path: impl AsRef<Path>) -> Result<IndexMeta> {
    let path = path.as_ref();
    let mut f = File::open(path).map_err(|e| Error::file(path, e))?;
    let header = read_header(&mut f)?;
    let pq = read_pq(&mut f, &header)?;
    Ok(IndexMeta {
        header,
        pq: Arc::new(pq),
    })
}

/// Loads the whole index, decoding every page.
pub fn read_index(path: impl AsRef<Path>) -> Result<GraphIndex> {
    let path = path.as_ref();
    let mut f = File::open(path).map_err(|e| Error::file(path, e))?;
    let h = read_header(&mut f)?;
    let pq = read_pq(&mut f, &h)?;
    f.seek(SeekFrom::Start(h.page_base))?;
    let mut r = BufReader::with_capacity(1 << 20, f);
    let n = h.count();
    let vb = h.vector_bytes();
    let mut raw_vectors = Vec::with_capacity(n * vb);
    let mut adjacency = Vec::with_capacity(n);
    let mut page = [0u8; PAGE_SIZE];
    for _ in 0..n {
        r.read_exact(&mut page)?;
        let view = NodePage::parse(&page, &h)?;
        raw_vectors.extend_from_slice(view.vector);
        adjacency.push(view.neighbors().collect());
    }
    let data = match h.elem {
        ElemType::U8 => VectorData::U8(raw_vectors),
        ElemType::I8 => VectorData::I8(raw_vectors.into_iter().map(|b| b as i8).collect()),
        ElemType::F32 => VectorData::F32(
            raw_vectors
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
        ),
    };
    let vectors = VectorDataset::new(h.dim(), data)?;
    let idx = GraphIndex::from_parts(vectors, adjacency, h.entry_point, h.max_degree as usize, pq)?;
    if idx.header() != &h {
        return Err(Error::Corrupt("header does not match decoded contents".into()));
    }
    Ok(idx)
}
