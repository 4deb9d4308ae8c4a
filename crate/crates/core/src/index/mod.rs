//! Storage-resident graph index: one 4 KiB page per node holding the
//! full-precision vector and a fixed-capacity neighbour list, plus the
//! in-memory PQ section used for candidate scoring.
//!
//! The byte layout is documented in `docs/format.md`.

mod build;
mod file;

use std::sync::Arc;

pub use build::{build_index, sample_medoid, BuildParams};
pub use file::{read_index, read_index_header, read_index_meta, write_index};

use crate::dataset::{ElemType, VectorDataset, VectorRef};
use crate::error::{Error, Result};
use crate::quantize::PqData;

pub const PAGE_SIZE: usize = 4096;
pub const HEADER_LEN: usize = 64;
pub const MAGIC: [u8; 8] = *b"RLXANNIX";
pub const FORMAT_VERSION: u32 = 1;
/// Unused neighbour slot.
pub const NO_NEIGHBOR: u32 = u32::MAX;

/// Bytes of a node page that carry data: vector, count field and id slots.
pub fn node_payload_bytes(dim: usize, elem_size: usize, max_degree: usize) -> Result<usize> {
    Ok(payload_no_count(dim, elem_size, max_degree)? + 4)
}

/// Vector plus id slots, without the count field.
pub fn payload_no_count(dim: usize, elem_size: usize, max_degree: usize) -> Result<usize> {
    if dim == 0 || elem_size == 0 {
        return Err(Error::params("dim and elem_size must be >= 1"));
    }
    Ok(dim * elem_size + 4 * max_degree)
}

/// Useful fraction of a page read: `payload_no_count / PAGE_SIZE`.
pub fn fill_ratio(dim: usize, elem_size: usize, max_degree: usize) -> Result<f64> {
    let payload = payload_no_count(dim, elem_size, max_degree)?;
    if payload > PAGE_SIZE {
        return Err(Error::PageOverflow {
            payload,
            page: PAGE_SIZE,
        });
    }
    Ok(payload as f64 / PAGE_SIZE as f64)
}

/// Largest degree whose full payload (count field included) fits a page.
pub fn max_degree_for_page(dim: usize, elem_size: usize) -> Result<usize> {
    let fixed = node_payload_bytes(dim, elem_size, 0)?;
    if fixed + 4 > PAGE_SIZE {
        return Err(Error::PageOverflow {
            payload: fixed + 4,
            page: PAGE_SIZE,
        });
    }
    Ok((PAGE_SIZE - fixed) / 4)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IndexHeader {
    pub count: u64,
    pub dim: u32,
    pub elem: ElemType,
    /// Neighbour slots per page.
    pub max_degree: u32,
    pub entry_point: u32,
    pub pq_m: u32,
    pub pq_offset: u64,
    pub pq_len: u64,
    /// Offset of page 0; a multiple of `PAGE_SIZE`.
    pub page_base: u64,
}

impl IndexHeader {
    pub fn count(&self) -> usize {
        self.count as usize
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn page_offset(&self, node: u32) -> u64 {
        self.page_base + node as u64 * PAGE_SIZE as u64
    }

    pub fn vector_bytes(&self) -> usize {
        self.dim as usize * self.elem.size()
    }

    pub fn encode(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[0..8].copy_from_slice(&MAGIC);
        b[8..12].copy_from_slice(&FORMAT_VERSION.to_le_bytes());
        b[12..16].copy_from_slice(&self.elem.code().to_le_bytes());
        b[16..24].copy_from_slice(&self.count.to_le_bytes());
        b[24..28].copy_from_slice(&self.dim.to_le_bytes());
        b[28..32].copy_from_slice(&self.max_degree.to_le_bytes());
        b[32..36].copy_from_slice(&self.entry_point.to_le_bytes());
        b[36..40].copy_from_slice(&self.pq_m.to_le_bytes());
        b[40..48].copy_from_slice(&self.pq_offset.to_le_bytes());
        b[48..56].copy_from_slice(&self.pq_len.to_le_bytes());
        b[56..64].copy_from_slice(&self.page_base.to_le_bytes());
        b
    }

    pub fn decode(b: &[u8]) -> Result<Self> {
        if b.len() < HEADER_LEN {
            return Err(Error::Truncated(format!("index header is {} bytes", b.len())));
        }
        if b[0..8] != MAGIC {
            return Err(Error::BadMagic);
        }
        let u32_at = |o: usize| u32::from_le_bytes(b[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(b[o..o + 8].try_into().unwrap());
        let version = u32_at(8);
        if version != FORMAT_VERSION {
            return Err(Error::BadVersion(version));
        }
        let elem = ElemType::from_code(u32_at(12))
            .ok_or_else(|| Error::Corrupt(format!("unknown element code {}", u32_at(12))))?;
        let h = IndexHeader {
            elem,
            count: u64_at(16),
            dim: u32_at(24),
            max_degree: u32_at(28),
            entry_point: u32_at(32),
            pq_m: u32_at(36),
            pq_offset: u64_at(40),
            pq_len: u64_at(48),
            page_base: u64_at(56),
        };
        h.validate()?;
        Ok(h)
    }

    fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Corrupt("dim is zero".into()));
        }
        if self.count == 0 || self.entry_point as u64 >= self.count {
            return Err(Error::Corrupt(format!(
                "entry point {} outside {} nodes",
                self.entry_point, self.count
            )));
        }
        if self.page_base % PAGE_SIZE as u64 != 0 {
            return Err(Error::Corrupt(format!("page base {} is not page aligned", self.page_base)));
        }
        if node_payload_bytes(self.dim(), self.elem.size(), self.max_degree as usize)? > PAGE_SIZE {
            return Err(Error::Corrupt("header degree overflows a page".into()));
        }
        Ok(())
    }
}

/// Serializes one node into `out`: vector bytes, `u32` count, `max_degree`
/// id slots (unused ones hold [`NO_NEIGHBOR`]), zero padding.
pub fn encode_page(vector: VectorRef<'_>, neighbors: &[u32], max_degree: usize, out: &mut [u8; PAGE_SIZE]) {
    debug_assert!(neighbors.len() <= max_degree);
    out.fill(0);
    let vb = vector.dim() * vector.elem().size();
    match vector {
        VectorRef::U8(v) => out[..vb].copy_from_slice(v),
        VectorRef::I8(v) => out[..vb].iter_mut().zip(v).for_each(|(o, &x)| *o = x as u8),
        VectorRef::F32(v) => {
            for (c, x) in out[..vb].chunks_exact_mut(4).zip(v) {
                c.copy_from_slice(&x.to_le_bytes());
            }
        }
    }
    out[vb..vb + 4].copy_from_slice(&(neighbors.len() as u32).to_le_bytes());
    let slots = &mut out[vb + 4..vb + 4 + 4 * max_degree];
    for (i, c) in slots.chunks_exact_mut(4).enumerate() {
        let id = neighbors.get(i).copied().unwrap_or(NO_NEIGHBOR);
        c.copy_from_slice(&id.to_le_bytes());
    }
}

/// Borrowed decoding of a node page.
#[derive(Debug)]
pub struct NodePage<'a> {
    pub vector: &'a [u8],
    ids: &'a [u8],
}

impl<'a> NodePage<'a> {
    pub fn parse(page: &'a [u8], header: &IndexHeader) -> Result<Self> {
        let vb = header.vector_bytes();
        let r = header.max_degree as usize;
        if page.len() < vb + 4 + 4 * r {
            return Err(Error::Truncated("node page".into()));
        }
        let count = u32::from_le_bytes(page[vb..vb + 4].try_into().unwrap()) as usize;
        if count > r {
            return Err(Error::Corrupt(format!("neighbor count {count} exceeds degree {r}")));
        }
        Ok(NodePage {
            vector: &page[..vb],
            ids: &page[vb + 4..vb + 4 + 4 * count],
        })
    }

    pub fn neighbor_count(&self) -> usize {
        self.ids.len() / 4
    }

    pub fn neighbors(&self) -> impl Iterator<Item = u32> + 'a {
        self.ids
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
    }
}

/// Header plus PQ data: what a searcher keeps in memory.
#[derive(Clone, Debug)]
pub struct IndexMeta {
    pub header: IndexHeader,
    pub pq: Arc<PqData>,
}

/// Fully materialized index: vectors, adjacency and PQ data.
#[derive(Clone, Debug)]
pub struct GraphIndex {
    header: IndexHeader,
    vectors: VectorDataset,
    adjacency: Vec<Vec<u32>>,
    pq: Arc<PqData>,
}

impl GraphIndex {
    /// Assembles and validates an index. Lists may be empty (degenerate graphs
    /// in tests); everything else must satisfy the page invariants.
    pub fn from_parts(
        vectors: VectorDataset,
        adjacency: Vec<Vec<u32>>,
        entry_point: u32,
        max_degree: usize,
        pq: PqData,
    ) -> Result<Self> {
        let count = vectors.count();
        if count == 0 {
            return Err(Error::Empty("index needs at least one node"));
        }
        if adjacency.len() != count {
            return Err(Error::params(format!("{} adjacency lists for {count} nodes", adjacency.len())));
        }
        if entry_point as usize >= count {
            return Err(Error::NodeOutOfRange {
                node: entry_point,
                count,
            });
        }
        if max_degree > max_degree_for_page(vectors.dim(), vectors.elem().size())? {
            return Err(Error::PageOverflow {
                payload: node_payload_bytes(vectors.dim(), vectors.elem().size(), max_degree)?,
                page: PAGE_SIZE,
            });
        }
        if pq.codes.count() != count || pq.book.dim() != vectors.dim() || pq.codes.m() != pq.book.m() {
            return Err(Error::params("PQ data does not match the vectors"));
        }
        for (i, list) in adjacency.iter().enumerate() {
            if list.len() > max_degree {
                return Err(Error::params(format!("node {i} has {} > {max_degree} neighbors", list.len())));
            }
            let mut seen = list.clone();
            seen.sort_unstable();
            seen.dedup();
            if seen.len() != list.len() {
                return Err(Error::params(format!("node {i} has duplicate neighbors")));
            }
            for &n in list {
                if n as usize >= count {
                    return Err(Error::NodeOutOfRange { node: n, count });
                }
                if n as usize == i {
                    return Err(Error::params(format!("node {i} has a self loop")));
                }
            }
        }
        let header = IndexHeader {
            count: count as u64,
            dim: vectors.dim() as u32,
            elem: vectors.elem(),
            max_degree: max_degree as u32,
            entry_point,
            pq_m: pq.book.m() as u32,
            pq_offset: 0,
            pq_len: 0,
            page_base: 0,
        };
        let header = file::layout(header);
        Ok(Self {
            header,
            vectors,
            adjacency,
            pq: Arc::new(pq),
        })
    }

    pub fn header(&self) -> &IndexHeader {
        &self.header
    }

    pub fn count(&self) -> usize {
        self.vectors.count()
    }

    pub fn vectors(&self) -> &VectorDataset {
        &self.vectors
    }

    pub fn neighbors(&self, node: usize) -> &[u32] {
        &self.adjacency[node]
    }

    pub fn adjacency(&self) -> &[Vec<u32>] {
        &self.adjacency
    }

    pub fn entry_point(&self) -> u32 {
        self.header.entry_point
    }

    pub fn max_degree(&self) -> usize {
        self.header.max_degree as usize
    }

    pub fn pq(&self) -> &Arc<PqData> {
        &self.pq
    }

    pub fn meta(&self) -> IndexMeta {
        IndexMeta {
            header: self.header,
            pq: Arc::clone(&self.pq),
        }
    }

    pub fn encode_page(&self, node: usize, out: &mut [u8; PAGE_SIZE]) {
        encode_page(self.vectors.row(node), &self.adjacency[node], self.max_degree(), out);
    }

    /// Fraction of nodes reachable from the entry point.
    pub fn reachable_fraction(&self) -> f64 {
        let n = self.count();
        let mut seen = vec![false; n];
        let mut stack = vec![self.entry_point() as usize];
        seen[stack[0]] = true;
        let mut reached = 1usize;
        while let Some(u) = stack.pop() {
            for &v in &self.adjacency[u] {
                if !seen[v as usize] {
                    seen[v as usize] = true;
                    reached += 1;
                    stack.push(v as usize);
                }
            }
        }
        reached as f64 / n as f64
    }
}
