//! Squared-L2 kernels.
//!
//! Integer element types are widened before arithmetic and accumulated in
//! 64 bits, so distances between integer vectors are exact until the final
//! conversion to `f32`.

use crate::dataset::{ElemType, VectorRef};

/// A vector element type with an exact-as-possible squared L2 kernel.
pub trait Element: Copy + Send + Sync + 'static {
    const ELEM: ElemType;

    fn l2_sq(a: &[Self], b: &[Self]) -> f32;

    fn to_f32(self) -> f32;
}

impl Element for u8 {
    const ELEM: ElemType = ElemType::U8;

    #[inline]
    fn l2_sq(a: &[u8], b: &[u8]) -> f32 {
        debug_assert_eq!(a.len(), b.len());
        let mut acc: u64 = 0;
        for (&x, &y) in a.iter().zip(b) {
            let d = x as i32 - y as i32;
            acc += (d * d) as u64;
        }
        acc as f32
    }

    #[inline]
    fn to_f32(self) -> f32 {
        self as f32
    }
}

impl Element for i8 {
    const ELEM: ElemType = ElemType::I8;

    #[inline]
    fn l2_sq(a: &[i8], b: &[i8]) -> f32 {
        debug_assert_eq!(a.len(), b.len());
        let mut acc: u64 = 0;
        for (&x, &y) in a.iter().zip(b) {
            let d = x as i32 - y as i32;
            acc += (d * d) as u64;
        }
        acc as f32
    }

    #[inline]
    fn to_f32(self) -> f32 {
        self as f32
    }
}

impl Element for f32 {
    const ELEM: ElemType = ElemType::F32;

    #[inline]
    fn l2_sq(a: &[f32], b: &[f32]) -> f32 {
        l2_sq_f32(a, b)
    }

    #[inline]
    fn to_f32(self) -> f32 {
        self
    }
}

/// Squared L2 over `f32` slices. Eight independent lanes, combined in a fixed
/// order, so the result is reproducible for a given input.
#[inline]
pub fn l2_sq_f32(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut lanes = [0.0f32; 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let xa = &a[c * 8..c * 8 + 8];
        let xb = &b[c * 8..c * 8 + 8];
        for l in 0..8 {
            let d = xa[l] - xb[l];
            lanes[l] += d * d;
        }
    }
    let mut tail = 0.0f32;
    for i in chunks * 8..a.len() {
        let d = a[i] - b[i];
        tail += d * d;
    }
    let s0 = (lanes[0] + lanes[4]) + (lanes[1] + lanes[5]);
    let s1 = (lanes[2] + lanes[6]) + (lanes[3] + lanes[7]);
    (s0 + s1) + tail
}

/// Squared L2 between two vectors of possibly different element types.
/// Same-type pairs use the exact kernel; mixed pairs go through `f32`.
pub fn l2_sq(a: VectorRef<'_>, b: VectorRef<'_>) -> f32 {
    match (a, b) {
        (VectorRef::U8(x), VectorRef::U8(y)) => u8::l2_sq(x, y),
        (VectorRef::I8(x), VectorRef::I8(y)) => i8::l2_sq(x, y),
        (VectorRef::F32(x), VectorRef::F32(y)) => l2_sq_f32(x, y),
        (x, y) => l2_sq_f32(&x.to_f32_vec(), &y.to_f32_vec()),
    }
}

/// Squared L2 between `query` and a vector stored as raw little-endian bytes
/// of type `elem` (the on-page representation).
pub fn l2_sq_bytes(query: VectorRef<'_>, elem: ElemType, bytes: &[u8]) -> f32 {
    match (query, elem) {
        (VectorRef::U8(q), ElemType::U8) => u8::l2_sq(q, bytes),
        (VectorRef::I8(q), ElemType::I8) => {
            let mut acc: u64 = 0;
            for (&x, &y) in q.iter().zip(bytes) {
                let d = x as i32 - (y as i8) as i32;
                acc += (d * d) as u64;
            }
            acc as f32
        }
        (VectorRef::F32(q), ElemType::F32) => {
            let decoded: Vec<f32> = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            l2_sq_f32(q, &decoded)
        }
        (q, elem) => {
            let decoded = decode_f32(elem, bytes);
            l2_sq_f32(&q.to_f32_vec(), &decoded)
        }
    }
}

pub(crate) fn decode_f32(elem: ElemType, bytes: &[u8]) -> Vec<f32> {
    match elem {
        ElemType::U8 => bytes.iter().map(|&b| b as f32).collect(),
        ElemType::I8 => bytes.iter().map(|&b| (b as i8) as f32).collect(),
        ElemType::F32 => bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect(),
    }
}
