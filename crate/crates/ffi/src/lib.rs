//! C ABI over the relaxann engine.
//!
//! Every function returns a [`RelaxannStatus`]. On failure the message is
//! kept per thread and can be copied out with [`relaxann_last_error`].
//! Handles are opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use relaxann::bench::{build_pipeline, exit_code, load_any, BuildOptions, EXIT_CONFIG, EXIT_DATA};
use relaxann::dataset::VectorDataset;
use relaxann::index::{fill_ratio, write_index, IndexMeta};
use relaxann::search::{run_query_batch, BatchOptions, Engine, SearchParams};
use relaxann::storage::{open_backend, Backend, BackendKind, StorageProfile};
use relaxann::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RelaxannStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// An argument is malformed at the ABI level (bad UTF-8, unknown enum value).
    InvalidArgument = 2,
    /// Configuration or parameter error.
    Config = 3,
    /// Unreadable or malformed data.
    Data = 4,
    /// Failure while running.
    Runtime = 5,
    /// The library panicked; the handle involved should be freed.
    Panic = 6,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RelaxannBackend {
    /// Positioned reads from the index file.
    File = 0,
    /// Whole index in memory, zero latency.
    Memory = 1,
    /// Whole index in memory, latency from a storage profile.
    Simulated = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RelaxannEngine {
    Strict = 0,
    Relaxed = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct RelaxannSearchParams {
    /// Candidate list length.
    pub l: usize,
    /// Results per query; must not exceed `l`.
    pub k: usize,
    /// Step cap per query; 0 keeps the library default.
    pub max_steps: usize,
    /// A [`RelaxannEngine`] value.
    pub engine: u32,
    /// Search workers; 0 is treated as 1.
    pub workers: usize,
}

/// An open index and the backend serving its pages.
pub struct RelaxannIndex {
    meta: IndexMeta,
    backend: Backend,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> RelaxannStatus {
    match exit_code(e) {
        EXIT_CONFIG => RelaxannStatus::Config,
        EXIT_DATA => RelaxannStatus::Data,
        _ => RelaxannStatus::Runtime,
    }
}

struct Fail(RelaxannStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(RelaxannStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> RelaxannStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RelaxannStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            RelaxannStatus::Panic
        }
    }
}

/// # Safety
/// `p` must be null or a valid NUL-terminated string.
unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| Fail(RelaxannStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn relaxann_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length plus one, or 0 when
/// there is no error.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn relaxann_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| match &*e.borrow() {
        None => 0,
        Some(msg) => {
            let bytes = msg.as_bytes_with_nul();
            if !buf.is_null() && len > 0 {
                let n = bytes.len().min(len);
                ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
                *buf.add(n - 1) = 0;
            }
            bytes.len()
        }
    })
}

/// Page fill ratio of one node: payload bytes over 4096.
///
/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn relaxann_fill_ratio(dim: usize, elem_size: usize, max_degree: usize, out: *mut f64) -> RelaxannStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = fill_ratio(dim, elem_size, max_degree)?;
        Ok(())
    })
}

/// Trains PQ and builds an index from a `.fvecs`/`.bvecs` file, writing it
/// to `out_path`. Other build parameters take their defaults.
///
/// # Safety
/// Both paths must be valid NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn relaxann_build(
    base_path: *const c_char,
    out_path: *const c_char,
    max_degree: usize,
    seed: u64,
) -> RelaxannStatus {
    guard(|| {
        let base = path_arg(base_path, "base_path")?;
        let out = path_arg(out_path, "out_path")?;
        let mut opts = BuildOptions::new(max_degree);
        opts.graph.seed = seed;
        let idx = build_pipeline(&load_any(base)?, &opts)?;
        write_index(&idx, out)?;
        Ok(())
    })
}

/// Opens an index file. `backend` is a [`RelaxannBackend`] value.
/// `profile_path` names a storage profile; the simulated backend requires
/// it and the others ignore it, so it may be null.
///
/// # Safety
/// `path` must be a valid string, `profile_path` null or a valid string,
/// `out` valid for writes. On success `*out` owns a handle.
#[no_mangle]
pub unsafe extern "C" fn relaxann_index_open(
    path: *const c_char,
    backend: u32,
    profile_path: *const c_char,
    out: *mut *mut RelaxannIndex,
) -> RelaxannStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = path_arg(path, "path")?;
        let kind = match backend {
            0 => BackendKind::File,
            1 => BackendKind::Memory,
            2 => BackendKind::Simulated,
            v => return Err(Fail(RelaxannStatus::InvalidArgument, format!("unknown backend {v}"))),
        };
        let profile = if kind == BackendKind::Simulated && !profile_path.is_null() {
            Some(StorageProfile::load(path_arg(profile_path, "profile_path")?)?)
        } else {
            None
        };
        let (meta, backend) = open_backend(kind, path, profile)?;
        *out = Box::into_raw(Box::new(RelaxannIndex { meta, backend }));
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `index` must be null or a handle from [`relaxann_index_open`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn relaxann_index_free(index: *mut RelaxannIndex) {
    if !index.is_null() {
        let idx = Box::from_raw(index);
        idx.backend.close();
    }
}

/// Vector dimension, or 0 for a null handle.
///
/// # Safety
/// `index` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn relaxann_index_dim(index: *const RelaxannIndex) -> usize {
    index.as_ref().map_or(0, |i| i.meta.header.dim())
}

/// Node count, or 0 for a null handle.
///
/// # Safety
/// `index` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn relaxann_index_count(index: *const RelaxannIndex) -> usize {
    index.as_ref().map_or(0, |i| i.meta.header.count())
}

/// Searches `nq` row-major f32 queries of length `dim`.
///
/// Writes `nq * k` ids to `out_ids` and, when non-null, `nq * k` squared
/// distances to `out_distances` and `nq` step counts to `out_steps`. Rows
/// with fewer than `k` results are padded with `UINT32_MAX` and infinity.
/// A failure in any query fails the call.
///
/// # Safety
/// `queries` must hold `nq * dim` floats and the output buffers must be
/// sized as above.
#[no_mangle]
pub unsafe extern "C" fn relaxann_search(
    index: *const RelaxannIndex,
    queries: *const f32,
    nq: usize,
    dim: usize,
    params: *const RelaxannSearchParams,
    out_ids: *mut u32,
    out_distances: *mut f32,
    out_steps: *mut u32,
) -> RelaxannStatus {
    guard(|| {
        let idx = index.as_ref().ok_or_else(|| null("index"))?;
        let p = params.as_ref().ok_or_else(|| null("params"))?;
        if queries.is_null() {
            return Err(null("queries"));
        }
        if out_ids.is_null() {
            return Err(null("out_ids"));
        }
        let engine = match p.engine {
            0 => Engine::Strict,
            1 => Engine::Relaxed,
            v => return Err(Fail(RelaxannStatus::InvalidArgument, format!("unknown engine {v}"))),
        };
        let len = nq.checked_mul(dim).ok_or_else(|| Fail(RelaxannStatus::InvalidArgument, "nq * dim overflows".into()))?;
        let data = std::slice::from_raw_parts(queries, len).to_vec();
        let queries = VectorDataset::from_f32(dim, data)?;
        let mut sp = SearchParams::new(p.l, p.k, engine);
        if p.max_steps > 0 {
            sp.max_steps = p.max_steps;
        }
        let opts = BatchOptions {
            workers: p.workers.max(1),
            ..BatchOptions::default()
        };
        let out = run_query_batch(&queries, &idx.meta, &idx.backend, &sp, &opts, None)?;
        if let Some(e) = out.first_error() {
            return Err(Fail(status_of(e), e.to_string()));
        }
        let k = p.k;
        let ids = std::slice::from_raw_parts_mut(out_ids, nq * k);
        let mut dists = (!out_distances.is_null()).then(|| std::slice::from_raw_parts_mut(out_distances, nq * k));
        let mut steps = (!out_steps.is_null()).then(|| std::slice::from_raw_parts_mut(out_steps, nq));
        for (q, r) in out.results.iter().enumerate() {
            let r = r.as_ref().expect("checked above");
            for j in 0..k {
                ids[q * k + j] = r.ids.get(j).copied().unwrap_or(u32::MAX);
                if let Some(d) = dists.as_deref_mut() {
                    d[q * k + j] = r.distances.get(j).copied().unwrap_or(f32::INFINITY);
                }
            }
            if let Some(s) = steps.as_deref_mut() {
                s[q] = r.trace.step_count() as u32;
            }
        }
        Ok(())
    })
}
