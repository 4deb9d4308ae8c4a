use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use relaxann::dataset::{gen_synthetic, write_vectors, ElemType, VecFormat, VectorDataset};
use relaxann::index::read_index;
use relaxann::search::{run_query_batch, BatchOptions, Engine, SearchParams};
use relaxann::storage::{Backend, BackendKind};
use relaxann_ffi::*;

fn cstr(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let mut buf = [0 as c_char; 256];
    let n = unsafe { relaxann_last_error(buf.as_mut_ptr(), buf.len()) };
    assert!(n > 0);
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap().to_owned()
}

struct Fixture {
    _dir: tempfile::TempDir,
    index: PathBuf,
    queries: VectorDataset,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let (base, queries) = gen_synthetic(1200, 8, ElemType::F32, 5, 8).unwrap().split_at(1000);
    let base_path = dir.path().join("base.fvecs");
    write_vectors(&base_path, &base, VecFormat::Fvecs).unwrap();
    let index = dir.path().join("a.idx");
    let st = unsafe { relaxann_build(cstr(&base_path).as_ptr(), cstr(&index).as_ptr(), 16, 2) };
    assert_eq!(st, RelaxannStatus::Ok);
    Fixture { _dir: dir, index, queries }
}

fn open(path: &Path, backend: RelaxannBackend) -> *mut RelaxannIndex {
    let mut h = ptr::null_mut();
    let st = unsafe { relaxann_index_open(cstr(path).as_ptr(), backend as u32, ptr::null(), &mut h) };
    assert_eq!(st, RelaxannStatus::Ok);
    h
}

fn params(engine: RelaxannEngine) -> RelaxannSearchParams {
    RelaxannSearchParams {
        l: 32,
        k: 10,
        max_steps: 0,
        engine: engine as u32,
        workers: 3,
    }
}

#[test]
fn search_matches_the_library() {
    let f = fixture();
    let idx = std::sync::Arc::new(read_index(&f.index).unwrap());
    let backend = Backend::from_index(idx.clone(), BackendKind::Memory, None).unwrap();
    let nq = f.queries.count();
    let flat = f.queries.to_f32();
    for (kind, engine) in [
        (RelaxannBackend::File, RelaxannEngine::Strict),
        (RelaxannBackend::Memory, RelaxannEngine::Relaxed),
    ] {
        let h = open(&f.index, kind);
        assert_eq!(unsafe { (relaxann_index_dim(h), relaxann_index_count(h)) }, (8, 1000));
        let (mut ids, mut dists, mut steps) = (vec![0u32; nq * 10], vec![0f32; nq * 10], vec![0u32; nq]);
        let p = params(engine);
        let st = unsafe {
            relaxann_search(h, flat.as_ptr(), nq, 8, &p, ids.as_mut_ptr(), dists.as_mut_ptr(), steps.as_mut_ptr())
        };
        assert_eq!(st, RelaxannStatus::Ok);
        let e = if engine == RelaxannEngine::Strict { Engine::Strict } else { Engine::Relaxed };
        let want = run_query_batch(&f.queries, &idx.meta(), &backend, &SearchParams::new(32, 10, e), &BatchOptions::default(), None)
            .unwrap();
        for (q, r) in want.results.iter().enumerate() {
            let r = r.as_ref().unwrap();
            assert_eq!(&ids[q * 10..q * 10 + 10], &r.ids[..]);
            assert_eq!(&dists[q * 10..q * 10 + 10], &r.distances[..]);
            assert_eq!(steps[q] as usize, r.trace.step_count());
        }
        unsafe { relaxann_index_free(h) };
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    let f = fixture();
    let mut h = ptr::null_mut();
    let missing = cstr(Path::new("/nonexistent/x.idx"));
    assert_eq!(unsafe { relaxann_index_open(missing.as_ptr(), 0, ptr::null(), &mut h) }, RelaxannStatus::Data);
    assert!(h.is_null());
    assert!(last_error().contains("/nonexistent/x.idx"));

    let path = cstr(&f.index);
    assert_eq!(unsafe { relaxann_index_open(path.as_ptr(), 9, ptr::null(), &mut h) }, RelaxannStatus::InvalidArgument);
    assert_eq!(unsafe { relaxann_index_open(path.as_ptr(), 2, ptr::null(), &mut h) }, RelaxannStatus::Config);
    assert_eq!(unsafe { relaxann_index_open(ptr::null(), 0, ptr::null(), &mut h) }, RelaxannStatus::NullPointer);

    let h = open(&f.index, RelaxannBackend::Memory);
    let q = vec![0f32; 8];
    let mut ids = vec![0u32; 10];
    let mut p = params(RelaxannEngine::Strict);
    p.k = 40;
    assert_eq!(
        unsafe { relaxann_search(h, q.as_ptr(), 1, 8, &p, ids.as_mut_ptr(), ptr::null_mut(), ptr::null_mut()) },
        RelaxannStatus::Config
    );
    p.k = 10;
    assert_eq!(
        unsafe { relaxann_search(h, q.as_ptr(), 1, 7, &p, ids.as_mut_ptr(), ptr::null_mut(), ptr::null_mut()) },
        RelaxannStatus::Data
    );
    p.engine = 7;
    assert_eq!(
        unsafe { relaxann_search(h, q.as_ptr(), 1, 8, &p, ids.as_mut_ptr(), ptr::null_mut(), ptr::null_mut()) },
        RelaxannStatus::InvalidArgument
    );
    p.engine = 0;
    assert_eq!(
        unsafe { relaxann_search(h, q.as_ptr(), 1, 8, &p, ids.as_mut_ptr(), ptr::null_mut(), ptr::null_mut()) },
        RelaxannStatus::Ok
    );
    assert_eq!(unsafe { relaxann_last_error(ptr::null_mut(), 0) }, 0);
    unsafe { relaxann_index_free(h) };
    unsafe { relaxann_index_free(ptr::null_mut()) };

    let mut r = 0.0;
    assert_eq!(unsafe { relaxann_fill_ratio(128, 1, 64, &mut r) }, RelaxannStatus::Ok);
    assert_eq!(r, 0.09375);
    assert_eq!(unsafe { relaxann_fill_ratio(128, 1, 64, ptr::null_mut()) }, RelaxannStatus::NullPointer);
    assert_eq!(unsafe { relaxann_fill_ratio(0, 1, 64, &mut r) }, RelaxannStatus::Config);
}

#[test]
fn truncated_error_buffer_is_terminated() {
    let mut h = ptr::null_mut();
    let missing = cstr(Path::new("/nonexistent/long/path/to/an/index.idx"));
    unsafe { relaxann_index_open(missing.as_ptr(), 1, ptr::null(), &mut h) };
    let mut buf = [1 as c_char; 8];
    let n = unsafe { relaxann_last_error(buf.as_mut_ptr(), buf.len()) };
    assert!(n > 8);
    assert_eq!(buf[7], 0);
    assert_eq!(unsafe { CStr::from_ptr(buf.as_ptr()) }.to_bytes().len(), 7);
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(relaxann_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

const C_PROGRAM: &str = r#"
#include "relaxann.h"
#include <stdio.h>

int main(int argc, char **argv) {
    RelaxannIndex *h = NULL;
    if (relaxann_index_open(argv[1], RELAXANN_BACKEND_FILE, NULL, &h) != RELAXANN_STATUS_OK) return 1;
    float q[8] = {0};
    uint32_t ids[10];
    RelaxannSearchParams p = {32, 10, 0, RELAXANN_ENGINE_RELAXED, 2};
    RelaxannStatus st = relaxann_search(h, q, 1, relaxann_index_dim(h), &p, ids, NULL, NULL);
    relaxann_index_free(h);
    if (st != RELAXANN_STATUS_OK) return 2;
    printf("%u\n", ids[0]);
    if (relaxann_index_open("/nonexistent", RELAXANN_BACKEND_FILE, NULL, &h) != RELAXANN_STATUS_DATA) return 3;
    return relaxann_last_error(NULL, 0) > 0 ? 0 : 4;
}
"#;

/// Compiles a C program against the generated header and the static library
/// when a C compiler and the archive are present.
#[test]
fn c_program_links_against_the_header() {
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    assert!(include.join("relaxann.h").exists());
    let exe = std::env::current_exe().unwrap();
    let lib_dir = exe.parent().and_then(Path::parent).unwrap();
    let archive = lib_dir.join("librelaxann_ffi.a");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if !archive.exists() || Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler or {} missing", archive.display());
        return;
    }
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let bin = dir.path().join("main");
    let out = Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-o"])
        .arg(&bin)
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&archive)
        .args(["-lpthread", "-ldl", "-lm"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&bin).arg(&f.index).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    let first: u32 = String::from_utf8(run.stdout).unwrap().trim().parse().unwrap();
    assert!(first < 1000);
}
