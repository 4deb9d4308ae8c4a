use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use relaxann::index::read_index_header;
use sha2::{Digest, Sha256};

fn relaxann(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relaxann")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = relaxann(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn digest(p: &Path) -> Vec<u8> {
    Sha256::digest(std::fs::read(p).unwrap()).to_vec()
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let f = Self { _dir: dir, root };
        ok(&[
            "gen", "--count", "2000", "--dim", "16", "--seed", "3", "--queries", "120",
            "--out", s(&f.p("base.fvecs")), "--queries-out", s(&f.p("q.fvecs")),
        ]);
        ok(&["gt", "--base", s(&f.p("base.fvecs")), "--queries", s(&f.p("q.fvecs")), "--out", s(&f.p("gt.ivecs"))]);
        ok(&["build", "--base", s(&f.p("base.fvecs")), "--out", s(&f.p("a.idx")), "--degree", "16", "--seed", "9"]);
        std::fs::write(
            f.p("ssd.profile"),
            "device_count = 2\nbase_latency_us = 60\ntail_probability = 0.02\ntail_latency_us = 600\nseed = 4\n",
        )
        .unwrap();
        std::fs::write(
            f.p("bench.cfg"),
            "# sweep\nqueries = q.fvecs\ngt = gt.ivecs\nindex = a.idx\nprofile = ssd.profile\nbackend = simulated\n\
             engine = relaxed\nl_sweep = 10,20,40,80\nworkers = 4\nworkers_list = 1,8\n",
        )
        .unwrap();
        f
    }

    fn p(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }
}

#[test]
fn build_is_reproducible() {
    let f = Fixture::new();
    ok(&["build", "--base", s(&f.p("base.fvecs")), "--out", s(&f.p("b.idx")), "--degree", "16", "--seed", "9"]);
    assert_eq!(digest(&f.p("a.idx")), digest(&f.p("b.idx")));
    assert_eq!(read_index_header(f.p("a.idx")).unwrap().max_degree, 16);
}

#[test]
fn search_reports_recall_and_writes_outputs() {
    let f = Fixture::new();
    let out = ok(&[
        "search", "--index", s(&f.p("a.idx")), "--queries", s(&f.p("q.fvecs")), "--backend", "file",
        "--engine", "relaxed", "--l", "48", "--workers", "4", "--gt", s(&f.p("gt.ivecs")),
        "--out", s(&f.p("res.ivecs")), "--trace", s(&f.p("trace.csv")),
    ]);
    let line = String::from_utf8_lossy(&out.stderr);
    let recall: f64 = line
        .split_whitespace()
        .find_map(|t| t.strip_prefix("recall@10="))
        .unwrap()
        .parse()
        .unwrap();
    assert!(recall >= 0.9, "{line}");
    let trace = std::fs::read_to_string(f.p("trace.csv")).unwrap();
    assert_eq!(trace.lines().next().unwrap(), "query_id,step,expanded_id,source_epoch,io_wait_us,compute_us");
    let (k, ids) = relaxann::dataset::read_ids(f.p("res.ivecs")).unwrap();
    assert_eq!((k, ids.len()), (10, 1200));
}

#[test]
fn sweep_is_monotone_and_reproducible() {
    let f = Fixture::new();
    let cfg = f.p("bench.cfg");
    ok(&["sweep", "--config", s(&cfg), "--out", s(&f.p("s1.csv"))]);
    ok(&["sweep", "--config", s(&cfg), "--out", s(&f.p("s2.csv"))]);
    let text = std::fs::read_to_string(f.p("s1.csv")).unwrap();
    assert_eq!(text, std::fs::read_to_string(f.p("s2.csv")).unwrap());
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "L,recall@10,qps,mean_steps,overlap_ratio,p99_io_wait");
    let recalls: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(recalls.len(), 4);
    assert!(recalls.windows(2).all(|w| w[1] >= w[0]), "{recalls:?}");
}

#[test]
fn compare_io_lists_both_modes() {
    let f = Fixture::new();
    let out = ok(&["compare-io", "--config", s(&f.p("bench.cfg"))]);
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "io_mode,workers,qps,p50_wait,p99_wait");
    let keys: Vec<String> = rows[1..].iter().map(|r| r.split(',').take(2).collect::<Vec<_>>().join(",")).collect();
    assert_eq!(keys, ["worker_level,1", "batch_barrier,1", "worker_level,8", "batch_barrier,8"]);
}

#[test]
fn tune_feeds_build() {
    let f = Fixture::new();
    ok(&[
        "tune", "--base", s(&f.p("base.fvecs")), "--queries", s(&f.p("q.fvecs")), "--profile", s(&f.p("ssd.profile")),
        "--degrees", "8,16,32", "--query-count", "100", "--out", s(&f.p("tune.csv")), "--selected-out", s(&f.p("deg")),
    ]);
    let csv = std::fs::read_to_string(f.p("tune.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert_eq!(csv.lines().filter(|l| l.ends_with(",1")).count(), 1);
    ok(&["build", "--base", s(&f.p("base.fvecs")), "--out", s(&f.p("t.idx")), "--degree-file", s(&f.p("deg"))]);
    let d: u32 = std::fs::read_to_string(f.p("deg")).unwrap().trim().parse().unwrap();
    assert_eq!(read_index_header(f.p("t.idx")).unwrap().max_degree, d);
}

#[test]
fn exit_codes() {
    let f = Fixture::new();
    let code = |args: &[&str]| relaxann(args).status.code().unwrap();
    assert_eq!(code(&["build", "--base", s(&f.p("missing.fvecs")), "--out", s(&f.p("x.idx"))]), 3);
    std::fs::write(f.p("junk.fvecs"), [1u8, 2, 3]).unwrap();
    assert_eq!(code(&["build", "--base", s(&f.p("junk.fvecs")), "--out", s(&f.p("x.idx"))]), 3);
    assert_eq!(code(&["search", "--index", s(&f.p("a.idx")), "--queries", s(&f.p("q.fvecs"))]), 2);
    std::fs::write(f.p("empty.cfg"), "queries = q.fvecs\nindex = a.idx\nbackend = memory\nl_sweep =\n").unwrap();
    assert_eq!(code(&["sweep", "--config", s(&f.p("empty.cfg"))]), 2);
    assert_eq!(code(&["frobnicate"]), 2);

    // A neighbor id past the node count fails every query that reaches it.
    let idx = f.p("a.idx");
    let h = read_index_header(&idx).unwrap();
    let mut bytes = std::fs::read(&idx).unwrap();
    let slot = (h.page_offset(h.entry_point) as usize) + 16 * 4 + 4;
    bytes[slot..slot + 4].copy_from_slice(&9_999_999u32.to_le_bytes());
    std::fs::write(f.p("bad.idx"), bytes).unwrap();
    assert_eq!(
        code(&["search", "--index", s(&f.p("bad.idx")), "--queries", s(&f.p("q.fvecs")), "--backend", "file"]),
        4
    );
}
