//! Experiment harness behind the CLI: build pipeline, recall/QPS sweeps and
//! I/O-mode comparisons, each emitting CSV.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::dataset::{load_vectors, GroundTruth, VecFormat, VectorDataset};
use crate::error::{Error, Result};
use crate::index::{build_index, BuildParams, GraphIndex, IndexMeta};
use crate::iostack::IoMode;
use crate::quantize::{default_m, pq_encode, pq_train};
use crate::search::{overlap_report, percentile, run_query_batch, BatchOptions, ComputeModel, Engine, SearchParams};
use crate::storage::{open_backend, Backend, BackendKind, StorageProfile};

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;

/// Maps an error to its exit code: 2 for configuration and parameter
/// errors, 3 for unreadable or malformed data, 4 for everything else.
pub fn exit_code(e: &Error) -> i32 {
    use Error::*;
    match e {
        Config(_) | InvalidParams(_) | TooFewProfiles(_) | KTooLarge { .. } => EXIT_CONFIG,
        Io(_) | File { .. } | InconsistentDim { .. } | Truncated(_) | InvalidDim(_) | DimMismatch { .. }
        | ElemMismatch(_) | Empty(_) | RowCountMismatch { .. } | RowTooShort { .. } | SubspaceMismatch { .. }
        | InsufficientPoints { .. } | CodeLength { .. } | PageOverflow { .. } | BadMagic | BadVersion(_)
        | Corrupt(_) => EXIT_DATA,
        _ => EXIT_RUNTIME,
    }
}

/// Loads a vector file, picking the format from its extension.
pub fn load_any(path: impl AsRef<Path>) -> Result<VectorDataset> {
    let path = path.as_ref();
    let format = VecFormat::from_path(path)
        .ok_or_else(|| Error::Config(format!("{}: expected .fvecs, .bvecs or .ivecs", path.display())))?;
    load_vectors(path, format)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BuildOptions {
    pub graph: BuildParams,
    /// PQ subspaces; `None` picks [`default_m`].
    pub pq_m: Option<usize>,
    pub pq_iters: usize,
}

impl BuildOptions {
    pub fn new(max_degree: usize) -> Self {
        Self {
            graph: BuildParams::new(max_degree),
            pq_m: None,
            pq_iters: 10,
        }
    }
}

/// Trains PQ, encodes the base set and builds the graph.
pub fn build_pipeline(base: &VectorDataset, opts: &BuildOptions) -> Result<GraphIndex> {
    opts.graph.validate()?;
    let m = opts.pq_m.unwrap_or_else(|| default_m(base.dim()));
    let book = pq_train(base, m, opts.pq_iters, opts.graph.seed)?;
    let codes = pq_encode(base, &book)?;
    build_index(base, &book, &codes, &opts.graph)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub base: Option<PathBuf>,
    pub queries: PathBuf,
    pub gt: Option<PathBuf>,
    pub index: PathBuf,
    pub profile: Option<PathBuf>,
    pub backend: BackendKind,
    pub engine: Engine,
    pub l_sweep: Vec<usize>,
    pub k: usize,
    pub workers: usize,
    /// Worker counts for `compare-io`; defaults to `[1, workers]`.
    pub workers_list: Vec<usize>,
    pub io_mode: IoMode,
    pub output: Option<PathBuf>,
    pub seed: u64,
    pub max_steps: usize,
    pub compute: ComputeModel,
}

fn parse_list(key: &str, v: &str) -> Result<Vec<usize>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| Error::Config(format!("{key}: `{s}` is not an integer"))))
        .collect()
}

impl BenchConfig {
    /// Parses `key = value` lines (`#` comments). Keys: `base`, `queries`,
    /// `gt`, `index`, `profile`, `backend` (file|memory|simulated),
    /// `engine` (strict|relaxed), `l_sweep` (comma list), `k`, `workers`,
    /// `workers_list`, `io_mode` (worker_level|batch_barrier), `output`,
    /// `seed`, `max_steps`, `select_ns`, `exact_per_dim_ns`,
    /// `pq_per_subspace_ns`. `queries` and `index` are required; relative
    /// paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut kv: Vec<(String, String)> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            kv.push((k.trim().to_string(), v.trim().to_string()));
        }
        let path = |v: &str| {
            let p = PathBuf::from(v);
            if p.is_absolute() {
                p
            } else {
                base_dir.join(p)
            }
        };
        let num = |k: &str, v: &str| -> Result<u64> {
            v.parse().map_err(|_| Error::Config(format!("{k}: `{v}` is not an integer")))
        };
        let float = |k: &str, v: &str| -> Result<f64> {
            v.parse().map_err(|_| Error::Config(format!("{k}: `{v}` is not a number")))
        };
        let mut cfg = BenchConfig {
            base: None,
            queries: PathBuf::new(),
            gt: None,
            index: PathBuf::new(),
            profile: None,
            backend: BackendKind::Simulated,
            engine: Engine::Strict,
            l_sweep: vec![10, 20, 40, 80],
            k: 10,
            workers: 1,
            workers_list: Vec::new(),
            io_mode: IoMode::WorkerLevel,
            output: None,
            seed: 0,
            max_steps: SearchParams::new(1, 1, Engine::Strict).max_steps,
            compute: ComputeModel::default(),
        };
        let (mut have_queries, mut have_index) = (false, false);
        for (k, v) in &kv {
            match k.as_str() {
                "base" => cfg.base = Some(path(v)),
                "queries" => {
                    cfg.queries = path(v);
                    have_queries = true;
                }
                "gt" => cfg.gt = Some(path(v)),
                "index" => {
                    cfg.index = path(v);
                    have_index = true;
                }
                "profile" => cfg.profile = Some(path(v)),
                "backend" => cfg.backend = v.parse()?,
                "engine" => cfg.engine = v.parse()?,
                "l_sweep" => cfg.l_sweep = parse_list(k, v)?,
                "k" => cfg.k = num(k, v)? as usize,
                "workers" => cfg.workers = num(k, v)? as usize,
                "workers_list" => cfg.workers_list = parse_list(k, v)?,
                "io_mode" => cfg.io_mode = v.parse()?,
                "output" => cfg.output = Some(path(v)),
                "seed" => cfg.seed = num(k, v)?,
                "max_steps" => cfg.max_steps = num(k, v)? as usize,
                "select_ns" => cfg.compute.select_ns = float(k, v)?,
                "exact_per_dim_ns" => cfg.compute.exact_per_dim_ns = float(k, v)?,
                "pq_per_subspace_ns" => cfg.compute.pq_per_subspace_ns = float(k, v)?,
                other => return Err(Error::Config(format!("unknown key `{other}`"))),
            }
        }
        if !have_queries || !have_index {
            return Err(Error::Config("`queries` and `index` are required".into()));
        }
        if cfg.workers_list.is_empty() {
            cfg.workers_list = if cfg.workers == 1 { vec![1] } else { vec![1, cfg.workers] };
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.l_sweep.is_empty() {
            return Err(Error::Config("l_sweep is empty".into()));
        }
        if self.l_sweep.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("l_sweep must be strictly ascending".into()));
        }
        if self.workers == 0 || self.workers_list.contains(&0) {
            return Err(Error::Config("worker counts must be >= 1".into()));
        }
        if self.backend == BackendKind::Simulated && self.profile.is_none() {
            return Err(Error::Config("simulated backend needs `profile`".into()));
        }
        Ok(())
    }

    fn storage_profile(&self) -> Result<Option<StorageProfile>> {
        match (&self.profile, self.backend) {
            (Some(p), BackendKind::Simulated) => Ok(Some(StorageProfile::load(p)?)),
            _ => Ok(None),
        }
    }

    fn options(&self, workers: usize, io_mode: IoMode) -> BatchOptions {
        BatchOptions {
            workers,
            io_mode,
            compute: self.compute,
            ..BatchOptions::default()
        }
    }
}

/// Everything a run needs, loaded once.
pub struct Loaded {
    pub meta: IndexMeta,
    pub backend: Backend,
    pub queries: VectorDataset,
    pub truth: Option<GroundTruth>,
}

pub fn load(cfg: &BenchConfig, need_truth: bool) -> Result<Loaded> {
    let (meta, backend) = open_backend(cfg.backend, &cfg.index, cfg.storage_profile()?)?;
    let queries = load_any(&cfg.queries)?;
    let truth = match &cfg.gt {
        Some(p) => Some(GroundTruth::read(p, None)?),
        None if need_truth => return Err(Error::Config("ground truth (`gt`) is required".into())),
        None => None,
    };
    Ok(Loaded {
        meta,
        backend,
        queries,
        truth,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    pub l: usize,
    pub recall: f64,
    pub qps: f64,
    pub mean_steps: f64,
    pub overlap_ratio: f64,
    pub p99_io_wait_us: f64,
}

pub fn sweep_loaded(cfg: &BenchConfig, data: &Loaded) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let truth = data
        .truth
        .as_ref()
        .ok_or_else(|| Error::Config("ground truth (`gt`) is required".into()))?;
    let mut rows = Vec::with_capacity(cfg.l_sweep.len());
    for &l in &cfg.l_sweep {
        let params = SearchParams {
            l,
            k: cfg.k,
            max_steps: cfg.max_steps,
            engine: cfg.engine,
        };
        let out = run_query_batch(
            &data.queries,
            &data.meta,
            &data.backend,
            &params,
            &cfg.options(cfg.workers, cfg.io_mode),
            Some(truth),
        )?;
        if let Some(e) = out.first_error() {
            return Err(Error::QueryFailed(format!("L={l}: {e}")));
        }
        rows.push(SweepRow {
            l,
            recall: out.recall.unwrap_or(0.0),
            qps: out.qps,
            mean_steps: out.mean_steps(),
            overlap_ratio: overlap_report(out.traces())?.overlap_ratio,
            p99_io_wait_us: percentile(&out.io_waits(), 99.0) as f64 / 1e3,
        });
    }
    Ok(rows)
}

pub fn sweep(cfg: &BenchConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    sweep_loaded(cfg, &load(cfg, true)?)
}

pub fn write_sweep_csv<W: Write>(mut w: W, rows: &[SweepRow]) -> Result<()> {
    writeln!(w, "L,recall@10,qps,mean_steps,overlap_ratio,p99_io_wait")?;
    for r in rows {
        writeln!(
            w,
            "{},{:.4},{:.1},{:.3},{:.4},{:.3}",
            r.l, r.recall, r.qps, r.mean_steps, r.overlap_ratio, r.p99_io_wait_us
        )?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CompareRow {
    pub io_mode: IoMode,
    pub workers: usize,
    pub qps: f64,
    pub p50_wait_us: f64,
    pub p99_wait_us: f64,
}

/// Runs the same batch under both I/O modes at each worker count. Uses the
/// first L of the sweep.
pub fn compare_io_loaded(cfg: &BenchConfig, data: &Loaded) -> Result<Vec<CompareRow>> {
    cfg.validate()?;
    let params = SearchParams {
        l: cfg.l_sweep[0],
        k: cfg.k,
        max_steps: cfg.max_steps,
        engine: cfg.engine,
    };
    let mut rows = Vec::new();
    for &workers in &cfg.workers_list {
        for mode in [IoMode::WorkerLevel, IoMode::BatchBarrier] {
            let out = run_query_batch(&data.queries, &data.meta, &data.backend, &params, &cfg.options(workers, mode), None)?;
            if let Some(e) = out.first_error() {
                return Err(Error::QueryFailed(e.to_string()));
            }
            let waits = out.io_waits();
            rows.push(CompareRow {
                io_mode: mode,
                workers,
                qps: out.qps,
                p50_wait_us: percentile(&waits, 50.0) as f64 / 1e3,
                p99_wait_us: percentile(&waits, 99.0) as f64 / 1e3,
            });
        }
    }
    Ok(rows)
}

pub fn compare_io(cfg: &BenchConfig) -> Result<Vec<CompareRow>> {
    cfg.validate()?;
    compare_io_loaded(cfg, &load(cfg, false)?)
}

pub fn write_compare_csv<W: Write>(mut w: W, rows: &[CompareRow]) -> Result<()> {
    writeln!(w, "io_mode,workers,qps,p50_wait,p99_wait")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{:.1},{:.3},{:.3}",
            r.io_mode.name(),
            r.workers,
            r.qps,
            r.p50_wait_us,
            r.p99_wait_us
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parsing() {
        let text = "# sweep\nqueries = q.fvecs\nindex = /abs/x.idx\nbackend = memory\nl_sweep = 10, 20,40\nworkers = 8\nio_mode = batch_barrier\n";
        let cfg = BenchConfig::parse(text, Path::new("/data")).unwrap();
        assert_eq!(cfg.queries, PathBuf::from("/data/q.fvecs"));
        assert_eq!(cfg.index, PathBuf::from("/abs/x.idx"));
        assert_eq!(cfg.l_sweep, vec![10, 20, 40]);
        assert_eq!(cfg.workers_list, vec![1, 8]);
        assert_eq!(cfg.io_mode, IoMode::BatchBarrier);
    }

    #[test]
    fn config_errors() {
        let dir = Path::new(".");
        let ok = "queries = q.fvecs\nindex = i\nbackend = memory\n";
        assert!(BenchConfig::parse(ok, dir).is_ok());
        for bad in [
            "index = i\nbackend = memory\n",
            "queries = q.fvecs\nindex = i\nbackend = memory\nl_sweep = \n",
            "queries = q.fvecs\nindex = i\nbackend = memory\nl_sweep = 20,10\n",
            "queries = q.fvecs\nindex = i\n",
            "queries = q.fvecs\nindex = i\nbackend = memory\nnope = 1\n",
            "queries = q.fvecs\nindex = i\nbackend = tape\n",
        ] {
            let e = BenchConfig::parse(bad, dir).unwrap_err();
            assert_eq!(exit_code(&e), EXIT_CONFIG, "{bad}");
        }
    }

    #[test]
    fn exit_codes_are_distinct() {
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_CONFIG);
        assert_eq!(exit_code(&Error::BadMagic), EXIT_DATA);
        assert_eq!(exit_code(&Error::BackendClosed), EXIT_RUNTIME);
        assert_eq!(exit_code(&Error::QueryFailed("x".into())), EXIT_RUNTIME);
    }
}
