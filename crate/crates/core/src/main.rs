use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use relaxann::bench::{self, BenchConfig, BuildOptions};
use relaxann::dataset::{brute_force_knn, gen_synthetic, write_ids, write_vectors, ElemType, VecFormat, VectorDataset};
use relaxann::index::{write_index, BuildParams};
use relaxann::iostack::IoMode;
use relaxann::quantize::{default_m, pq_encode, pq_train};
use relaxann::search::{overlap_report, run_query_batch, write_trace_csv, BatchOptions, ComputeModel, Engine, SearchParams};
use relaxann::storage::{open_backend, BackendKind, StorageProfile};
use relaxann::tuner::{self, build_sample_index, profile_degree, select_degree};
use relaxann::{Error, Result};

/// Storage-resident graph ANN search: build, search, tune and benchmark.
///
/// Exit codes: 0 success, 2 configuration or parameter error, 3 unreadable or
/// malformed data, 4 runtime failure.
#[derive(Parser)]
#[command(name = "relaxann", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic Gaussian-blob dataset.
    Gen(GenArgs),
    /// Compute exact k-nearest-neighbor ground truth by brute force.
    Gt(GtArgs),
    /// Train PQ and build a graph index file.
    Build(BuildArgs),
    /// Profile sample indices at several degrees and select one.
    Tune(TuneArgs),
    /// Run a query batch against an index.
    Search(SearchArgs),
    /// Recall/QPS sweep over candidate list lengths (CSV).
    Sweep(ConfigArgs),
    /// Compare worker-level and batch-barrier I/O completion (CSV).
    CompareIo(ConfigArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Number of base vectors.
    #[arg(long)]
    count: usize,
    #[arg(long)]
    dim: usize,
    /// Element type: u8, i8 or f32.
    #[arg(long, default_value = "f32")]
    elem: ElemType,
    #[arg(long, default_value_t = 16)]
    clusters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file (.fvecs or .bvecs).
    #[arg(long)]
    out: PathBuf,
    /// Also generate this many queries from the same distribution.
    #[arg(long, default_value_t = 0)]
    queries: usize,
    /// Output file for the queries.
    #[arg(long, requires = "queries")]
    queries_out: Option<PathBuf>,
}

#[derive(Args)]
struct GtArgs {
    #[arg(long)]
    base: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Neighbor ids (.ivecs).
    #[arg(long)]
    out: PathBuf,
    /// Neighbor distances (.fvecs).
    #[arg(long)]
    dist_out: Option<PathBuf>,
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long)]
    base: PathBuf,
    /// Index file to write.
    #[arg(long)]
    out: PathBuf,
    /// Maximum out-degree R.
    #[arg(long, default_value_t = 32, conflicts_with = "degree_file")]
    degree: usize,
    /// Read R from a file written by `tune --selected-out`.
    #[arg(long)]
    degree_file: Option<PathBuf>,
    /// Candidate list length during construction (default max(2R, 64)).
    #[arg(long)]
    l_build: Option<usize>,
    #[arg(long, default_value_t = 1.2)]
    alpha: f32,
    /// PQ subspaces (default: dim/4, dim/8 or dim/16, whichever divides).
    #[arg(long)]
    pq_m: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pq_iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct BackendArgs {
    /// Storage backend: file, memory or simulated.
    #[arg(long, default_value = "simulated")]
    backend: BackendKind,
    /// Storage profile (key = value; required for the simulated backend).
    #[arg(long)]
    profile: Option<PathBuf>,
}

impl BackendArgs {
    fn profile(&self) -> Result<Option<StorageProfile>> {
        match (&self.profile, self.backend) {
            (Some(p), BackendKind::Simulated) => Ok(Some(StorageProfile::load(p)?)),
            (None, BackendKind::Simulated) => Err(Error::Config("--profile is required for the simulated backend".into())),
            _ => Ok(None),
        }
    }
}

#[derive(Args)]
struct ComputeArgs {
    /// Simulated cost of one expansion choice, ns.
    #[arg(long)]
    select_ns: Option<f64>,
    /// Simulated exact-distance cost per dimension, ns.
    #[arg(long)]
    exact_per_dim_ns: Option<f64>,
    /// Simulated PQ-distance cost per subspace, ns.
    #[arg(long)]
    pq_per_subspace_ns: Option<f64>,
}

impl ComputeArgs {
    fn model(&self) -> ComputeModel {
        let d = ComputeModel::default();
        ComputeModel {
            select_ns: self.select_ns.unwrap_or(d.select_ns),
            exact_per_dim_ns: self.exact_per_dim_ns.unwrap_or(d.exact_per_dim_ns),
            pq_per_subspace_ns: self.pq_per_subspace_ns.unwrap_or(d.pq_per_subspace_ns),
        }
    }
}

#[derive(Args)]
struct TuneArgs {
    #[arg(long)]
    base: PathBuf,
    /// Sample queries (at least 100 are used).
    #[arg(long)]
    queries: PathBuf,
    #[command(flatten)]
    backend: BackendArgs,
    /// Candidate degrees, comma separated (default 32,64,128,192,256 clipped to the page).
    #[arg(long, value_delimiter = ',')]
    degrees: Vec<usize>,
    /// Base vectors sampled for the sample indices.
    #[arg(long, default_value_t = 100_000)]
    sample: usize,
    /// Sample queries used per profile.
    #[arg(long, default_value_t = 200)]
    query_count: usize,
    #[arg(long, default_value_t = 64)]
    l: usize,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long)]
    pq_m: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    compute: ComputeArgs,
    /// Report CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// One-line file with the selected degree.
    #[arg(long)]
    selected_out: Option<PathBuf>,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    #[command(flatten)]
    backend: BackendArgs,
    /// strict or relaxed.
    #[arg(long, default_value = "strict")]
    engine: Engine,
    /// Candidate list length.
    #[arg(long, default_value_t = 64)]
    l: usize,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 10_000)]
    max_steps: usize,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// worker_level or batch_barrier.
    #[arg(long, default_value = "worker_level")]
    io_mode: IoMode,
    #[command(flatten)]
    compute: ComputeArgs,
    /// Result ids (.ivecs).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Result distances (.fvecs).
    #[arg(long)]
    dist_out: Option<PathBuf>,
    /// Per-step trace CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Ground truth ids (.ivecs) for recall.
    #[arg(long)]
    gt: Option<PathBuf>,
}

#[derive(Args)]
struct ConfigArgs {
    /// Bench config file (key = value).
    #[arg(long)]
    config: PathBuf,
    /// CSV output; overrides `output` in the config, default stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::file(path, e))?))
}

fn format_for(path: &Path) -> Result<VecFormat> {
    VecFormat::from_path(path).ok_or_else(|| Error::Config(format!("{}: unknown vector extension", path.display())))
}

fn gen(a: GenArgs) -> Result<()> {
    let total = a.count + a.queries;
    let all = gen_synthetic(total, a.dim, a.elem, a.seed, a.clusters)?;
    let (base, queries) = all.split_at(a.count);
    write_vectors(&a.out, &base, format_for(&a.out)?)?;
    if let Some(q) = &a.queries_out {
        write_vectors(q, &queries, format_for(q)?)?;
    }
    Ok(())
}

fn gt(a: GtArgs) -> Result<()> {
    let base = bench::load_any(&a.base)?;
    let queries = bench::load_any(&a.queries)?;
    let truth = brute_force_knn(&base, &queries, a.k)?;
    let ids: Vec<i32> = truth.ids.iter().map(|&i| i as i32).collect();
    write_ids(&a.out, a.k, &ids)?;
    if let Some(d) = &a.dist_out {
        write_vectors(d, &VectorDataset::from_f32(a.k, truth.distances.clone())?, VecFormat::Fvecs)?;
    }
    Ok(())
}

fn build(a: BuildArgs) -> Result<()> {
    let degree = match &a.degree_file {
        Some(p) => tuner::read_selected(p)?,
        None => a.degree,
    };
    let base = bench::load_any(&a.base)?;
    let mut graph = BuildParams::new(degree);
    graph.alpha = a.alpha;
    graph.seed = a.seed;
    if let Some(l) = a.l_build {
        graph.l_build = l;
    }
    let idx = bench::build_pipeline(
        &base,
        &BuildOptions {
            graph,
            pq_m: a.pq_m,
            pq_iters: a.pq_iters,
        },
    )?;
    write_index(&idx, &a.out)
}

fn tune(a: TuneArgs) -> Result<()> {
    if a.backend.backend == BackendKind::File {
        return Err(Error::Config("tuning profiles in-memory or simulated backends".into()));
    }
    let profile = a.backend.profile()?;
    let base = bench::load_any(&a.base)?;
    let sample = base.sample(a.sample, a.seed);
    let all_queries = bench::load_any(&a.queries)?;
    let n = a.query_count.min(all_queries.count());
    let queries = all_queries.select(&(0..n).collect::<Vec<_>>());
    let degrees = if a.degrees.is_empty() {
        tuner::degree_grid(base.dim(), base.elem().size())?
    } else {
        a.degrees.clone()
    };
    let m = a.pq_m.unwrap_or_else(|| default_m(base.dim()));
    let book = pq_train(&sample, m, 10, a.seed)?;
    let codes = pq_encode(&sample, &book)?;
    let opts = BatchOptions {
        workers: a.workers,
        compute: a.compute.model(),
        ..BatchOptions::default()
    };
    let mut profiles = Vec::with_capacity(degrees.len());
    for &d in &degrees {
        let idx = Arc::new(build_sample_index(&sample, &book, &codes, d, a.seed)?);
        let params = SearchParams::new(a.l.max(10), 10, Engine::Strict);
        profiles.push(profile_degree(&idx, a.backend.backend, profile, &queries, &params, &opts)?);
    }
    let report = select_degree(&profiles)?;
    match &a.out {
        Some(p) => report.write_csv(create(p)?)?,
        None => report.write_csv(std::io::stdout().lock())?,
    }
    if let Some(p) = &a.selected_out {
        report.write_selected(p)?;
    }
    Ok(())
}

fn search(a: SearchArgs) -> Result<()> {
    let (meta, backend) = open_backend(a.backend.backend, &a.index, a.backend.profile()?)?;
    let queries = bench::load_any(&a.queries)?;
    let truth = match &a.gt {
        Some(p) => Some(relaxann::dataset::GroundTruth::read(p, None)?),
        None => None,
    };
    let params = SearchParams {
        l: a.l,
        k: a.k,
        max_steps: a.max_steps,
        engine: a.engine,
    };
    let opts = BatchOptions {
        workers: a.workers,
        io_mode: a.io_mode,
        compute: a.compute.model(),
        ..BatchOptions::default()
    };
    let out = run_query_batch(&queries, &meta, &backend, &params, &opts, truth.as_ref())?;
    let failed = out.results.iter().filter(|r| r.is_err()).count();
    if let Some(p) = &a.out {
        let mut ids = Vec::with_capacity(queries.count() * a.k);
        for r in &out.results {
            let row = r.as_ref().map(|q| q.ids.as_slice()).unwrap_or(&[]);
            ids.extend((0..a.k).map(|i| row.get(i).map_or(-1, |&x| x as i32)));
        }
        write_ids(p, a.k, &ids)?;
    }
    if let Some(p) = &a.dist_out {
        let mut d = Vec::with_capacity(queries.count() * a.k);
        for r in &out.results {
            let row = r.as_ref().map(|q| q.distances.as_slice()).unwrap_or(&[]);
            d.extend((0..a.k).map(|i| row.get(i).copied().unwrap_or(f32::INFINITY)));
        }
        write_vectors(p, &VectorDataset::from_f32(a.k, d)?, VecFormat::Fvecs)?;
    }
    if let Some(p) = &a.trace {
        write_trace_csv(create(p)?, out.traces())?;
    }
    let mut err = std::io::stderr().lock();
    write!(err, "queries={} qps={:.1} mean_steps={:.2}", queries.count(), out.qps, out.mean_steps())?;
    if let Some(r) = out.recall {
        write!(err, " recall@{}={:.4}", a.k, r)?;
    }
    if let Ok(o) = overlap_report(out.traces()) {
        write!(err, " overlap={:.3}", o.overlap_ratio)?;
    }
    writeln!(err)?;
    if failed > 0 {
        let first = out.first_error().expect("failures present");
        return Err(Error::QueryFailed(format!("{failed} of {} queries; first: {first}", queries.count())));
    }
    Ok(())
}

fn with_output(cfg: &BenchConfig, out: &Option<PathBuf>, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match out.as_ref().or(cfg.output.as_ref()) {
        Some(p) => {
            let mut w = create(p)?;
            f(&mut w)?;
            w.flush()?;
            Ok(())
        }
        None => f(&mut std::io::stdout().lock()),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Gen(a) => gen(a),
        Cmd::Gt(a) => gt(a),
        Cmd::Build(a) => build(a),
        Cmd::Tune(a) => tune(a),
        Cmd::Search(a) => search(a),
        Cmd::Sweep(a) => {
            let cfg = BenchConfig::load(&a.config)?;
            let rows = bench::sweep(&cfg)?;
            with_output(&cfg, &a.out, |w| bench::write_sweep_csv(w, &rows))
        }
        Cmd::CompareIo(a) => {
            let cfg = BenchConfig::load(&a.config)?;
            let rows = bench::compare_io(&cfg)?;
            with_output(&cfg, &a.out, |w| bench::write_compare_csv(w, &rows))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::from(bench::EXIT_OK as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(bench::exit_code(&e) as u8)
        }
    }
}
