//! Query engines over a page-resident index.
//!
//! Both engines share one traversal ([`Walker`]); they differ only in when a
//! delivered page is processed relative to the next expansion choice. The
//! executors drive walkers against a backend: a discrete-event simulator for
//! in-memory and simulated backends, and real threads over the
//! [`iostack`](crate::iostack) for file backends.

mod heap;
mod sim;
mod threaded;
mod walker;

use std::io::Write;
use std::str::FromStr;
use std::time::Duration;

pub use heap::MinMaxHeap;
pub use walker::{Action, Expansion, Walker, Work};

use crate::dataset::{recall_at_k, GroundTruth, VectorDataset, VectorRef};
use crate::error::{Error, Result};
use crate::index::IndexMeta;
use crate::iostack::{IoMetrics, IoMode};
use crate::storage::{Backend, BackendKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Engine {
    Strict,
    Relaxed,
}

impl FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strict" => Ok(Engine::Strict),
            "relaxed" => Ok(Engine::Relaxed),
            other => Err(Error::Config(format!("unknown engine `{other}`"))),
        }
    }
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::Strict => "strict",
            Engine::Relaxed => "relaxed",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SearchParams {
    /// Candidate list length.
    pub l: usize,
    pub k: usize,
    pub max_steps: usize,
    pub engine: Engine,
}

impl SearchParams {
    pub fn new(l: usize, k: usize, engine: Engine) -> Self {
        Self {
            l,
            k,
            max_steps: 10_000,
            engine,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::params("k must be >= 1"));
        }
        if self.k > self.l {
            return Err(Error::params(format!("k = {} exceeds L = {}", self.k, self.l)));
        }
        if self.max_steps == 0 {
            return Err(Error::params("max_steps must be >= 1"));
        }
        Ok(())
    }

    pub fn with_engine(self, engine: Engine) -> Self {
        Self { engine, ..self }
    }
}

/// Per-operation compute costs used on the simulated clock.
///
/// Selection (popping the next candidate and issuing its read) sits on the
/// serial path of every step; page processing is what the relaxed engine
/// overlaps with the next read.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComputeModel {
    pub select_ns: f64,
    pub exact_per_dim_ns: f64,
    pub pq_per_subspace_ns: f64,
}

impl Default for ComputeModel {
    fn default() -> Self {
        Self {
            select_ns: 400.0,
            exact_per_dim_ns: 2.0,
            pq_per_subspace_ns: 8.0,
        }
    }
}

impl ComputeModel {
    pub fn ns(&self, w: Work, dim: usize, m: usize) -> u64 {
        let t = w.selects as f64 * self.select_ns
            + w.exact as f64 * dim as f64 * self.exact_per_dim_ns
            + w.pq as f64 * m as f64 * self.pq_per_subspace_ns;
        t.round() as u64
    }

    /// Every cost multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            select_ns: self.select_ns * c,
            exact_per_dim_ns: self.exact_per_dim_ns * c,
            pq_per_subspace_ns: self.pq_per_subspace_ns * c,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepRecord {
    pub step: u32,
    pub expanded_id: u32,
    /// Step whose page revealed `expanded_id`; 0 for the entry point.
    pub source_epoch: u32,
    /// Time the worker spent blocked on this step's page.
    pub io_wait_ns: u64,
    pub compute_ns: u64,
    /// Issue to completion of this step's read.
    pub io_latency_ns: u64,
}

/// Timeline of one query. Times are nanoseconds on the executor clock.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepTrace {
    pub query_id: usize,
    pub steps: Vec<StepRecord>,
    pub compute_spans: Vec<(u64, u64)>,
    pub io_spans: Vec<(u64, u64)>,
    pub start_ns: u64,
    pub end_ns: u64,
    /// Stopped by `max_steps` with candidates left.
    pub exhausted: bool,
}

impl StepTrace {
    pub fn wall_ns(&self) -> u64 {
        self.end_ns - self.start_ns
    }

    pub fn step_count(&self) -> usize {
        self.steps.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueryOutput {
    pub ids: Vec<u32>,
    pub distances: Vec<f32>,
    pub trace: StepTrace,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Clock {
    Simulated,
    Real,
}

#[derive(Debug)]
pub struct BatchOutput {
    pub results: Vec<Result<QueryOutput>>,
    pub wall_ns: u64,
    pub qps: f64,
    pub recall: Option<f64>,
    pub clock: Clock,
    /// I/O stack counters (real-clock runs only).
    pub io: Option<IoMetrics>,
}

impl BatchOutput {
    pub fn traces(&self) -> impl Iterator<Item = &StepTrace> {
        self.results.iter().filter_map(|r| r.as_ref().ok()).map(|q| &q.trace)
    }

    pub fn ids(&self) -> Vec<Vec<u32>> {
        self.results
            .iter()
            .map(|r| r.as_ref().map(|q| q.ids.clone()).unwrap_or_default())
            .collect()
    }

    pub fn mean_steps(&self) -> f64 {
        let (n, s) = self.traces().fold((0usize, 0usize), |(n, s), t| (n + 1, s + t.step_count()));
        if n == 0 {
            0.0
        } else {
            s as f64 / n as f64
        }
    }

    /// Per-step I/O waits across all traces, sorted.
    pub fn io_waits(&self) -> Vec<u64> {
        let mut w: Vec<u64> = self.traces().flat_map(|t| t.steps.iter().map(|s| s.io_wait_ns)).collect();
        w.sort_unstable();
        w
    }

    pub fn first_error(&self) -> Option<&Error> {
        self.results.iter().find_map(|r| r.as_ref().err())
    }
}

/// Nearest-rank percentile of sorted data; 0 when empty.
pub fn percentile(sorted: &[u64], p: f64) -> u64 {
    if sorted.is_empty() {
        return 0;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

#[derive(Clone, Debug)]
pub struct BatchOptions {
    pub workers: usize,
    pub io_mode: IoMode,
    pub compute: ComputeModel,
    /// Force real threads and real time even for in-memory backends.
    pub real_clock: bool,
    /// I/O threads behind the dispatcher (real clock); 0 reads inline.
    pub io_threads: usize,
    pub poll_interval: Duration,
}

impl Default for BatchOptions {
    fn default() -> Self {
        Self {
            workers: 1,
            io_mode: IoMode::WorkerLevel,
            compute: ComputeModel::default(),
            real_clock: false,
            io_threads: 2,
            poll_interval: Duration::from_micros(50),
        }
    }
}

/// Runs every query start-to-finish on one of `opts.workers` workers.
///
/// Per-query failures are reported in place and do not stop the batch.
/// Output ids and distances do not depend on worker count or timing.
pub fn run_query_batch(
    queries: &VectorDataset,
    meta: &IndexMeta,
    backend: &Backend,
    params: &SearchParams,
    opts: &BatchOptions,
    truth: Option<&GroundTruth>,
) -> Result<BatchOutput> {
    params.validate()?;
    if opts.workers == 0 {
        return Err(Error::params("workers must be >= 1"));
    }
    if queries.dim() != meta.header.dim() {
        return Err(Error::DimMismatch {
            expected: meta.header.dim(),
            found: queries.dim(),
        });
    }
    if backend.is_closed() {
        return Err(Error::BackendClosed);
    }
    let real = opts.real_clock || backend.kind() == BackendKind::File;
    let mut out = if real {
        if backend.kind() == BackendKind::Simulated {
            return Err(Error::Config("simulated backends run on the simulated clock".into()));
        }
        threaded::run(queries, meta, backend, params, opts)?
    } else {
        sim::run(queries, meta, backend, params, opts)?
    };
    if let Some(t) = truth {
        out.recall = Some(recall_at_k(&out.ids(), t, params.k)?);
    }
    Ok(out)
}

fn single(query: VectorRef<'_>, meta: &IndexMeta, backend: &Backend, params: &SearchParams) -> Result<QueryOutput> {
    let q = query.to_owned_dataset();
    let out = run_query_batch(&q, meta, backend, params, &BatchOptions::default(), None)?;
    out.results.into_iter().next().expect("one query")
}

/// Best-first search, one blocking read per step.
pub fn search_strict(query: VectorRef<'_>, meta: &IndexMeta, backend: &Backend, params: &SearchParams) -> Result<QueryOutput> {
    single(query, meta, backend, &params.with_engine(Engine::Strict))
}

/// Pipelined search with one-step staleness.
pub fn search_relaxed(query: VectorRef<'_>, meta: &IndexMeta, backend: &Backend, params: &SearchParams) -> Result<QueryOutput> {
    single(query, meta, backend, &params.with_engine(Engine::Relaxed))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OverlapReport {
    /// Time with compute and I/O both active, over wall time.
    pub overlap_ratio: f64,
    pub compute_busy_ns: u64,
    pub io_busy_ns: u64,
    pub wall_ns: u64,
}

fn union(spans: &[(u64, u64)]) -> Vec<(u64, u64)> {
    let mut s: Vec<(u64, u64)> = spans.iter().copied().filter(|(a, b)| b > a).collect();
    s.sort_unstable();
    let mut out: Vec<(u64, u64)> = Vec::with_capacity(s.len());
    for (a, b) in s {
        match out.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

fn intersection_len(a: &[(u64, u64)], b: &[(u64, u64)]) -> u64 {
    let (mut i, mut j, mut total) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        let lo = a[i].0.max(b[j].0);
        let hi = a[i].1.min(b[j].1);
        if hi > lo {
            total += hi - lo;
        }
        if a[i].1 < b[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    total
}

/// Aggregates per-query timelines: sums of busy and overlapped time over the
/// sum of per-query wall times.
pub fn overlap_report<'a>(traces: impl IntoIterator<Item = &'a StepTrace>) -> Result<OverlapReport> {
    let (mut overlap, mut cbusy, mut ibusy, mut wall, mut n) = (0u64, 0u64, 0u64, 0u64, 0usize);
    for t in traces {
        let c = union(&t.compute_spans);
        let io = union(&t.io_spans);
        overlap += intersection_len(&c, &io);
        cbusy += c.iter().map(|(a, b)| b - a).sum::<u64>();
        ibusy += io.iter().map(|(a, b)| b - a).sum::<u64>();
        wall += t.wall_ns();
        n += 1;
    }
    if n == 0 {
        return Err(Error::Empty("trace"));
    }
    Ok(OverlapReport {
        overlap_ratio: if wall == 0 { 0.0 } else { overlap as f64 / wall as f64 },
        compute_busy_ns: cbusy,
        io_busy_ns: ibusy,
        wall_ns: wall,
    })
}

/// Fraction of steps 2..=T whose node was revealed by the immediately
/// preceding step. Zero for traces of one step or fewer.
pub fn freshness_utilization(trace: &StepTrace) -> f64 {
    if trace.steps.len() <= 1 {
        return 0.0;
    }
    let fresh = trace.steps[1..]
        .iter()
        .filter(|s| s.source_epoch + 1 == s.step)
        .count();
    fresh as f64 / (trace.steps.len() - 1) as f64
}

pub const TRACE_CSV_HEADER: &str = "query_id,step,expanded_id,source_epoch,io_wait_us,compute_us";

pub fn write_trace_csv<'a, W: Write>(mut w: W, traces: impl IntoIterator<Item = &'a StepTrace>) -> Result<()> {
    writeln!(w, "{TRACE_CSV_HEADER}")?;
    for t in traces {
        for s in &t.steps {
            writeln!(
                w,
                "{},{},{},{},{:.3},{:.3}",
                t.query_id,
                s.step,
                s.expanded_id,
                s.source_epoch,
                s.io_wait_ns as f64 / 1e3,
                s.compute_ns as f64 / 1e3
            )?;
        }
    }
    Ok(())
}
