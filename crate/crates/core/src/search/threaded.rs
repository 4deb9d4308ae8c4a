//! Real-clock executor: one OS thread per worker, reads through the I/O stack.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Instant;

use super::{Action, BatchOptions, BatchOutput, Clock, QueryOutput, SearchParams, StepRecord, StepTrace, Walker};
use crate::dataset::VectorDataset;
use crate::error::{Error, Result};
use crate::index::IndexMeta;
use crate::iostack::{BufferSlot, IoStack, IoStackConfig};
use crate::storage::Backend;

pub(super) fn run(
    queries: &VectorDataset,
    meta: &IndexMeta,
    backend: &Backend,
    params: &SearchParams,
    opts: &BatchOptions,
) -> Result<BatchOutput> {
    let n = queries.count();
    let workers = opts.workers.min(n.max(1));
    let io = IoStack::new(
        backend,
        IoStackConfig {
            workers,
            io_threads: opts.io_threads,
            poll_interval: opts.poll_interval,
            mode: opts.io_mode,
        },
    )?;
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<QueryOutput>>>> = Mutex::new((0..n).map(|_| None).collect());
    let start = io.now_ns();
    io.serve(|| {
        thread::scope(|s| {
            for w in 0..workers {
                let (io, next, results) = (&io, &next, &results);
                s.spawn(move || {
                    io.register_worker(w).expect("worker in range");
                    let mut buffer = BufferSlot::A;
                    loop {
                        let q = next.fetch_add(1, Ordering::Relaxed);
                        if q >= n {
                            break;
                        }
                        let out = run_one(io, w, q, queries, meta, params, opts, &mut buffer);
                        results.lock().unwrap()[q] = Some(out);
                    }
                    io.leave(w).expect("worker in range");
                });
            }
        })
    });
    let wall = io.now_ns() - start;
    let results: Vec<Result<QueryOutput>> = results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every query claimed"))
        .collect();
    Ok(BatchOutput {
        qps: if wall == 0 { f64::INFINITY } else { n as f64 / (wall as f64 / 1e9) },
        results,
        wall_ns: wall,
        recall: None,
        clock: Clock::Real,
        io: Some(io.metrics()),
    })
}

#[allow(clippy::too_many_arguments)]
fn run_one(
    io: &IoStack<'_>,
    w: usize,
    q: usize,
    queries: &VectorDataset,
    meta: &IndexMeta,
    params: &SearchParams,
    opts: &BatchOptions,
    buffer: &mut BufferSlot,
) -> Result<QueryOutput> {
    let mut trace = StepTrace {
        query_id: q,
        start_ns: io.now_ns(),
        ..StepTrace::default()
    };
    let mut walker = Walker::new(meta, queries.row(q), params)?;
    let mut outstanding: Option<(u64, u64)> = None;
    let mut waits: Vec<(u64, u64)> = Vec::new();
    let mut compute: Vec<u64> = Vec::new();
    let result = (|| -> Result<()> {
        loop {
            let t0 = io.now_ns();
            let clock = Instant::now();
            let (action, _) = walker.resume()?;
            let spent = clock.elapsed().as_nanos() as u64;
            if spent > 0 {
                trace.compute_spans.push((t0, t0 + spent));
            }
            // Real-clock segments are charged to the latest selected step.
            compute.resize(walker.steps().len(), 0);
            if let Some(last) = compute.last_mut() {
                *last += spent;
            }
            match action {
                Action::Submit(node) => {
                    let epoch = io.submit(w, node, *buffer)?;
                    *buffer = buffer.other();
                    outstanding = Some((epoch, io.now_ns()));
                }
                Action::Await => {
                    let (epoch, issued) = outstanding.take().ok_or_else(|| {
                        Error::ProtocolViolation("await with nothing outstanding".into())
                    })?;
                    let ready = io.now_ns();
                    let page = io.await_completion(w, epoch, opts.io_mode)?;
                    let arrived = io.now_ns();
                    let done = io.completed_at_ns(w).max(issued);
                    trace.io_spans.push((issued, done));
                    waits.push((arrived - ready, done - issued));
                    walker.deliver(&page)?;
                }
                Action::Done => return Ok(()),
            }
        }
    })();
    if let Some((epoch, _)) = outstanding {
        // Never leave a read in flight on a reused slot.
        drop(io.await_completion(w, epoch, opts.io_mode));
    }
    result?;
    trace.end_ns = io.now_ns();
    let (ids, distances, expansions, exhausted) = walker.into_results();
    trace.exhausted = exhausted;
    trace.steps = expansions
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let (wait, lat) = waits.get(i).copied().unwrap_or((0, 0));
            StepRecord {
                step: e.step,
                expanded_id: e.node,
                source_epoch: e.source_epoch,
                io_wait_ns: wait,
                compute_ns: compute.get(i).copied().unwrap_or(0),
                io_latency_ns: lat,
            }
        })
        .collect();
    Ok(QueryOutput { ids, distances, trace })
}
