//! Discrete-event executor on a simulated clock.
//!
//! Each worker owns a compute lane priced by a [`ComputeModel`]; reads go
//! through one shared [`LatencyModel`] (or complete instantly for in-memory
//! backends). Reads are scheduled in event order, so issue times reaching the
//! model are non-decreasing and a run is a pure function of its inputs.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::{BatchOptions, BatchOutput, Clock, QueryOutput, SearchParams, StepRecord, StepTrace, Walker};
use crate::dataset::VectorDataset;
use crate::error::{Error, Result};
use crate::index::{IndexMeta, PAGE_SIZE};
use crate::iostack::IoMode;
use crate::storage::{Backend, BackendKind, LatencyModel, Page, SimTime};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Kind {
    Resume,
    Issue,
    Ready,
    Arrive,
    Deliver,
}

struct Lane<'a> {
    walker: Option<Walker<'a>>,
    query: usize,
    trace: StepTrace,
    node: u32,
    issued: SimTime,
    completes: SimTime,
    ready: SimTime,
    page: Box<Page>,
    waits: Vec<(u64, u64)>,
}

struct Sim<'a> {
    queries: &'a VectorDataset,
    meta: &'a IndexMeta,
    backend: &'a Backend,
    params: &'a SearchParams,
    opts: &'a BatchOptions,
    model: Option<LatencyModel>,
    events: BinaryHeap<Reverse<(SimTime, u64, usize, Kind)>>,
    seq: u64,
    lanes: Vec<Lane<'a>>,
    next_query: usize,
    results: Vec<Option<Result<QueryOutput>>>,
    parties: usize,
    arrived: Vec<usize>,
    pages: u64,
    end: SimTime,
}

pub(super) fn run(
    queries: &VectorDataset,
    meta: &IndexMeta,
    backend: &Backend,
    params: &SearchParams,
    opts: &BatchOptions,
) -> Result<BatchOutput> {
    let model = match backend.kind() {
        BackendKind::Simulated => {
            let p = backend
                .profile()
                .ok_or_else(|| Error::Config("simulated backend without profile".into()))?;
            Some(LatencyModel::new(*p)?)
        }
        _ => None,
    };
    let n = queries.count();
    let workers = opts.workers.min(n.max(1));
    let mut sim = Sim {
        queries,
        meta,
        backend,
        params,
        opts,
        model,
        events: BinaryHeap::new(),
        seq: 0,
        lanes: (0..workers)
            .map(|_| Lane {
                walker: None,
                query: 0,
                trace: StepTrace::default(),
                node: 0,
                issued: 0,
                completes: 0,
                ready: 0,
                page: Box::new([0u8; PAGE_SIZE]),
                waits: Vec::new(),
            })
            .collect(),
        next_query: 0,
        results: (0..n).map(|_| None).collect(),
        parties: workers,
        arrived: Vec::new(),
        pages: 0,
        end: 0,
    };
    for w in 0..workers {
        sim.push(0, w, Kind::Resume);
    }
    while let Some(Reverse((t, _, w, kind))) = sim.events.pop() {
        sim.handle(t, w, kind);
    }
    let span = match &sim.model {
        Some(m) => m.span(),
        None if sim.pages > 0 => Some((0, sim.end)),
        None => None,
    };
    backend.record_simulated(sim.pages, span);
    let wall = sim.end;
    let results: Vec<Result<QueryOutput>> = sim
        .results
        .into_iter()
        .map(|r| r.unwrap_or_else(|| Err(Error::ProtocolViolation("query never completed".into()))))
        .collect();
    Ok(BatchOutput {
        qps: if wall == 0 { f64::INFINITY } else { n as f64 / (wall as f64 / 1e9) },
        results,
        wall_ns: wall,
        recall: None,
        clock: Clock::Simulated,
        io: None,
    })
}

impl<'a> Sim<'a> {
    fn push(&mut self, t: SimTime, w: usize, kind: Kind) {
        self.seq += 1;
        self.events.push(Reverse((t, self.seq, w, kind)));
    }

    fn handle(&mut self, t: SimTime, w: usize, kind: Kind) {
        match kind {
            Kind::Resume => self.resume(t, w),
            Kind::Issue => self.issue(t, w),
            Kind::Ready => {
                let lane = &mut self.lanes[w];
                lane.ready = t;
                let at = t.max(lane.completes);
                match self.opts.io_mode {
                    IoMode::WorkerLevel => self.push(at, w, Kind::Deliver),
                    IoMode::BatchBarrier => self.push(at, w, Kind::Arrive),
                }
            }
            Kind::Arrive => {
                self.arrived.push(w);
                self.try_release(t);
            }
            Kind::Deliver => {
                let lane = &mut self.lanes[w];
                lane.waits.push((t - lane.ready, lane.completes - lane.issued));
                let walker = lane.walker.as_mut().expect("deliver without walker");
                match walker.deliver(&lane.page) {
                    Ok(()) => self.resume(t, w),
                    Err(e) => self.fail(t, w, e),
                }
            }
        }
    }

    fn try_release(&mut self, t: SimTime) {
        if !self.arrived.is_empty() && self.arrived.len() >= self.parties {
            for w in std::mem::take(&mut self.arrived) {
                self.push(t, w, Kind::Deliver);
            }
        }
    }

    fn fail(&mut self, t: SimTime, w: usize, e: Error) {
        let lane = &mut self.lanes[w];
        lane.walker = None;
        self.results[lane.query] = Some(Err(e));
        self.push(t, w, Kind::Resume);
    }

    fn issue(&mut self, t: SimTime, w: usize) {
        let node = self.lanes[w].node;
        let completes = match &mut self.model {
            Some(m) => m.schedule(node, t).completes_at,
            None => t,
        };
        let lane = &mut self.lanes[w];
        if let Err(e) = self.backend.store().read_page_into(node, &mut lane.page) {
            return self.fail(t, w, e);
        }
        self.pages += 1;
        lane.issued = t;
        lane.completes = completes;
        lane.trace.io_spans.push((t, completes));
        self.push(t, w, Kind::Resume);
    }

    fn resume(&mut self, t: SimTime, w: usize) {
        let dim = self.meta.header.dim();
        let m = self.meta.pq.book.m();
        if self.lanes[w].walker.is_none() {
            if self.next_query >= self.queries.count() {
                self.parties -= 1;
                self.try_release(t);
                return;
            }
            let q = self.next_query;
            self.next_query += 1;
            match Walker::new(self.meta, self.queries.row(q), self.params) {
                Ok(walker) => {
                    let lane = &mut self.lanes[w];
                    lane.walker = Some(walker);
                    lane.query = q;
                    lane.waits.clear();
                    lane.trace = StepTrace {
                        query_id: q,
                        start_ns: t,
                        ..StepTrace::default()
                    };
                }
                Err(e) => {
                    self.results[q] = Some(Err(e));
                    self.push(t, w, Kind::Resume);
                    return;
                }
            }
        }
        let lane = &mut self.lanes[w];
        let walker = lane.walker.as_mut().expect("walker present");
        let (action, work) = match walker.resume() {
            Ok(r) => r,
            Err(e) => return self.fail(t, w, e),
        };
        let cost = self.opts.compute.ns(work, dim, m);
        if cost > 0 {
            lane.trace.compute_spans.push((t, t + cost));
        }
        let at = t + cost;
        match action {
            super::Action::Submit(node) => {
                lane.node = node;
                self.push(at, w, Kind::Issue);
            }
            super::Action::Await => self.push(at, w, Kind::Ready),
            super::Action::Done => {
                let walker = lane.walker.take().expect("walker present");
                let (ids, distances, expansions, exhausted) = walker.into_results();
                let mut trace = std::mem::take(&mut lane.trace);
                trace.end_ns = at;
                trace.exhausted = exhausted;
                trace.steps = expansions
                    .iter()
                    .zip(&lane.waits)
                    .map(|(e, &(wait, lat))| StepRecord {
                        step: e.step,
                        expanded_id: e.node,
                        source_epoch: e.source_epoch,
                        io_wait_ns: wait,
                        compute_ns: self.opts.compute.ns(e.work, dim, m),
                        io_latency_ns: lat,
                    })
                    .collect();
                debug_assert_eq!(expansions.len(), lane.waits.len());
                self.results[lane.query] = Some(Ok(QueryOutput { ids, distances, trace }));
                self.end = self.end.max(at);
                self.push(at, w, Kind::Resume);
            }
        }
    }
}
