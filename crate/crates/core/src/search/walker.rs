use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use super::heap::MinMaxHeap;
use super::{Engine, SearchParams};
use crate::dataset::VectorRef;
use crate::distance::l2_sq_bytes;
use crate::error::{Error, Result};
use crate::index::{IndexMeta, NodePage, PAGE_SIZE};
use crate::quantize::{adc_table, AdcTable};
use crate::storage::Page;

/// `(distance, id)` ordered lexicographically with `f32::total_cmp`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Cand {
    pub dist: f32,
    pub id: u32,
    /// Step whose page revealed this node; 0 for the entry point.
    pub source: u32,
}

impl PartialEq for Cand {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Cand {}

impl PartialOrd for Cand {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Cand {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist.total_cmp(&other.dist).then(self.id.cmp(&other.id))
    }
}

/// Candidate list of at most `L` PQ-scored entries, split into unexpanded
/// (min-max heap) and expanded (max-heap) parts so the global worst entry can
/// be evicted from either side.
#[derive(Debug)]
pub(crate) struct CandidateList {
    l: usize,
    unexpanded: MinMaxHeap<Cand>,
    expanded: BinaryHeap<Cand>,
}

impl CandidateList {
    fn new(l: usize) -> Self {
        Self {
            l,
            unexpanded: MinMaxHeap::with_capacity(l + 1),
            expanded: BinaryHeap::with_capacity(l + 1),
        }
    }

    fn len(&self) -> usize {
        self.unexpanded.len() + self.expanded.len()
    }

    fn insert(&mut self, c: Cand) {
        if self.len() < self.l {
            self.unexpanded.push(c);
            return;
        }
        let worst_unexp = self.unexpanded.peek_max().copied();
        let worst_exp = self.expanded.peek().copied();
        let evict_expanded = match (worst_unexp, worst_exp) {
            (Some(u), Some(e)) => e > u,
            (None, Some(_)) => true,
            _ => false,
        };
        let worst = if evict_expanded { worst_exp } else { worst_unexp };
        match worst {
            Some(w) if c < w => {
                if evict_expanded {
                    self.expanded.pop();
                } else {
                    self.unexpanded.pop_max();
                }
                self.unexpanded.push(c);
            }
            _ => {}
        }
    }

    fn pop_best(&mut self) -> Option<Cand> {
        let c = self.unexpanded.pop_min()?;
        self.expanded.push(c);
        Some(c)
    }

    fn has_unexpanded(&self) -> bool {
        !self.unexpanded.is_empty()
    }
}

/// Compute performed between two yields, in abstract units turned into time
/// by a compute model (simulated clock) or measured directly (real clock).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Work {
    /// Expansion choices made (heap pops plus bookkeeping).
    pub selects: u32,
    /// Exact distances computed against page vectors.
    pub exact: u32,
    /// Neighbor PQ distances computed and offered to the candidate list.
    pub pq: u32,
}

impl Work {
    pub fn is_zero(&self) -> bool {
        *self == Work::default()
    }

    pub fn add(&mut self, other: Work) {
        self.selects += other.selects;
        self.exact += other.exact;
        self.pq += other.pq;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Action {
    /// Issue a read of this node's page, then call `resume` again.
    Submit(u32),
    /// Wait for the outstanding page, `deliver` it, then call `resume`.
    Await,
    Done,
}

/// One expansion as seen by the walker.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Expansion {
    pub step: u32,
    pub node: u32,
    pub source_epoch: u32,
    /// Compute charged to this step: its selection plus processing its page.
    pub work: Work,
}

/// Single-query best-first traversal as a resumable state machine. The
/// caller owns I/O: it performs the reads requested through [`Action`] and
/// hands pages back through [`Walker::deliver`].
///
/// Strict engine: select, read, wait, process, repeat. Relaxed engine: after
/// the page for step `i-1` arrives, the step-`i` choice is made from the
/// candidate list before that page is processed, the step-`i` read is issued,
/// and only then is page `i-1` processed, overlapping the read. Exactly one
/// read is ever in flight.
pub struct Walker<'a> {
    meta: &'a IndexMeta,
    query: VectorRef<'a>,
    table: AdcTable,
    engine: Engine,
    k: usize,
    max_steps: u32,
    cands: CandidateList,
    visited: HashSet<u32>,
    results: BinaryHeap<Cand>,
    /// Step number of the read in flight, if any.
    in_flight: Option<u32>,
    /// A delivered page awaiting processing, with its step number.
    staged: Option<(u32, Box<Page>)>,
    steps: Vec<Expansion>,
    exhausted: bool,
    done: bool,
}

impl<'a> Walker<'a> {
    pub fn new(meta: &'a IndexMeta, query: VectorRef<'a>, params: &SearchParams) -> Result<Self> {
        params.validate()?;
        let h = &meta.header;
        if query.dim() != h.dim() {
            return Err(Error::DimMismatch {
                expected: h.dim(),
                found: query.dim(),
            });
        }
        if h.count == 0 {
            return Err(Error::Empty("index"));
        }
        let table = adc_table(&query.to_f32_vec(), &meta.pq.book)?;
        let mut w = Walker {
            meta,
            query,
            table,
            engine: params.engine,
            k: params.k,
            max_steps: params.max_steps.min(u32::MAX as usize) as u32,
            cands: CandidateList::new(params.l),
            visited: HashSet::with_capacity(params.l * 8),
            results: BinaryHeap::with_capacity(params.k + 1),
            in_flight: None,
            staged: None,
            steps: Vec::new(),
            exhausted: false,
            done: false,
        };
        let ep = h.entry_point;
        w.visited.insert(ep);
        let dist = w.table.distance(w.meta.pq.codes.code(ep as usize));
        w.cands.insert(Cand { dist, id: ep, source: 0 });
        Ok(w)
    }

    pub fn steps(&self) -> &[Expansion] {
        &self.steps
    }

    /// True when the step cap stopped the search with candidates left.
    pub fn exhausted(&self) -> bool {
        self.exhausted
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Hands over the page of the outstanding read.
    pub fn deliver(&mut self, page: &Page) -> Result<()> {
        let step = self.in_flight.take().ok_or_else(|| {
            Error::ProtocolViolation("page delivered with no read outstanding".into())
        })?;
        debug_assert!(self.staged.is_none());
        let mut buf = Box::new([0u8; PAGE_SIZE]);
        buf.copy_from_slice(page);
        self.staged = Some((step, buf));
        Ok(())
    }

    /// Runs compute until the next I/O interaction.
    pub fn resume(&mut self) -> Result<(Action, Work)> {
        if self.done {
            return Ok((Action::Done, Work::default()));
        }
        if self.in_flight.is_some() {
            // Relaxed: page i-1 is processed while read i is in flight.
            let mut work = Work::default();
            if let Some((step, page)) = self.staged.take() {
                work = self.process(step, &page)?;
            }
            return Ok((Action::Await, work));
        }
        let mut work = Work::default();
        if self.engine == Engine::Strict {
            if let Some((step, page)) = self.staged.take() {
                work.add(self.process(step, &page)?);
            }
        }
        if let Some(w) = self.select_and_submit() {
            work.add(w.1);
            return Ok((Action::Submit(w.0), work));
        }
        // Nothing selectable from the stale list: drain the staged page and
        // retry with fresh candidates.
        if let Some((step, page)) = self.staged.take() {
            work.add(self.process(step, &page)?);
            if let Some(w) = self.select_and_submit() {
                work.add(w.1);
                return Ok((Action::Submit(w.0), work));
            }
        }
        self.done = true;
        Ok((Action::Done, work))
    }

    fn select_and_submit(&mut self) -> Option<(u32, Work)> {
        if self.steps.len() as u32 >= self.max_steps {
            if self.cands.has_unexpanded() {
                self.exhausted = true;
            }
            return None;
        }
        let c = self.cands.pop_best()?;
        let step = self.steps.len() as u32 + 1;
        let work = Work {
            selects: 1,
            ..Work::default()
        };
        self.steps.push(Expansion {
            step,
            node: c.id,
            source_epoch: c.source,
            work,
        });
        self.in_flight = Some(step);
        Some((c.id, work))
    }

    fn process(&mut self, step: u32, page: &Page) -> Result<Work> {
        let h = &self.meta.header;
        let node = self.steps[step as usize - 1].node;
        let view = NodePage::parse(page, h)?;
        let exact = l2_sq_bytes(self.query, h.elem, view.vector);
        self.offer_result(Cand {
            dist: exact,
            id: node,
            source: step,
        });
        let mut work = Work {
            exact: 1,
            ..Work::default()
        };
        for nb in view.neighbors() {
            if nb as u64 >= h.count {
                return Err(Error::Corrupt(format!("node {node} links to {nb}")));
            }
            if !self.visited.insert(nb) {
                continue;
            }
            let dist = self.table.distance(self.meta.pq.codes.code(nb as usize));
            self.cands.insert(Cand {
                dist,
                id: nb,
                source: step,
            });
            work.pq += 1;
        }
        self.steps[step as usize - 1].work.add(work);
        Ok(work)
    }

    fn offer_result(&mut self, c: Cand) {
        if self.results.len() < self.k {
            self.results.push(c);
        } else if let Some(worst) = self.results.peek() {
            if c < *worst {
                self.results.pop();
                self.results.push(c);
            }
        }
    }

    /// Final `(ids, distances)`, ascending.
    pub fn into_results(self) -> (Vec<u32>, Vec<f32>, Vec<Expansion>, bool) {
        let mut r = self.results.into_vec();
        r.sort();
        let ids = r.iter().map(|c| c.id).collect();
        let dists = r.iter().map(|c| c.dist).collect();
        (ids, dists, self.steps, self.exhausted)
    }
}
