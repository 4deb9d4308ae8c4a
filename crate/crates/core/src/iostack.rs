//! Per-worker request slots, completion signals and page buffers, with a
//! dispatcher that forwards submitted requests to storage.
//!
//! Ordering contract: the I/O side writes the page into the worker's buffer,
//! marks the slot empty, then publishes `(epoch, DONE)` on the worker's
//! signal with release ordering. A worker that observes its epoch with
//! acquire ordering sees the complete page.

use std::sync::atomic::{AtomicBool, AtomicU32, AtomicU64, AtomicU8, Ordering};
use std::sync::{Condvar, Mutex, MutexGuard};
use std::thread::{self, Thread};
use std::time::{Duration, Instant};

use crossbeam_channel::{Receiver, Sender};

use crate::error::{Error, Result};
use crate::index::PAGE_SIZE;
use crate::storage::{Backend, Page};

const EMPTY: u64 = 0;
const SUBMITTED: u64 = 1;
const IN_FLIGHT: u64 = 2;
const STATE_MASK: u64 = 3;

const DONE: u64 = 1;
const POISON: u64 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum IoMode {
    /// Each worker resumes as soon as its own read completes.
    WorkerLevel,
    /// Every active worker waits until all have completed their reads.
    BatchBarrier,
}

impl std::str::FromStr for IoMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "worker_level" | "worker" => Ok(IoMode::WorkerLevel),
            "batch_barrier" | "barrier" => Ok(IoMode::BatchBarrier),
            other => Err(Error::Config(format!("unknown io mode `{other}`"))),
        }
    }
}

impl IoMode {
    pub fn name(self) -> &'static str {
        match self {
            IoMode::WorkerLevel => "worker_level",
            IoMode::BatchBarrier => "batch_barrier",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BufferSlot {
    A,
    B,
}

impl BufferSlot {
    fn index(self) -> usize {
        match self {
            BufferSlot::A => 0,
            BufferSlot::B => 1,
        }
    }

    pub fn other(self) -> Self {
        match self {
            BufferSlot::A => BufferSlot::B,
            BufferSlot::B => BufferSlot::A,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SlotState {
    Empty,
    Submitted,
    InFlight,
}

#[derive(Debug, Default)]
struct RequestSlot {
    /// `epoch << 2 | state`.
    state: AtomicU64,
    node: AtomicU32,
    buffer: AtomicU8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Job {
    worker: usize,
    epoch: u64,
    node: u32,
    buffer: usize,
}

/// Reusable barrier whose party count shrinks as workers leave.
#[derive(Debug)]
pub struct BatchBarrier {
    state: Mutex<BarrierState>,
    cv: Condvar,
}

#[derive(Debug)]
struct BarrierState {
    parties: usize,
    arrived: usize,
    generation: u64,
}

impl BatchBarrier {
    pub fn new(parties: usize) -> Self {
        Self {
            state: Mutex::new(BarrierState {
                parties,
                arrived: 0,
                generation: 0,
            }),
            cv: Condvar::new(),
        }
    }

    pub fn arrive_and_wait(&self) {
        let mut s = self.state.lock().unwrap();
        let gen = s.generation;
        s.arrived += 1;
        if s.arrived >= s.parties {
            s.arrived = 0;
            s.generation += 1;
            self.cv.notify_all();
            return;
        }
        while s.generation == gen {
            s = self.cv.wait(s).unwrap();
        }
    }

    /// Permanently removes one party, releasing waiters if it was the last
    /// one outstanding.
    pub fn leave(&self) {
        let mut s = self.state.lock().unwrap();
        s.parties = s.parties.saturating_sub(1);
        if s.arrived > 0 && s.arrived >= s.parties {
            s.arrived = 0;
            s.generation += 1;
            self.cv.notify_all();
        }
    }

    pub fn parties(&self) -> usize {
        self.state.lock().unwrap().parties
    }
}

#[derive(Clone, Copy, Debug)]
pub struct IoStackConfig {
    pub workers: usize,
    /// Threads executing reads behind the dispatcher; 0 reads on the
    /// dispatcher thread itself.
    pub io_threads: usize,
    /// Longest the dispatcher sleeps without a doorbell.
    pub poll_interval: Duration,
    pub mode: IoMode,
}

impl IoStackConfig {
    pub fn new(workers: usize, mode: IoMode) -> Self {
        Self {
            workers,
            io_threads: 2,
            poll_interval: Duration::from_micros(50),
            mode,
        }
    }
}

/// Counters exported to the bench harness.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct IoMetrics {
    pub submitted: u64,
    pub forwarded: u64,
    pub completed: u64,
    pub poisoned: u64,
    /// Await durations in nanoseconds, sorted.
    pub waits_ns: Vec<u64>,
}

impl IoMetrics {
    pub fn mean_wait_ns(&self) -> f64 {
        if self.waits_ns.is_empty() {
            0.0
        } else {
            self.waits_ns.iter().sum::<u64>() as f64 / self.waits_ns.len() as f64
        }
    }

    pub fn wait_percentile_ns(&self, p: f64) -> u64 {
        crate::search::percentile(&self.waits_ns, p)
    }
}

pub struct IoStack<'a> {
    backend: &'a Backend,
    config: IoStackConfig,
    slots: Box<[RequestSlot]>,
    signals: Box<[AtomicU64]>,
    completed_at: Box<[AtomicU64]>,
    buffers: Box<[[Mutex<Box<Page>>; 2]]>,
    threads: Box<[Mutex<Option<Thread>>]>,
    waits: Box<[Mutex<Vec<u64>>]>,
    barrier: BatchBarrier,
    doorbell: Mutex<bool>,
    doorbell_cv: Condvar,
    stop: AtomicBool,
    submitted: AtomicU64,
    forwarded: AtomicU64,
    completed: AtomicU64,
    poisoned: AtomicU64,
    origin: Instant,
}

impl<'a> IoStack<'a> {
    pub fn new(backend: &'a Backend, config: IoStackConfig) -> Result<Self> {
        if config.workers == 0 {
            return Err(Error::params("io stack needs at least one worker"));
        }
        let n = config.workers;
        Ok(Self {
            backend,
            config,
            slots: (0..n).map(|_| RequestSlot::default()).collect(),
            signals: (0..n).map(|_| AtomicU64::new(0)).collect(),
            completed_at: (0..n).map(|_| AtomicU64::new(0)).collect(),
            buffers: (0..n)
                .map(|_| [Mutex::new(Box::new([0u8; PAGE_SIZE])), Mutex::new(Box::new([0u8; PAGE_SIZE]))])
                .collect(),
            threads: (0..n).map(|_| Mutex::new(None)).collect(),
            waits: (0..n).map(|_| Mutex::new(Vec::new())).collect(),
            barrier: BatchBarrier::new(n),
            doorbell: Mutex::new(false),
            doorbell_cv: Condvar::new(),
            stop: AtomicBool::new(false),
            submitted: AtomicU64::new(0),
            forwarded: AtomicU64::new(0),
            completed: AtomicU64::new(0),
            poisoned: AtomicU64::new(0),
            origin: Instant::now(),
        })
    }

    pub fn config(&self) -> &IoStackConfig {
        &self.config
    }

    pub fn workers(&self) -> usize {
        self.config.workers
    }

    /// Nanoseconds since the stack was created.
    pub fn now_ns(&self) -> u64 {
        self.origin.elapsed().as_nanos() as u64
    }

    fn check_worker(&self, worker: usize) -> Result<()> {
        if worker >= self.config.workers {
            return Err(Error::ProtocolViolation(format!(
                "worker {worker} out of range ({} workers)",
                self.config.workers
            )));
        }
        Ok(())
    }

    /// Makes the calling thread the one woken on this worker's completions.
    pub fn register_worker(&self, worker: usize) -> Result<()> {
        self.check_worker(worker)?;
        *self.threads[worker].lock().unwrap() = Some(thread::current());
        Ok(())
    }

    /// Removes the worker from barrier accounting for the rest of the run.
    pub fn leave(&self, worker: usize) -> Result<()> {
        self.check_worker(worker)?;
        self.barrier.leave();
        Ok(())
    }

    pub fn slot_state(&self, worker: usize) -> (SlotState, u64) {
        let s = self.slots[worker].state.load(Ordering::Acquire);
        let st = match s & STATE_MASK {
            EMPTY => SlotState::Empty,
            SUBMITTED => SlotState::Submitted,
            _ => SlotState::InFlight,
        };
        (st, s >> 2)
    }

    /// Posts a read of `node` into the worker's `buffer`. Returns the epoch
    /// token to await.
    pub fn submit(&self, worker: usize, node: u32, buffer: BufferSlot) -> Result<u64> {
        self.check_worker(worker)?;
        let slot = &self.slots[worker];
        let cur = slot.state.load(Ordering::Acquire);
        if cur & STATE_MASK != EMPTY {
            return Err(Error::ProtocolViolation(format!(
                "worker {worker} submitted while epoch {} is outstanding",
                cur >> 2
            )));
        }
        let epoch = (cur >> 2) + 1;
        slot.node.store(node, Ordering::Relaxed);
        slot.buffer.store(buffer.index() as u8, Ordering::Relaxed);
        slot.state.store(epoch << 2 | SUBMITTED, Ordering::Release);
        self.submitted.fetch_add(1, Ordering::Relaxed);
        self.ring();
        Ok(epoch)
    }

    fn ring(&self) {
        let mut d = self.doorbell.lock().unwrap();
        *d = true;
        self.doorbell_cv.notify_one();
    }

    /// Moves every submitted slot to in-flight and executes its read inline.
    /// Returns the number of requests forwarded.
    pub fn dispatcher_poll(&self) -> usize {
        self.poll_into(None)
    }

    fn poll_into(&self, sink: Option<&Sender<Job>>) -> usize {
        let mut n = 0;
        for (worker, slot) in self.slots.iter().enumerate() {
            let cur = slot.state.load(Ordering::Acquire);
            if cur & STATE_MASK != SUBMITTED {
                continue;
            }
            let epoch = cur >> 2;
            if slot
                .state
                .compare_exchange(cur, epoch << 2 | IN_FLIGHT, Ordering::AcqRel, Ordering::Acquire)
                .is_err()
            {
                continue;
            }
            let job = Job {
                worker,
                epoch,
                node: slot.node.load(Ordering::Relaxed),
                buffer: slot.buffer.load(Ordering::Relaxed) as usize,
            };
            self.forwarded.fetch_add(1, Ordering::Relaxed);
            n += 1;
            match sink {
                Some(tx) => {
                    if let Err(e) = tx.send(job) {
                        self.execute(e.into_inner());
                    }
                }
                None => self.execute(job),
            }
        }
        n
    }

    fn execute(&self, job: Job) {
        let res = {
            let mut buf = self.buffers[job.worker][job.buffer].lock().unwrap();
            self.backend.read_page_into(job.node, &mut buf)
        };
        self.completed_at[job.worker].store(self.now_ns(), Ordering::Relaxed);
        self.slots[job.worker]
            .state
            .store(job.epoch << 2 | EMPTY, Ordering::Release);
        let flag = if res.is_ok() {
            self.completed.fetch_add(1, Ordering::Relaxed);
            DONE
        } else {
            self.poisoned.fetch_add(1, Ordering::Relaxed);
            DONE | POISON
        };
        self.signals[job.worker].store(job.epoch << 2 | flag, Ordering::Release);
        if let Some(t) = self.threads[job.worker].lock().unwrap().as_ref() {
            t.unpark();
        }
    }

    /// Blocks until the worker's request `epoch` completes (and, in
    /// batch-barrier mode, until every active worker has completed its
    /// outstanding request). Returns the filled buffer.
    pub fn await_completion(&self, worker: usize, epoch: u64, mode: IoMode) -> Result<MutexGuard<'_, Box<Page>>> {
        self.check_worker(worker)?;
        let slot = &self.slots[worker];
        let outstanding = slot.state.load(Ordering::Acquire) >> 2;
        if epoch == 0 || epoch != outstanding {
            return Err(Error::StaleEpoch {
                worker,
                awaited: epoch,
                outstanding,
            });
        }
        let start = Instant::now();
        let mut spins = 0u32;
        let flag = loop {
            let s = self.signals[worker].load(Ordering::Acquire);
            if s >> 2 == epoch && s & DONE != 0 {
                break s;
            }
            if spins < 64 {
                spins += 1;
                std::hint::spin_loop();
            } else {
                thread::park_timeout(Duration::from_micros(200));
            }
        };
        if mode == IoMode::BatchBarrier {
            self.barrier.arrive_and_wait();
        }
        self.waits[worker]
            .lock()
            .unwrap()
            .push(start.elapsed().as_nanos() as u64);
        if flag & POISON != 0 {
            return Err(Error::PoisonedCompletion { worker, epoch });
        }
        let b = slot.buffer.load(Ordering::Relaxed) as usize;
        Ok(self.buffers[worker][b].lock().unwrap())
    }

    /// Completion time of the worker's latest request, on [`IoStack::now_ns`].
    pub fn completed_at_ns(&self, worker: usize) -> u64 {
        self.completed_at[worker].load(Ordering::Relaxed)
    }

    pub fn metrics(&self) -> IoMetrics {
        let mut waits: Vec<u64> = self
            .waits
            .iter()
            .flat_map(|w| w.lock().unwrap().clone())
            .collect();
        waits.sort_unstable();
        IoMetrics {
            submitted: self.submitted.load(Ordering::Relaxed),
            forwarded: self.forwarded.load(Ordering::Relaxed),
            completed: self.completed.load(Ordering::Relaxed),
            poisoned: self.poisoned.load(Ordering::Relaxed),
            waits_ns: waits,
        }
    }

    fn dispatch_loop(&self, tx: Option<Sender<Job>>) {
        loop {
            let n = self.poll_into(tx.as_ref());
            if n > 0 {
                continue;
            }
            if self.stop.load(Ordering::Acquire) {
                // One last sweep so nothing submitted before stop is lost.
                if self.poll_into(tx.as_ref()) == 0 {
                    break;
                }
                continue;
            }
            let mut d = self.doorbell.lock().unwrap();
            if !*d {
                d = self
                    .doorbell_cv
                    .wait_timeout(d, self.config.poll_interval)
                    .unwrap()
                    .0;
            }
            *d = false;
        }
    }

    fn io_loop(&self, rx: Receiver<Job>) {
        for job in rx {
            self.execute(job);
        }
    }

    /// Runs a dispatcher (and its I/O threads) for the duration of `f`.
    pub fn serve<R>(&self, f: impl FnOnce() -> R) -> R {
        self.stop.store(false, Ordering::Release);
        thread::scope(|s| {
            let tx = if self.config.io_threads > 0 {
                let (tx, rx) = crossbeam_channel::unbounded();
                for _ in 0..self.config.io_threads {
                    let rx = rx.clone();
                    s.spawn(move || self.io_loop(rx));
                }
                Some(tx)
            } else {
                None
            };
            s.spawn(move || self.dispatch_loop(tx));
            let r = f();
            self.stop.store(true, Ordering::Release);
            self.ring();
            r
        })
    }
}
