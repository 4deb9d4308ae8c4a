//! Page-granular read backends: the index file itself, an in-memory page
//! store, and a simulated multi-device store with a queueing latency model.

use std::fs::File;
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::index::{read_index, read_index_meta, GraphIndex, IndexHeader, IndexMeta, PAGE_SIZE};

pub type Page = [u8; PAGE_SIZE];

/// Simulated time, nanoseconds.
pub type SimTime = u64;

/// Anything that can serve full node pages.
pub trait PageStore: Send + Sync {
    fn page_count(&self) -> usize;

    fn read_page_into(&self, node: u32, buf: &mut Page) -> Result<()>;
}

impl PageStore for GraphIndex {
    fn page_count(&self) -> usize {
        self.count()
    }

    fn read_page_into(&self, node: u32, buf: &mut Page) -> Result<()> {
        if node as usize >= self.count() {
            return Err(Error::NodeOutOfRange {
                node,
                count: self.count(),
            });
        }
        self.encode_page(node as usize, buf);
        Ok(())
    }
}

#[repr(C, align(4096))]
struct AlignedPage([u8; PAGE_SIZE]);

/// Pages read straight from an index file with positioned reads.
pub struct FilePages {
    file: File,
    header: IndexHeader,
    direct: bool,
}

impl FilePages {
    pub fn open(path: impl AsRef<Path>, direct: bool) -> Result<Self> {
        let path = path.as_ref();
        let header = crate::index::read_index_header(path)?;
        let mut opts = std::fs::OpenOptions::new();
        opts.read(true);
        #[cfg(target_os = "linux")]
        if direct {
            use std::os::unix::fs::OpenOptionsExt;
            opts.custom_flags(libc::O_DIRECT);
        }
        #[cfg(not(target_os = "linux"))]
        let direct = false;
        let file = opts.open(path).map_err(|e| Error::file(path, e))?;
        let needed = header.page_base + header.count * PAGE_SIZE as u64;
        if file.metadata()?.len() < needed {
            return Err(Error::Truncated(format!("index file shorter than {needed} bytes")));
        }
        Ok(Self { file, header, direct })
    }

    pub fn header(&self) -> &IndexHeader {
        &self.header
    }
}

impl PageStore for FilePages {
    fn page_count(&self) -> usize {
        self.header.count()
    }

    fn read_page_into(&self, node: u32, buf: &mut Page) -> Result<()> {
        use std::os::unix::fs::FileExt;
        if node as usize >= self.page_count() {
            return Err(Error::NodeOutOfRange {
                node,
                count: self.page_count(),
            });
        }
        let off = self.header.page_offset(node);
        if self.direct {
            let mut aligned = Box::new(AlignedPage([0; PAGE_SIZE]));
            self.file.read_exact_at(&mut aligned.0, off)?;
            buf.copy_from_slice(&aligned.0);
        } else {
            self.file.read_exact_at(buf, off)?;
        }
        Ok(())
    }
}

/// Device configuration for the simulated backend. Durations are held in
/// nanoseconds; the text form uses microseconds and MB/s.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StorageProfile {
    pub device_count: usize,
    pub per_device_queue_depth: usize,
    pub base_latency_ns: u64,
    pub tail_probability: f64,
    pub tail_latency_ns: u64,
    /// Bytes per second.
    pub per_device_bandwidth: f64,
    pub seed: u64,
}

impl Default for StorageProfile {
    /// One device: 80 µs base latency, 2 % tail of 1 ms, 2000 MB/s, depth 128.
    fn default() -> Self {
        Self {
            device_count: 1,
            per_device_queue_depth: 128,
            base_latency_ns: 80_000,
            tail_probability: 0.02,
            tail_latency_ns: 1_000_000,
            per_device_bandwidth: 2_000e6,
            seed: 0,
        }
    }
}

impl StorageProfile {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("storage profile: {m}")));
        if self.device_count == 0 {
            return bad("device_count must be >= 1");
        }
        if self.per_device_queue_depth == 0 {
            return bad("per_device_queue_depth must be >= 1");
        }
        if self.base_latency_ns == 0 || self.tail_latency_ns == 0 {
            return bad("latencies must be positive");
        }
        if !(0.0..1.0).contains(&self.tail_probability) {
            return bad("tail_probability must be in [0, 1)");
        }
        if !(self.per_device_bandwidth > 0.0) || !self.per_device_bandwidth.is_finite() {
            return bad("per_device_bandwidth must be positive");
        }
        Ok(())
    }

    /// Transfer time of one page at device bandwidth.
    pub fn service_ns(&self) -> u64 {
        ((PAGE_SIZE as f64 * 1e9) / self.per_device_bandwidth).ceil() as u64
    }

    /// Parses `key = value` lines; `#` starts a comment. Keys:
    /// `device_count`, `per_device_queue_depth`, `base_latency_us`,
    /// `tail_probability`, `tail_latency_us`, `per_device_bandwidth_mbps`
    /// (MB/s, 10^6 bytes), `seed`. Missing keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut p = StorageProfile::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            let num = |v: &str| -> Result<f64> {
                v.parse::<f64>()
                    .map_err(|_| Error::Config(format!("line {}: `{v}` is not a number", lineno + 1)))
            };
            let int = |v: &str| -> Result<u64> {
                v.parse::<u64>()
                    .map_err(|_| Error::Config(format!("line {}: `{v}` is not an integer", lineno + 1)))
            };
            match k {
                "device_count" => p.device_count = int(v)? as usize,
                "per_device_queue_depth" => p.per_device_queue_depth = int(v)? as usize,
                "base_latency_us" => p.base_latency_ns = (num(v)? * 1e3).round() as u64,
                "tail_probability" => p.tail_probability = num(v)?,
                "tail_latency_us" => p.tail_latency_ns = (num(v)? * 1e3).round() as u64,
                "per_device_bandwidth_mbps" => p.per_device_bandwidth = num(v)? * 1e6,
                "seed" => p.seed = int(v)?,
                other => return Err(Error::Config(format!("line {}: unknown key `{other}`", lineno + 1))),
            }
        }
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        format!(
            "device_count = {}\nper_device_queue_depth = {}\nbase_latency_us = {}\ntail_probability = {}\ntail_latency_us = {}\nper_device_bandwidth_mbps = {}\nseed = {}\n",
            self.device_count,
            self.per_device_queue_depth,
            self.base_latency_ns as f64 / 1e3,
            self.tail_probability,
            self.tail_latency_ns as f64 / 1e3,
            self.per_device_bandwidth / 1e6,
            self.seed
        )
    }
}

/// One scheduled page read in simulated time.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Completion {
    pub request_id: u64,
    pub node: u32,
    pub device: usize,
    pub issued_at: SimTime,
    pub completes_at: SimTime,
    pub tail: bool,
}

impl Completion {
    pub fn latency(&self) -> u64 {
        self.completes_at - self.issued_at
    }
}

#[derive(Clone, Debug)]
struct DeviceState {
    /// Time each in-service slot frees up.
    slots: Vec<SimTime>,
    /// Time the transfer channel frees up.
    channel_free: SimTime,
}

/// Queueing model of the simulated devices.
///
/// A request routed to device `hash(node) % devices` waits for one of the
/// device's `queue_depth` slots, spends `base_latency` in the device, then
/// transfers its page over the device channel at `bandwidth` (FIFO). With
/// probability `tail_probability` completion is further delayed by
/// `tail_latency`; the slot stays busy until completion but the channel
/// does not. Requests must be scheduled in non-decreasing issue time; earlier
/// times are clamped forward.
#[derive(Clone, Debug)]
pub struct LatencyModel {
    profile: StorageProfile,
    rng: ChaCha8Rng,
    devices: Vec<DeviceState>,
    service_ns: u64,
    next_id: u64,
    last_issue: SimTime,
    first_issue: Option<SimTime>,
    last_completion: SimTime,
}

impl LatencyModel {
    pub fn new(profile: StorageProfile) -> Result<Self> {
        profile.validate()?;
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(profile.seed),
            devices: vec![
                DeviceState {
                    slots: vec![0; profile.per_device_queue_depth],
                    channel_free: 0,
                };
                profile.device_count
            ],
            service_ns: profile.service_ns(),
            profile,
            next_id: 0,
            last_issue: 0,
            first_issue: None,
            last_completion: 0,
        })
    }

    pub fn profile(&self) -> &StorageProfile {
        &self.profile
    }

    pub fn device_of(&self, node: u32) -> usize {
        (node.wrapping_mul(0x9E37_79B1) >> 7) as usize % self.profile.device_count
    }

    pub fn schedule(&mut self, node: u32, issue_at: SimTime) -> Completion {
        let issue_at = issue_at.max(self.last_issue);
        self.last_issue = issue_at;
        self.first_issue.get_or_insert(issue_at);
        let device = self.device_of(node);
        let tail = self.profile.tail_probability > 0.0 && self.rng.gen_bool(self.profile.tail_probability);
        let dev = &mut self.devices[device];
        let (slot, free) = dev
            .slots
            .iter()
            .enumerate()
            .min_by_key(|&(i, &t)| (t, i))
            .map(|(i, &t)| (i, t))
            .expect("queue depth >= 1");
        let start = issue_at.max(free);
        let ready = start + self.profile.base_latency_ns;
        let transfer_start = ready.max(dev.channel_free);
        let transfer_end = transfer_start + self.service_ns;
        dev.channel_free = transfer_end;
        let completes_at = transfer_end + if tail { self.profile.tail_latency_ns } else { 0 };
        dev.slots[slot] = completes_at;
        self.last_completion = self.last_completion.max(completes_at);
        let id = self.next_id;
        self.next_id += 1;
        Completion {
            request_id: id,
            node,
            device,
            issued_at: issue_at,
            completes_at,
            tail,
        }
    }

    pub fn scheduled(&self) -> u64 {
        self.next_id
    }

    /// (first issue, last completion) of everything scheduled so far.
    pub fn span(&self) -> Option<(SimTime, SimTime)> {
        self.first_issue.map(|f| (f, self.last_completion))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BackendKind {
    /// Positioned reads from the index file, real time.
    File,
    /// Pages served from memory with zero latency, simulated clock.
    Memory,
    /// Pages served from memory, latency from a [`StorageProfile`], simulated clock.
    Simulated,
}

impl std::str::FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "file" => Ok(BackendKind::File),
            "memory" => Ok(BackendKind::Memory),
            "simulated" | "sim" => Ok(BackendKind::Simulated),
            other => Err(Error::Config(format!("unknown backend `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThroughputReport {
    pub pages_read: u64,
    pub bytes_read: u64,
    pub wall_time: Duration,
    /// Bytes per second.
    pub achieved_bandwidth: f64,
}

/// A page source plus its timing semantics and traffic counters.
pub struct Backend {
    kind: BackendKind,
    store: Arc<dyn PageStore>,
    profile: Option<StorageProfile>,
    model: Option<Mutex<LatencyModel>>,
    pages_read: AtomicU64,
    real_span: Mutex<Option<(Instant, Instant)>>,
    sim_span: Mutex<Option<(SimTime, SimTime)>>,
    closed: AtomicBool,
}

impl Backend {
    pub fn new(kind: BackendKind, store: Arc<dyn PageStore>, profile: Option<StorageProfile>) -> Result<Self> {
        let model = match (kind, profile) {
            (BackendKind::Simulated, Some(p)) => Some(Mutex::new(LatencyModel::new(p)?)),
            (BackendKind::Simulated, None) => {
                return Err(Error::Config("simulated backend requires a storage profile".into()))
            }
            _ => None,
        };
        Ok(Self {
            kind,
            store,
            profile: if kind == BackendKind::Simulated { profile } else { None },
            model,
            pages_read: AtomicU64::new(0),
            real_span: Mutex::new(None),
            sim_span: Mutex::new(None),
            closed: AtomicBool::new(false),
        })
    }

    /// In-memory or simulated backend over an already built index.
    pub fn from_index(index: Arc<GraphIndex>, kind: BackendKind, profile: Option<StorageProfile>) -> Result<Self> {
        if kind == BackendKind::File {
            return Err(Error::Config("file backend must be opened from a path".into()));
        }
        Self::new(kind, index, profile)
    }

    pub fn kind(&self) -> BackendKind {
        self.kind
    }

    pub fn profile(&self) -> Option<&StorageProfile> {
        self.profile.as_ref()
    }

    pub fn store(&self) -> &Arc<dyn PageStore> {
        &self.store
    }

    pub fn page_count(&self) -> usize {
        self.store.page_count()
    }

    /// Reads a page. On a simulated backend, direct reads form one closed
    /// stream: each is scheduled on the backend's own latency model at the
    /// previous completion time. Batch runs use the executor's clock instead.
    pub fn read_page_into(&self, node: u32, buf: &mut Page) -> Result<()> {
        if self.closed.load(Ordering::Acquire) {
            return Err(Error::BackendClosed);
        }
        let start = Instant::now();
        self.store.read_page_into(node, buf)?;
        if let Some(m) = &self.model {
            let mut m = m.lock().unwrap();
            let now = m.last_completion;
            m.schedule(node, now);
        }
        self.note_read(start, Instant::now());
        Ok(())
    }

    pub fn read_page(&self, node: u32) -> Result<Box<Page>> {
        let mut buf = Box::new([0u8; PAGE_SIZE]);
        self.read_page_into(node, &mut buf)?;
        Ok(buf)
    }

    fn note_read(&self, start: Instant, end: Instant) {
        self.pages_read.fetch_add(1, Ordering::Relaxed);
        let mut span = self.real_span.lock().unwrap();
        *span = Some(match *span {
            None => (start, end),
            Some((s, e)) => (s.min(start), e.max(end)),
        });
    }

    /// Accounts for pages served by the simulated executor, with the
    /// simulated-time span they occupied.
    pub(crate) fn record_simulated(&self, pages: u64, span: Option<(SimTime, SimTime)>) {
        self.pages_read.fetch_add(pages, Ordering::Relaxed);
        if let Some((f, l)) = span {
            let mut own = self.sim_span.lock().unwrap();
            *own = Some(match *own {
                None => (f, l),
                Some((a, b)) => (a.min(f), b.max(l)),
            });
        }
    }

    pub fn close(&self) {
        self.closed.store(true, Ordering::Release);
    }

    pub fn is_closed(&self) -> bool {
        self.closed.load(Ordering::Acquire)
    }

    /// Traffic counters. Simulated backends report simulated time.
    pub fn throughput_report(&self) -> Result<ThroughputReport> {
        let pages = self.pages_read.load(Ordering::Relaxed);
        if pages == 0 {
            return Err(Error::NoTraffic);
        }
        let sim = *self.sim_span.lock().unwrap();
        let direct = match &self.model {
            Some(m) => m.lock().unwrap().span(),
            None => None,
        };
        let wall = match (sim, direct) {
            (Some((a, b)), Some((c, d))) => Duration::from_nanos(b.max(d) - a.min(c)),
            (Some((a, b)), None) | (None, Some((a, b))) => Duration::from_nanos(b - a),
            (None, None) => {
                let span = self.real_span.lock().unwrap();
                span.map(|(s, e)| e - s).unwrap_or_default()
            }
        };
        let bytes = pages * PAGE_SIZE as u64;
        let secs = wall.as_secs_f64();
        Ok(ThroughputReport {
            pages_read: pages,
            bytes_read: bytes,
            wall_time: wall,
            achieved_bandwidth: if secs > 0.0 { bytes as f64 / secs } else { f64::INFINITY },
        })
    }
}

/// Opens a backend over an index file. File backends read pages lazily;
/// memory and simulated backends load the index into memory.
pub fn open_backend(kind: BackendKind, index_path: impl AsRef<Path>, profile: Option<StorageProfile>) -> Result<(IndexMeta, Backend)> {
    let path = index_path.as_ref();
    match kind {
        BackendKind::File => {
            let meta = read_index_meta(path)?;
            let pages = FilePages::open(path, false)?;
            Ok((meta, Backend::new(kind, Arc::new(pages), None)?))
        }
        BackendKind::Memory | BackendKind::Simulated => {
            if kind == BackendKind::Simulated && profile.is_none() {
                return Err(Error::Config("simulated backend requires a storage profile".into()));
            }
            let idx = Arc::new(read_index(path)?);
            let meta = idx.meta();
            Ok((meta, Backend::new(kind, idx, profile)?))
        }
    }
}
