//! Graph-degree selection by profiling small sample indices.
//!
//! Each candidate degree gets a sample index; a strict-engine batch on the
//! target backend measures per-step compute and I/O time and the step count.
//! With a two-stage pipeline the cost of a step is the slower stage, so the
//! selected degree minimizes `steps * max(t_compute, t_io)`.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use crate::dataset::VectorDataset;
use crate::error::{Error, Result};
use crate::index::{build_index, max_degree_for_page, BuildParams, GraphIndex};
use crate::quantize::{PqCodebook, PqCodes};
use crate::search::{run_query_batch, BatchOptions, Engine, SearchParams};
use crate::storage::{Backend, BackendKind, StorageProfile};

pub const DEFAULT_DEGREES: [usize; 5] = [32, 64, 128, 192, 256];

/// Minimum sample queries per profile.
pub const MIN_PROFILE_QUERIES: usize = 100;

/// Default degree grid clipped to what fits in one page.
pub fn degree_grid(dim: usize, elem_size: usize) -> Result<Vec<usize>> {
    let cap = max_degree_for_page(dim, elem_size)?;
    Ok(DEFAULT_DEGREES.iter().copied().filter(|&d| d <= cap).collect())
}

/// Builds a sample index at `degree`; the candidate list during
/// construction is `max(2 * degree, 64)`.
pub fn build_sample_index(
    sample: &VectorDataset,
    book: &PqCodebook,
    codes: &PqCodes,
    degree: usize,
    seed: u64,
) -> Result<GraphIndex> {
    let cap = max_degree_for_page(sample.dim(), sample.elem().size())?;
    if degree > cap {
        return Err(Error::params(format!(
            "degree {degree} exceeds page capacity {cap}"
        )));
    }
    build_index(
        sample,
        book,
        codes,
        &BuildParams {
            seed,
            ..BuildParams::new(degree)
        },
    )
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DegreeProfile {
    pub degree: usize,
    /// Mean per-step compute, ns (5 % trimmed).
    pub t_compute: f64,
    /// Mean per-step read latency, ns (5 % trimmed, floored at 1).
    pub t_io: f64,
    pub est_steps: f64,
    pub ratio: f64,
}

impl DegreeProfile {
    pub fn new(degree: usize, t_compute: f64, t_io: f64, est_steps: f64) -> Self {
        Self {
            degree,
            t_compute,
            t_io,
            est_steps,
            ratio: t_io / t_compute,
        }
    }

    pub fn objective(&self) -> f64 {
        self.est_steps * self.t_compute.max(self.t_io)
    }

    pub fn io_bound(&self) -> bool {
        self.t_io > self.t_compute
    }
}

/// Mean after dropping the lowest and highest 5 % of samples.
pub fn trimmed_mean(values: &mut [u64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_unstable();
    let cut = values.len() * 5 / 100;
    let kept = &values[cut..values.len() - cut];
    kept.iter().map(|&v| v as f64).sum::<f64>() / kept.len() as f64
}

/// Profiles one index with the strict engine.
pub fn profile_degree(
    index: &Arc<GraphIndex>,
    kind: BackendKind,
    profile: Option<StorageProfile>,
    queries: &VectorDataset,
    params: &SearchParams,
    opts: &BatchOptions,
) -> Result<DegreeProfile> {
    if queries.count() < MIN_PROFILE_QUERIES {
        return Err(Error::InsufficientPoints {
            needed: MIN_PROFILE_QUERIES,
            got: queries.count(),
        });
    }
    let backend = Backend::from_index(index.clone(), kind, profile)?;
    let meta = index.meta();
    let out = run_query_batch(queries, &meta, &backend, &params.with_engine(Engine::Strict), opts, None)?;
    if let Some(e) = out.first_error() {
        return Err(Error::QueryFailed(format!("profiling: {e}")));
    }
    let mut compute: Vec<u64> = out.traces().flat_map(|t| t.steps.iter().map(|s| s.compute_ns)).collect();
    let mut io: Vec<u64> = out.traces().flat_map(|t| t.steps.iter().map(|s| s.io_latency_ns)).collect();
    let t_compute = trimmed_mean(&mut compute).max(1.0);
    let t_io = trimmed_mean(&mut io).max(1.0);
    Ok(DegreeProfile::new(index.max_degree(), t_compute, t_io, out.mean_steps()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TunerReport {
    pub profiles: Vec<DegreeProfile>,
    pub objective: Vec<f64>,
    pub selected_degree: usize,
}

impl TunerReport {
    pub fn selected(&self) -> &DegreeProfile {
        self.profiles
            .iter()
            .find(|p| p.degree == self.selected_degree)
            .expect("selected degree is profiled")
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "degree,t_compute_ns,t_io_ns,est_steps,ratio,objective,selected")?;
        for (p, o) in self.profiles.iter().zip(&self.objective) {
            writeln!(
                w,
                "{},{:.1},{:.1},{:.3},{:.4},{:.1},{}",
                p.degree,
                p.t_compute,
                p.t_io,
                p.est_steps,
                p.ratio,
                o,
                u8::from(p.degree == self.selected_degree)
            )?;
        }
        Ok(())
    }

    /// Writes the one-line file read by `build --degree-file`.
    pub fn write_selected(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, format!("{}\n", self.selected_degree)).map_err(|e| Error::file(path, e))
    }
}

/// Reads a degree written by [`TunerReport::write_selected`].
pub fn read_selected(path: impl AsRef<Path>) -> Result<usize> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    text.trim()
        .parse()
        .map_err(|_| Error::Config(format!("{}: not a degree", path.display())))
}

/// Picks the profiled degree with the smallest `steps * max(t_c, t_io)`;
/// ties go to the smaller degree.
pub fn select_degree(profiles: &[DegreeProfile]) -> Result<TunerReport> {
    if profiles.len() < 2 {
        return Err(Error::TooFewProfiles(profiles.len()));
    }
    for p in profiles {
        if !(p.t_compute > 0.0 && p.t_io > 0.0 && p.est_steps > 0.0) {
            return Err(Error::params(format!("degree {} has a non-positive profile", p.degree)));
        }
    }
    let objective: Vec<f64> = profiles.iter().map(DegreeProfile::objective).collect();
    let best = profiles
        .iter()
        .zip(&objective)
        .min_by(|(a, oa), (b, ob)| oa.total_cmp(ob).then(a.degree.cmp(&b.degree)))
        .map(|(p, _)| p.degree)
        .expect("non-empty");
    Ok(TunerReport {
        profiles: profiles.to_vec(),
        objective,
        selected_degree: best,
    })
}
