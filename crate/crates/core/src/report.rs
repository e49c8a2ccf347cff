//! Plot-ready trace files and atomic artifact writes.

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::problems::ProblemInstance;
use crate::solver::{RestartState, UmpTrace};
use crate::vector::{dot, Vector};

/// Default number of sampled points for the per-row Minty gap column.
pub const TRACE_GAP_SAMPLES: usize = 2_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: usize,
    pub i_k: usize,
    #[serde(rename = "L_next")]
    pub l_next: f64,
    #[serde(rename = "S_k")]
    pub s_k: f64,
    #[serde(rename = "V_to_xstar")]
    pub v_to_xstar: Option<f64>,
    pub minty_gap_sampled: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTraceRow {
    pub stage: usize,
    pub k: usize,
    pub i_k: usize,
    #[serde(rename = "L_next")]
    pub l_next: f64,
    #[serde(rename = "S_k")]
    pub s_k: f64,
    #[serde(rename = "V_to_xstar")]
    pub v_to_xstar: Option<f64>,
    pub minty_gap_sampled: Option<f64>,
}

/// Fixed sample of `(x, g(x))` pairs reused for every row's gap estimate.
pub struct GapSampler {
    points: Vec<(Vector, Vector, f64)>,
}

impl GapSampler {
    pub fn new(problem: &ProblemInstance, n_samples: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points = (0..n_samples)
            .map(|_| {
                let x = problem.set.sample(&mut rng);
                let g = problem
                    .oracle
                    .eval_exact(&x)
                    .unwrap_or_else(|_| problem.oracle.eval(&x));
                let gx = g.dot(&x);
                (x, g, gx)
            })
            .filter(|(_, g, _)| g.is_finite())
            .collect();
        GapSampler { points }
    }

    /// `max(0, max_j ⟨g(x_j), c − x_j⟩)`
    pub fn gap(&self, candidate: &Vector) -> Option<f64> {
        if self.points.is_empty() {
            return None;
        }
        Some(
            self.points
                .iter()
                .map(|(_, g, gx)| dot(g, candidate) - gx)
                .fold(0.0, f64::max),
        )
    }
}

/// One row per iteration, evaluated at `z_k`.
pub fn trace_rows(
    trace: &UmpTrace,
    problem: &ProblemInstance,
    sampler: Option<&GapSampler>,
) -> Result<Vec<TraceRow>> {
    trace
        .records
        .iter()
        .map(|r| {
            let v = match &problem.x_star {
                Some(xs) => Some(problem.setup.bregman(xs, &r.z)?),
                None => None,
            };
            Ok(TraceRow {
                k: r.k,
                i_k: r.i_k,
                l_next: r.l_next,
                s_k: r.s,
                v_to_xstar: v,
                minty_gap_sampled: sampler.and_then(|s| s.gap(&r.z)),
            })
        })
        .collect()
}

pub fn restart_rows(
    state: &RestartState,
    problem: &ProblemInstance,
    sampler: Option<&GapSampler>,
) -> Result<Vec<StageTraceRow>> {
    let mut out = Vec::new();
    for stage in &state.stages {
        for r in trace_rows(&stage.trace, problem, sampler)? {
            out.push(StageTraceRow {
                stage: stage.index,
                k: r.k,
                i_k: r.i_k,
                l_next: r.l_next,
                s_k: r.s_k,
                v_to_xstar: r.v_to_xstar,
                minty_gap_sampled: r.minty_gap_sampled,
            });
        }
    }
    Ok(out)
}

pub fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    w.into_inner().map_err(|e| crate::Error::Io(e.into_error()))
}

pub fn read_trace_csv(bytes: &[u8]) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_reader(bytes);
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Writes through a temporary file in the target directory and renames it into
/// place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| crate::Error::Io(e.error))?;
    Ok(())
}

pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}
