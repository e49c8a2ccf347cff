use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{max_bregman_over_set, prox_map, FeasibleSet, ProxSetup};
use crate::oracle::OperatorOracle;
use crate::vector::Vector;

pub const DEFAULT_MAX_LINESEARCH_ITERS: usize = 60;
pub const DEFAULT_MAX_OUTER_ITERS: usize = 1_000_000;

/// Starting points may be off the set by this much (user-supplied decimals).
const START_FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "threshold", rename_all = "snake_case")]
pub enum StopMode {
    /// Stop once `S_N ≥ max_x V(x, z_0) / ε`.
    EpsilonTarget,
    /// Stop once `S_N ≥ threshold`.
    SumThreshold(f64),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UmpConfig {
    pub epsilon: f64,
    pub l0: f64,
    pub z0: Vector,
    pub stop_mode: StopMode,
    pub max_outer_iters: usize,
    pub max_linesearch_iters: usize,
}

impl UmpConfig {
    pub fn new(epsilon: f64, l0: f64, z0: Vector) -> Self {
        UmpConfig {
            epsilon,
            l0,
            z0,
            stop_mode: StopMode::EpsilonTarget,
            max_outer_iters: DEFAULT_MAX_OUTER_ITERS,
            max_linesearch_iters: DEFAULT_MAX_LINESEARCH_ITERS,
        }
    }

    pub fn stop_mode(mut self, mode: StopMode) -> Self {
        self.stop_mode = mode;
        self
    }

    pub fn max_outer_iters(mut self, n: usize) -> Self {
        self.max_outer_iters = n;
        self
    }

    pub fn max_linesearch_iters(mut self, n: usize) -> Self {
        self.max_linesearch_iters = n;
        self
    }

    fn validate(&self, set: &FeasibleSet) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return invalid(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(self.l0.is_finite() && self.l0 > 0.0) {
            return invalid(format!("l0 must be positive, got {}", self.l0));
        }
        if let StopMode::SumThreshold(t) = self.stop_mode {
            if !(t.is_finite() && t > 0.0) {
                return invalid(format!("stop threshold must be positive, got {t}"));
            }
        }
        if self.max_outer_iters == 0 {
            return invalid("max_outer_iters must be >= 1");
        }
        self.z0.validate()?;
        if !set.contains(&self.z0, START_FEASIBILITY_TOL) {
            return invalid("z0 is not in the feasible set");
        }
        Ok(())
    }
}

/// One accepted outer iteration.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    pub i_k: usize,
    /// `L_{k+1}`
    pub l_next: f64,
    pub z: Vector,
    pub w: Vector,
    /// `S_{k+1} = Σ_{j ≤ k} 1/L_{j+1}`
    pub s: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UmpTrace {
    pub records: Vec<IterationRecord>,
    pub z0: Vector,
    pub l0: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub stop_mode: StopMode,
    /// Value `S_N` had to reach.
    pub threshold: f64,
    pub last_z: Vector,
    pub last_w: Vector,
    /// `(1/S_N)·Σ w_k / L_{k+1}`
    pub averaged_w: Vector,
    pub n: usize,
    pub oracle_calls: usize,
    pub converged: bool,
}

impl UmpTrace {
    pub fn sum_inv_l(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.s)
    }

    pub fn last_l(&self) -> Option<f64> {
        self.records.last().map(|r| r.l_next)
    }

    pub fn max_l(&self) -> f64 {
        self.records.iter().fold(0.0, |m, r| m.max(r.l_next))
    }

    /// `z_k` for `k = 0..=N`.
    pub fn z_iterates(&self) -> impl Iterator<Item = &Vector> {
        self.records
            .iter()
            .map(|r| &r.z)
            .chain(std::iter::once(&self.last_z))
    }
}

#[derive(Clone, Debug)]
pub struct LineSearchStep {
    pub w: Vector,
    pub z_next: Vector,
    pub l_next: f64,
    pub i_k: usize,
    pub oracle_calls: usize,
}

/// Left minus right side of the acceptance test
///
/// `⟨g_z, z⁺ − z⟩ ≤ ⟨g_w, z⁺ − w⟩ + ⟨g_z, w − z⟩ + L·(V(w, z) + V(z⁺, w)) + δ`.
///
/// The step is accepted iff the result is `≤ 0`.
#[allow(clippy::too_many_arguments)]
pub fn acceptance_gap(
    setup: &ProxSetup,
    z: &Vector,
    w: &Vector,
    z_next: &Vector,
    g_z: &Vector,
    g_w: &Vector,
    l: f64,
    delta: f64,
) -> Result<f64> {
    let lhs = g_z.dot(&z_next.sub(z));
    let rhs = g_w.dot(&z_next.sub(w))
        + g_z.dot(&w.sub(z))
        + l * (setup.bregman(w, z)? + setup.bregman(z_next, w)?)
        + delta;
    Ok(lhs - rhs)
}

/// Finds the smallest `i ≥ 0` for which `L = 2^(i−1)·L_k` passes the acceptance test.
pub fn line_search_step(
    oracle: &OperatorOracle,
    setup: &ProxSetup,
    set: &FeasibleSet,
    z_k: &Vector,
    l_k: f64,
    delta: f64,
    cap: usize,
) -> Result<LineSearchStep> {
    let g_z = oracle.eval(z_k);
    let mut step = search(oracle, setup, set, z_k, &g_z, l_k, delta, cap, 0)?;
    step.oracle_calls += 1;
    Ok(step)
}

#[allow(clippy::too_many_arguments)]
fn search(
    oracle: &OperatorOracle,
    setup: &ProxSetup,
    set: &FeasibleSet,
    z: &Vector,
    g_z: &Vector,
    l_k: f64,
    delta: f64,
    cap: usize,
    iteration: usize,
) -> Result<LineSearchStep> {
    if !(l_k.is_finite() && l_k > 0.0) {
        return invalid(format!("line search: L_k must be positive, got {l_k}"));
    }
    let mut last = None;
    for i in 0..=cap {
        let l = l_k * 2f64.powi(i as i32 - 1);
        if !l.is_finite() {
            break;
        }
        let w = prox_map(setup, set, z, g_z, l)?;
        let g_w = oracle.eval(&w);
        let z_next = prox_map(setup, set, z, &g_w, l)?;
        if acceptance_gap(setup, z, &w, &z_next, g_z, &g_w, l, delta)? <= 0.0 {
            return Ok(LineSearchStep {
                w,
                z_next,
                l_next: l,
                i_k: i,
                oracle_calls: i + 1,
            });
        }
        last = Some((l, w, z_next));
    }
    let (last_l, w, z_next) = last.unwrap_or_else(|| (l_k, z.clone(), z.clone()));
    Err(Error::LineSearch {
        iteration,
        trials: cap + 1,
        last_l,
        w,
        z_next,
    })
}

/// Universal mirror prox with the adaptive halving/doubling line search.
///
/// Each iteration starts its search from the previous accepted constant, so
/// the first trial halves it. The loop stops when `S_N` reaches the stop
/// threshold; running out of `max_outer_iters` first returns a trace with
/// `converged = false`.
pub fn ump_solve(
    oracle: &OperatorOracle,
    setup: &ProxSetup,
    set: &FeasibleSet,
    config: &UmpConfig,
) -> Result<UmpTrace> {
    config.validate(set)?;
    let threshold = match config.stop_mode {
        StopMode::EpsilonTarget => max_bregman_over_set(setup, set, &config.z0)? / config.epsilon,
        StopMode::SumThreshold(t) => t,
    };
    let delta = oracle.delta;
    let n = set.dim();

    let mut records = Vec::new();
    let mut z = config.z0.clone();
    let mut l = config.l0;
    let mut s = 0.0;
    let mut weighted = vec![0.0; n];
    let mut calls = 0;
    let mut last_w = config.z0.clone();
    let mut converged = false;

    for k in 0..config.max_outer_iters {
        let g_z = oracle.eval(&z);
        let step = search(
            oracle,
            setup,
            set,
            &z,
            &g_z,
            l,
            delta,
            config.max_linesearch_iters,
            k,
        )?;
        calls += step.oracle_calls + 1;
        let inv = 1.0 / step.l_next;
        s += inv;
        for (acc, wi) in weighted.iter_mut().zip(step.w.iter()) {
            *acc += inv * wi;
        }
        records.push(IterationRecord {
            k,
            i_k: step.i_k,
            l_next: step.l_next,
            z,
            w: step.w.clone(),
            s,
        });
        z = step.z_next;
        l = step.l_next;
        last_w = step.w;
        if s >= threshold {
            converged = true;
            break;
        }
    }

    let averaged_w = if s > 0.0 {
        Vector::from(weighted.into_iter().map(|a| a / s).collect::<Vec<_>>())
    } else {
        config.z0.clone()
    };
    Ok(UmpTrace {
        n: records.len(),
        records,
        z0: config.z0.clone(),
        l0: config.l0,
        epsilon: config.epsilon,
        delta,
        stop_mode: config.stop_mode,
        threshold,
        last_z: z,
        last_w,
        averaged_w,
        oracle_calls: calls,
        converged,
    })
}
