use serde::{Deserialize, Serialize};

use super::ump::{
    ump_solve, StopMode, UmpConfig, UmpTrace, DEFAULT_MAX_LINESEARCH_ITERS, DEFAULT_MAX_OUTER_ITERS,
};
use crate::error::{invalid, Error, Result};
use crate::geometry::{FeasibleSet, ProxKind, ProxSetup};
use crate::oracle::OperatorOracle;
use crate::vector::Vector;

/// How `R_{p+1}²` is derived after each stage.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusRule {
    /// `R_{p+1}² = Ω·R_0² / (2^(p+1)·μ·S_{N_p}) − δ/μ`
    PaperExplicit,
    /// `R_{p+1}² = R_p²/2 + (δ/μ)·(1 + 2ΩL/μ)`
    #[default]
    RecursiveHalving,
}

/// Which point of a stage trace becomes the next center.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageOutput {
    #[default]
    LastW,
    AveragedW,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RestartConfig {
    pub epsilon: f64,
    pub mu: f64,
    pub omega: f64,
    pub x0: Vector,
    /// Bound on `V(x_*, x_0)`.
    pub r0_sq: f64,
    pub l0: f64,
    #[serde(default)]
    pub radius_rule: RadiusRule,
    #[serde(default)]
    pub stage_output: StageOutput,
    pub max_outer_iters: usize,
    pub max_linesearch_iters: usize,
}

impl RestartConfig {
    pub fn new(epsilon: f64, mu: f64, omega: f64, x0: Vector, r0_sq: f64, l0: f64) -> Self {
        RestartConfig {
            epsilon,
            mu,
            omega,
            x0,
            r0_sq,
            l0,
            radius_rule: RadiusRule::default(),
            stage_output: StageOutput::default(),
            max_outer_iters: DEFAULT_MAX_OUTER_ITERS,
            max_linesearch_iters: DEFAULT_MAX_LINESEARCH_ITERS,
        }
    }

    pub fn radius_rule(mut self, rule: RadiusRule) -> Self {
        self.radius_rule = rule;
        self
    }

    pub fn stage_output(mut self, out: StageOutput) -> Self {
        self.stage_output = out;
        self
    }

    pub fn max_outer_iters(mut self, n: usize) -> Self {
        self.max_outer_iters = n;
        self
    }

    /// The stage loop runs while `p ≤ log₂(2R_0²/ε)`.
    pub fn stage_limit(&self) -> f64 {
        (2.0 * self.r0_sq / self.epsilon).log2()
    }

    /// Number of stages the stop rule allows: `⌊log₂(2R_0²/ε)⌋ + 1`, or 0.
    pub fn planned_stages(&self) -> usize {
        let limit = self.stage_limit();
        if limit < 0.0 {
            0
        } else {
            limit.floor() as usize + 1
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("epsilon", self.epsilon),
            ("mu", self.mu),
            ("omega", self.omega),
            ("r0_sq", self.r0_sq),
            ("l0", self.l0),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return invalid(format!("{name} must be positive, got {v}"));
            }
        }
        self.x0.validate()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StageRecord {
    pub index: usize,
    /// `x_p`
    pub center: Vector,
    /// `R_p²`
    pub radius_sq: f64,
    pub setup: ProxSetup,
    pub trace: UmpTrace,
    /// `N_p`
    pub inner_iters: usize,
    /// `S_{N_p}`
    pub sum_inv_l: f64,
    /// `R_{p+1}²` before the clamp at ε/2.
    pub next_radius_sq_raw: f64,
    pub clamped: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RestartState {
    pub config: RestartConfig,
    pub delta: f64,
    pub l_rel: f64,
    pub stages: Vec<StageRecord>,
    /// `x_0 … x_P`
    pub centers: Vec<Vector>,
    /// `R_0² … R_P²`
    pub radii: Vec<f64>,
    pub total_inner_iters: usize,
    pub converged: bool,
    pub failed_stage: Option<usize>,
}

impl RestartState {
    pub fn output(&self) -> &Vector {
        self.centers.last().expect("centers always holds x_0")
    }

    pub fn stage_count(&self) -> usize {
        self.stages.len()
    }

    /// True if some stage produced a non-positive radius before clamping.
    pub fn had_nonpositive_radius(&self) -> bool {
        self.stages.iter().any(|s| s.next_radius_sq_raw <= 0.0)
    }
}

/// Restarted mirror prox.
///
/// Stage `p` runs [`ump_solve`] from `x_p` with the prox function moved to
/// `x_p` (rescaled by `R_p` for the Euclidean kind, recentered for entropy)
/// until `Σ 1/L_{k+1} ≥ Ω/μ`. The line-search constant carries over between
/// stages. Radii are clamped below at `ε/2`.
pub fn restart_solve(
    oracle: &OperatorOracle,
    base_setup: &ProxSetup,
    set: &FeasibleSet,
    config: &RestartConfig,
) -> Result<RestartState> {
    config.validate()?;
    let limit = config.stage_limit();
    let (delta, l_rel, mu, omega) = (oracle.delta, oracle.l_rel, config.mu, config.omega);

    let mut state = RestartState {
        config: config.clone(),
        delta,
        l_rel,
        stages: Vec::new(),
        centers: vec![config.x0.clone()],
        radii: vec![config.r0_sq],
        total_inner_iters: 0,
        converged: true,
        failed_stage: None,
    };
    let mut l = config.l0;
    let mut p = 0usize;

    while (p as f64) <= limit {
        let x_p = state.centers[p].clone();
        let r_p = state.radii[p];
        let stage_err = |e: Error| Error::Stage {
            stage: p,
            source: Box::new(e),
        };
        let setup = match base_setup.kind {
            ProxKind::Euclidean => base_setup.rescale(&x_p, r_p),
            ProxKind::NegativeEntropy => base_setup.recenter(&x_p),
        }
        .map_err(stage_err)?;
        let inner = UmpConfig::new(config.epsilon, l, x_p.clone())
            .stop_mode(StopMode::SumThreshold(omega / mu))
            .max_outer_iters(config.max_outer_iters)
            .max_linesearch_iters(config.max_linesearch_iters);
        let trace = ump_solve(oracle, &setup, set, &inner).map_err(stage_err)?;

        let s_n = trace.sum_inv_l();
        let raw = match config.radius_rule {
            RadiusRule::PaperExplicit => {
                omega * config.r0_sq / (2f64.powi(p as i32 + 1) * mu * s_n) - delta / mu
            }
            RadiusRule::RecursiveHalving => {
                r_p / 2.0 + (delta / mu) * (1.0 + 2.0 * omega * l_rel / mu)
            }
        };
        let floor = config.epsilon / 2.0;
        let next_r = if raw < floor { floor } else { raw };
        let next_x = match config.stage_output {
            StageOutput::LastW => trace.last_w.clone(),
            StageOutput::AveragedW => trace.averaged_w.clone(),
        };
        if let Some(last) = trace.last_l() {
            l = last;
        }
        let converged = trace.converged;
        state.total_inner_iters += trace.n;
        state.stages.push(StageRecord {
            index: p,
            center: x_p,
            radius_sq: r_p,
            setup,
            inner_iters: trace.n,
            sum_inv_l: s_n,
            trace,
            next_radius_sq_raw: raw,
            clamped: raw < floor,
        });
        if !converged {
            state.converged = false;
            state.failed_stage = Some(p);
            break;
        }
        state.centers.push(next_x);
        state.radii.push(next_r);
        p += 1;
    }
    Ok(state)
}
