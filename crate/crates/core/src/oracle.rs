//! Operator oracles `g_δ` and empirical checkers for the three conditions the
//! solver relies on:
//!
//! * inexactness: `⟨g(y), x − y⟩ ≤ ⟨g_δ(y), x − y⟩ + δ`
//! * relative strong monotonicity: `⟨g_δ(y), x − y⟩ + ⟨g_δ(x), y − x⟩ + μ·V(x, y) ≤ δ`
//! * relative smoothness: `⟨g_δ(y) − g_δ(z), x − z⟩ ≤ L·V(x, z) + L·V(z, y) + δ`
//!
//! Each checker reports the largest left-minus-right value over seeded random
//! feasible samples, together with the witness that attained it.

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{config, invalid, Result};
use crate::geometry::{FeasibleSet, ProxSetup};
use crate::vector::Vector;

/// Violations at or below this value are treated as floating-point noise.
pub const VIOLATION_TOL: f64 = 1e-9;

pub type OperatorFn = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;

/// An operator oracle `g_δ` with its declared constants (δ, μ, L).
#[derive(Clone)]
pub struct OperatorOracle {
    inexact: OperatorFn,
    exact: Option<OperatorFn>,
    pub delta: f64,
    pub mu: f64,
    pub l_rel: f64,
}

impl OperatorOracle {
    /// An exact oracle: `g_δ = g` and `δ = 0`.
    pub fn exact<F>(g: F, mu: f64, l_rel: f64) -> Self
    where
        F: Fn(&Vector) -> Vector + Send + Sync + 'static,
    {
        let g: OperatorFn = Arc::new(g);
        OperatorOracle {
            inexact: g.clone(),
            exact: Some(g),
            delta: 0.0,
            mu,
            l_rel,
        }
    }

    pub fn inexact(
        inexact: OperatorFn,
        exact: Option<OperatorFn>,
        delta: f64,
        mu: f64,
        l_rel: f64,
    ) -> Self {
        OperatorOracle {
            inexact,
            exact,
            delta,
            mu,
            l_rel,
        }
    }

    /// `g_δ(x)`
    pub fn eval(&self, x: &Vector) -> Vector {
        (self.inexact)(x)
    }

    /// `g(x)`, if the exact operator is known.
    pub fn eval_exact(&self, x: &Vector) -> Result<Vector> {
        match &self.exact {
            Some(g) => Ok(g(x)),
            None => config("oracle has no exact evaluation"),
        }
    }

    pub fn has_exact(&self) -> bool {
        self.exact.is_some()
    }

    /// Same operator with different declared constants.
    pub fn with_constants(&self, delta: f64, mu: f64, l_rel: f64) -> Self {
        OperatorOracle {
            delta,
            mu,
            l_rel,
            ..self.clone()
        }
    }
}

impl fmt::Debug for OperatorOracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OperatorOracle")
            .field("delta", &self.delta)
            .field("mu", &self.mu)
            .field("l_rel", &self.l_rel)
            .field("has_exact", &self.has_exact())
            .finish()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Property {
    Inexactness,
    RelStrongMonotonicity,
    RelSmoothness,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PropertyReport {
    pub property: Property,
    pub samples_checked: usize,
    /// Largest left-minus-right value; positive means violated.
    pub max_violation: f64,
    pub worst_witness: Vec<Vector>,
    pub tolerance: f64,
    pub holds: bool,
}

impl PropertyReport {
    fn from_max(
        property: Property,
        samples: usize,
        max_violation: f64,
        witness: Vec<Vector>,
    ) -> Self {
        PropertyReport {
            property,
            samples_checked: samples,
            max_violation,
            worst_witness: witness,
            tolerance: VIOLATION_TOL,
            holds: max_violation <= VIOLATION_TOL,
        }
    }
}

/// `⟨g(y), x − y⟩ − ⟨g_δ(y), x − y⟩ − δ`
pub fn inexactness_gap(oracle: &OperatorOracle, x: &Vector, y: &Vector) -> Result<f64> {
    let d = x.sub(y);
    Ok(oracle.eval_exact(y)?.dot(&d) - oracle.eval(y).dot(&d) - oracle.delta)
}

/// `⟨g_δ(y), x − y⟩ + ⟨g_δ(x), y − x⟩ + μ·V(x, y) − δ`, checked one-sided in `V(x, y)`.
pub fn strong_monotonicity_gap(
    oracle: &OperatorOracle,
    setup: &ProxSetup,
    x: &Vector,
    y: &Vector,
) -> Result<f64> {
    let d = x.sub(y);
    let cross = oracle.eval(y).dot(&d) - oracle.eval(x).dot(&d);
    Ok(cross + oracle.mu * setup.bregman(x, y)? - oracle.delta)
}

/// `⟨g_δ(y) − g_δ(z), x − z⟩ − L·V(x, z) − L·V(z, y) − δ`
pub fn smoothness_gap(
    oracle: &OperatorOracle,
    setup: &ProxSetup,
    x: &Vector,
    y: &Vector,
    z: &Vector,
) -> Result<f64> {
    let lhs = oracle.eval(y).sub(&oracle.eval(z)).dot(&x.sub(z));
    let l = oracle.l_rel;
    Ok(lhs - l * setup.bregman(x, z)? - l * setup.bregman(z, y)? - oracle.delta)
}

fn require_samples(n: usize) -> Result<()> {
    if n == 0 {
        return invalid("n_samples must be >= 1");
    }
    Ok(())
}

fn sweep<const K: usize>(
    property: Property,
    set: &FeasibleSet,
    n_samples: usize,
    seed: u64,
    mut gap: impl FnMut(&[Vector; K]) -> Result<f64>,
) -> Result<PropertyReport> {
    require_samples(n_samples)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    let mut witness = Vec::new();
    for _ in 0..n_samples {
        let pts: [Vector; K] = std::array::from_fn(|_| set.sample(&mut rng));
        let v = gap(&pts)?;
        if v > worst || witness.is_empty() {
            worst = v;
            witness = pts.to_vec();
        }
    }
    Ok(PropertyReport::from_max(
        property, n_samples, worst, witness,
    ))
}

/// Samples pairs `(x, y)` and checks the inexactness bound against the exact operator.
pub fn check_inexactness(
    oracle: &OperatorOracle,
    set: &FeasibleSet,
    n_samples: usize,
    seed: u64,
) -> Result<PropertyReport> {
    if !oracle.has_exact() {
        return config("check_inexactness needs an oracle with an exact evaluation");
    }
    sweep::<2>(Property::Inexactness, set, n_samples, seed, |[x, y]| {
        inexactness_gap(oracle, x, y)
    })
}

pub fn check_rel_strong_monotonicity(
    oracle: &OperatorOracle,
    setup: &ProxSetup,
    set: &FeasibleSet,
    n_samples: usize,
    seed: u64,
) -> Result<PropertyReport> {
    sweep::<2>(
        Property::RelStrongMonotonicity,
        set,
        n_samples,
        seed,
        |[x, y]| strong_monotonicity_gap(oracle, setup, x, y),
    )
}

pub fn check_rel_smoothness(
    oracle: &OperatorOracle,
    setup: &ProxSetup,
    set: &FeasibleSet,
    n_samples: usize,
    seed: u64,
) -> Result<PropertyReport> {
    sweep::<3>(Property::RelSmoothness, set, n_samples, seed, |[x, y, z]| {
        smoothness_gap(oracle, setup, x, y, z)
    })
}

/// Runs all checkers that apply (inexactness only when `g` is known).
pub fn check_all(
    oracle: &OperatorOracle,
    setup: &ProxSetup,
    set: &FeasibleSet,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<PropertyReport>> {
    let mut out = Vec::with_capacity(3);
    if oracle.has_exact() {
        out.push(check_inexactness(oracle, set, n_samples, seed)?);
    }
    out.push(check_rel_strong_monotonicity(
        oracle,
        setup,
        set,
        n_samples,
        seed.wrapping_add(1),
    )?);
    out.push(check_rel_smoothness(
        oracle,
        setup,
        set,
        n_samples,
        seed.wrapping_add(2),
    )?);
    Ok(out)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn point_seed(seed: u64, x: &[f64]) -> u64 {
    x.iter()
        .fold(splitmix64(seed), |h, c| splitmix64(h ^ c.to_bits()))
}

/// Perturbation `ζ(x)` with `‖ζ(x)‖_* = radius`, a deterministic function of `(seed, x)`.
pub fn perturbation(
    set: &FeasibleSet,
    setup: &ProxSetup,
    seed: u64,
    x: &Vector,
    radius: f64,
) -> Vector {
    let mut rng = ChaCha8Rng::seed_from_u64(point_seed(seed, x));
    loop {
        let z: Vec<f64> = (0..x.dim())
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let norm = set.dual_norm(setup.kind, &z);
        if norm > 0.0 {
            return Vector::from(
                z.into_iter()
                    .map(|a| a * (radius / norm))
                    .collect::<Vec<_>>(),
            );
        }
    }
}

/// Wraps an exact oracle into `g_δ(x) = g(x) + ζ(x)` with `‖ζ(x)‖_* = δ/diam(X)`.
///
/// The inexactness bound then follows from Hölder's inequality. Perturbing
/// the operator also costs slack in the other two conditions: with
/// `c = 2δ/diam(X)²`, the returned oracle declares `μ − c` (floored at 0) and
/// `L + c`, which restores both inequalities whenever they held for `g` with
/// `δ = 0`.
pub fn make_inexact(
    oracle: &OperatorOracle,
    delta: f64,
    setup: &ProxSetup,
    set: &FeasibleSet,
    noise_seed: u64,
) -> Result<OperatorOracle> {
    if !(delta.is_finite() && delta > 0.0) {
        return invalid(format!("make_inexact: delta must be positive, got {delta}"));
    }
    let exact = match &oracle.exact {
        Some(g) => g.clone(),
        None => return config("make_inexact needs an oracle with an exact evaluation"),
    };
    let diam = set.diameter(setup.kind);
    if !(diam.is_finite() && diam > 0.0) {
        return config("make_inexact needs a bounded set with positive diameter");
    }
    let radius = delta / diam;
    let slack = 2.0 * delta / (diam * diam);
    let (set_c, setup_c) = (set.clone(), setup.clone());
    let g = exact.clone();
    let inexact: OperatorFn = Arc::new(move |x: &Vector| {
        g(x).add(&perturbation(&set_c, &setup_c, noise_seed, x, radius))
    });
    Ok(OperatorOracle {
        inexact,
        exact: Some(exact),
        delta,
        mu: (oracle.mu - slack).max(0.0),
        l_rel: oracle.l_rel + slack,
    })
}
