//! Feasible sets, prox functions and their Bregman divergences.
//!
//! Two prox geometries are supported:
//!
//! * `Euclidean`: `d(x) = ½‖x‖²`, paired with the ℓ₂ norm. Its divergence is
//!   `½‖y − x‖²`, and its prox map is a Euclidean projection.
//! * `NegativeEntropy`: `d(x) = Σ xᵢ ln xᵢ + ln n` on the simplex, paired with
//!   the ℓ₁ norm (dual ℓ∞). Its divergence is the Kullback-Leibler divergence
//!   and its prox map is a multiplicative update.
//!
//! Products of sets are handled block by block. The norm on a product is the
//! ℓ₂ combination of the block norms, which keeps a sum of 1-strongly convex
//! block prox functions 1-strongly convex.

use std::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, Open01, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{config, invalid, Result};
use crate::vector::Vector;

/// Tolerance used for set membership (simplex sums, box and ball bounds).
pub const MEMBERSHIP_TOL: f64 = 1e-12;

/// Entropy divergences reject base points with a coordinate below this value.
pub const MIN_ENTROPY_COORD: f64 = 1e-300;

/// Compact convex feasible set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FeasibleSet {
    Ball { center: Vector, radius: f64 },
    Box { lower: Vector, upper: Vector },
    Simplex { dim: usize },
    Product { parts: Vec<FeasibleSet> },
}

impl FeasibleSet {
    pub fn ball(center: Vector, radius: f64) -> Result<Self> {
        let s = FeasibleSet::Ball { center, radius };
        s.validate()?;
        Ok(s)
    }

    pub fn unit_ball(dim: usize) -> Self {
        FeasibleSet::Ball {
            center: Vector::zeros(dim),
            radius: 1.0,
        }
    }

    pub fn cube(lower: Vector, upper: Vector) -> Result<Self> {
        let s = FeasibleSet::Box { lower, upper };
        s.validate()?;
        Ok(s)
    }

    pub fn simplex(dim: usize) -> Self {
        FeasibleSet::Simplex { dim }
    }

    pub fn product(parts: Vec<FeasibleSet>) -> Result<Self> {
        let s = FeasibleSet::Product { parts };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            FeasibleSet::Ball { center, radius } => {
                center.validate()?;
                if !(radius.is_finite() && *radius > 0.0) {
                    return invalid(format!("ball radius must be positive, got {radius}"));
                }
            }
            FeasibleSet::Box { lower, upper } => {
                lower.validate()?;
                upper.validate()?;
                if lower.dim() != upper.dim() {
                    return invalid("box bounds have different dimensions");
                }
                if let Some(i) = (0..lower.dim()).find(|&i| lower[i] > upper[i]) {
                    return invalid(format!(
                        "box lower bound exceeds upper bound at coordinate {i}"
                    ));
                }
            }
            FeasibleSet::Simplex { dim } => {
                if *dim == 0 {
                    return invalid("simplex dimension must be >= 1");
                }
            }
            FeasibleSet::Product { parts } => {
                if parts.is_empty() {
                    return invalid("product set needs at least one part");
                }
                for p in parts {
                    p.validate()?;
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            FeasibleSet::Ball { center, .. } => center.dim(),
            FeasibleSet::Box { lower, .. } => lower.dim(),
            FeasibleSet::Simplex { dim } => *dim,
            FeasibleSet::Product { parts } => parts.iter().map(|p| p.dim()).sum(),
        }
    }

    /// Non-product leaves of the set with their coordinate ranges.
    pub fn leaves(&self) -> Vec<(Range<usize>, &FeasibleSet)> {
        let mut out = Vec::new();
        self.collect_leaves(0, &mut out);
        out
    }

    fn collect_leaves<'a>(
        &'a self,
        offset: usize,
        out: &mut Vec<(Range<usize>, &'a FeasibleSet)>,
    ) -> usize {
        match self {
            FeasibleSet::Product { parts } => {
                let mut at = offset;
                for p in parts {
                    at = p.collect_leaves(at, out);
                }
                at
            }
            leaf => {
                let end = offset + leaf.dim();
                out.push((offset..end, leaf));
                end
            }
        }
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        if x.len() != self.dim() || x.iter().any(|c| !c.is_finite()) {
            return false;
        }
        self.leaves().into_iter().all(|(r, leaf)| {
            let x = &x[r];
            match leaf {
                FeasibleSet::Ball { center, radius } => {
                    let d2: f64 = x
                        .iter()
                        .zip(center.iter())
                        .map(|(a, c)| (a - c) * (a - c))
                        .sum();
                    d2.sqrt() <= radius + tol
                }
                FeasibleSet::Box { lower, upper } => x
                    .iter()
                    .enumerate()
                    .all(|(i, &a)| a >= lower[i] - tol && a <= upper[i] + tol),
                FeasibleSet::Simplex { .. } => {
                    x.iter().all(|&a| a >= -tol) && (x.iter().sum::<f64>() - 1.0).abs() <= tol
                }
                FeasibleSet::Product { .. } => unreachable!("leaves are never products"),
            }
        })
    }

    /// A canonical interior point: ball center, box midpoint, uniform simplex point.
    pub fn center_point(&self) -> Vector {
        let mut out = Vec::with_capacity(self.dim());
        for (_, leaf) in self.leaves() {
            match leaf {
                FeasibleSet::Ball { center, .. } => out.extend_from_slice(center),
                FeasibleSet::Box { lower, upper } => {
                    out.extend(lower.iter().zip(upper.iter()).map(|(l, u)| 0.5 * (l + u)))
                }
                FeasibleSet::Simplex { dim } => {
                    out.extend(std::iter::repeat_n(1.0 / *dim as f64, *dim))
                }
                FeasibleSet::Product { .. } => unreachable!(),
            }
        }
        Vector::from(out)
    }

    /// Draws a feasible point. Balls use a normalized Gaussian direction with
    /// radius `R·U^(1/n)`, boxes are coordinatewise uniform, and simplices use
    /// Dirichlet(1, …, 1) via normalized exponentials.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        let mut out = Vec::with_capacity(self.dim());
        for (_, leaf) in self.leaves() {
            match leaf {
                FeasibleSet::Ball { center, radius } => {
                    let n = center.dim();
                    let dir: Vec<f64> = loop {
                        let g: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
                        let norm = g.iter().map(|a| a * a).sum::<f64>().sqrt();
                        if norm > 0.0 {
                            break g.into_iter().map(|a| a / norm).collect();
                        }
                    };
                    let u: f64 = rng.random();
                    let r = radius * u.powf(1.0 / n as f64);
                    out.extend(center.iter().zip(dir).map(|(c, d)| c + r * d));
                }
                FeasibleSet::Box { lower, upper } => {
                    for i in 0..lower.dim() {
                        let u: f64 = rng.random();
                        out.push(lower[i] + u * (upper[i] - lower[i]));
                    }
                }
                FeasibleSet::Simplex { dim } => {
                    let e: Vec<f64> = (0..*dim)
                        .map(|_| {
                            let u: f64 = Open01.sample(rng);
                            -u.ln()
                        })
                        .collect();
                    let s: f64 = e.iter().sum();
                    out.extend(e.into_iter().map(|a| a / s));
                }
                FeasibleSet::Product { .. } => unreachable!(),
            }
        }
        Vector::from(out)
    }

    /// Euclidean projection. Defined for balls, boxes and products of them.
    pub fn project(&self, x: &Vector) -> Result<Vector> {
        let mut out = x.clone();
        for (r, leaf) in self.leaves() {
            let block = &mut out.as_mut_slice()[r];
            match leaf {
                FeasibleSet::Ball { center, radius } => project_ball(block, center, *radius),
                FeasibleSet::Box { lower, upper } => clamp_box(block, lower, upper),
                FeasibleSet::Simplex { .. } => {
                    return config("Euclidean projection onto the simplex is not supported")
                }
                FeasibleSet::Product { .. } => unreachable!(),
            }
        }
        Ok(out)
    }

    /// Primal norm of `v` under the norm paired with `kind`.
    pub fn primal_norm(&self, kind: ProxKind, v: &[f64]) -> f64 {
        self.leaves()
            .into_iter()
            .map(|(r, leaf)| {
                let b = &v[r];
                let n = if uses_l1(kind, leaf) {
                    b.iter().map(|a| a.abs()).sum::<f64>()
                } else {
                    b.iter().map(|a| a * a).sum::<f64>().sqrt()
                };
                n * n
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Dual norm of `v`, dual to [`FeasibleSet::primal_norm`].
    pub fn dual_norm(&self, kind: ProxKind, v: &[f64]) -> f64 {
        self.leaves()
            .into_iter()
            .map(|(r, leaf)| {
                let b = &v[r];
                let n = if uses_l1(kind, leaf) {
                    b.iter().fold(0.0_f64, |m, a| m.max(a.abs()))
                } else {
                    b.iter().map(|a| a * a).sum::<f64>().sqrt()
                };
                n * n
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Diameter under the primal norm paired with `kind`.
    pub fn diameter(&self, kind: ProxKind) -> f64 {
        self.leaves()
            .into_iter()
            .map(|(_, leaf)| {
                let d = match leaf {
                    FeasibleSet::Ball { radius, .. } => 2.0 * radius,
                    FeasibleSet::Box { lower, upper } => upper.sub(lower).norm2(),
                    FeasibleSet::Simplex { dim } => {
                        if *dim == 1 {
                            0.0
                        } else if uses_l1(kind, leaf) {
                            2.0
                        } else {
                            std::f64::consts::SQRT_2
                        }
                    }
                    FeasibleSet::Product { .. } => unreachable!(),
                };
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }
}

fn uses_l1(kind: ProxKind, leaf: &FeasibleSet) -> bool {
    kind == ProxKind::NegativeEntropy && matches!(leaf, FeasibleSet::Simplex { .. })
}

fn project_ball(block: &mut [f64], center: &[f64], radius: f64) {
    let dist = block
        .iter()
        .zip(center)
        .map(|(a, c)| (a - c) * (a - c))
        .sum::<f64>()
        .sqrt();
    if dist > radius {
        let s = radius / dist;
        for (a, c) in block.iter_mut().zip(center) {
            *a = c + (*a - c) * s;
        }
    }
}

fn clamp_box(block: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((a, l), u) in block.iter_mut().zip(lower).zip(upper) {
        *a = a.clamp(*l, *u);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProxKind {
    Euclidean,
    NegativeEntropy,
}

/// A prox function `d`, possibly recentered at `center` and rescaled by `scale`.
///
/// For the Euclidean kind the rescaled function is `R²·d((x − c)/R)`. For the
/// entropy kind only recentering is available: `d_c(x) = V(x, c)`. Both
/// transformations leave the Bregman divergence unchanged, so prox maps do not
/// depend on them; they matter for `d` values and for the Ω bookkeeping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProxSetup {
    pub kind: ProxKind,
    pub center: Option<Vector>,
    /// Rescaling radius `R` (1 for a base setup).
    pub scale: f64,
    /// Ω with `d(x) ≤ Ω/2` on the unit ball around the center.
    pub omega: f64,
    /// Constant added to the entropy so its minimum over the feasible simplices is 0.
    #[serde(default)]
    pub entropy_offset: f64,
}

impl ProxSetup {
    pub fn euclidean() -> Self {
        ProxSetup {
            kind: ProxKind::Euclidean,
            center: None,
            scale: 1.0,
            omega: 1.0,
            entropy_offset: 0.0,
        }
    }

    /// Negative entropy over every simplex block of `set`, shifted by `Σ ln n_b`
    /// so that `Ω = 2·Σ ln n_b` bounds `2·d` on the set.
    pub fn entropy_for(set: &FeasibleSet) -> Result<Self> {
        let mut offset = 0.0;
        for (_, leaf) in set.leaves() {
            match leaf {
                FeasibleSet::Simplex { dim } if *dim >= 2 => offset += (*dim as f64).ln(),
                FeasibleSet::Simplex { .. } => {
                    return config("entropy setup needs simplex blocks of dimension >= 2")
                }
                _ => return config("entropy setup requires a simplex or a product of simplices"),
            }
        }
        Ok(ProxSetup {
            kind: ProxKind::NegativeEntropy,
            center: None,
            scale: 1.0,
            omega: 2.0 * offset,
            entropy_offset: offset,
        })
    }

    /// The standard setup for a set: entropy on simplices, Euclidean elsewhere.
    pub fn default_for(set: &FeasibleSet) -> Result<Self> {
        let all_simplex = set
            .leaves()
            .iter()
            .all(|(_, l)| matches!(l, FeasibleSet::Simplex { .. }));
        if all_simplex {
            ProxSetup::entropy_for(set)
        } else {
            Ok(ProxSetup::euclidean())
        }
    }

    fn is_base(&self) -> bool {
        self.center.is_none() && self.scale == 1.0
    }

    /// `d_p(x) = R²·d((x − c)/R)`. Euclidean kind only.
    pub fn rescale(&self, center: &Vector, radius_sq: f64) -> Result<ProxSetup> {
        if !(radius_sq.is_finite() && radius_sq > 0.0) {
            return invalid(format!(
                "rescale radius_sq must be positive, got {radius_sq}"
            ));
        }
        if self.kind != ProxKind::Euclidean {
            return config(
                "rescaling is only supported for the Euclidean prox; use recenter for entropy",
            );
        }
        if !self.is_base() {
            return config("rescale expects an origin-centered unit-scale base setup");
        }
        center.validate()?;
        Ok(ProxSetup {
            center: Some(center.clone()),
            scale: radius_sq.sqrt(),
            ..self.clone()
        })
    }

    /// `d_c(x) = V(x, c)`: moves the minimizer of `d` to `c` without rescaling.
    pub fn recenter(&self, center: &Vector) -> Result<ProxSetup> {
        if !self.is_base() {
            return config("recenter expects an origin-centered unit-scale base setup");
        }
        center.validate()?;
        if self.kind == ProxKind::NegativeEntropy {
            check_entropy_base(center)?;
        }
        Ok(ProxSetup {
            center: Some(center.clone()),
            ..self.clone()
        })
    }

    /// Value of the (possibly rescaled or recentered) prox function.
    pub fn value(&self, x: &Vector) -> Result<f64> {
        match self.kind {
            ProxKind::Euclidean => {
                let r = self.scale;
                let u = match &self.center {
                    Some(c) => x.sub(c).scale(1.0 / r),
                    None => x.scale(1.0 / r),
                };
                Ok(r * r * 0.5 * u.dot(&u))
            }
            ProxKind::NegativeEntropy => match &self.center {
                Some(c) => self.bregman(x, c),
                None => {
                    let mut s = self.entropy_offset;
                    for &a in x.iter() {
                        if a < 0.0 {
                            return invalid("entropy prox evaluated at a negative coordinate");
                        }
                        if a > 0.0 {
                            s += a * a.ln();
                        }
                    }
                    Ok(s)
                }
            },
        }
    }

    pub fn gradient(&self, x: &Vector) -> Result<Vector> {
        match self.kind {
            ProxKind::Euclidean => {
                let r = self.scale;
                let u = match &self.center {
                    Some(c) => x.sub(c).scale(1.0 / r),
                    None => x.scale(1.0 / r),
                };
                Ok(u.scale(r))
            }
            ProxKind::NegativeEntropy => {
                let g = entropy_gradient(x)?;
                match &self.center {
                    Some(c) => Ok(g.sub(&entropy_gradient(c)?)),
                    None => Ok(g),
                }
            }
        }
    }

    /// Bregman divergence `V(y, x) = d(y) − d(x) − ⟨∇d(x), y − x⟩`.
    ///
    /// Evaluated in closed form: `R²·½‖(y − x)/R‖²` for the Euclidean kind and
    /// the generalized KL divergence `Σ yᵢ ln(yᵢ/xᵢ) − yᵢ + xᵢ` for entropy.
    /// `V(x, x)` is exactly zero for both.
    pub fn bregman(&self, y: &Vector, x: &Vector) -> Result<f64> {
        if y.dim() != x.dim() {
            return invalid(format!(
                "bregman: dimension mismatch {} vs {}",
                y.dim(),
                x.dim()
            ));
        }
        match self.kind {
            ProxKind::Euclidean => {
                let r = self.scale;
                let s: f64 = y
                    .iter()
                    .zip(x.iter())
                    .map(|(a, b)| {
                        let u = (a - b) / r;
                        u * u
                    })
                    .sum();
                Ok(r * r * 0.5 * s)
            }
            ProxKind::NegativeEntropy => {
                check_entropy_base(x)?;
                let mut s = 0.0;
                for (&a, &b) in y.iter().zip(x.iter()) {
                    if a < 0.0 {
                        return invalid(
                            "entropy divergence: negative coordinate in first argument",
                        );
                    }
                    if a > 0.0 {
                        s += a * (a / b).ln();
                    }
                    s += b - a;
                }
                Ok(s.max(0.0))
            }
        }
    }
}

fn check_entropy_base(x: &[f64]) -> Result<()> {
    if let Some(i) = x.iter().position(|&a| a.is_nan() || a < MIN_ENTROPY_COORD) {
        return invalid(format!(
            "entropy divergence: coordinate {i} of the base point is {} (must be >= {MIN_ENTROPY_COORD:e})",
            x[i]
        ));
    }
    Ok(())
}

fn entropy_gradient(x: &Vector) -> Result<Vector> {
    check_entropy_base(x)?;
    Ok(Vector::from(
        x.iter().map(|a| a.ln() + 1.0).collect::<Vec<_>>(),
    ))
}

/// Exact minimizer of `⟨g, x − z⟩ + L·V(x, z)` over `set`.
///
/// Euclidean balls and boxes project `z − g/L`; entropy on a simplex gives
/// `xᵢ ∝ zᵢ·exp(−gᵢ/L)`, normalized after a max-shift of the exponents.
pub fn prox_map(
    setup: &ProxSetup,
    set: &FeasibleSet,
    z: &Vector,
    g: &Vector,
    l: f64,
) -> Result<Vector> {
    if !(l.is_finite() && l > 0.0) {
        return invalid(format!("prox_map: L must be positive and finite, got {l}"));
    }
    let n = set.dim();
    if z.dim() != n || g.dim() != n {
        return invalid(format!(
            "prox_map: dimension mismatch (set {n}, z {}, g {})",
            z.dim(),
            g.dim()
        ));
    }
    let mut out = vec![0.0; n];
    for (r, leaf) in set.leaves() {
        let (zb, gb) = (&z[r.clone()], &g[r.clone()]);
        let ob = &mut out[r];
        match (setup.kind, leaf) {
            (ProxKind::Euclidean, FeasibleSet::Ball { center, radius }) => {
                for i in 0..zb.len() {
                    ob[i] = zb[i] - gb[i] / l;
                }
                project_ball(ob, center, *radius);
            }
            (ProxKind::Euclidean, FeasibleSet::Box { lower, upper }) => {
                for i in 0..zb.len() {
                    ob[i] = zb[i] - gb[i] / l;
                }
                clamp_box(ob, lower, upper);
            }
            (ProxKind::NegativeEntropy, FeasibleSet::Simplex { .. }) => {
                entropy_step(zb, gb, l, ob)?
            }
            (kind, leaf) => {
                return config(format!(
                    "prox_map: unsupported pair ({kind:?}, {})",
                    leaf_name(leaf)
                ))
            }
        }
    }
    Ok(Vector::from(out))
}

fn entropy_step(z: &[f64], g: &[f64], l: f64, out: &mut [f64]) -> Result<()> {
    let mut shift = f64::NEG_INFINITY;
    for i in 0..z.len() {
        if z[i].is_nan() || z[i] <= 0.0 {
            return invalid(format!(
                "entropy prox_map: z has non-positive coordinate {i}"
            ));
        }
        out[i] = z[i].ln() - g[i] / l;
        shift = shift.max(out[i]);
    }
    if !shift.is_finite() {
        return invalid("entropy prox_map: non-finite exponent");
    }
    let mut total = 0.0;
    for o in out.iter_mut() {
        *o = (*o - shift).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        // the multiplicative update never hits zero in exact arithmetic
        *o = (*o / total).max(MIN_ENTROPY_COORD);
    }
    Ok(())
}

fn leaf_name(leaf: &FeasibleSet) -> &'static str {
    match leaf {
        FeasibleSet::Ball { .. } => "ball",
        FeasibleSet::Box { .. } => "box",
        FeasibleSet::Simplex { .. } => "simplex",
        FeasibleSet::Product { .. } => "product",
    }
}

/// Upper bound on `max_{x ∈ X} V(x, x0)`.
///
/// Exact for every supported pair: the divergence is convex in its first
/// argument, so the maximum sits at an extreme point.
pub fn max_bregman_over_set(setup: &ProxSetup, set: &FeasibleSet, x0: &Vector) -> Result<f64> {
    if x0.dim() != set.dim() {
        return invalid("max_bregman_over_set: x0 has the wrong dimension");
    }
    let mut total = 0.0;
    for (r, leaf) in set.leaves() {
        let x = &x0[r];
        let v = match (setup.kind, leaf) {
            (ProxKind::Euclidean, FeasibleSet::Ball { center, radius }) => {
                let d = x
                    .iter()
                    .zip(center.iter())
                    .map(|(a, c)| (a - c) * (a - c))
                    .sum::<f64>()
                    .sqrt();
                0.5 * (radius + d) * (radius + d)
            }
            (ProxKind::Euclidean, FeasibleSet::Box { lower, upper }) => {
                0.5 * x
                    .iter()
                    .enumerate()
                    .map(|(i, a)| {
                        let m = (a - lower[i]).abs().max((a - upper[i]).abs());
                        m * m
                    })
                    .sum::<f64>()
            }
            (ProxKind::Euclidean, FeasibleSet::Simplex { .. }) => {
                let sq: f64 = x.iter().map(|a| a * a).sum();
                let min = x.iter().cloned().fold(f64::INFINITY, f64::min);
                0.5 * (sq + 1.0 - 2.0 * min)
            }
            (ProxKind::NegativeEntropy, FeasibleSet::Simplex { .. }) => {
                check_entropy_base(x)?;
                // KL(e_i ‖ x0) = −ln x0_i
                -x.iter().cloned().fold(f64::INFINITY, f64::min).ln()
            }
            (kind, leaf) => {
                return config(format!(
                    "max_bregman_over_set: unsupported pair ({kind:?}, {})",
                    leaf_name(leaf)
                ))
            }
        };
        total += v;
    }
    Ok(total)
}
