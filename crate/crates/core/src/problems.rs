//! Bundled problem families with certified constants and reference solutions.
//!
//! Reference solutions come from small-step fixed-point iterations
//! (projected for Euclidean sets, multiplicative for simplices), never from
//! the solvers under test.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{config, invalid, Result};
use crate::geometry::{prox_map, FeasibleSet, ProxKind, ProxSetup};
use crate::oracle::{make_inexact, OperatorOracle};
use crate::vector::Vector;

const AFFINE_RESIDUAL: f64 = 1e-12;
const SADDLE_RESIDUAL: f64 = 1e-10;
const FIXED_POINT_MAX_ITERS: usize = 5_000_000;

#[derive(Clone, Debug)]
pub struct ProblemInstance {
    pub name: String,
    pub oracle: OperatorOracle,
    pub set: FeasibleSet,
    pub setup: ProxSetup,
    pub x_star: Option<Vector>,
    /// Suggested starting point.
    pub x0: Vector,
    pub provenance: String,
}

fn matvec(a: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)] * x[j]).sum())
        .collect()
}

fn matvec_t(a: &DMatrix<f64>, y: &[f64]) -> Vec<f64> {
    (0..a.ncols())
        .map(|j| (0..a.nrows()).map(|i| a[(i, j)] * y[i]).sum())
        .collect()
}

/// `λ_min((A + Aᵀ)/2)`
pub fn min_symmetric_eigenvalue(a: &DMatrix<f64>) -> f64 {
    let sym = (a + a.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.min()
}

/// Largest singular value.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    a.clone().svd(false, false).singular_values.max()
}

/// `g(x) = Ax + b` on a ball, a box or a product of them, with the Euclidean prox.
///
/// Declares `μ = λ_min((A + Aᵀ)/2)` and `L = ‖A‖₂`. The reference solution is
/// the fixed point of `x ↦ proj(x − γ·g(x))` with `γ = μ/L²`, started from a
/// seeded random feasible point.
pub fn affine_vi(
    a: &DMatrix<f64>,
    b: &Vector,
    set: FeasibleSet,
    seed: u64,
) -> Result<ProblemInstance> {
    let n = a.nrows();
    if a.ncols() != n {
        return invalid(format!(
            "matrix: expected a square matrix, got {}x{}",
            n,
            a.ncols()
        ));
    }
    if b.dim() != n {
        return invalid(format!("b: expected {n} entries, got {}", b.dim()));
    }
    b.validate()?;
    set.validate()?;
    if set.dim() != n {
        return invalid(format!(
            "set: dimension {} does not match matrix size {n}",
            set.dim()
        ));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return invalid("matrix: entries must be finite");
    }
    // projection (and hence the Euclidean prox) is only available on balls and boxes
    set.project(&set.center_point())?;

    let mu = min_symmetric_eigenvalue(a);
    if mu.is_nan() || mu <= 0.0 {
        return invalid(format!(
            "matrix: symmetric part is not positive definite (lambda_min = {mu:e})"
        ));
    }
    let l = spectral_norm(a);
    let am = Arc::new(a.clone());
    let bv = b.clone();
    let g = move |x: &Vector| {
        let mut y = matvec(&am, x);
        for (yi, bi) in y.iter_mut().zip(bv.iter()) {
            *yi += bi;
        }
        Vector::from(y)
    };
    let oracle = OperatorOracle::exact(g, mu, l);

    let gamma = mu / (l * l);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = set.sample(&mut rng);
    let mut residual = f64::INFINITY;
    let mut iters = 0;
    while iters < FIXED_POINT_MAX_ITERS {
        let next = set.project(&x.axpy(-gamma, &oracle.eval(&x)))?;
        residual = next.sub(&x).norm2() / gamma;
        x = next;
        iters += 1;
        if residual <= AFFINE_RESIDUAL {
            break;
        }
    }
    let provenance = format!(
        "affine g(x) = Ax + b; mu = lambda_min(sym(A)) = {mu}; L = ||A||_2 = {l}; \
         x_star by projected fixed point (gamma = mu/L^2, {iters} iterations, residual {residual:e})"
    );
    Ok(ProblemInstance {
        name: format!("affine-vi-{n}"),
        oracle,
        x0: set.center_point(),
        setup: ProxSetup::euclidean(),
        set,
        x_star: Some(x),
        provenance,
    })
}

/// Entropy-regularized matrix game `min_x max_y yᵀMx + μ·d(x) − μ·d(y)` as a VI
/// on `Δ_n × Δ_m` with operator `(Mᵀy + μ∇d(x), −Mx + μ∇d(y))`.
///
/// The bilinear part is skew, so `⟨g(u) − g(v), u − v⟩ = μ(V(u,v) + V(v,u))`,
/// which gives relative strong monotonicity with constant `μ`. The three-point
/// identity bounds the regularizer part by `μ(V(x,z) + V(z,y))`, and Pinsker
/// plus `‖Mu‖_∞ ≤ max|M_ij|·‖u‖₁` bounds the bilinear part by
/// `max|M_ij|·(V(x,z) + V(z,y))`. Hence `L = max|M_ij| + μ`.
pub fn regularized_bilinear_saddle(m: &DMatrix<f64>, mu_reg: f64) -> Result<ProblemInstance> {
    if !(mu_reg.is_finite() && mu_reg > 0.0) {
        return invalid(format!("mu_reg: must be positive, got {mu_reg}"));
    }
    let (rows, cols) = (m.nrows(), m.ncols());
    if rows < 2 || cols < 2 {
        return invalid(format!(
            "matrix: payoff matrix must be at least 2x2, got {rows}x{cols}"
        ));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return invalid("matrix: entries must be finite");
    }
    let set = FeasibleSet::product(vec![FeasibleSet::simplex(cols), FeasibleSet::simplex(rows)])?;
    let setup = ProxSetup::entropy_for(&set)?;
    let max_abs = m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let l = max_abs + mu_reg;

    let mm = Arc::new(m.clone());
    let g = move |z: &Vector| {
        let (x, y) = z.split_at(cols);
        let mut out = matvec_t(&mm, y);
        let neg_mx = matvec(&mm, x);
        for (o, xi) in out.iter_mut().zip(x) {
            *o += mu_reg * (xi.ln() + 1.0);
        }
        out.extend(
            neg_mx
                .into_iter()
                .zip(y)
                .map(|(v, yi)| -v + mu_reg * (yi.ln() + 1.0)),
        );
        Vector::from(out)
    };
    let oracle = OperatorOracle::exact(g, mu_reg, l);

    // multiplicative fixed point z ← prox(z, γ·g(z)) with a small step
    let gamma = mu_reg / (2.0 * l * l);
    let mut z = set.center_point();
    let mut residual = f64::INFINITY;
    let mut iters = 0;
    while iters < FIXED_POINT_MAX_ITERS {
        let next = prox_map(&setup, &set, &z, &oracle.eval(&z), 1.0 / gamma)?;
        residual = set.primal_norm(ProxKind::NegativeEntropy, &next.sub(&z)) / gamma;
        z = next;
        iters += 1;
        if residual <= SADDLE_RESIDUAL {
            break;
        }
    }
    let provenance = format!(
        "entropy-regularized bilinear game; mu = mu_reg = {mu_reg}; L = max|M_ij| + mu_reg = {l}; \
         x_star by multiplicative fixed point (gamma = mu/(2L^2), {iters} iterations, residual {residual:e})"
    );
    Ok(ProblemInstance {
        name: format!("bilinear-saddle-{rows}x{cols}"),
        oracle,
        x0: set.center_point(),
        set,
        setup,
        x_star: Some(z),
        provenance,
    })
}

/// Replaces the exact oracle with a δ-inexact one (see [`make_inexact`]).
/// `delta = 0` returns the problem unchanged.
pub fn perturbed(problem: &ProblemInstance, delta: f64, seed: u64) -> Result<ProblemInstance> {
    if delta == 0.0 {
        return Ok(problem.clone());
    }
    let oracle = make_inexact(&problem.oracle, delta, &problem.setup, &problem.set, seed)?;
    Ok(ProblemInstance {
        provenance: format!(
            "{}; perturbed with delta = {delta} (seed {seed}), mu -> {}, L -> {}",
            problem.provenance, oracle.mu, oracle.l_rel
        ),
        oracle,
        ..problem.clone()
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    AffineVi,
    RegularizedBilinearSaddle,
}

/// On-disk problem description.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub family: Family,
    /// Row-major.
    pub matrix: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub set: Option<FeasibleSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_reg: Option<f64>,
    #[serde(default)]
    pub delta: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vector>,
    /// Overrides the certified μ (for experiments with wrong constants).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub declared_mu: Option<f64>,
    /// Overrides the certified L.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub declared_l: Option<f64>,
}

impl ProblemFile {
    pub fn load(path: &Path) -> Result<ProblemFile> {
        let text = std::fs::read_to_string(path)?;
        ProblemFile::parse(&text)
    }

    pub fn parse(text: &str) -> Result<ProblemFile> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    fn matrix(&self) -> Result<DMatrix<f64>> {
        let rows = self.matrix.len();
        if rows == 0 {
            return invalid("matrix: must have at least one row");
        }
        let cols = self.matrix[0].len();
        for (i, r) in self.matrix.iter().enumerate() {
            if r.len() != cols || cols == 0 {
                return invalid(format!(
                    "matrix: row {i} has {} entries, expected {cols}",
                    r.len()
                ));
            }
        }
        Ok(DMatrix::from_fn(rows, cols, |i, j| self.matrix[i][j]))
    }

    pub fn build(&self) -> Result<ProblemInstance> {
        if !(self.delta.is_finite() && self.delta >= 0.0) {
            return invalid(format!("delta: must be non-negative, got {}", self.delta));
        }
        let a = self.matrix()?;
        let mut inst = match self.family {
            Family::AffineVi => {
                let b = match &self.b {
                    Some(b) => Vector::from(b.clone()),
                    None => return invalid("b: required for family affine_vi"),
                };
                let set = match &self.set {
                    Some(s) => s.clone(),
                    None => return invalid("set: required for family affine_vi"),
                };
                affine_vi(&a, &b, set, self.seed)?
            }
            Family::RegularizedBilinearSaddle => {
                if self.set.is_some() {
                    return invalid(
                        "set: not allowed for regularized_bilinear_saddle (derived from matrix)",
                    );
                }
                let mu = self.mu_reg.ok_or_else(|| {
                    crate::Error::InvalidInput(
                        "mu_reg: required for family regularized_bilinear_saddle".into(),
                    )
                })?;
                regularized_bilinear_saddle(&a, mu)?
            }
        };
        inst = perturbed(&inst, self.delta, self.seed)?;
        if let Some(name) = &self.name {
            inst.name = name.clone();
        }
        if let Some(x0) = &self.x0 {
            x0.validate()?;
            if !inst.set.contains(x0, 1e-9) {
                return invalid("x0: not in the feasible set");
            }
            inst.x0 = x0.clone();
        }
        if self.declared_mu.is_some() || self.declared_l.is_some() {
            let mu = self.declared_mu.unwrap_or(inst.oracle.mu);
            let l = self.declared_l.unwrap_or(inst.oracle.l_rel);
            if !(mu >= 0.0 && l > 0.0) {
                return invalid("declared_mu/declared_l: need mu >= 0 and L > 0");
            }
            inst.oracle = inst.oracle.with_constants(inst.oracle.delta, mu, l);
            inst.provenance.push_str(&format!(
                "; declared constants overridden: mu = {mu}, L = {l}"
            ));
        }
        Ok(inst)
    }
}

/// Random affine instance on the unit ball with a known interior solution.
///
/// `A = I + GGᵀ/n + s·(K − Kᵀ)` with Gaussian `G`, `K`, so the symmetric part
/// has eigenvalues in `[1, 5]`, and `b = −A·x_*` for a random `x_*` with
/// `0.15 ≤ ‖x_*‖ ≤ 0.6`.
pub fn random_affine_file(name: &str, n: usize, seed: u64) -> ProblemFile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gauss = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };
    let g = DMatrix::from_fn(n, n, |_, _| gauss(&mut rng));
    let k = DMatrix::from_fn(n, n, |_, _| gauss(&mut rng));
    let skew = 0.25 / (n as f64).sqrt();
    let a = DMatrix::identity(n, n) + &g * g.transpose() / n as f64 + (&k - k.transpose()) * skew;
    let dir: Vec<f64> = (0..n).map(|_| gauss(&mut rng)).collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    let radius = 0.6 * (0.25 + 0.75 * rng.random::<f64>());
    let target: Vec<f64> = dir.iter().map(|v| radius * v / norm).collect();
    let b: Vec<f64> = matvec(&a, &target).into_iter().map(|v| -v).collect();
    ProblemFile {
        name: Some(name.to_string()),
        family: Family::AffineVi,
        matrix: (0..n)
            .map(|i| (0..n).map(|j| a[(i, j)]).collect())
            .collect(),
        b: Some(b),
        set: Some(FeasibleSet::unit_ball(n)),
        mu_reg: None,
        delta: 0.0,
        seed,
        x0: None,
        declared_mu: None,
        declared_l: None,
    }
}

fn affine_file(name: &str, matrix: Vec<Vec<f64>>, b: Vec<f64>, set: FeasibleSet) -> ProblemFile {
    ProblemFile {
        name: Some(name.to_string()),
        family: Family::AffineVi,
        matrix,
        b: Some(b),
        set: Some(set),
        mu_reg: None,
        delta: 0.0,
        seed: 7,
        x0: None,
        declared_mu: None,
        declared_l: None,
    }
}

/// The bundled problem set used by the test suites and shipped under `problems/`.
pub fn bundled() -> Vec<ProblemFile> {
    let unit_box = FeasibleSet::Box {
        lower: Vector::from(vec![-1.0, -1.0]),
        upper: Vector::from(vec![1.0, 1.0]),
    };
    vec![
        // x_* = (0.3, −0.2), interior
        affine_file(
            "affine-ball-2",
            vec![vec![2.0, 0.5], vec![-0.5, 1.5]],
            vec![-0.5, 0.45],
            FeasibleSet::unit_ball(2),
        ),
        // x_* = (1, 0), on the boundary
        affine_file(
            "affine-boundary-2",
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![-3.0, 0.0],
            FeasibleSet::unit_ball(2),
        ),
        // x_* = (1, −0.5), on a face of the box
        affine_file(
            "affine-box-2",
            vec![vec![1.5, -0.3], vec![0.3, 1.0]],
            vec![-3.0, 0.2],
            unit_box,
        ),
        random_affine_file("affine-ball-10", 10, 10),
        random_affine_file("affine-ball-50", 50, 50),
        ProblemFile {
            name: Some("matching-pennies".into()),
            family: Family::RegularizedBilinearSaddle,
            matrix: vec![vec![1.0, -1.0], vec![-1.0, 1.0]],
            b: None,
            set: None,
            mu_reg: Some(0.1),
            delta: 0.0,
            seed: 0,
            x0: Some(Vector::from(vec![0.9, 0.1, 0.2, 0.8])),
            declared_mu: None,
            declared_l: None,
        },
        ProblemFile {
            name: Some("saddle-3x4".into()),
            family: Family::RegularizedBilinearSaddle,
            matrix: vec![
                vec![0.5, -1.0, 0.25, 0.0],
                vec![-0.75, 0.5, 1.0, -0.5],
                vec![0.0, 0.25, -0.5, 1.0],
            ],
            b: None,
            set: None,
            mu_reg: Some(0.5),
            delta: 0.0,
            seed: 0,
            x0: None,
            declared_mu: None,
            declared_l: None,
        },
    ]
}

/// Looks up a bundled problem by name.
pub fn bundled_by_name(name: &str) -> Result<ProblemFile> {
    bundled()
        .into_iter()
        .find(|p| p.name.as_deref() == Some(name))
        .map_or_else(|| config(format!("no bundled problem named {name}")), Ok)
}
