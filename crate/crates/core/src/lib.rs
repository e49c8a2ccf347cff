//! Solvers for variational inequalities with relatively smooth, relatively
//! strongly monotone and δ-inexact operators.
//!
//! The crate provides:
//!
//! * [`geometry`]: feasible sets, prox functions, Bregman divergences and
//!   closed-form prox maps (Euclidean on balls/boxes, entropy on simplices);
//! * [`oracle`]: operator oracles with declared constants, a δ-inexact
//!   wrapper, and sampling checkers for the inexactness, monotonicity and
//!   smoothness conditions;
//! * [`solver`]: adaptive mirror prox ([`ump_solve`]) and its restarted
//!   variant ([`restart_solve`]), both returning complete traces;
//! * [`problems`]: affine and entropy-regularized bilinear problem families
//!   with independently computed reference solutions;
//! * [`certify`]: replay of traces against the convergence guarantees and a
//!   brute-force Minty gap;
//! * [`report`]: CSV traces and atomic artifact writes.
//!
//! ```
//! use bregman_vi::{problems, ump_solve, verify_theorem1, UmpConfig};
//!
//! let problem = problems::bundled_by_name("affine-ball-2").unwrap().build().unwrap();
//! let cfg = UmpConfig::new(1e-3, problem.oracle.l_rel, problem.x0.clone());
//! let trace = ump_solve(&problem.oracle, &problem.setup, &problem.set, &cfg).unwrap();
//! let x_star = problem.x_star.as_ref().unwrap();
//! let cert = verify_theorem1(&trace, &problem.oracle, x_star, &problem.setup, &problem.set).unwrap();
//! assert!(cert.holds);
//! ```

pub mod certify;
pub mod error;
pub mod geometry;
pub mod oracle;
pub mod problems;
pub mod report;
pub mod solver;
mod vector;

pub use certify::{
    minty_gap, minty_gap_sampled, verify_lemma1, verify_theorem1, verify_theorem2, Certificate,
    Claim,
};
pub use error::{Error, Result};
pub use geometry::{max_bregman_over_set, prox_map, FeasibleSet, ProxKind, ProxSetup};
pub use oracle::{
    check_inexactness, check_rel_smoothness, check_rel_strong_monotonicity, make_inexact,
    OperatorOracle, Property, PropertyReport,
};
pub use problems::{ProblemFile, ProblemInstance};
pub use solver::{
    line_search_step, restart_solve, ump_solve, RadiusRule, RestartConfig, RestartState,
    StageOutput, StopMode, UmpConfig, UmpTrace,
};
pub use vector::Vector;
