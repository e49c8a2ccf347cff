//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use bregman_vi::certify::{
    grid_residual_minimizer, minty_gap, verify_lemma1, verify_theorem1, verify_theorem2,
};
use bregman_vi::oracle::check_all;
use bregman_vi::problems::{bundled, bundled_by_name, perturbed, ProblemInstance};
use bregman_vi::report::{csv_bytes, restart_rows, trace_rows};
use bregman_vi::{
    max_bregman_over_set, prox_map, restart_solve, ump_solve, FeasibleSet, ProxSetup,
    RestartConfig, RestartState, UmpConfig, UmpTrace, Vector,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

const AFFINE_SIZES: [&str; 3] = ["affine-ball-2", "affine-ball-10", "affine-ball-50"];

fn load(name: &str) -> ProblemInstance {
    bundled_by_name(name).unwrap().build().unwrap()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn solve(p: &ProblemInstance, epsilon: f64) -> UmpTrace {
    let cfg = UmpConfig::new(epsilon, p.oracle.l_rel, p.x0.clone());
    ump_solve(&p.oracle, &p.setup, &p.set, &cfg).unwrap()
}

fn restart(p: &ProblemInstance, epsilon: f64) -> RestartState {
    let r0_sq = max_bregman_over_set(&p.setup, &p.set, &p.x0).unwrap();
    let cfg = RestartConfig::new(
        epsilon,
        p.oracle.mu,
        p.setup.omega,
        p.x0.clone(),
        r0_sq,
        p.oracle.l_rel,
    );
    restart_solve(&p.oracle, &p.setup, &p.set, &cfg).unwrap()
}

fn oracle_contracts() -> Outcome {
    let mut checked = 0;
    for file in bundled() {
        let base = file.build().map_err(|e| e.to_string())?;
        for delta in [0.0, 1e-3] {
            let p = perturbed(&base, delta, 7).map_err(|e| e.to_string())?;
            for r in
                check_all(&p.oracle, &p.setup, &p.set, 10_000, 2024).map_err(|e| e.to_string())?
            {
                ensure(r.max_violation <= 1e-9, || {
                    format!(
                        "{} (delta {delta}): {:?} violation {:e}",
                        p.name, r.property, r.max_violation
                    )
                })?;
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} reports, 1e4 samples each"))
}

fn prox_optimality() -> Outcome {
    let ball = FeasibleSet::ball(Vector::from(vec![0.5, -0.25, 0.0]), 1.5).unwrap();
    let cube = FeasibleSet::cube(
        Vector::from(vec![-1.0, 0.0, -2.0]),
        Vector::from(vec![1.0, 0.5, 2.0]),
    )
    .unwrap();
    let simplex = FeasibleSet::simplex(4);
    let product =
        FeasibleSet::product(vec![FeasibleSet::simplex(3), FeasibleSet::simplex(2)]).unwrap();
    let center3 = Vector::from(vec![0.2, 0.1, -0.3]);
    let pairs = vec![
        ("euclidean/ball", ProxSetup::euclidean(), ball.clone()),
        (
            "euclidean-rescaled/ball",
            ProxSetup::euclidean().rescale(&center3, 0.3).unwrap(),
            ball,
        ),
        ("euclidean/box", ProxSetup::euclidean(), cube),
        (
            "entropy/simplex",
            ProxSetup::entropy_for(&simplex).unwrap(),
            simplex.clone(),
        ),
        (
            "entropy-recentered/simplex",
            ProxSetup::entropy_for(&simplex)
                .unwrap()
                .recenter(&Vector::from(vec![0.4, 0.3, 0.2, 0.1]))
                .unwrap(),
            simplex,
        ),
        (
            "entropy/product",
            ProxSetup::entropy_for(&product).unwrap(),
            product,
        ),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let log_l = Uniform::new(-2.0f64, 2.0).unwrap();
    let mut worst: f64 = f64::NEG_INFINITY;
    for (label, setup, set) in &pairs {
        for _ in 0..100 {
            let z = set.sample(&mut rng);
            let g = Vector::from(
                (0..set.dim())
                    .map(|_| StandardNormal.sample(&mut rng))
                    .collect::<Vec<f64>>(),
            );
            let l = 10f64.powf(log_l.sample(&mut rng));
            let x = prox_map(setup, set, &z, &g, l).map_err(|e| format!("{label}: {e}"))?;
            ensure(set.contains(&x, 1e-12), || {
                format!("{label}: prox output infeasible")
            })?;
            let objective = |y: &Vector| -> f64 { g.dot(y) + l * setup.bregman(y, &z).unwrap() };
            let best = objective(&x);
            for _ in 0..1000 {
                let far = set.sample(&mut rng);
                let near = x.axpy(1e-3, &far.sub(&x));
                for c in [far, near] {
                    let excess = best - objective(&c);
                    worst = worst.max(excess);
                    ensure(excess <= 1e-8, || {
                        format!("{label}: challenger beats prox output by {excess:e}")
                    })?;
                }
            }
        }
    }
    Ok(format!(
        "{} pairs x 100 draws x 2000 challengers, worst excess {worst:.2e}",
        pairs.len()
    ))
}

fn lemma1() -> Outcome {
    let mut steps = 0;
    for name in AFFINE_SIZES {
        let base = load(name);
        for delta in [0.0, 1e-3] {
            let p = perturbed(&base, delta, 3).unwrap();
            let trace = solve(&p, 1e-3);
            let x_star = p.x_star.as_ref().unwrap();
            let cert = verify_lemma1(&trace, x_star, &p.setup, delta).unwrap();
            ensure(cert.holds, || {
                format!("{name}, delta {delta}: margin {:e}", cert.margin)
            })?;
            steps += trace.n;
        }
    }
    Ok(format!("{steps} steps checked"))
}

fn theorem1() -> Outcome {
    let mut runs = 0;
    for name in AFFINE_SIZES {
        let p = load(name);
        for eps in [1e-2, 1e-3] {
            let trace = solve(&p, eps);
            ensure(trace.converged, || {
                format!("{name}, eps {eps}: did not converge")
            })?;
            let cert = verify_theorem1(
                &trace,
                &p.oracle,
                p.x_star.as_ref().unwrap(),
                &p.setup,
                &p.set,
            )
            .unwrap();
            ensure(
                cert.details.iter().any(|c| c.label.starts_with("N <=")),
                || format!("{name}: iteration count not checked"),
            )?;
            ensure(cert.holds, || {
                let w = cert.worst().unwrap();
                format!("{name}, eps {eps}: {} ({} > {})", w.label, w.lhs, w.rhs)
            })?;
            runs += 1;
        }
    }
    Ok(format!("{runs} runs"))
}

fn line_search_bounds() -> Outcome {
    let mut accepted = 0;
    for name in [
        "affine-ball-2",
        "affine-boundary-2",
        "affine-box-2",
        "affine-ball-10",
        "affine-ball-50",
    ] {
        let p = load(name);
        let l_true = p.oracle.l_rel;
        for l0 in [l_true / 16.0, l_true, 8.0 * l_true] {
            let cfg = UmpConfig::new(1e-3, l0, p.x0.clone());
            let trace = ump_solve(&p.oracle, &p.setup, &p.set, &cfg).unwrap();
            let mut prev = l0;
            for r in &trace.records {
                ensure(r.l_next >= prev / 2.0, || {
                    format!("{name}: L dropped below L_k/2 at k={}", r.k)
                })?;
                if r.i_k > 0 {
                    ensure(r.l_next <= 2.0 * l_true + 1e-12, || {
                        format!("{name}: L_next {} > 2 L_true {}", r.l_next, 2.0 * l_true)
                    })?;
                }
                prev = r.l_next;
                accepted += 1;
            }
            ensure(
                trace
                    .records
                    .iter()
                    .skip(4)
                    .all(|r| r.l_next <= 2.0 * l_true + 1e-12),
                || format!("{name}: L stays above 2 L_true after the initial halvings (L0 = {l0})"),
            )?;
        }
    }
    Ok(format!("{accepted} accepted steps"))
}

fn theorem2_accuracy() -> Outcome {
    let mut stages = 0;
    for name in AFFINE_SIZES {
        let base = load(name);
        for eps in [1e-2, 1e-4] {
            for delta in [0.0, 1e-3] {
                let p = perturbed(&base, delta, 5).unwrap();
                let state = restart(&p, eps);
                ensure(state.converged, || {
                    format!("{name}: restart did not complete")
                })?;
                let x_star = p.x_star.as_ref().unwrap();
                let (mu, omega, l) = (p.oracle.mu, p.setup.omega, p.oracle.l_rel);
                let cert =
                    verify_theorem2(&state, &p.setup, x_star, mu, omega, l, delta, eps).unwrap();
                let acc = &cert.details[0];
                ensure(acc.holds(), || {
                    format!(
                        "{name}, eps {eps}, delta {delta}: V = {:e} > {:e}",
                        acc.lhs, acc.rhs
                    )
                })?;
                if delta == 0.0 {
                    ensure(acc.lhs <= eps, || {
                        format!("{name}, eps {eps}: V = {:e} > eps", acc.lhs)
                    })?;
                    for n in &cert.notes {
                        ensure(n.holds(), || {
                            format!("{name}, eps {eps}: {} ({:e} > {:e})", n.label, n.lhs, n.rhs)
                        })?;
                    }
                }
                stages += state.stage_count();
            }
        }
    }
    Ok(format!("12 runs, {stages} stages"))
}

fn theorem2_iterations() -> Outcome {
    let mut parts = Vec::new();
    for name in [
        "affine-ball-2",
        "affine-boundary-2",
        "affine-box-2",
        "affine-ball-10",
        "affine-ball-50",
    ] {
        let p = load(name);
        for eps in [1e-2, 1e-4] {
            let state = restart(&p, eps);
            let x_star = p.x_star.as_ref().unwrap();
            let (mu, omega, l) = (p.oracle.mu, p.setup.omega, p.oracle.l_rel);
            let cert = verify_theorem2(&state, &p.setup, x_star, mu, omega, l, 0.0, eps).unwrap();
            let count = &cert.details[1];
            ensure(count.holds(), || {
                format!(
                    "{name}, eps {eps}: {} iterations > cap {}",
                    count.lhs, count.rhs
                )
            })?;
            parts.push(format!("{}/{}", count.lhs, count.rhs));
        }
    }
    Ok(format!("iterations/cap: {}", parts.join(" ")))
}

fn grid_equivalence() -> Outcome {
    let mut worst_gap: f64 = 0.0;
    let mut worst_dist: f64 = 0.0;
    for name in ["affine-ball-2", "affine-boundary-2", "affine-box-2"] {
        let p = load(name);
        let state = restart(&p, 1e-8);
        let out = state.output();
        let gap = minty_gap(&p.oracle, &p.set, out, 1e-3).unwrap();
        let grid = grid_residual_minimizer(&p.oracle, &p.set, 1e-3).unwrap();
        let dist = out.sub(&grid).norm2();
        ensure(gap <= 1e-4, || format!("{name}: minty gap {gap:e}"))?;
        ensure(dist <= 1e-3, || {
            format!("{name}: distance to grid solution {dist:e}")
        })?;
        worst_gap = worst_gap.max(gap);
        worst_dist = worst_dist.max(dist);
    }
    Ok(format!(
        "max gap {worst_gap:.2e}, max distance {worst_dist:.2e}"
    ))
}

fn entropy_end_to_end() -> Outcome {
    let p = load("matching-pennies");
    let state = restart(&p, 1e-4);
    ensure(state.converged, || "restart did not complete".into())?;
    let uniform = Vector::filled(4, 0.5);
    let x_star = p.x_star.as_ref().unwrap();
    ensure(x_star.sub(&uniform).norm2() <= 1e-9, || {
        format!("reference {x_star:?} is not the centroid")
    })?;
    let v = p.setup.bregman(&uniform, state.output()).unwrap();
    ensure(v <= 1e-4, || format!("V(x*, x_p) = {v:e}"))?;
    Ok(format!(
        "V(x*, x_p) = {v:.2e} after {} stages",
        state.stage_count()
    ))
}

fn traces_bytes() -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    for name in ["affine-ball-10", "matching-pennies"] {
        let p = perturbed(&load(name), 1e-3, 9).unwrap();
        let trace = solve(&p, 1e-3);
        out.push(csv_bytes(&trace_rows(&trace, &p, None).unwrap()).unwrap());
        out.push(serde_json::to_vec(&trace).unwrap());
        let state = restart(&p, 1e-3);
        out.push(csv_bytes(&restart_rows(&state, &p, None).unwrap()).unwrap());
        out.push(serde_json::to_vec(&state).unwrap());
    }
    out
}

fn determinism() -> Outcome {
    let a = traces_bytes();
    let b = traces_bytes();
    ensure(a == b, || "trace bytes differ between runs".into())?;
    Ok(format!(
        "{} artifacts, {} bytes identical",
        a.len(),
        a.iter().map(Vec::len).sum::<usize>()
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("oracle contracts", oracle_contracts),
        ("prox-map optimality", prox_optimality),
        ("stepwise Bregman decrease", lemma1),
        ("mirror prox rate and iteration count", theorem1),
        ("line-search bounds", line_search_bounds),
        ("restart accuracy and halving", theorem2_accuracy),
        ("restart iteration count", theorem2_iterations),
        ("grid-oracle equivalence", grid_equivalence),
        ("entropy geometry end to end", entropy_end_to_end),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("criterion {:>2} {name}: PASS ({msg}; {secs:.1}s)", i + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {:>2} {name}: FAIL ({msg}; {secs:.1}s)", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
