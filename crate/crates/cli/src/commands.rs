use std::fmt;
use std::path::Path;
use std::time::Instant;

use bregman_vi::certify::{minty_gap, minty_gap_sampled, Check, DEFAULT_GAP_SAMPLES};
use bregman_vi::oracle::check_all;
use bregman_vi::problems::{bundled, bundled_by_name, ProblemInstance};
use bregman_vi::report::{
    csv_bytes, restart_rows, trace_rows, write_atomic, write_json_atomic, GapSampler,
};
use bregman_vi::{
    max_bregman_over_set, restart_solve, ump_solve, verify_lemma1, verify_theorem1,
    verify_theorem2, Certificate, Error, ProblemFile, RestartConfig, RestartState, StopMode,
    UmpConfig, UmpTrace, Vector,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{
    BenchArgs, CertifyArgs, CheckArgs, ProblemArgs, RestartArgs, RunArgs, SolveArgs, StopModeArg,
};

pub const EXIT_OK: u8 = 0;
pub const EXIT_INPUT: u8 = 1;
pub const EXIT_NONCONVERGENCE: u8 = 2;
pub const EXIT_VIOLATION: u8 = 3;

const THREADS_ENV: &str = "BREGMAN_VI_THREADS";

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Violation(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Violation(_) => EXIT_VIOLATION,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) | CliError::Violation(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::LineSearch { .. } | Error::Stage { .. } => CliError::Violation(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn input<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Input(msg.into()))
}

fn load_file(spec: &str) -> CliResult<ProblemFile> {
    let path = Path::new(spec);
    if path.exists() {
        ProblemFile::load(path).map_err(|e| CliError::Input(format!("{spec}: {e}")))
    } else {
        bundled_by_name(spec).map_err(|_| {
            CliError::Input(format!("problem: no file or bundled problem named {spec}"))
        })
    }
}

fn load_problem(args: &ProblemArgs) -> CliResult<ProblemInstance> {
    let mut file = load_file(&args.problem)?;
    if let Some(d) = args.delta {
        file.delta = d;
    }
    if let Some(s) = args.seed {
        file.seed = s;
    }
    file.build()
        .map_err(|e| CliError::Input(format!("{}: {e}", args.problem)))
}

fn noise_seed(args: &ProblemArgs) -> u64 {
    args.seed.unwrap_or(0)
}

fn check_run_args(run: &RunArgs) -> CliResult<()> {
    if !(run.epsilon.is_finite() && run.epsilon > 0.0) {
        return input(format!("epsilon: must be positive, got {}", run.epsilon));
    }
    if run.samples == 0 {
        return input("samples: must be >= 1");
    }
    if let Some(l0) = run.l0 {
        if !(l0.is_finite() && l0 > 0.0) {
            return input(format!("l0: must be positive, got {l0}"));
        }
    }
    Ok(())
}

/// Compact form of a certificate for summaries and tables.
#[derive(Debug, Serialize, Deserialize)]
pub struct CertificateSummary {
    pub claim: bregman_vi::Claim,
    pub holds: bool,
    pub margin: f64,
    pub checks: usize,
    pub worst: Option<Check>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<Check>,
}

impl From<&Certificate> for CertificateSummary {
    fn from(c: &Certificate) -> Self {
        CertificateSummary {
            claim: c.claim,
            holds: c.holds,
            margin: c.margin,
            checks: c.details.len(),
            worst: c.worst().cloned(),
            notes: c.notes.clone(),
        }
    }
}

#[derive(Debug, Serialize)]
struct GapReport {
    mode: &'static str,
    value: f64,
}

/// Minty gap on a grid when the set allows it, sampled otherwise.
fn gap_report(
    p: &ProblemInstance,
    candidate: &Vector,
    grid: f64,
    samples: usize,
    seed: u64,
) -> CliResult<GapReport> {
    match minty_gap(&p.oracle, &p.set, candidate, grid) {
        Ok(value) => Ok(GapReport {
            mode: "grid",
            value,
        }),
        Err(Error::Config(_)) => Ok(GapReport {
            mode: "sampled",
            value: minty_gap_sampled(&p.oracle, &p.set, candidate, samples, seed)?,
        }),
        Err(e) => Err(e.into()),
    }
}

#[derive(Serialize)]
struct SolveSummary<'a> {
    problem: &'a str,
    provenance: &'a str,
    epsilon: f64,
    delta: f64,
    mu: f64,
    l: f64,
    l0: f64,
    stop_mode: StopMode,
    threshold: f64,
    n: usize,
    converged: bool,
    oracle_calls: usize,
    /// Name of the reported output point.
    output: &'static str,
    averaged_w: &'a Vector,
    last_w: &'a Vector,
    last_z: &'a Vector,
    #[serde(skip_serializing_if = "Option::is_none")]
    x_star: Option<&'a Vector>,
    #[serde(skip_serializing_if = "Option::is_none")]
    v_to_xstar: Option<f64>,
    minty_gap: GapReport,
    certificates: Vec<CertificateSummary>,
}

fn solve_certificates(p: &ProblemInstance, trace: &UmpTrace) -> CliResult<Vec<Certificate>> {
    let mut out = Vec::new();
    if let (Some(xs), false) = (&p.x_star, trace.records.is_empty()) {
        out.push(verify_lemma1(trace, xs, &p.setup, trace.delta)?);
        if trace.delta == 0.0 {
            out.push(verify_theorem1(trace, &p.oracle, xs, &p.setup, &p.set)?);
        }
    }
    Ok(out)
}

fn exit_for(converged: bool, certs: &[Certificate]) -> u8 {
    if !converged {
        EXIT_NONCONVERGENCE
    } else if certs.iter().any(|c| !c.holds) {
        EXIT_VIOLATION
    } else {
        EXIT_OK
    }
}

pub fn solve(args: &SolveArgs) -> CliResult<u8> {
    let run = &args.run;
    check_run_args(run)?;
    let p = load_problem(&run.problem)?;
    let stop_mode = match (args.stop_mode, args.threshold) {
        (StopModeArg::EpsilonTarget, None) => StopMode::EpsilonTarget,
        (StopModeArg::EpsilonTarget, Some(_)) => {
            return input("threshold: only valid with --stop-mode sum-threshold")
        }
        (StopModeArg::SumThreshold, Some(t)) => StopMode::SumThreshold(t),
        (StopModeArg::SumThreshold, None) => {
            return input("threshold: required for --stop-mode sum-threshold")
        }
    };
    let l0 = run.l0.unwrap_or(p.oracle.l_rel);
    let mut cfg = UmpConfig::new(run.epsilon, l0, p.x0.clone()).stop_mode(stop_mode);
    if let Some(n) = run.max_outer_iters {
        cfg = cfg.max_outer_iters(n);
    }
    if let Some(n) = run.max_linesearch_iters {
        cfg = cfg.max_linesearch_iters(n);
    }
    let trace = ump_solve(&p.oracle, &p.setup, &p.set, &cfg)?;

    let seed = noise_seed(&run.problem);
    let sampler = GapSampler::new(&p, run.samples, seed);
    let rows = trace_rows(&trace, &p, Some(&sampler))?;
    write_atomic(&run.out_dir.join("trace.csv"), &csv_bytes(&rows)?)?;
    write_json_atomic(&run.out_dir.join("trace.json"), &trace)?;

    let certs = solve_certificates(&p, &trace)?;
    let v_to_xstar = match &p.x_star {
        Some(xs) => Some(p.setup.bregman(xs, &trace.averaged_w)?),
        None => None,
    };
    let summary = SolveSummary {
        problem: &p.name,
        provenance: &p.provenance,
        epsilon: run.epsilon,
        delta: p.oracle.delta,
        mu: p.oracle.mu,
        l: p.oracle.l_rel,
        l0,
        stop_mode,
        threshold: trace.threshold,
        n: trace.n,
        converged: trace.converged,
        oracle_calls: trace.oracle_calls,
        output: "averaged_w",
        averaged_w: &trace.averaged_w,
        last_w: &trace.last_w,
        last_z: &trace.last_z,
        x_star: p.x_star.as_ref(),
        v_to_xstar,
        minty_gap: gap_report(&p, &trace.averaged_w, 1e-2, DEFAULT_GAP_SAMPLES, seed)?,
        certificates: certs.iter().map(CertificateSummary::from).collect(),
    };
    write_json_atomic(&run.out_dir.join("summary.json"), &summary)?;

    println!(
        "{}: N = {}, converged = {}, oracle calls = {}",
        p.name, trace.n, trace.converged, trace.oracle_calls
    );
    print_table(&summary.certificates);
    if !trace.converged {
        eprintln!("error: iteration cap reached before the stopping criterion");
    }
    Ok(exit_for(trace.converged, &certs))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StageSummary {
    pub index: usize,
    pub radius_sq: f64,
    pub inner_iters: usize,
    pub sum_inv_l: f64,
    pub final_l: Option<f64>,
    pub next_radius_sq_raw: f64,
    pub clamped: bool,
}

/// Contents of `restart.json`.
#[derive(Debug, Serialize, Deserialize)]
pub struct RestartArtifact {
    pub problem: String,
    pub epsilon: f64,
    pub delta: f64,
    pub mu: f64,
    pub omega: f64,
    pub l: f64,
    pub r0_sq: f64,
    pub planned_stages: usize,
    pub stage_count: usize,
    pub total_inner_iters: usize,
    pub converged: bool,
    pub output: Vector,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_to_xstar: Option<f64>,
    pub stages: Vec<StageSummary>,
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<CertificateSummary>,
    pub state: RestartState,
}

fn theorem2_for(p: &ProblemInstance, state: &RestartState) -> CliResult<Option<Certificate>> {
    match (&p.x_star, state.converged) {
        (Some(xs), true) => Ok(Some(verify_theorem2(
            state,
            &p.setup,
            xs,
            state.config.mu,
            state.config.omega,
            state.l_rel,
            state.delta,
            state.config.epsilon,
        )?)),
        _ => Ok(None),
    }
}

pub fn restart(args: &RestartArgs) -> CliResult<u8> {
    let run = &args.run;
    check_run_args(run)?;
    let p = load_problem(&run.problem)?;
    let r0_sq = match args.r0_sq {
        Some(r) => r,
        None => max_bregman_over_set(&p.setup, &p.set, &p.x0)?,
    };
    let l0 = run.l0.unwrap_or(p.oracle.l_rel);
    let mut cfg = RestartConfig::new(
        run.epsilon,
        p.oracle.mu,
        p.setup.omega,
        p.x0.clone(),
        r0_sq,
        l0,
    )
    .radius_rule(args.radius_rule.into())
    .stage_output(args.stage_output.into());
    if let Some(n) = run.max_outer_iters {
        cfg = cfg.max_outer_iters(n);
    }
    if let Some(n) = run.max_linesearch_iters {
        cfg.max_linesearch_iters = n;
    }
    let state = restart_solve(&p.oracle, &p.setup, &p.set, &cfg)?;

    let warnings: Vec<String> = state
        .stages
        .iter()
        .filter(|s| s.next_radius_sq_raw <= 0.0)
        .map(|s| {
            format!(
                "stage {}: radius update gave R^2 = {:e} <= 0, clamped to epsilon/2 = {:e}",
                s.index,
                s.next_radius_sq_raw,
                run.epsilon / 2.0
            )
        })
        .collect();
    for w in &warnings {
        eprintln!("warning: {w}");
    }

    let seed = noise_seed(&run.problem);
    let sampler = GapSampler::new(&p, run.samples, seed);
    let rows = restart_rows(&state, &p, Some(&sampler))?;
    write_atomic(&run.out_dir.join("trace.csv"), &csv_bytes(&rows)?)?;

    let cert = theorem2_for(&p, &state)?;
    let artifact = RestartArtifact {
        problem: p.name.clone(),
        epsilon: run.epsilon,
        delta: state.delta,
        mu: cfg.mu,
        omega: cfg.omega,
        l: state.l_rel,
        r0_sq,
        planned_stages: cfg.planned_stages(),
        stage_count: state.stage_count(),
        total_inner_iters: state.total_inner_iters,
        converged: state.converged,
        output: state.output().clone(),
        v_to_xstar: match &p.x_star {
            Some(xs) => Some(p.setup.bregman(xs, state.output())?),
            None => None,
        },
        stages: state
            .stages
            .iter()
            .map(|s| StageSummary {
                index: s.index,
                radius_sq: s.radius_sq,
                inner_iters: s.inner_iters,
                sum_inv_l: s.sum_inv_l,
                final_l: s.trace.last_l(),
                next_radius_sq_raw: s.next_radius_sq_raw,
                clamped: s.clamped,
            })
            .collect(),
        warnings,
        certificate: cert.as_ref().map(CertificateSummary::from),
        state,
    };
    write_json_atomic(&run.out_dir.join("restart.json"), &artifact)?;

    println!(
        "{}: {} stages, {} inner iterations, converged = {}",
        p.name, artifact.stage_count, artifact.total_inner_iters, artifact.converged
    );
    if let Some(c) = &artifact.certificate {
        print_table(std::slice::from_ref(c));
    }
    if !artifact.converged {
        eprintln!("error: a stage reached the iteration cap before its stopping criterion");
    }
    Ok(exit_for(artifact.converged, cert.as_slice()))
}

pub fn check_oracle(args: &CheckArgs) -> CliResult<u8> {
    if args.samples == 0 {
        return input("samples: must be >= 1");
    }
    let p = load_problem(&args.problem)?;
    let reports = check_all(
        &p.oracle,
        &p.setup,
        &p.set,
        args.samples,
        noise_seed(&args.problem),
    )?;
    let json =
        serde_json::to_string_pretty(&reports).map_err(|e| CliError::Input(e.to_string()))?;
    println!("{json}");
    if let Some(dir) = &args.out_dir {
        write_json_atomic(&dir.join("oracle_report.json"), &reports)?;
    }
    let violated: Vec<String> = reports
        .iter()
        .filter(|r| !r.holds)
        .map(|r| format!("{:?} (max violation {:e})", r.property, r.max_violation))
        .collect();
    if violated.is_empty() {
        Ok(EXIT_OK)
    } else {
        eprintln!("violated: {}", violated.join(", "));
        Ok(EXIT_VIOLATION)
    }
}

enum SavedRun {
    Single(Box<UmpTrace>),
    Restarted(Box<RestartState>),
}

fn load_saved(path: &Path) -> CliResult<SavedRun> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let parse_err = |e: serde_json::Error| CliError::Input(format!("{}: {e}", path.display()));
    if value.get("records").is_some() {
        Ok(SavedRun::Single(Box::new(
            serde_json::from_value(value).map_err(parse_err)?,
        )))
    } else if let Some(state) = value.get("state") {
        Ok(SavedRun::Restarted(Box::new(
            serde_json::from_value(state.clone()).map_err(parse_err)?,
        )))
    } else {
        input(format!(
            "{}: expected trace.json from solve or restart.json from restart",
            path.display()
        ))
    }
}

pub fn certify(args: &CertifyArgs) -> CliResult<u8> {
    if !(args.grid > 0.0 && args.grid <= 1.0) {
        return input(format!("grid: must be in (0, 1], got {}", args.grid));
    }
    if args.samples == 0 {
        return input("samples: must be >= 1");
    }
    let p = load_problem(&args.problem)?;
    let x_star = match &p.x_star {
        Some(x) => x.clone(),
        None => return input("problem: no reference solution, nothing to certify"),
    };
    let seed = noise_seed(&args.problem);
    let (certs, candidate, epsilon, delta) = match load_saved(&args.trace)? {
        SavedRun::Single(trace) => {
            if trace.records.is_empty() {
                return input("trace: no iterations recorded");
            }
            let mut c = vec![verify_lemma1(&trace, &x_star, &p.setup, trace.delta)?];
            if trace.delta == 0.0 {
                c.push(verify_theorem1(
                    &trace, &p.oracle, &x_star, &p.setup, &p.set,
                )?);
            }
            (c, trace.averaged_w.clone(), trace.epsilon, trace.delta)
        }
        SavedRun::Restarted(state) => {
            let c = theorem2_for(&p, &state)?.into_iter().collect::<Vec<_>>();
            if c.is_empty() {
                return input("trace: restart run did not complete");
            }
            (c, state.output().clone(), state.config.epsilon, state.delta)
        }
    };
    let gap = gap_report(&p, &candidate, args.grid, args.samples, seed)?;
    let summaries: Vec<CertificateSummary> = certs.iter().map(CertificateSummary::from).collect();
    print_table(&summaries);
    println!(
        "{} Minty gap of the output point: {:.6e} (epsilon = {epsilon:e}, delta = {delta:e})",
        gap.mode, gap.value
    );
    Ok(if certs.iter().all(|c| c.holds) {
        EXIT_OK
    } else {
        EXIT_VIOLATION
    })
}

fn print_table(certs: &[CertificateSummary]) {
    if certs.is_empty() {
        return;
    }
    println!(
        "{:<18} {:<6} {:>12} {:>7}  worst check",
        "claim", "result", "margin", "checks"
    );
    for c in certs {
        let claim = serde_json::to_value(c.claim)
            .ok()
            .and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_default();
        let worst = c
            .worst
            .as_ref()
            .map(|w| format!("{}: {:.6e} vs {:.6e}", w.label, w.lhs, w.rhs))
            .unwrap_or_default();
        let result = if c.holds { "PASS" } else { "FAIL" };
        println!(
            "{claim:<18} {result:<6} {:>12.4e} {:>7}  {worst}",
            c.margin, c.checks
        );
    }
}

#[derive(Debug, Serialize)]
struct BenchRow {
    problem: String,
    method: &'static str,
    epsilon: f64,
    delta: f64,
    iterations: usize,
    oracle_calls: usize,
    stages: usize,
    v_to_xstar: Option<f64>,
    converged: bool,
    seconds: f64,
}

fn bench_threads() -> CliResult<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => input(format!(
                "{THREADS_ENV}: expected a positive integer, got {v:?}"
            )),
        },
    }
}

fn bench_job(p: &ProblemInstance, method: &'static str, epsilon: f64) -> CliResult<BenchRow> {
    let start = Instant::now();
    let (iterations, oracle_calls, stages, output, converged) = if method == "mirror-prox" {
        let cfg = UmpConfig::new(epsilon, p.oracle.l_rel, p.x0.clone());
        let t = ump_solve(&p.oracle, &p.setup, &p.set, &cfg)?;
        (t.n, t.oracle_calls, 0, t.averaged_w, t.converged)
    } else {
        let r0_sq = max_bregman_over_set(&p.setup, &p.set, &p.x0)?;
        let cfg = RestartConfig::new(
            epsilon,
            p.oracle.mu,
            p.setup.omega,
            p.x0.clone(),
            r0_sq,
            p.oracle.l_rel,
        );
        let s = restart_solve(&p.oracle, &p.setup, &p.set, &cfg)?;
        let calls = s.stages.iter().map(|st| st.trace.oracle_calls).sum();
        (
            s.total_inner_iters,
            calls,
            s.stage_count(),
            s.output().clone(),
            s.converged,
        )
    };
    let seconds = start.elapsed().as_secs_f64();
    Ok(BenchRow {
        problem: p.name.clone(),
        method,
        epsilon,
        delta: p.oracle.delta,
        iterations,
        oracle_calls,
        stages,
        v_to_xstar: match &p.x_star {
            Some(xs) => Some(p.setup.bregman(xs, &output)?),
            None => None,
        },
        converged,
        seconds,
    })
}

pub fn bench(args: &BenchArgs) -> CliResult<u8> {
    let names: Vec<String> = if args.problems.is_empty() {
        bundled().into_iter().filter_map(|f| f.name).collect()
    } else {
        args.problems.clone()
    };
    for &e in &args.epsilons {
        if !(e.is_finite() && e > 0.0) {
            return input(format!("epsilon: must be positive, got {e}"));
        }
    }
    let mut problems = Vec::with_capacity(names.len());
    for name in &names {
        let pa = ProblemArgs {
            problem: name.clone(),
            delta: Some(args.delta),
            seed: Some(args.seed),
        };
        problems.push(load_problem(&pa)?);
    }
    let jobs: Vec<(usize, &'static str, f64)> = (0..problems.len())
        .flat_map(|i| {
            args.epsilons
                .iter()
                .flat_map(move |&e| [(i, "mirror-prox", e), (i, "restarted", e)])
        })
        .collect();

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = bench_threads()? {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Input(format!("{THREADS_ENV}: {e}")))?;
    let rows: Vec<BenchRow> = pool.install(|| {
        jobs.par_iter()
            .map(|&(i, method, e)| bench_job(&problems[i], method, e))
            .collect::<CliResult<_>>()
    })?;

    write_atomic(&args.out_dir.join("bench.csv"), &csv_bytes(&rows)?)?;
    println!(
        "{:<20} {:<12} {:>8} {:>10} {:>10} {:>12} {:>9}",
        "problem", "method", "epsilon", "iters", "calls", "V(x*, out)", "seconds"
    );
    for r in &rows {
        let v = r.v_to_xstar.map_or("-".to_owned(), |v| format!("{v:.3e}"));
        println!(
            "{:<20} {:<12} {:>8.0e} {:>10} {:>10} {:>12} {:>9.4}",
            r.problem, r.method, r.epsilon, r.iterations, r.oracle_calls, v, r.seconds
        );
    }
    Ok(if rows.iter().all(|r| r.converged) {
        EXIT_OK
    } else {
        EXIT_NONCONVERGENCE
    })
}
