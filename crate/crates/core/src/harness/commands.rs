use std::fmt::Write as _;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::config::{AuditSource, ExperimentConfig, NormalityMode};
use crate::inference::{
    confidence_interval, covariance_estimate, exact_covariance_oracle, normality_diagnostics,
    Standardization, MIN_NORMALITY_SAMPLES,
};
use crate::kkt::assemble_kkt;
use crate::problems::{builtin_problem, NoiseModel, ProblemSpec, PROBLEM_NAMES};
use crate::rng::auxiliary_stream;
use crate::sketch::{contraction_audit, contraction_profile, ContractionAudit, SketchDistribution};
use crate::solver::{reference_kkt, run, run_observed, RunFailure, RunOutcome, TraceRow};
use crate::stepsize::validate_schedule;
use crate::{Error, Matrix, Result, Vector};

/// Coverage experiments need at least this many runs.
pub const MIN_COVERAGE_RUNS: usize = 100;

/// What a command produced. `failed` is set when a solver run aborted; the
/// CSV then holds whatever was recorded before the failure.
#[derive(Debug, Clone)]
pub struct CommandOutput {
    pub csv: String,
    pub summary: Value,
    pub failed: bool,
}

impl CommandOutput {
    pub fn summary_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.summary).expect("summary is valid JSON");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub command: &'static str,
    /// SHA-256 of the serialized configuration.
    pub config_hash: String,
    pub seed: u64,
    pub version: &'static str,
}

impl Provenance {
    fn new(command: &'static str, config: &ExperimentConfig) -> Self {
        let digest = Sha256::digest(config.to_config_string().as_bytes());
        Self {
            command,
            config_hash: hex::encode(digest),
            seed: config.seed,
            version: env!("CARGO_PKG_VERSION"),
        }
    }
}

fn summary(command: &'static str, config: &ExperimentConfig, body: Value) -> Value {
    let mut out = json!({
        "provenance": Provenance::new(command, config),
        "config": config.to_config_string(),
    });
    if let (Value::Object(out), Value::Object(body)) = (&mut out, body) {
        out.extend(body);
    }
    out
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn load(config: &ExperimentConfig) -> Result<ProblemSpec> {
    config.validate()?;
    builtin_problem(&config.problem)
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// KKT matrix used for contraction audits: `K*` when the solution is known,
/// otherwise the matrix at the start point with `B = I`.
fn audit_kkt(problem: &ProblemSpec) -> Result<Matrix> {
    match reference_kkt(problem) {
        Some(k) => Ok(k),
        None => {
            let d = problem.dim_primal();
            let g = problem.jacobian(&problem.x0);
            Ok(assemble_kkt(Matrix::identity(d, d), g)?.k)
        }
    }
}

fn audit_json(audit: &ContractionAudit, tau: usize) -> Value {
    json!({
        "gamma_s": audit.gamma_s,
        "rho": audit.rho,
        "rho_pow_tau": audit.rho.powi(tau as i32),
        "exact": audit.exact,
        "warning": audit.warning,
    })
}

fn run_all<T, F>(runs: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    (0..runs as u64).into_par_iter().map(f).collect()
}

fn failure_json(run_index: u64, failure: &RunFailure) -> Value {
    json!({
        "run": run_index,
        "error": failure.error.to_string(),
        "iterations_completed": failure.trace.last().map(|r| r.t).unwrap_or(0),
    })
}

/// One solver trace.
pub fn cmd_run(config: &ExperimentConfig) -> Result<CommandOutput> {
    let problem = load(config)?;
    let rc = config.run_config()?;
    let dist = SketchDistribution::new(config.sketch, problem.dim_primal() + problem.dim_dual())?;
    let audit = contraction_audit(
        &audit_kkt(&problem)?,
        &dist,
        config.mc_samples,
        &mut auxiliary_stream(config.seed, 0),
    )?;
    let regimes = validate_schedule(&rc.schedule, audit.rho, rc.tau, None);

    let (trace, status, failed) = match run(&problem, &rc, 0) {
        Ok(RunOutcome { trace, .. }) => (trace, Value::Null, false),
        Err(failure) => {
            let status = failure_json(0, &failure);
            (failure.trace, status, true)
        }
    };

    let mut csv =
        String::from("t,kkt_residual,iter_error,hess_error,alpha,beta,delta_mag,theory_rate\n");
    for row in &trace {
        let TraceRow {
            t,
            kkt_residual,
            iter_error,
            hess_error,
            alpha,
            beta,
            delta_mag,
            ..
        } = *row;
        // alpha and beta belong to the step that produced x_t; the envelope
        // is evaluated at t itself.
        let rate = (rc.schedule.beta(t) * (t as f64).ln()).sqrt();
        let _ = writeln!(
            csv,
            "{t},{kkt_residual},{},{},{alpha},{beta},{delta_mag},{rate}",
            opt(iter_error),
            opt(hess_error)
        );
    }
    let last = trace.last();
    let body = json!({
        "problem": problem.name(),
        "rows": trace.len(),
        "final_t": last.map(|r| r.t),
        "final_kkt_residual": last.map(|r| r.kkt_residual),
        "final_iter_error": last.and_then(|r| r.iter_error),
        "audit": audit_json(&audit, rc.tau),
        "regimes": regimes,
        "failure": status,
    });
    Ok(CommandOutput {
        csv,
        summary: summary("run", config, body),
        failed,
    })
}

/// Normality of the standardized iterate error.
///
/// `within` keeps the post burn-in iterates of one run, recorded every
/// `stride` iterations, and standardizes them by their sample moments.
/// `mc` runs `runs` independent chains and standardizes each final error by
/// the limiting covariance, `w^T (z_T - z*) / sqrt(beta_T w^T Xi* w)`.
pub fn cmd_normality(config: &ExperimentConfig) -> Result<CommandOutput> {
    let problem = load(config)?;
    let solution = problem
        .known_solution
        .clone()
        .ok_or_else(|| Error::OracleUnavailable(problem.name().into()))?
        .stacked();
    let rc = config.run_config()?;
    let d = problem.dim_primal();
    match config.normality_mode {
        NormalityMode::Within => {
            let start = (config.burnin * config.iters as f64).floor() as usize;
            let mut rows: Vec<(usize, f64, f64)> = Vec::new();
            let result = run_observed(&problem, &rc, 0, |state, _| {
                if state.t > start && state.t % config.stride == 0 {
                    rows.push((
                        state.t,
                        state.x[0] - solution[0],
                        state.lambda[0] - solution[d],
                    ));
                }
            });
            let failure = result.as_ref().err().map(|f| failure_json(0, f));
            let mut csv = String::from("t,x1_error,lambda1_error\n");
            for (t, ex, el) in &rows {
                let _ = writeln!(csv, "{t},{ex},{el}");
            }
            let xs: Vec<f64> = rows.iter().map(|r| r.1).collect();
            let ls: Vec<f64> = rows.iter().map(|r| r.2).collect();
            let body = json!({
                "mode": "within",
                "samples": rows.len(),
                "x1": normality_diagnostics(&xs, Standardization::Sample).ok(),
                "lambda1": normality_diagnostics(&ls, Standardization::Sample).ok(),
                "failure": failure,
            });
            Ok(CommandOutput {
                csv,
                summary: summary("normality", config, body),
                failed: failure.is_some(),
            })
        }
        NormalityMode::MonteCarlo => {
            if config.runs < MIN_NORMALITY_SAMPLES {
                return Err(Error::TooFewSamples {
                    needed: MIN_NORMALITY_SAMPLES,
                    got: config.runs,
                });
            }
            let query = config.query(d, problem.dim_dual())?;
            let noise = NoiseModel::new(config.sigma2, d)?;
            let xi = exact_covariance_oracle(
                &problem,
                &noise,
                &rc.schedule,
                config.sketch,
                config.tau,
                config.mc_samples,
                &mut auxiliary_stream(config.seed, config.runs as u64),
            )?;
            let variance = query.w.dot(&(&xi * &query.w));
            let beta_t = rc.schedule.beta(config.iters);
            let scale = (beta_t * variance).sqrt();

            let outcomes = run_all(config.runs, |i| {
                run(&problem, &rc, i).map(|o| query.w.dot(&(o.state.stacked() - &solution)))
            });
            let mut csv = String::from("run,raw_error,standardized_error\n");
            let mut standardized = Vec::with_capacity(outcomes.len());
            let mut failures = Vec::new();
            for (i, outcome) in outcomes.iter().enumerate() {
                match outcome {
                    Ok(raw) => {
                        let s = if scale > 0.0 { raw / scale } else { 0.0 };
                        standardized.push(s);
                        let _ = writeln!(csv, "{i},{raw},{s}");
                    }
                    Err(f) => {
                        failures.push(failure_json(i as u64, f));
                        let _ = writeln!(csv, "{i},,");
                    }
                }
            }
            let report = normality_diagnostics(&standardized, Standardization::None)?;
            let body = json!({
                "mode": "mc",
                "runs": config.runs,
                "completed": standardized.len(),
                "w_xi_w": variance,
                "beta_T": beta_t,
                "report": report,
                "degenerate": report.degenerate || !(scale > 0.0),
                "failures": failures,
            });
            Ok(CommandOutput {
                csv,
                summary: summary("normality", config, body),
                failed: !failures.is_empty(),
            })
        }
    }
}

/// Empirical coverage of the plug-in confidence interval for `w^T z*`.
pub fn cmd_coverage(config: &ExperimentConfig) -> Result<CommandOutput> {
    if config.runs < MIN_COVERAGE_RUNS {
        return Err(Error::TooFewSamples {
            needed: MIN_COVERAGE_RUNS,
            got: config.runs,
        });
    }
    let problem = load(config)?;
    let solution = problem
        .known_solution
        .clone()
        .ok_or_else(|| Error::OracleUnavailable(problem.name().into()))?
        .stacked();
    let rc = config.run_config()?;
    let query = config.query(problem.dim_primal(), problem.dim_dual())?;
    let truth = query.w.dot(&solution);

    let outcomes = run_all(config.runs, |i| -> std::result::Result<_, String> {
        let outcome = run(&problem, &rc, i).map_err(|f| f.error.to_string())?;
        let state = outcome.state;
        let k = state
            .last_kkt
            .as_ref()
            .ok_or_else(|| "no KKT matrix recorded".to_string())?;
        let xi =
            covariance_estimate(&state.moments, &k.k, &rc.schedule).map_err(|e| e.to_string())?;
        confidence_interval(&state.stacked(), &xi, &query, state.t, &rc.schedule)
            .map_err(|e| e.to_string())
    });

    let mut csv = String::from("run,lo,hi,covered,width,status\n");
    let (mut covered, mut valid, mut width_sum) = (0usize, 0usize, 0.0);
    let mut problems = Vec::new();
    for (i, outcome) in outcomes.iter().enumerate() {
        match outcome {
            Ok(iv) => {
                let hit = iv.contains(truth);
                valid += 1;
                covered += hit as usize;
                width_sum += iv.width();
                let _ = writeln!(
                    csv,
                    "{i},{},{},{},{},ok",
                    iv.lo,
                    iv.hi,
                    hit as u8,
                    iv.width()
                );
            }
            Err(msg) => {
                problems.push(json!({ "run": i, "error": msg }));
                let _ = writeln!(csv, "{i},,,,,error");
            }
        }
    }
    let coverage = (valid > 0).then(|| covered as f64 / valid as f64);
    let body = json!({
        "problem": problem.name(),
        "runs": config.runs,
        "valid": valid,
        "level": config.level,
        "truth": truth,
        "coverage": coverage,
        "mean_width": (valid > 0).then(|| width_sum / valid as f64),
        "excluded": problems,
    });
    Ok(CommandOutput {
        csv,
        summary: summary("coverage", config, body),
        failed: false,
    })
}

fn random_symmetric(n: usize, rng: &mut impl rand::Rng) -> Matrix {
    loop {
        let a = Matrix::from_fn(n, n, |_, _| StandardNormal.sample(rng));
        let k = (&a + a.transpose()) * 0.5;
        let eig = k.clone().symmetric_eigenvalues();
        if eig.iter().all(|e| e.abs() > 1e-2) {
            return k;
        }
    }
}

/// Expected-projection spectrum of the configured sketch and Monte-Carlo
/// error ratios of `tau`-step solves against the bound `rho^tau`.
pub fn cmd_sketch_audit(config: &ExperimentConfig) -> Result<CommandOutput> {
    config.validate()?;
    let mut rng = auxiliary_stream(config.seed, 0);
    let (source, k) = match config.audit_source {
        AuditSource::Problem => {
            let problem = load(config)?;
            (problem.name().to_string(), audit_kkt(&problem)?)
        }
        AuditSource::Random(n) => (format!("random:{n}"), random_symmetric(n, &mut rng)),
    };
    let n = k.nrows();
    let dist = SketchDistribution::new(config.sketch, n)?;
    let audit = contraction_audit(&k, &dist, config.mc_samples, &mut rng)?;
    let rhs = Vector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));

    let mut csv = String::from("tau,rho_pow_tau,mean_sq_ratio,mean_ratio\n");
    let mut rows = Vec::new();
    for &tau in &config.audit_taus {
        let profile = contraction_profile(&k, &rhs, tau, &dist, config.mc_samples, &mut rng)?;
        let bound = audit.rho.powi(tau as i32);
        let sq = profile.mean_sq_error / profile.exact_norm_sq;
        let mean = profile.mean_error.norm() / profile.exact_norm_sq.sqrt();
        let _ = writeln!(csv, "{tau},{bound},{sq},{mean}");
        rows.push(json!({
            "tau": tau,
            "rho_pow_tau": bound,
            "mean_sq_ratio": sq,
            "mean_ratio": mean,
            "within_bound": sq <= 1.1 * bound && mean <= 1.1 * bound,
        }));
    }
    let body = json!({
        "source": source,
        "n": n,
        "sketch": config.sketch.to_string(),
        "audit": audit_json(&audit, config.tau),
        "solves_per_tau": config.mc_samples,
        "profiles": rows,
    });
    Ok(CommandOutput {
        csv,
        summary: summary("sketch-audit", config, body),
        failed: false,
    })
}

/// Least-squares slope of `log y` against `log t`.
fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(t, y)| *t > 0.0 && *y > 0.0)
        .map(|(t, y)| (t.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    finite(sxy / sxx)
}

/// Log-spaced evaluation points in `[from, to]`, 20 per decade.
fn log_grid(from: usize, to: usize) -> Vec<usize> {
    let from = from.max(1);
    let mut grid = Vec::new();
    let mut k = 0;
    loop {
        let t = (from as f64 * 10f64.powf(k as f64 / 20.0)).round() as usize;
        if t > to {
            break;
        }
        if grid.last() != Some(&t) {
            grid.push(t);
        }
        k += 1;
    }
    if grid.last() != Some(&to) && to >= from {
        grid.push(to);
    }
    grid
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

struct ComplexityRun {
    t_eps: Vec<Option<usize>>,
    slope: Option<f64>,
}

/// Iterations needed for the running mean of `|grad L|` to fall below each
/// epsilon, and the decay exponent of the running mean of `|grad L|^2`.
///
/// Runs that never reach an epsilon are right-censored at `iters`.
pub fn cmd_complexity(config: &ExperimentConfig) -> Result<CommandOutput> {
    let problem = load(config)?;
    let rc = config.run_config()?;
    let grid = log_grid(config.slope_from, config.iters);

    let outcomes = run_all(
        config.runs,
        |i| -> std::result::Result<ComplexityRun, RunFailure> {
            let mut sum = problem.kkt_vector(&problem.x0, &problem.lambda0).norm();
            let mut sum_sq = sum * sum;
            let mut t_eps = vec![None; config.epsilons.len()];
            let mut points = Vec::with_capacity(grid.len());
            let mut next = 0;
            // After iteration t the running means cover r_0..r_{t-1}.
            let check = |t: usize, sum: f64, t_eps: &mut Vec<Option<usize>>| {
                let mean = sum / t as f64;
                for (slot, &eps) in t_eps.iter_mut().zip(&config.epsilons) {
                    if slot.is_none() && mean <= eps {
                        *slot = Some(t);
                    }
                }
            };
            check(1, sum, &mut t_eps);
            run_observed(&problem, &rc, i, |state, _| {
                let t = state.t;
                if next < grid.len() && grid[next] == t {
                    points.push((t as f64, sum_sq / t as f64));
                    next += 1;
                }
                let r = problem.kkt_vector(&state.x, &state.lambda).norm();
                sum += r;
                sum_sq += r * r;
                check(t + 1, sum, &mut t_eps);
            })?;
            Ok(ComplexityRun {
                t_eps,
                slope: loglog_slope(&points),
            })
        },
    );

    let mut csv = String::from("run,epsilon,t_eps,censored\n");
    let mut failures = Vec::new();
    let mut slopes = Vec::new();
    let mut per_eps: Vec<Vec<f64>> = vec![Vec::new(); config.epsilons.len()];
    for (i, outcome) in outcomes.iter().enumerate() {
        match outcome {
            Ok(r) => {
                if let Some(s) = r.slope {
                    slopes.push(s);
                }
                for (j, (&eps, hit)) in config.epsilons.iter().zip(&r.t_eps).enumerate() {
                    let t = hit.unwrap_or(config.iters);
                    per_eps[j].push(hit.map_or(f64::INFINITY, |t| t as f64));
                    let _ = writeln!(csv, "{i},{eps},{t},{}", hit.is_none() as u8);
                }
            }
            Err(f) => failures.push(failure_json(i as u64, f)),
        }
    }
    let epsilons: Vec<Value> = config
        .epsilons
        .iter()
        .zip(per_eps.iter_mut())
        .map(|(&eps, ts)| {
            let censored = ts.iter().filter(|t| t.is_infinite()).count();
            json!({
                "epsilon": eps,
                "median_t_eps": median(ts).and_then(finite),
                "censored": censored,
            })
        })
        .collect();
    let mean_slope = (!slopes.is_empty()).then(|| slopes.iter().sum::<f64>() / slopes.len() as f64);
    let body = json!({
        "problem": problem.name(),
        "runs": config.runs,
        "slope_window": [config.slope_from, config.iters],
        "slopes": slopes,
        "mean_slope": mean_slope,
        "epsilons": epsilons,
        "failures": failures,
    });
    Ok(CommandOutput {
        csv,
        summary: summary("complexity", config, body),
        failed: !failures.is_empty(),
    })
}

/// Catalog listing: name, dimensions and start point.
pub fn list_problems() -> Result<String> {
    let mut out = String::from("name,d,m,known_solution\n");
    for name in PROBLEM_NAMES {
        let p = builtin_problem(name)?;
        let _ = writeln!(
            out,
            "{name},{},{},{}",
            p.dim_primal(),
            p.dim_dual(),
            p.known_solution.is_some()
        );
    }
    Ok(out)
}
