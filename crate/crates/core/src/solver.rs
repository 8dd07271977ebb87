//! The stochastic SQP iteration and its diagnostics.
//!
//! Each iteration `t`:
//!
//! 1. draws `xi_t` and forms the noisy gradient `g_t` and Lagrangian Hessian;
//! 2. builds `B_t` from the Hessian average over samples `0..t` (plus the
//!    reduced-Hessian shift) and the KKT matrix `K_t`;
//! 3. runs `tau` sketch-and-project steps on `K_t z = -(g_t + G_t^T lambda_t, c_t)`
//!    from `z = 0`, drawing sketches from `zeta_t`;
//! 4. draws `alpha_t` in `[beta_t, eta_t]` from `psi_t` and moves
//!    `(x, lambda) += alpha_t z`;
//! 5. adds the iteration-`t` Hessian sample to the average.

use serde::Serialize;

use crate::inference::CovarianceAccumulator;
use crate::kkt::{assemble_kkt, regularize, HessianAverager, KktSystem, DEFAULT_PD_FLOOR};
use crate::linalg::stack;
use crate::problems::{NoiseModel, ProblemSpec};
use crate::rng::RunStreams;
use crate::sketch::{solve_exact, solve_inexact, SketchDistribution, SketchKind};
use crate::stepsize::{Envelope, Schedule, StepPolicy};
use crate::{Error, Matrix, Result, Vector};

/// Iterates with a larger norm abort the run.
pub const DIVERGENCE_NORM: f64 = 1e12;

/// Default stopping tolerance of [`deterministic_sqp_oracle`].
pub const ORACLE_DEFAULT_TOL: f64 = 1e-10;

/// Everything a run needs besides the problem.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub schedule: Schedule,
    pub policy: StepPolicy,
    pub sketch: SketchKind,
    pub tau: usize,
    pub pd_floor: f64,
    pub sigma2: f64,
    pub iterations: usize,
    /// Record a trace row every `stride` iterations.
    pub stride: usize,
    pub seed: u64,
    /// Record the merit value in the trace.
    pub merit: Option<MeritParams>,
}

impl RunConfig {
    /// Kaczmarz with 50 inner steps, uniform stepsizes in the envelope.
    pub fn new(schedule: Schedule, sigma2: f64, iterations: usize) -> Self {
        Self {
            schedule,
            policy: StepPolicy::UniformRandom,
            sketch: SketchKind::Coordinate,
            tau: 50,
            pd_floor: DEFAULT_PD_FLOOR,
            sigma2,
            iterations,
            stride: 1,
            seed: 0,
            merit: None,
        }
    }
}

/// Penalty weights of the augmented Lagrangian merit function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeritParams {
    pub mu: f64,
    pub nu: f64,
}

/// `L(x, lambda) + mu/2 |c(x)|^2 + nu/2 |grad_x L(x, lambda)|^2`.
pub fn merit_value(problem: &ProblemSpec, x: &Vector, lambda: &Vector, params: MeritParams) -> f64 {
    let c = problem.constraints(x);
    let grad = problem.lagrangian_gradient(x, lambda);
    problem.lagrangian(x, lambda)
        + 0.5 * params.mu * c.norm_squared()
        + 0.5 * params.nu * grad.norm_squared()
}

/// Gradient of [`merit_value`] in `(x, lambda)`:
/// `[[I + nu H, mu G^T], [nu G, I]] (grad_x L, c)`.
pub fn merit_gradient(
    problem: &ProblemSpec,
    x: &Vector,
    lambda: &Vector,
    params: MeritParams,
) -> Vector {
    let c = problem.constraints(x);
    let grad = problem.lagrangian_gradient(x, lambda);
    let h = problem.lagrangian_hessian(x, lambda);
    let g = problem.jacobian(x);
    let gx = &grad + (&h * &grad) * params.nu + g.transpose() * &c * params.mu;
    let gl = &c + (&g * &grad) * params.nu;
    stack(&gx, &gl)
}

/// Output of [`deterministic_sqp_oracle`].
#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub x: Vector,
    pub lambda: Vector,
    pub iterations: usize,
    /// KKT residual at every visited iterate.
    pub residuals: Vec<f64>,
}

/// Full-step Newton SQP with exact derivatives, exact solves and the same
/// reduced-Hessian shift as the stochastic method (applied to the current
/// exact Hessian). Stops at the first iterate with KKT residual `<= tol`.
pub fn deterministic_sqp_oracle(
    problem: &ProblemSpec,
    x0: &Vector,
    lambda0: &Vector,
    max_iter: usize,
    tol: f64,
) -> Result<OracleSolution> {
    problem.check_dims(x0, lambda0)?;
    let d = problem.dim_primal();
    let mut x = x0.clone();
    let mut lambda = lambda0.clone();
    let mut residuals = Vec::new();
    for it in 0..=max_iter {
        let kkt = problem.kkt_vector(&x, &lambda);
        let residual = kkt.norm();
        residuals.push(residual);
        if residual <= tol {
            return Ok(OracleSolution {
                x,
                lambda,
                iterations: it,
                residuals,
            });
        }
        if it == max_iter || !residual.is_finite() {
            break;
        }
        let h = problem.lagrangian_hessian(&x, &lambda);
        let g = problem.jacobian(&x);
        let reg = regularize(Some(&h), &g, 1, DEFAULT_PD_FLOOR)?;
        let system = assemble_kkt(reg.b, g)?;
        let z = solve_exact(&system.k, &(-kkt)).map_err(|_| Error::SingularKkt {
            iteration: Some(it),
        })?;
        x += z.rows(0, d);
        lambda += z.rows(d, z.len() - d);
    }
    Err(Error::OracleFailed {
        iterations: max_iter,
        residual: residuals.last().copied().unwrap_or(f64::NAN),
    })
}

/// What happened in one iteration.
#[derive(Debug, Clone)]
pub struct StepInfo {
    /// Index of the iteration just executed.
    pub t: usize,
    pub alpha: f64,
    pub envelope: Envelope,
    pub delta_magnitude: f64,
    /// Inexact Newton direction `z_tau`.
    pub direction: Vector,
    /// Gradient sample of this iteration.
    pub gradient_sample: Vector,
}

/// Mutable state of one run.
#[derive(Debug, Clone)]
pub struct RunState {
    pub x: Vector,
    pub lambda: Vector,
    pub averager: HessianAverager,
    /// Moments of the gradient samples drawn so far.
    pub moments: CovarianceAccumulator,
    /// Number of completed iterations.
    pub t: usize,
    pub streams: RunStreams,
    /// KKT system of the most recent iteration.
    pub last_kkt: Option<KktSystem>,
}

impl RunState {
    /// Fresh state at the problem's starting point.
    pub fn new(problem: &ProblemSpec, seed: u64, run_index: u64) -> Self {
        Self::at(
            problem,
            problem.x0.clone(),
            problem.lambda0.clone(),
            seed,
            run_index,
        )
    }

    pub fn at(problem: &ProblemSpec, x: Vector, lambda: Vector, seed: u64, run_index: u64) -> Self {
        let d = problem.dim_primal();
        Self {
            x,
            lambda,
            averager: HessianAverager::new(d),
            moments: CovarianceAccumulator::new(d),
            t: 0,
            streams: RunStreams::new(seed, run_index),
            last_kkt: None,
        }
    }

    pub fn stacked(&self) -> Vector {
        stack(&self.x, &self.lambda)
    }

    /// Execute one iteration.
    pub fn step(
        &mut self,
        problem: &ProblemSpec,
        noise: &NoiseModel,
        config: &RunConfig,
    ) -> Result<StepInfo> {
        let t = self.t;
        let d = problem.dim_primal();
        let m = problem.dim_dual();

        // xi_t
        let g_bar = noise.sample_gradient(problem, &self.x, &mut self.streams.xi);
        let hess_sample =
            noise.sample_lagrangian_hessian(problem, &self.x, &self.lambda, &mut self.streams.xi);

        // B_t uses samples 0..t only
        let g = problem.jacobian(&self.x);
        let avg = self.averager.average();
        let reg = regularize(avg.as_ref(), &g, t, config.pd_floor)?;
        let mut system = assemble_kkt(reg.b, g)?;
        system.delta_magnitude = reg.delta_magnitude;

        let grad_l = &g_bar + system.g.transpose() * &self.lambda;
        let rhs = -stack(&grad_l, &problem.constraints(&self.x));

        // zeta_t
        let dist = SketchDistribution::new(config.sketch, d + m)?;
        let solve = solve_inexact(&system.k, &rhs, config.tau, &dist, &mut self.streams.zeta)
            .map_err(|e| match e {
                Error::SingularKkt { .. } => Error::SingularKkt { iteration: Some(t) },
                other => other,
            })?;
        let direction = solve.solution;

        // psi_t
        let envelope = config.schedule.envelope(t);
        let alpha = config
            .policy
            .draw(envelope.beta, envelope.eta, &mut self.streams.psi);
        assert!(
            envelope.beta <= alpha && alpha <= envelope.eta,
            "stepsize {alpha} outside [{}, {}]",
            envelope.beta,
            envelope.eta
        );

        self.x.axpy(alpha, &direction.rows(0, d), 1.0);
        self.lambda.axpy(alpha, &direction.rows(d, m), 1.0);

        self.averager.push(&hess_sample);
        self.moments.update(&g_bar);
        self.last_kkt = Some(system);
        self.t += 1;

        let norm = self.x.norm().max(self.lambda.norm());
        if !norm.is_finite() || norm > DIVERGENCE_NORM {
            return Err(Error::Diverged { iteration: t, norm });
        }

        Ok(StepInfo {
            t,
            alpha,
            envelope,
            delta_magnitude: reg.delta_magnitude,
            direction,
            gradient_sample: g_bar,
        })
    }
}

/// One recorded trace row, taken after `t` completed iterations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub t: usize,
    pub kkt_residual: f64,
    /// `|(x_t, lambda_t) - (x*, lambda*)|` when a solution is known.
    pub iter_error: Option<f64>,
    /// `|K_{t-1} - K*|` (spectral norm) when a solution is known.
    pub hess_error: Option<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub delta_mag: f64,
    pub merit: Option<f64>,
}

/// A finished run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trace: Vec<TraceRow>,
    pub state: RunState,
}

/// A run that stopped early; the trace up to the failure is kept.
#[derive(Debug, Clone)]
pub struct RunFailure {
    pub error: Error,
    pub trace: Vec<TraceRow>,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} (after {} trace rows)", self.error, self.trace.len())
    }
}

impl std::error::Error for RunFailure {}

/// `K*` assembled from exact derivatives at the known solution.
pub fn reference_kkt(problem: &ProblemSpec) -> Option<Matrix> {
    let sol = problem.known_solution.as_ref()?;
    let b = problem.lagrangian_hessian(&sol.x, &sol.lambda);
    let g = problem.jacobian(&sol.x);
    assemble_kkt(b, g).ok().map(|s| s.k)
}

/// Run `config.iterations` iterations, recording a row every `stride`.
pub fn run(
    problem: &ProblemSpec,
    config: &RunConfig,
    run_index: u64,
) -> Result<RunOutcome, RunFailure> {
    run_observed(problem, config, run_index, |_, _| {})
}

/// [`run`] with a callback after every iteration.
pub fn run_observed<F>(
    problem: &ProblemSpec,
    config: &RunConfig,
    run_index: u64,
    mut observe: F,
) -> Result<RunOutcome, RunFailure>
where
    F: FnMut(&RunState, &StepInfo),
{
    let fail = |error, trace| RunFailure { error, trace };
    let noise = match NoiseModel::new(config.sigma2, problem.dim_primal()) {
        Ok(n) => n,
        Err(e) => return Err(fail(e, Vec::new())),
    };
    if config.stride == 0 {
        return Err(fail(
            Error::InvalidConfig("stride must be positive".into()),
            Vec::new(),
        ));
    }
    let reference = problem.known_solution.as_ref().map(|s| s.stacked());
    let k_star = reference_kkt(problem);
    let mut state = RunState::new(problem, config.seed, run_index);
    let mut trace = Vec::with_capacity(config.iterations / config.stride);
    for _ in 0..config.iterations {
        let info = match state.step(problem, &noise, config) {
            Ok(info) => info,
            Err(e) => return Err(fail(e, trace)),
        };
        observe(&state, &info);
        if state.t.is_multiple_of(config.stride) {
            trace.push(trace_row(
                problem,
                config,
                &state,
                &info,
                reference.as_ref(),
                k_star.as_ref(),
            ));
        }
    }
    Ok(RunOutcome { trace, state })
}

fn trace_row(
    problem: &ProblemSpec,
    config: &RunConfig,
    state: &RunState,
    info: &StepInfo,
    reference: Option<&Vector>,
    k_star: Option<&Matrix>,
) -> TraceRow {
    let iter_error = reference.map(|r| (state.stacked() - r).norm());
    let hess_error = match (k_star, state.last_kkt.as_ref()) {
        (Some(ks), Some(sys)) => Some((&sys.k - ks).clone().singular_values().max()),
        _ => None,
    };
    TraceRow {
        t: state.t,
        kkt_residual: problem.kkt_vector(&state.x, &state.lambda).norm(),
        iter_error,
        hess_error,
        alpha: info.alpha,
        beta: info.envelope.beta,
        delta_mag: info.delta_magnitude,
        merit: config
            .merit
            .map(|p| merit_value(problem, &state.x, &state.lambda, p)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::builtin_problem;

    fn quiet_config(iterations: usize) -> RunConfig {
        let mut c = RunConfig::new(
            Schedule::new(1.0, 0.6, f64::INFINITY).unwrap(),
            0.0,
            iterations,
        );
        c.sketch = SketchKind::Exact;
        c.policy = StepPolicy::DeterministicLower;
        c
    }

    #[test]
    fn merit_at_solution_is_objective() {
        let p = builtin_problem("hs7").unwrap();
        let s = p.known_solution.clone().unwrap();
        let params = MeritParams { mu: 5.0, nu: 0.3 };
        let v = merit_value(&p, &s.x, &s.lambda, params);
        assert!((v - p.objective(&s.x)).abs() < 1e-14);
        assert!(merit_gradient(&p, &s.x, &s.lambda, params).amax() < 1e-14);
    }

    #[test]
    fn merit_without_penalties_is_lagrangian() {
        let p = builtin_problem("hs7").unwrap();
        let x = Vector::from_vec(vec![0.4, 1.1]);
        let l = Vector::from_vec(vec![0.7]);
        let zero = MeritParams { mu: 0.0, nu: 0.0 };
        assert_eq!(merit_value(&p, &x, &l, zero), p.lagrangian(&x, &l));
        assert_eq!(merit_gradient(&p, &x, &l, zero), p.kkt_vector(&x, &l));
    }

    #[test]
    fn merit_by_hand_on_eq_quadratic() {
        let p = builtin_problem("eq_quadratic").unwrap();
        let x = Vector::zeros(2);
        let l = Vector::zeros(1);
        // f(0) = 0, c(0) = -0.5, grad f(0) = -b = (-0.375, -0.125)
        let expected = 0.0 + 1.0 * 0.25 + 0.05 * (0.375f64.powi(2) + 0.125f64.powi(2));
        let v = merit_value(&p, &x, &l, MeritParams { mu: 2.0, nu: 0.1 });
        assert!((v - expected).abs() < 1e-15);
    }

    #[test]
    fn oracle_solves_quadratic_in_one_step() {
        let p = builtin_problem("eq_quadratic").unwrap();
        let sol = deterministic_sqp_oracle(&p, &p.x0, &p.lambda0, 10, 1e-12).unwrap();
        assert_eq!(sol.iterations, 1);
    }

    #[test]
    fn oracle_failure_is_reported() {
        let p = builtin_problem("hs7").unwrap();
        let err = deterministic_sqp_oracle(&p, &p.x0, &p.lambda0, 1, 1e-12).unwrap_err();
        assert!(matches!(err, Error::OracleFailed { .. }));
    }

    #[test]
    fn first_step_uses_identity_hessian() {
        // B_0 = I regardless of the Hessian sample: compare against a direct
        // solve with B = I.
        let p = builtin_problem("eq_quadratic").unwrap();
        let mut config = quiet_config(1);
        config.sigma2 = 1.0;
        let noise = NoiseModel::new(1.0, 2).unwrap();
        let mut state = RunState::new(&p, 3, 0);
        let info = state.step(&p, &noise, &config).unwrap();
        let k = assemble_kkt(Matrix::identity(2, 2), p.jacobian(&p.x0))
            .unwrap()
            .k;
        let grad_l = &info.gradient_sample + p.jacobian(&p.x0).transpose() * &p.lambda0;
        let rhs = -stack(&grad_l, &p.constraints(&p.x0));
        let z = solve_exact(&k, &rhs).unwrap();
        assert!((info.direction - z).amax() < 1e-14);
    }

    #[test]
    fn exact_unit_step_solves_linear_quadratic() {
        let p = builtin_problem("eq_quadratic").unwrap();
        // Start from a feasible point with the averager already holding A.
        let x = Vector::from_vec(vec![0.5, 0.0]);
        let mut state = RunState::at(&p, x.clone(), Vector::zeros(1), 0, 0);
        state.averager.push(&p.hessian(&x));
        state.t = 1;
        let mut config = quiet_config(1);
        config.schedule = Schedule::new(1.0, 1.0, f64::INFINITY).unwrap();
        let noise = NoiseModel::new(0.0, 2).unwrap();
        state.step(&p, &noise, &config).unwrap();
        assert!(p.kkt_vector(&state.x, &state.lambda).norm() < 1e-14);
    }

    #[test]
    fn divergence_is_caught() {
        let p = builtin_problem("eq_quadratic").unwrap();
        let mut config = quiet_config(10);
        config.schedule = Schedule::new(1e12, 1.0, f64::INFINITY).unwrap();
        let failure = run(&p, &config, 0).unwrap_err();
        assert!(matches!(failure.error, Error::Diverged { .. }), "{failure}");
    }

    #[test]
    fn stride_controls_row_count() {
        let p = builtin_problem("hs48").unwrap();
        let mut config = quiet_config(100);
        config.stride = 10;
        let out = run(&p, &config, 0).unwrap();
        assert_eq!(out.trace.len(), 10);
        assert_eq!(out.trace.last().unwrap().t, 100);
    }
}
