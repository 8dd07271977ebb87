//! Equality-constrained stochastic problems.
//!
//! A problem is `min f(x) s.t. c(x) = 0` with exact derivatives available
//! through [`SmoothProblem`]. Stochasticity enters only through the
//! [`NoiseModel`], which perturbs the objective gradient and Hessian; the
//! constraints are deterministic.

mod catalog;

use std::fmt;
use std::sync::Arc;

use nalgebra::Cholesky;
use rand::Rng;
use rand_distr::StandardNormal;

pub use catalog::{
    builtin_problem, Byrdsphr, Hs48, Hs7, LogisticProblem, QuadraticProblem, PROBLEM_NAMES,
};

use crate::linalg::stack;
use crate::{Error, Matrix, Result, Vector};

/// Exact first and second order information of `f` and `c`.
pub trait SmoothProblem: Send + Sync + fmt::Debug {
    fn dim_primal(&self) -> usize;
    fn dim_dual(&self) -> usize;
    fn objective(&self, x: &Vector) -> f64;
    fn gradient(&self, x: &Vector) -> Vector;
    fn hessian(&self, x: &Vector) -> Matrix;
    fn constraints(&self, x: &Vector) -> Vector;
    /// Constraint Jacobian `G(x)`, `m x d`.
    fn jacobian(&self, x: &Vector) -> Matrix;
    /// Hessian of the `i`-th constraint.
    fn constraint_hessian(&self, i: usize, x: &Vector) -> Matrix;
}

/// A primal-dual pair satisfying the KKT conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct KnownSolution {
    pub x: Vector,
    pub lambda: Vector,
}

impl KnownSolution {
    pub fn stacked(&self) -> Vector {
        stack(&self.x, &self.lambda)
    }
}

/// A problem together with its starting point and, when available, a
/// reference solution.
#[derive(Clone)]
pub struct ProblemSpec {
    name: String,
    functions: Arc<dyn SmoothProblem>,
    pub x0: Vector,
    pub lambda0: Vector,
    pub known_solution: Option<KnownSolution>,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("d", &self.dim_primal())
            .field("m", &self.dim_dual())
            .field("known_solution", &self.known_solution.is_some())
            .finish()
    }
}

impl ProblemSpec {
    pub fn new(
        name: impl Into<String>,
        functions: Arc<dyn SmoothProblem>,
        x0: Vector,
        lambda0: Vector,
    ) -> Result<Self> {
        let d = functions.dim_primal();
        let m = functions.dim_dual();
        if m >= d {
            return Err(Error::InvalidConfig(format!(
                "need fewer constraints than variables (m = {m}, d = {d})"
            )));
        }
        let spec = Self {
            name: name.into(),
            functions,
            x0,
            lambda0,
            known_solution: None,
        };
        spec.check_dims(&spec.x0, &spec.lambda0)?;
        Ok(spec)
    }

    pub fn with_known_solution(mut self, solution: KnownSolution) -> Result<Self> {
        self.check_dims(&solution.x, &solution.lambda)?;
        self.known_solution = Some(solution);
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn functions(&self) -> &dyn SmoothProblem {
        self.functions.as_ref()
    }

    pub fn dim_primal(&self) -> usize {
        self.functions.dim_primal()
    }

    pub fn dim_dual(&self) -> usize {
        self.functions.dim_dual()
    }

    pub fn check_dims(&self, x: &Vector, lambda: &Vector) -> Result<()> {
        if x.len() != self.dim_primal() {
            return Err(Error::DimensionMismatch {
                what: "primal iterate",
                expected: self.dim_primal(),
                got: x.len(),
            });
        }
        if lambda.len() != self.dim_dual() {
            return Err(Error::DimensionMismatch {
                what: "dual iterate",
                expected: self.dim_dual(),
                got: lambda.len(),
            });
        }
        Ok(())
    }

    pub fn objective(&self, x: &Vector) -> f64 {
        self.functions.objective(x)
    }

    pub fn gradient(&self, x: &Vector) -> Vector {
        self.functions.gradient(x)
    }

    pub fn hessian(&self, x: &Vector) -> Matrix {
        self.functions.hessian(x)
    }

    pub fn constraints(&self, x: &Vector) -> Vector {
        self.functions.constraints(x)
    }

    pub fn jacobian(&self, x: &Vector) -> Matrix {
        self.functions.jacobian(x)
    }

    pub fn constraint_hessian(&self, i: usize, x: &Vector) -> Matrix {
        self.functions.constraint_hessian(i, x)
    }

    /// `f(x) + lambda^T c(x)`.
    pub fn lagrangian(&self, x: &Vector, lambda: &Vector) -> f64 {
        self.objective(x) + lambda.dot(&self.constraints(x))
    }

    /// `grad f(x) + G(x)^T lambda`.
    pub fn lagrangian_gradient(&self, x: &Vector, lambda: &Vector) -> Vector {
        self.gradient(x) + self.jacobian(x).transpose() * lambda
    }

    /// `sum_i lambda_i hess c_i(x)`.
    pub fn constraint_curvature(&self, x: &Vector, lambda: &Vector) -> Matrix {
        let d = self.dim_primal();
        let mut out = Matrix::zeros(d, d);
        for (i, &li) in lambda.iter().enumerate() {
            if li != 0.0 {
                out += self.constraint_hessian(i, x) * li;
            }
        }
        out
    }

    /// Exact Hessian of the Lagrangian in `x`.
    pub fn lagrangian_hessian(&self, x: &Vector, lambda: &Vector) -> Matrix {
        self.hessian(x) + self.constraint_curvature(x, lambda)
    }

    /// Stacked KKT vector `(grad_x L, c)`.
    pub fn kkt_vector(&self, x: &Vector, lambda: &Vector) -> Vector {
        stack(&self.lagrangian_gradient(x, lambda), &self.constraints(x))
    }
}

/// `||(grad f(x) + G(x)^T lambda, c(x))||_2`.
pub fn kkt_residual(problem: &ProblemSpec, x: &Vector, lambda: &Vector) -> Result<f64> {
    problem.check_dims(x, lambda)?;
    Ok(problem.kkt_vector(x, lambda).norm())
}

/// Gaussian derivative noise: `g ~ N(grad f, sigma2 * S)` with `S = I + 11^T`
/// by default, and Hessian entries `(i, j) = (j, i) ~ N(hess f_ij, sigma2)`.
#[derive(Debug, Clone)]
pub struct NoiseModel {
    sigma2: f64,
    shape: Matrix,
    factor: Matrix,
}

impl NoiseModel {
    /// Default covariance shape `I + 11^T` in dimension `d`.
    pub fn new(sigma2: f64, d: usize) -> Result<Self> {
        let shape = Matrix::identity(d, d) + Matrix::from_element(d, d, 1.0);
        Self::with_gradient_covariance(sigma2, shape)
    }

    /// Gradient covariance `sigma2 * shape`; `shape` must be positive definite.
    pub fn with_gradient_covariance(sigma2: f64, shape: Matrix) -> Result<Self> {
        if !(sigma2 >= 0.0 && sigma2.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "sigma2 must be finite and >= 0, got {sigma2}"
            )));
        }
        let chol = Cholesky::new(shape.clone()).ok_or_else(|| {
            Error::InvalidConfig("gradient covariance shape is not positive definite".into())
        })?;
        let factor = chol.l() * sigma2.sqrt();
        Ok(Self {
            sigma2,
            shape,
            factor,
        })
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn dim(&self) -> usize {
        self.shape.nrows()
    }

    /// `Cov[grad f(x; xi)] = sigma2 * S`.
    pub fn gradient_covariance(&self) -> Matrix {
        &self.shape * self.sigma2
    }

    /// One noisy gradient `grad f(x) + L z`, `L L^T = sigma2 * S`.
    pub fn sample_gradient<R: Rng + ?Sized>(
        &self,
        problem: &ProblemSpec,
        x: &Vector,
        rng: &mut R,
    ) -> Vector {
        let mut g = problem.gradient(x);
        if self.sigma2 > 0.0 {
            let z = Vector::from_fn(g.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
            g.gemv(1.0, &self.factor, &z, 1.0);
        }
        g
    }

    /// Noisy objective Hessian: one draw per unordered pair, so the result is
    /// exactly symmetric.
    pub fn sample_hessian<R: Rng + ?Sized>(
        &self,
        problem: &ProblemSpec,
        x: &Vector,
        rng: &mut R,
    ) -> Matrix {
        let mut h = problem.hessian(x);
        if self.sigma2 > 0.0 {
            let sd = self.sigma2.sqrt();
            let d = h.nrows();
            for i in 0..d {
                for j in i..d {
                    let e = sd * rng.sample::<f64, _>(StandardNormal);
                    h[(i, j)] += e;
                    if i != j {
                        h[(j, i)] += e;
                    }
                }
            }
        }
        h
    }

    /// Noisy Lagrangian Hessian `H_bar + sum_i lambda_i hess c_i(x)`.
    pub fn sample_lagrangian_hessian<R: Rng + ?Sized>(
        &self,
        problem: &ProblemSpec,
        x: &Vector,
        lambda: &Vector,
        rng: &mut R,
    ) -> Matrix {
        self.sample_hessian(problem, x, rng) + problem.constraint_curvature(x, lambda)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RunStreams;

    fn unit_quadratic() -> ProblemSpec {
        // f = |x|^2 / 2, c = x1 + x2 - 2
        let q = QuadraticProblem::new(
            Matrix::identity(2, 2),
            Vector::zeros(2),
            Matrix::from_row_slice(1, 2, &[1.0, 1.0]),
            Vector::from_vec(vec![2.0]),
        );
        ProblemSpec::new("unit", Arc::new(q), Vector::zeros(2), Vector::zeros(1)).unwrap()
    }

    #[test]
    fn kkt_residual_at_solution_and_origin() {
        let p = unit_quadratic();
        let r = kkt_residual(
            &p,
            &Vector::from_vec(vec![1.0, 1.0]),
            &Vector::from_vec(vec![-1.0]),
        )
        .unwrap();
        assert_eq!(r, 0.0);
        let r0 = kkt_residual(&p, &Vector::zeros(2), &Vector::zeros(1)).unwrap();
        assert_eq!(r0, 2.0);
    }

    #[test]
    fn kkt_residual_rejects_bad_dims() {
        let p = unit_quadratic();
        let err = kkt_residual(&p, &Vector::zeros(3), &Vector::zeros(1)).unwrap_err();
        assert!(matches!(
            err,
            Error::DimensionMismatch {
                expected: 2,
                got: 3,
                ..
            }
        ));
    }

    #[test]
    fn zero_noise_is_exact() {
        let p = unit_quadratic();
        let noise = NoiseModel::new(0.0, 2).unwrap();
        let mut s = RunStreams::new(1, 0);
        let x = Vector::from_vec(vec![0.3, -0.7]);
        assert_eq!(noise.sample_gradient(&p, &x, &mut s.xi), p.gradient(&x));
        assert_eq!(noise.sample_hessian(&p, &x, &mut s.xi), p.hessian(&x));
    }

    #[test]
    fn sampled_hessian_is_symmetric() {
        let p = builtin_problem("hs48").unwrap();
        let noise = NoiseModel::new(1.0, 5).unwrap();
        let mut s = RunStreams::new(2, 0);
        for _ in 0..20 {
            let h = noise.sample_lagrangian_hessian(&p, &p.x0, &p.lambda0, &mut s.xi);
            assert_eq!(h, h.transpose());
        }
    }

    #[test]
    fn affine_constraints_add_no_curvature() {
        let p = builtin_problem("hs48").unwrap();
        let lambda = Vector::from_vec(vec![3.0, -2.0]);
        assert_eq!(p.lagrangian_hessian(&p.x0, &lambda), p.hessian(&p.x0));
    }

    #[test]
    fn same_seed_same_gradient() {
        let p = builtin_problem("hs7").unwrap();
        let noise = NoiseModel::new(0.1, 2).unwrap();
        let a = noise.sample_gradient(&p, &p.x0, &mut RunStreams::new(9, 2).xi);
        let b = noise.sample_gradient(&p, &p.x0, &mut RunStreams::new(9, 2).xi);
        assert_eq!(a, b);
    }

    #[test]
    fn negative_sigma2_is_rejected() {
        assert!(NoiseModel::new(-1.0, 2).is_err());
        assert!(NoiseModel::new(f64::NAN, 2).is_err());
    }

    #[test]
    fn experiment_sigma2_grid_is_accepted() {
        for s in [1e-8, 1e-4, 1e-2, 1e-1, 1.0] {
            assert!(NoiseModel::new(s, 3).is_ok());
        }
    }
}
