//! Built-in test problems.
//!
//! `hs7`, `hs48` and `byrdsphr` are analytic re-derivations of the
//! Hock-Schittkowski / CUTEst problems of the same name, with their standard
//! starting points. `eq_quadratic` and `eq_logistic` are small synthetic
//! problems with a linear-quadratic and a logistic-regression objective.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{KnownSolution, ProblemSpec, SmoothProblem};
use crate::solver::{deterministic_sqp_oracle, ORACLE_DEFAULT_TOL};
use crate::{Error, Matrix, Result, Vector};

pub const PROBLEM_NAMES: [&str; 5] = ["eq_quadratic", "eq_logistic", "hs7", "hs48", "byrdsphr"];

const ORACLE_MAX_ITER: usize = 200;

/// Look up a catalog problem by name.
pub fn builtin_problem(name: &str) -> Result<ProblemSpec> {
    match name {
        "eq_quadratic" => eq_quadratic(),
        "eq_logistic" => eq_logistic(),
        "hs7" => hs7(),
        "hs48" => hs48(),
        "byrdsphr" => byrdsphr(),
        _ => Err(Error::UnknownProblem {
            name: name.to_string(),
            available: PROBLEM_NAMES.to_vec(),
        }),
    }
}

fn eq_quadratic() -> Result<ProblemSpec> {
    // Solution (0.25, 0.25) with multiplier -0.25, close to the origin start.
    let q = QuadraticProblem::new(
        Matrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
        Vector::from_vec(vec![0.375, 0.125]),
        Matrix::from_row_slice(1, 2, &[1.0, 1.0]),
        Vector::from_vec(vec![0.5]),
    );
    let solution = q.kkt_solution()?;
    ProblemSpec::new(
        "eq_quadratic",
        Arc::new(q),
        Vector::zeros(2),
        Vector::zeros(1),
    )?
    .with_known_solution(solution)
}

fn eq_logistic() -> Result<ProblemSpec> {
    let p = LogisticProblem::synthetic(200, 4, 0x5eed_1091);
    let spec = ProblemSpec::new(
        "eq_logistic",
        Arc::new(p),
        Vector::zeros(4),
        Vector::zeros(1),
    )?;
    with_oracle_solution(spec)
}

fn hs7() -> Result<ProblemSpec> {
    let x_star = Vector::from_vec(vec![0.0, 3f64.sqrt()]);
    let lambda_star = Vector::from_vec(vec![1.0 / (2.0 * 3f64.sqrt())]);
    ProblemSpec::new(
        "hs7",
        Arc::new(Hs7),
        Vector::from_vec(vec![2.0, 2.0]),
        Vector::zeros(1),
    )?
    .with_known_solution(KnownSolution {
        x: x_star,
        lambda: lambda_star,
    })
}

fn hs48() -> Result<ProblemSpec> {
    ProblemSpec::new(
        "hs48",
        Arc::new(Hs48),
        Vector::from_vec(vec![3.0, 5.0, -3.0, 2.0, -2.0]),
        Vector::zeros(2),
    )?
    .with_known_solution(KnownSolution {
        x: Vector::from_element(5, 1.0),
        lambda: Vector::zeros(2),
    })
}

fn byrdsphr() -> Result<ProblemSpec> {
    let spec = ProblemSpec::new(
        "byrdsphr",
        Arc::new(Byrdsphr),
        Vector::from_vec(vec![5.0, 1e-4, -1e-4]),
        Vector::zeros(2),
    )?;
    with_oracle_solution(spec)
}

fn with_oracle_solution(spec: ProblemSpec) -> Result<ProblemSpec> {
    let sol = deterministic_sqp_oracle(
        &spec,
        &spec.x0,
        &spec.lambda0,
        ORACLE_MAX_ITER,
        ORACLE_DEFAULT_TOL,
    )?;
    spec.with_known_solution(KnownSolution {
        x: sol.x,
        lambda: sol.lambda,
    })
}

/// `f = x^T A x / 2 - b^T x`, `c = C x - d`.
#[derive(Debug, Clone)]
pub struct QuadraticProblem {
    a: Matrix,
    b: Vector,
    c: Matrix,
    d: Vector,
}

impl QuadraticProblem {
    pub fn new(a: Matrix, b: Vector, c: Matrix, d: Vector) -> Self {
        assert_eq!(a.nrows(), a.ncols());
        assert_eq!(a.nrows(), b.len());
        assert_eq!(c.ncols(), a.nrows());
        assert_eq!(c.nrows(), d.len());
        Self { a, b, c, d }
    }

    /// Solve `[[A, C^T], [C, 0]] (x, lambda) = (b, d)`.
    pub fn kkt_solution(&self) -> Result<KnownSolution> {
        let n = self.a.nrows();
        let m = self.c.nrows();
        let mut k = Matrix::zeros(n + m, n + m);
        k.view_mut((0, 0), (n, n)).copy_from(&self.a);
        k.view_mut((0, n), (n, m)).copy_from(&self.c.transpose());
        k.view_mut((n, 0), (m, n)).copy_from(&self.c);
        let rhs = crate::linalg::stack(&self.b, &self.d);
        let z = k
            .lu()
            .solve(&rhs)
            .ok_or(Error::SingularKkt { iteration: None })?;
        Ok(KnownSolution {
            x: z.rows(0, n).into_owned(),
            lambda: z.rows(n, m).into_owned(),
        })
    }
}

impl SmoothProblem for QuadraticProblem {
    fn dim_primal(&self) -> usize {
        self.a.nrows()
    }
    fn dim_dual(&self) -> usize {
        self.c.nrows()
    }
    fn objective(&self, x: &Vector) -> f64 {
        0.5 * x.dot(&(&self.a * x)) - self.b.dot(x)
    }
    fn gradient(&self, x: &Vector) -> Vector {
        &self.a * x - &self.b
    }
    fn hessian(&self, _x: &Vector) -> Matrix {
        self.a.clone()
    }
    fn constraints(&self, x: &Vector) -> Vector {
        &self.c * x - &self.d
    }
    fn jacobian(&self, _x: &Vector) -> Matrix {
        self.c.clone()
    }
    fn constraint_hessian(&self, _i: usize, _x: &Vector) -> Matrix {
        let n = self.a.nrows();
        Matrix::zeros(n, n)
    }
}

/// Ridge-regularized logistic loss with the weights constrained to sum to one.
#[derive(Debug, Clone)]
pub struct LogisticProblem {
    features: Matrix,
    labels: Vector,
    ridge: f64,
}

impl LogisticProblem {
    pub fn new(features: Matrix, labels: Vector, ridge: f64) -> Self {
        assert_eq!(features.nrows(), labels.len());
        Self {
            features,
            labels,
            ridge,
        }
    }

    /// Gaussian features with labels drawn from a logistic model; fixed by `seed`.
    pub fn synthetic(rows: usize, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth = Vector::from_fn(dim, |i, _| if i % 2 == 0 { 1.0 } else { -0.5 });
        let features = Matrix::from_fn(rows, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let labels = Vector::from_fn(rows, |i, _| {
            let margin = features.row(i).transpose().dot(&truth);
            if rng.random::<f64>() < sigmoid(margin) {
                1.0
            } else {
                -1.0
            }
        });
        Self::new(features, labels, 1e-2)
    }

    fn margins(&self, x: &Vector) -> Vector {
        (&self.features * x).component_mul(&self.labels)
    }
}

fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

// log(1 + exp(-s))
fn softplus_neg(s: f64) -> f64 {
    if s > 0.0 {
        (-s).exp().ln_1p()
    } else {
        -s + s.exp().ln_1p()
    }
}

impl SmoothProblem for LogisticProblem {
    fn dim_primal(&self) -> usize {
        self.features.ncols()
    }
    fn dim_dual(&self) -> usize {
        1
    }
    fn objective(&self, x: &Vector) -> f64 {
        let n = self.features.nrows() as f64;
        self.margins(x)
            .iter()
            .map(|&s| softplus_neg(s))
            .sum::<f64>()
            / n
            + 0.5 * self.ridge * x.norm_squared()
    }
    fn gradient(&self, x: &Vector) -> Vector {
        let n = self.features.nrows() as f64;
        let weights = self
            .margins(x)
            .zip_map(&self.labels, |s, y| -y * sigmoid(-s) / n);
        self.features.transpose() * weights + x * self.ridge
    }
    fn hessian(&self, x: &Vector) -> Matrix {
        let n = self.features.nrows() as f64;
        let d = self.dim_primal();
        let margins = self.margins(x);
        let mut h = Matrix::identity(d, d) * self.ridge;
        for (i, &s) in margins.iter().enumerate() {
            let p = sigmoid(s);
            let a = self.features.row(i).transpose();
            h += (&a * a.transpose()) * (p * (1.0 - p) / n);
        }
        h
    }
    fn constraints(&self, x: &Vector) -> Vector {
        Vector::from_element(1, x.sum() - 1.0)
    }
    fn jacobian(&self, _x: &Vector) -> Matrix {
        Matrix::from_element(1, self.dim_primal(), 1.0)
    }
    fn constraint_hessian(&self, _i: usize, _x: &Vector) -> Matrix {
        let d = self.dim_primal();
        Matrix::zeros(d, d)
    }
}

/// HS7: `min ln(1 + x1^2) - x2  s.t.  (1 + x1^2)^2 + x2^2 - 4 = 0`.
#[derive(Debug, Clone, Copy)]
pub struct Hs7;

impl SmoothProblem for Hs7 {
    fn dim_primal(&self) -> usize {
        2
    }
    fn dim_dual(&self) -> usize {
        1
    }
    fn objective(&self, x: &Vector) -> f64 {
        x[0].mul_add(x[0], 1.0).ln() - x[1]
    }
    fn gradient(&self, x: &Vector) -> Vector {
        let u = 1.0 + x[0] * x[0];
        Vector::from_vec(vec![2.0 * x[0] / u, -1.0])
    }
    fn hessian(&self, x: &Vector) -> Matrix {
        let x1 = x[0];
        let u = 1.0 + x1 * x1;
        Matrix::from_row_slice(2, 2, &[2.0 * (1.0 - x1 * x1) / (u * u), 0.0, 0.0, 0.0])
    }
    fn constraints(&self, x: &Vector) -> Vector {
        let u = 1.0 + x[0] * x[0];
        Vector::from_element(1, u * u + x[1] * x[1] - 4.0)
    }
    fn jacobian(&self, x: &Vector) -> Matrix {
        let u = 1.0 + x[0] * x[0];
        Matrix::from_row_slice(1, 2, &[4.0 * x[0] * u, 2.0 * x[1]])
    }
    fn constraint_hessian(&self, _i: usize, x: &Vector) -> Matrix {
        let x1 = x[0];
        Matrix::from_row_slice(2, 2, &[4.0 + 12.0 * x1 * x1, 0.0, 0.0, 2.0])
    }
}

/// HS48: `min (x1-1)^2 + (x2-x3)^2 + (x4-x5)^2` subject to
/// `sum(x) = 5` and `x3 - 2 (x4 + x5) = -3`.
#[derive(Debug, Clone, Copy)]
pub struct Hs48;

impl SmoothProblem for Hs48 {
    fn dim_primal(&self) -> usize {
        5
    }
    fn dim_dual(&self) -> usize {
        2
    }
    fn objective(&self, x: &Vector) -> f64 {
        (x[0] - 1.0).powi(2) + (x[1] - x[2]).powi(2) + (x[3] - x[4]).powi(2)
    }
    fn gradient(&self, x: &Vector) -> Vector {
        let a = 2.0 * (x[1] - x[2]);
        let b = 2.0 * (x[3] - x[4]);
        Vector::from_vec(vec![2.0 * (x[0] - 1.0), a, -a, b, -b])
    }
    fn hessian(&self, _x: &Vector) -> Matrix {
        #[rustfmt::skip]
        let h = Matrix::from_row_slice(5, 5, &[
            2.0,  0.0,  0.0,  0.0,  0.0,
            0.0,  2.0, -2.0,  0.0,  0.0,
            0.0, -2.0,  2.0,  0.0,  0.0,
            0.0,  0.0,  0.0,  2.0, -2.0,
            0.0,  0.0,  0.0, -2.0,  2.0,
        ]);
        h
    }
    fn constraints(&self, x: &Vector) -> Vector {
        Vector::from_vec(vec![x.sum() - 5.0, x[2] - 2.0 * (x[3] + x[4]) + 3.0])
    }
    fn jacobian(&self, _x: &Vector) -> Matrix {
        #[rustfmt::skip]
        let g = Matrix::from_row_slice(2, 5, &[
            1.0, 1.0, 1.0,  1.0,  1.0,
            0.0, 0.0, 1.0, -2.0, -2.0,
        ]);
        g
    }
    fn constraint_hessian(&self, _i: usize, _x: &Vector) -> Matrix {
        Matrix::zeros(5, 5)
    }
}

/// BYRDSPHR: `min -x1 - x2 - x3` on the intersection of two spheres of radius 3
/// centred at the origin and at `e1`.
#[derive(Debug, Clone, Copy)]
pub struct Byrdsphr;

impl SmoothProblem for Byrdsphr {
    fn dim_primal(&self) -> usize {
        3
    }
    fn dim_dual(&self) -> usize {
        2
    }
    fn objective(&self, x: &Vector) -> f64 {
        -x.sum()
    }
    fn gradient(&self, _x: &Vector) -> Vector {
        Vector::from_element(3, -1.0)
    }
    fn hessian(&self, _x: &Vector) -> Matrix {
        Matrix::zeros(3, 3)
    }
    fn constraints(&self, x: &Vector) -> Vector {
        let tail = x[1] * x[1] + x[2] * x[2];
        Vector::from_vec(vec![
            x[0] * x[0] + tail - 9.0,
            (x[0] - 1.0).powi(2) + tail - 9.0,
        ])
    }
    fn jacobian(&self, x: &Vector) -> Matrix {
        Matrix::from_row_slice(
            2,
            3,
            &[
                2.0 * x[0],
                2.0 * x[1],
                2.0 * x[2],
                2.0 * (x[0] - 1.0),
                2.0 * x[1],
                2.0 * x[2],
            ],
        )
    }
    fn constraint_hessian(&self, _i: usize, _x: &Vector) -> Matrix {
        Matrix::identity(3, 3) * 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_name_lists_alternatives() {
        let err = builtin_problem("rosenbrock").unwrap_err();
        let msg = err.to_string();
        for name in PROBLEM_NAMES {
            assert!(msg.contains(name), "{msg}");
        }
    }

    #[test]
    fn eq_quadratic_solution_solves_kkt() {
        let p = builtin_problem("eq_quadratic").unwrap();
        let s = p.known_solution.as_ref().unwrap();
        assert!((s.x[0] - 0.25).abs() < 1e-15 && (s.x[1] - 0.25).abs() < 1e-15);
        assert!((s.lambda[0] + 0.25).abs() < 1e-15);
        assert!(p.kkt_vector(&s.x, &s.lambda).norm() < 1e-14);
    }

    #[test]
    fn hs7_solution_values() {
        let p = builtin_problem("hs7").unwrap();
        let s = p.known_solution.as_ref().unwrap();
        assert!((p.objective(&s.x) + 3f64.sqrt()).abs() < 1e-15);
        assert!(p.kkt_vector(&s.x, &s.lambda).norm() < 1e-14);
    }

    #[test]
    fn hs48_solution_is_all_ones() {
        let p = builtin_problem("hs48").unwrap();
        let s = p.known_solution.as_ref().unwrap();
        assert_eq!(p.objective(&s.x), 0.0);
        assert!(p.kkt_vector(&s.x, &s.lambda).norm() < 1e-14);
    }

    #[test]
    fn byrdsphr_oracle_finds_the_minimizer() {
        let p = builtin_problem("byrdsphr").unwrap();
        let s = p.known_solution.as_ref().unwrap();
        let r = 4.375f64.sqrt();
        assert!((s.x[0] - 0.5).abs() < 1e-8, "{:?}", s.x);
        assert!(
            (s.x[1] - r).abs() < 1e-8 && (s.x[2] - r).abs() < 1e-8,
            "{:?}",
            s.x
        );
    }

    #[test]
    fn logistic_solution_is_feasible() {
        let p = builtin_problem("eq_logistic").unwrap();
        let s = p.known_solution.as_ref().unwrap();
        assert!((s.x.sum() - 1.0).abs() < 1e-10);
        assert!(p.kkt_vector(&s.x, &s.lambda).norm() <= 1e-10);
    }
}
