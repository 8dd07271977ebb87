//! Helpers shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use stosqp_core::ProblemSpec;

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

const FD_STEP: f64 = 1e-6;

pub fn random_vector<R: Rng>(n: usize, rng: &mut R) -> Vector {
    Vector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Symmetric matrix with every eigenvalue at least 0.1 in magnitude.
pub fn random_symmetric_invertible<R: Rng>(n: usize, rng: &mut R) -> Matrix {
    loop {
        let a = Matrix::from_fn(n, n, |_, _| rng.sample(StandardNormal));
        let k = (&a + a.transpose()) * 0.5;
        if k.clone()
            .symmetric_eigenvalues()
            .iter()
            .all(|e| e.abs() > 0.1)
        {
            return k;
        }
    }
}

/// Central differences of a vector-valued map, one column per coordinate.
pub fn fd_jacobian(f: impl Fn(&Vector) -> Vector, x: &Vector) -> Matrix {
    let n = x.len();
    let rows = f(x).len();
    let mut j = Matrix::zeros(rows, n);
    for i in 0..n {
        let h = FD_STEP * (1.0 + x[i].abs());
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        j.set_column(i, &((f(&xp) - f(&xm)) / (2.0 * h)));
    }
    j
}

/// `|a - b| / max(1, |b|)` in the max norm.
pub fn rel_err(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).amax() / b.amax().max(1.0)
}

/// Largest relative finite-difference error over the gradient, Jacobian,
/// objective Hessian and constraint Hessians at `x`.
pub fn derivative_error(p: &ProblemSpec, x: &Vector) -> f64 {
    let d = p.dim_primal();
    let grad_fd = fd_jacobian(|y| Vector::from_element(1, p.objective(y)), x).transpose();
    let grad = Matrix::from_column_slice(d, 1, p.gradient(x).as_slice());
    let mut worst = rel_err(&grad, &grad_fd);
    worst = worst.max(rel_err(
        &p.jacobian(x),
        &fd_jacobian(|y| p.constraints(y), x),
    ));
    worst = worst.max(rel_err(&p.hessian(x), &fd_jacobian(|y| p.gradient(y), x)));
    for i in 0..p.dim_dual() {
        let ci = fd_jacobian(|y| p.jacobian(y).row(i).transpose(), x);
        worst = worst.max(rel_err(&p.constraint_hessian(i, x), &ci));
    }
    worst
}

/// Sample points around the start point and the solution.
pub fn probe_points<R: Rng>(p: &ProblemSpec, count: usize, rng: &mut R) -> Vec<Vector> {
    let centre = p
        .known_solution
        .as_ref()
        .map(|s| s.x.clone())
        .unwrap_or_else(|| p.x0.clone());
    (0..count)
        .map(|i| {
            let base = if i % 2 == 0 { &p.x0 } else { &centre };
            base + random_vector(p.dim_primal(), rng) * 0.5
        })
        .collect()
}
