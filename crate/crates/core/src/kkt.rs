//! Hessian averaging, reduced-Hessian regularization and KKT assembly.

use crate::linalg::{householder_full_q, min_eigenvalue, singular_value_range};
use crate::{Error, Matrix, Result};

/// Relative rank tolerance on the constraint Jacobian.
pub const RANK_TOL: f64 = 1e-10;

/// Default positive-definiteness floor for the reduced Hessian.
pub const DEFAULT_PD_FLOOR: f64 = 0.1;

/// Running sum of sampled Lagrangian Hessians.
///
/// The average seen at iteration `t` covers samples `0..t`; the caller pushes
/// the iteration-`t` sample only after the Newton system of that iteration has
/// been formed.
#[derive(Debug, Clone)]
pub struct HessianAverager {
    running_sum: Matrix,
    count: usize,
}

impl HessianAverager {
    pub fn new(d: usize) -> Self {
        Self {
            running_sum: Matrix::zeros(d, d),
            count: 0,
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn running_sum(&self) -> &Matrix {
        &self.running_sum
    }

    /// `(1/t) * sum`, or `None` before the first sample.
    pub fn average(&self) -> Option<Matrix> {
        (self.count > 0).then(|| &self.running_sum / self.count as f64)
    }

    pub fn push(&mut self, sample: &Matrix) {
        debug_assert_eq!(sample.shape(), self.running_sum.shape());
        self.running_sum += sample;
        self.count += 1;
    }
}

/// Orthonormal basis `Z` (`d x (d - m)`) of `{x : G x = 0}`.
pub fn nullspace_basis(g: &Matrix) -> Result<Matrix> {
    let (m, d) = g.shape();
    if m == 0 {
        return Ok(Matrix::identity(d, d));
    }
    check_rank(g)?;
    let q = householder_full_q(&g.transpose());
    Ok(q.columns(m, d - m).into_owned())
}

fn check_rank(g: &Matrix) -> Result<(f64, f64)> {
    let (sigma_min, sigma_max) = singular_value_range(g);
    if g.nrows() > g.ncols() || !(sigma_min > RANK_TOL * sigma_max) {
        return Err(Error::RankDeficient {
            sigma_min,
            sigma_max,
        });
    }
    Ok((sigma_min, sigma_max))
}

/// Outcome of [`regularize`].
#[derive(Debug, Clone)]
pub struct Regularized {
    pub b: Matrix,
    /// `||Delta_t||`, the size of the identity shift (0 when not triggered).
    pub delta_magnitude: f64,
    /// Least eigenvalue of `Z^T avg Z` before the shift.
    pub reduced_min_eig: f64,
}

/// Shift `avg` by a multiple of the identity so that the reduced Hessian
/// `Z^T B Z` has least eigenvalue at least `min(lambda_hat, pd_floor)`.
///
/// `avg` is the Hessian average (`None` at `t = 0`, which gives `B = I`).
pub fn regularize(
    avg: Option<&Matrix>,
    g: &Matrix,
    t: usize,
    pd_floor: f64,
) -> Result<Regularized> {
    let d = g.ncols();
    let avg = match avg {
        Some(a) if t > 0 => a,
        _ => {
            return Ok(Regularized {
                b: Matrix::identity(d, d),
                delta_magnitude: 0.0,
                reduced_min_eig: 1.0,
            })
        }
    };
    let z = nullspace_basis(g)?;
    let reduced = z.transpose() * avg * &z;
    let lambda_hat = min_eigenvalue(&reduced);
    let mut b = avg.clone();
    let mut delta_magnitude = 0.0;
    if lambda_hat < pd_floor {
        delta_magnitude = pd_floor - lambda_hat;
        for i in 0..d {
            b[(i, i)] += delta_magnitude;
        }
    }
    Ok(Regularized {
        b,
        delta_magnitude,
        reduced_min_eig: lambda_hat,
    })
}

/// `K = [[B, G^T], [G, 0]]` together with its blocks.
#[derive(Debug, Clone)]
pub struct KktSystem {
    pub b: Matrix,
    pub g: Matrix,
    pub k: Matrix,
    pub delta_magnitude: f64,
    pub g_sigma_min: f64,
    pub g_sigma_max: f64,
}

impl KktSystem {
    pub fn dim(&self) -> usize {
        self.k.nrows()
    }
}

pub fn assemble_kkt(b: Matrix, g: Matrix) -> Result<KktSystem> {
    let (m, d) = g.shape();
    if b.shape() != (d, d) {
        return Err(Error::DimensionMismatch {
            what: "modified Hessian",
            expected: d,
            got: b.nrows(),
        });
    }
    let (g_sigma_min, g_sigma_max) = if m == 0 {
        (f64::INFINITY, 0.0)
    } else {
        check_rank(&g)?
    };
    let n = d + m;
    let mut k = Matrix::zeros(n, n);
    k.view_mut((0, 0), (d, d)).copy_from(&b);
    k.view_mut((0, d), (d, m)).copy_from(&g.transpose());
    k.view_mut((d, 0), (m, d)).copy_from(&g);
    Ok(KktSystem {
        b,
        g,
        k,
        delta_magnitude: 0.0,
        g_sigma_min,
        g_sigma_max,
    })
}
