//! Sketch-and-project solves of KKT systems `K z = rhs`.
//!
//! One step projects the current iterate onto `{z : S^T K z = S^T rhs}`:
//!
//! ```text
//! z' = z - K S (S^T K^2 S)^+ S^T (K z - rhs)
//! ```
//!
//! With `S = e_i` this is randomized Kaczmarz on the rows of `K`.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::pinv_psd;
use crate::{Error, Matrix, Result, Vector};

/// Relative eigenvalue cutoff for the pseudoinverse of `S^T K^2 S`.
pub const PINV_CUTOFF: f64 = 1e-12;

/// Which family sketching matrices are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SketchKind {
    /// `S = e_i`, `i` uniform (randomized Kaczmarz).
    Coordinate,
    /// `q` distinct coordinates drawn uniformly without replacement.
    BlockCoordinate(usize),
    /// `n x q` matrix with i.i.d. standard normal entries.
    Gaussian(usize),
    /// Direct factorization; no sketching.
    Exact,
}

impl fmt::Display for SketchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SketchKind::Coordinate => f.write_str("kaczmarz"),
            SketchKind::BlockCoordinate(q) => write!(f, "block:{q}"),
            SketchKind::Gaussian(q) => write!(f, "gaussian:{q}"),
            SketchKind::Exact => f.write_str("exact"),
        }
    }
}

impl FromStr for SketchKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let block = |q: &str| {
            q.parse::<usize>()
                .ok()
                .filter(|&q| q > 0)
                .ok_or_else(|| Error::InvalidConfig(format!("invalid sketch block size `{q}`")))
        };
        match s.split_once(':') {
            None if s == "kaczmarz" || s == "coordinate" => Ok(SketchKind::Coordinate),
            None if s == "exact" => Ok(SketchKind::Exact),
            Some(("block", q)) => Ok(SketchKind::BlockCoordinate(block(q)?)),
            Some(("gaussian", q)) => Ok(SketchKind::Gaussian(block(q)?)),
            _ => Err(Error::InvalidConfig(format!(
                "unknown sketch `{s}` (expected kaczmarz, block:q, gaussian:q or exact)"
            ))),
        }
    }
}

/// One draw of a sketching matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum Sketch {
    /// Columns of the identity, i.e. a coordinate selection.
    Columns(Vec<usize>),
    Dense(Matrix),
}

impl Sketch {
    pub fn to_matrix(&self, n: usize) -> Matrix {
        match self {
            Sketch::Columns(idx) => {
                let mut s = Matrix::zeros(n, idx.len());
                for (j, &i) in idx.iter().enumerate() {
                    s[(i, j)] = 1.0;
                }
                s
            }
            Sketch::Dense(s) => s.clone(),
        }
    }
}

/// A sketch family on systems of dimension `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SketchDistribution {
    pub kind: SketchKind,
    pub n: usize,
}

impl SketchDistribution {
    pub fn new(kind: SketchKind, n: usize) -> Result<Self> {
        match kind {
            SketchKind::BlockCoordinate(q) if q > n => Err(Error::InvalidConfig(format!(
                "block size {q} exceeds system dimension {n}"
            ))),
            SketchKind::BlockCoordinate(0) | SketchKind::Gaussian(0) => Err(Error::InvalidConfig(
                "sketch block size must be positive".into(),
            )),
            _ => Ok(Self { kind, n }),
        }
    }

    /// Draw one sketch. `None` for [`SketchKind::Exact`].
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<Sketch> {
        match self.kind {
            SketchKind::Coordinate => Some(Sketch::Columns(vec![rng.random_range(0..self.n)])),
            SketchKind::BlockCoordinate(q) => {
                let mut idx = index::sample(rng, self.n, q).into_vec();
                idx.sort_unstable();
                Some(Sketch::Columns(idx))
            }
            SketchKind::Gaussian(q) => Some(Sketch::Dense(Matrix::from_fn(self.n, q, |_, _| {
                rng.sample::<f64, _>(StandardNormal)
            }))),
            SketchKind::Exact => None,
        }
    }
}

/// One sketch-and-project step with a dense sketch `S`.
pub fn sketch_project_step(k: &Matrix, rhs: &Vector, z: &Vector, s: &Matrix) -> Vector {
    let ks = k * s;
    let residual = k * z - rhs;
    project_with(&ks, &(s.transpose() * residual), z)
}

fn project_with(ks: &Matrix, sketched_residual: &Vector, z: &Vector) -> Vector {
    let gram = ks.transpose() * ks;
    let y = pinv_psd(&gram, PINV_CUTOFF) * sketched_residual;
    z - ks * y
}

/// Sketch-and-project step for any [`Sketch`]; coordinate sketches take an
/// `O(n)` matrix-free path.
pub fn apply_sketch(k: &Matrix, rhs: &Vector, z: &Vector, sketch: &Sketch) -> Vector {
    match sketch {
        Sketch::Columns(idx) if idx.len() == 1 => {
            let i = idx[0];
            // K symmetric: K e_i is column i and (K^2)_ii = |col_i|^2.
            let col = k.column(i);
            let norm2 = col.norm_squared();
            if norm2 == 0.0 {
                return z.clone();
            }
            let r = col.dot(z) - rhs[i];
            let mut out = z.clone();
            out.axpy(-r / norm2, &col, 1.0);
            out
        }
        Sketch::Columns(idx) => {
            let ks = k.select_columns(idx.iter());
            let residual = k * z - rhs;
            let sr = Vector::from_iterator(idx.len(), idx.iter().map(|&i| residual[i]));
            project_with(&ks, &sr, z)
        }
        Sketch::Dense(s) => sketch_project_step(k, rhs, z, s),
    }
}

/// The projection `P = K S (S^T K^2 S)^+ S^T K` of one sketch.
pub fn sketch_projection(k: &Matrix, sketch: &Sketch) -> Matrix {
    let ks = match sketch {
        Sketch::Columns(idx) => k.select_columns(idx.iter()),
        Sketch::Dense(s) => k * s,
    };
    let gram = ks.transpose() * &ks;
    &ks * pinv_psd(&gram, PINV_CUTOFF) * ks.transpose()
}

/// Result of an (in)exact Newton solve.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub solution: Vector,
    pub iterations_used: usize,
    /// `max |S^T (K z - rhs)|` after the last sketched step (0 for exact solves).
    pub final_sketch_residual: f64,
    /// Direct solution, filled only in audit mode.
    pub exact_solution: Option<Vector>,
}

/// `tau` sketch-and-project steps from `z = 0` (or a direct solve for
/// [`SketchKind::Exact`]).
pub fn solve_inexact<R: Rng + ?Sized>(
    k: &Matrix,
    rhs: &Vector,
    tau: usize,
    dist: &SketchDistribution,
    rng: &mut R,
) -> Result<SolveReport> {
    if dist.kind == SketchKind::Exact {
        return Ok(SolveReport {
            solution: solve_exact(k, rhs)?,
            iterations_used: 0,
            final_sketch_residual: 0.0,
            exact_solution: None,
        });
    }
    if tau == 0 {
        return Err(Error::InvalidConfig("tau must be at least 1".into()));
    }
    let mut z = Vector::zeros(rhs.len());
    let mut last = None;
    for _ in 0..tau {
        let sketch = dist
            .sample(rng)
            .expect("non-exact sketch kinds always sample");
        z = apply_sketch(k, rhs, &z, &sketch);
        last = Some(sketch);
    }
    let final_sketch_residual = last
        .map(|s| {
            let r = k * &z - rhs;
            match s {
                Sketch::Columns(idx) => idx.iter().map(|&i| r[i].abs()).fold(0.0, f64::max),
                Sketch::Dense(s) => (s.transpose() * r).amax(),
            }
        })
        .unwrap_or(0.0);
    Ok(SolveReport {
        solution: z,
        iterations_used: tau,
        final_sketch_residual,
        exact_solution: None,
    })
}

/// [`solve_inexact`] that also records the direct solution.
pub fn solve_audited<R: Rng + ?Sized>(
    k: &Matrix,
    rhs: &Vector,
    tau: usize,
    dist: &SketchDistribution,
    rng: &mut R,
) -> Result<SolveReport> {
    let mut report = solve_inexact(k, rhs, tau, dist, rng)?;
    report.exact_solution = Some(solve_exact(k, rhs)?);
    Ok(report)
}

/// Direct solve by pivoted LU with one step of iterative refinement.
pub fn solve_exact(k: &Matrix, rhs: &Vector) -> Result<Vector> {
    let lu = k.clone().lu();
    let singular = || Error::SingularKkt { iteration: None };
    let mut z = lu.solve(rhs).ok_or_else(singular)?;
    let r = rhs - k * &z;
    if let Some(dz) = lu.solve(&r) {
        z += dz;
    }
    if z.iter().all(|v| v.is_finite()) {
        Ok(z)
    } else {
        Err(singular())
    }
}

/// Spectral summary of the expected sketch projection.
#[derive(Debug, Clone)]
pub struct ContractionAudit {
    /// `lambda_min(E[P])`.
    pub gamma_s: f64,
    /// `1 - gamma_s`.
    pub rho: f64,
    pub expected_projection: Matrix,
    /// `true` when `E[P]` is available in closed form.
    pub exact: bool,
    /// Set when the estimate of `gamma_s` is not positive.
    pub warning: Option<String>,
}

/// Estimate `E[K S (S^T K^2 S)^+ S^T K]` and its least eigenvalue.
///
/// Coordinate sketches are averaged in closed form over all `n` coordinates;
/// block and Gaussian sketches use `mc_samples` Monte-Carlo draws.
pub fn contraction_audit<R: Rng + ?Sized>(
    k: &Matrix,
    dist: &SketchDistribution,
    mc_samples: usize,
    rng: &mut R,
) -> Result<ContractionAudit> {
    let n = k.nrows();
    let (expected_projection, exact) = match dist.kind {
        SketchKind::Exact => (Matrix::identity(n, n), true),
        SketchKind::Coordinate => {
            let mut acc = Matrix::zeros(n, n);
            for i in 0..n {
                let col = k.column(i);
                let norm2 = col.norm_squared();
                if norm2 > 0.0 {
                    acc += (col * col.transpose()) / norm2;
                }
            }
            (acc / n as f64, true)
        }
        SketchKind::BlockCoordinate(q) if q == n => (Matrix::identity(n, n), true),
        _ => {
            if mc_samples == 0 {
                return Err(Error::InvalidConfig(
                    "Monte-Carlo audit needs at least one sample".into(),
                ));
            }
            let mut acc = Matrix::zeros(n, n);
            for _ in 0..mc_samples {
                let s = dist.sample(rng).expect("sampled kind");
                acc += sketch_projection(k, &s);
            }
            (acc / mc_samples as f64, false)
        }
    };
    let mut sym = expected_projection.clone();
    crate::linalg::symmetrize(&mut sym);
    let gamma_s = crate::linalg::min_eigenvalue(&sym).min(1.0);
    let tol = if exact {
        1e-12
    } else {
        3.0 / (mc_samples as f64).sqrt()
    };
    let warning = (gamma_s <= tol).then(|| {
        format!("expected projection has least eigenvalue {gamma_s:e}; sketch does not contract")
    });
    Ok(ContractionAudit {
        gamma_s,
        rho: 1.0 - gamma_s,
        expected_projection: sym,
        exact,
        warning,
    })
}

/// Monte-Carlo error profile of `tau`-step solves from zero.
#[derive(Debug, Clone)]
pub struct ContractionProfile {
    pub tau: usize,
    /// Mean of `|z_tau - z_exact|^2`.
    pub mean_sq_error: f64,
    /// Mean of `z_tau - z_exact`.
    pub mean_error: Vector,
    /// `|z_exact|^2`.
    pub exact_norm_sq: f64,
}

pub fn contraction_profile<R: Rng + ?Sized>(
    k: &Matrix,
    rhs: &Vector,
    tau: usize,
    dist: &SketchDistribution,
    solves: usize,
    rng: &mut R,
) -> Result<ContractionProfile> {
    let exact = solve_exact(k, rhs)?;
    let mut mean_sq_error = 0.0;
    let mut mean_error = Vector::zeros(rhs.len());
    for _ in 0..solves {
        let z = solve_inexact(k, rhs, tau, dist, rng)?.solution;
        let e = z - &exact;
        mean_sq_error += e.norm_squared();
        mean_error += e;
    }
    let s = solves.max(1) as f64;
    Ok(ContractionProfile {
        tau,
        mean_sq_error: mean_sq_error / s,
        mean_error: mean_error / s,
        exact_norm_sq: exact.norm_squared(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::auxiliary_stream;

    fn arrow() -> Matrix {
        Matrix::from_row_slice(3, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0])
    }

    #[test]
    fn single_coordinate_step_by_hand() {
        let k = Matrix::from_diagonal(&Vector::from_vec(vec![2.0, 1.0]));
        let rhs = Vector::from_vec(vec![-4.0, -1.0]);
        let s = Matrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let z = sketch_project_step(&k, &rhs, &Vector::zeros(2), &s);
        assert!((z - Vector::from_vec(vec![-2.0, 0.0])).amax() < 1e-15);
        let fast = apply_sketch(&k, &rhs, &Vector::zeros(2), &Sketch::Columns(vec![0]));
        assert!((fast - Vector::from_vec(vec![-2.0, 0.0])).amax() < 1e-15);
    }

    #[test]
    fn full_sketch_is_exact() {
        let k = arrow();
        let rhs = Vector::from_vec(vec![0.0, 0.0, 2.0]);
        let z = sketch_project_step(&k, &rhs, &Vector::zeros(3), &Matrix::identity(3, 3));
        assert!((z - Vector::from_vec(vec![1.0, 1.0, -1.0])).amax() < 1e-12);
    }

    #[test]
    fn exact_point_is_fixed() {
        let k = arrow();
        let exact = Vector::from_vec(vec![1.0, 1.0, -1.0]);
        let rhs = &k * &exact;
        for i in 0..3 {
            let z = apply_sketch(&k, &rhs, &exact, &Sketch::Columns(vec![i]));
            assert!((z - &exact).amax() < 1e-15);
        }
    }

    #[test]
    fn exact_solver_on_arrow_and_identity() {
        let z = solve_exact(&arrow(), &Vector::from_vec(vec![0.0, 0.0, 2.0])).unwrap();
        assert!((z - Vector::from_vec(vec![1.0, 1.0, -1.0])).amax() < 1e-14);
        let rhs = Vector::from_vec(vec![3.0, -1.0]);
        assert_eq!(solve_exact(&Matrix::identity(2, 2), &rhs).unwrap(), rhs);
    }

    #[test]
    fn singular_matrix_is_reported() {
        let k = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(
            solve_exact(&k, &Vector::from_vec(vec![1.0, 0.0])),
            Err(Error::SingularKkt { .. })
        ));
    }

    #[test]
    fn identity_coordinate_audit() {
        let mut rng = auxiliary_stream(0, 0);
        let dist = SketchDistribution::new(SketchKind::Coordinate, 3).unwrap();
        let audit = contraction_audit(&Matrix::identity(3, 3), &dist, 0, &mut rng).unwrap();
        assert!((audit.gamma_s - 1.0 / 3.0).abs() < 1e-15);
        assert!((audit.rho - 2.0 / 3.0).abs() < 1e-15);
        assert!((audit.expected_projection - Matrix::identity(3, 3) / 3.0).amax() < 1e-15);
    }

    #[test]
    fn full_sketch_audit_has_zero_rho() {
        let mut rng = auxiliary_stream(0, 1);
        let dist = SketchDistribution::new(SketchKind::Gaussian(3), 3).unwrap();
        let audit = contraction_audit(&arrow(), &dist, 50, &mut rng).unwrap();
        assert!(audit.rho.abs() < 1e-10, "{}", audit.rho);
        let exact = SketchDistribution::new(SketchKind::Exact, 3).unwrap();
        assert_eq!(
            contraction_audit(&arrow(), &exact, 0, &mut rng)
                .unwrap()
                .rho,
            0.0
        );
    }

    #[test]
    fn exact_kind_ignores_tau() {
        let mut rng = auxiliary_stream(0, 2);
        let dist = SketchDistribution::new(SketchKind::Exact, 3).unwrap();
        let rhs = Vector::from_vec(vec![0.0, 0.0, 2.0]);
        let rep = solve_inexact(&arrow(), &rhs, 1, &dist, &mut rng).unwrap();
        assert!((rep.solution - Vector::from_vec(vec![1.0, 1.0, -1.0])).amax() < 1e-14);
    }

    #[test]
    fn sketch_kind_parsing() {
        assert_eq!(
            "kaczmarz".parse::<SketchKind>().unwrap(),
            SketchKind::Coordinate
        );
        assert_eq!(
            "block:2".parse::<SketchKind>().unwrap(),
            SketchKind::BlockCoordinate(2)
        );
        assert_eq!(
            "gaussian:3".parse::<SketchKind>().unwrap(),
            SketchKind::Gaussian(3)
        );
        assert_eq!("exact".parse::<SketchKind>().unwrap(), SketchKind::Exact);
        assert!("block:0".parse::<SketchKind>().is_err());
        assert!("sparse".parse::<SketchKind>().is_err());
        for k in [
            SketchKind::Coordinate,
            SketchKind::Gaussian(4),
            SketchKind::Exact,
        ] {
            assert_eq!(k.to_string().parse::<SketchKind>().unwrap(), k);
        }
    }

    #[test]
    fn block_sketch_draws_distinct_coordinates() {
        let mut rng = auxiliary_stream(3, 0);
        let dist = SketchDistribution::new(SketchKind::BlockCoordinate(3), 6).unwrap();
        for _ in 0..100 {
            match dist.sample(&mut rng).unwrap() {
                Sketch::Columns(idx) => {
                    assert_eq!(idx.len(), 3);
                    assert!(idx.windows(2).all(|w| w[0] < w[1]));
                }
                other => panic!("unexpected {other:?}"),
            }
        }
    }
}
