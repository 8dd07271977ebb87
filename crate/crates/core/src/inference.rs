//! Online covariance estimation, confidence intervals and normality checks.
//!
//! The estimator plugs the running sample covariance of the gradient draws
//! into `Omega_t = K_t^{-1} diag(Cov(g), 0) K_t^{-1}` and rescales it by the
//! stepsize limit constant. It does not depend on the sketch family.

use nalgebra::SymmetricEigen;
use rand::Rng;
use serde::Serialize;

use crate::linalg::{pad_block_diag, symmetrize};
use crate::problems::{NoiseModel, ProblemSpec};
use crate::sketch::{contraction_audit, sketch_projection, SketchDistribution, SketchKind};
use crate::solver::reference_kkt;
use crate::stepsize::Schedule;
use crate::{Error, Matrix, Result, Vector};

/// Minimum sample count for [`normality_diagnostics`].
pub const MIN_NORMALITY_SAMPLES: usize = 50;

/// Running first and second moments of the gradient samples.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceAccumulator {
    sum: Vector,
    sum_outer: Matrix,
    count: usize,
}

impl CovarianceAccumulator {
    pub fn new(d: usize) -> Self {
        Self {
            sum: Vector::zeros(d),
            sum_outer: Matrix::zeros(d, d),
            count: 0,
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn update(&mut self, g: &Vector) {
        self.sum += g;
        self.sum_outer.ger(1.0, g, g, 1.0);
        self.count += 1;
    }

    /// Combine with an accumulator over disjoint samples.
    pub fn merge(&mut self, other: &Self) {
        self.sum += &other.sum;
        self.sum_outer += &other.sum_outer;
        self.count += other.count;
    }

    pub fn mean(&self) -> Vector {
        &self.sum / self.count.max(1) as f64
    }

    /// Biased (`1/t`) sample covariance `M2/t - mean mean^T`.
    pub fn covariance(&self) -> Matrix {
        let n = self.count.max(1) as f64;
        let mean = self.mean();
        let mut cov = &self.sum_outer / n - &mean * mean.transpose();
        symmetrize(&mut cov);
        cov
    }
}

fn inverse(k: &Matrix) -> Result<Matrix> {
    k.clone()
        .try_inverse()
        .filter(|inv| inv.iter().all(|v| v.is_finite()))
        .ok_or(Error::SingularKkt { iteration: None })
}

/// `K^{-1} diag(cov, 0) K^{-1}`.
fn sandwich(k: &Matrix, cov: &Matrix) -> Result<Matrix> {
    let inv = inverse(k)?;
    let pad = k.nrows() - cov.nrows();
    let mut omega = &inv * pad_block_diag(cov, pad) * inv.transpose();
    symmetrize(&mut omega);
    Ok(omega)
}

fn stepsize_divisor(sched: &Schedule) -> Result<f64> {
    let divisor = 2.0 + sched.limit_ratio();
    if divisor <= 0.0 {
        return Err(Error::InvalidSchedule(format!(
            "2 + beta/beta_tilde = {divisor} is not positive"
        )));
    }
    Ok(divisor)
}

/// Plug-in estimate `Xi_t = Omega_t / (2 + beta/beta_tilde)`.
pub fn covariance_estimate(
    acc: &CovarianceAccumulator,
    k: &Matrix,
    sched: &Schedule,
) -> Result<Matrix> {
    if acc.count() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: acc.count(),
        });
    }
    let divisor = stepsize_divisor(sched)?;
    Ok(sandwich(k, &acc.covariance())? / divisor)
}

/// Limiting covariance of `(x_t - x*, lambda_t - lambda*) / sqrt(beta_t)`,
/// computed from the known solution and the exact noise covariance.
///
/// For exact solves this is `Omega* / (2 + beta/beta_tilde)`. For sketched
/// solves, with `I + C* = U diag(sigma) U^T` and `C* = -(I - E[P])^tau`, it is
/// `U (Theta o U^T E[(I + C~)Omega*(I + C~)^T] U) U^T` with
/// `Theta_kl = 1/(sigma_k + sigma_l + beta/beta_tilde)`; the expectation over
/// products of `tau` sketch projections is taken by Monte Carlo.
pub fn exact_covariance_oracle<R: Rng + ?Sized>(
    problem: &ProblemSpec,
    noise: &NoiseModel,
    sched: &Schedule,
    sketch: SketchKind,
    tau: usize,
    mc_samples: usize,
    rng: &mut R,
) -> Result<Matrix> {
    let k_star =
        reference_kkt(problem).ok_or_else(|| Error::OracleUnavailable(problem.name().into()))?;
    let omega = sandwich(&k_star, &noise.gradient_covariance())?;
    let ratio = sched.limit_ratio();
    let divisor = stepsize_divisor(sched)?;
    if sketch == SketchKind::Exact {
        return Ok(omega / divisor);
    }
    if mc_samples == 0 {
        return Err(Error::InvalidConfig(
            "sketched covariance oracle needs Monte-Carlo samples".into(),
        ));
    }
    let n = k_star.nrows();
    let dist = SketchDistribution::new(sketch, n)?;
    let audit = contraction_audit(&k_star, &dist, mc_samples, rng)?;
    let identity = Matrix::identity(n, n);
    let contraction = &identity - &audit.expected_projection;
    let mut c_star = -power(&contraction, tau);
    symmetrize(&mut c_star);
    let eig = SymmetricEigen::new(&identity + &c_star);
    let u = eig.eigenvectors;
    let sigma = eig.eigenvalues;

    let mut second_moment = Matrix::zeros(n, n);
    for _ in 0..mc_samples {
        let mut product = identity.clone();
        for _ in 0..tau {
            let s = dist.sample(rng).expect("sketched kind");
            product = (&identity - sketch_projection(&k_star, &s)) * product;
        }
        // I + C~ = I - prod(I - P_j)
        let lifted = &identity - product;
        second_moment += &lifted * &omega * lifted.transpose();
    }
    second_moment /= mc_samples as f64;

    let rotated = u.transpose() * &second_moment * &u;
    let scaled = Matrix::from_fn(n, n, |k, l| rotated[(k, l)] / (sigma[k] + sigma[l] + ratio));
    let mut xi = &u * scaled * u.transpose();
    symmetrize(&mut xi);
    Ok(xi)
}

fn power(m: &Matrix, exp: usize) -> Matrix {
    let mut out = Matrix::identity(m.nrows(), m.ncols());
    let mut base = m.clone();
    let mut e = exp;
    while e > 0 {
        if e & 1 == 1 {
            out = &out * &base;
        }
        base = &base * &base;
        e >>= 1;
    }
    out
}

/// Linear functional `w^T (x*, lambda*)` to cover at a given level.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceQuery {
    pub w: Vector,
    pub level: f64,
}

impl ConfidenceQuery {
    pub fn new(w: Vector, level: f64) -> Result<Self> {
        if w.iter().all(|&v| v == 0.0) {
            return Err(Error::InvalidConfig("direction w must be nonzero".into()));
        }
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "level must lie in (0, 1), got {level}"
            )));
        }
        Ok(Self { w, level })
    }

    /// `e_1 + e_{d+1}`: the first primal plus the first dual coordinate.
    pub fn first_pair(d: usize, m: usize, level: f64) -> Result<Self> {
        let mut w = Vector::zeros(d + m);
        w[0] = 1.0;
        w[d] = 1.0;
        Self::new(w, level)
    }

    /// Two-sided standard normal quantile `z_{(1+level)/2}`.
    pub fn z_quantile(&self) -> f64 {
        normal_quantile(0.5 * (1.0 + self.level))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// `w^T z_t +/- q * sqrt(c1 w^T Xi w) / t^(c2/2)` where `z_t` is the stacked
/// primal-dual iterate after `t` iterations.
pub fn confidence_interval(
    iterate: &Vector,
    xi: &Matrix,
    query: &ConfidenceQuery,
    t: usize,
    sched: &Schedule,
) -> Result<Interval> {
    if iterate.len() != query.w.len() {
        return Err(Error::DimensionMismatch {
            what: "confidence direction",
            expected: iterate.len(),
            got: query.w.len(),
        });
    }
    let variance = query.w.dot(&(xi * &query.w));
    if !(variance > 0.0) {
        return Err(Error::DegenerateDirection(variance));
    }
    let center = query.w.dot(iterate);
    let half =
        query.z_quantile() * (sched.c1 * variance).sqrt() / (t.max(1) as f64).powf(0.5 * sched.c2);
    Ok(Interval {
        lo: center - half,
        hi: center + half,
    })
}

/// Standard normal CDF through `erfc`.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile: rational initial guess refined by Halley steps.
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile level {p} outside (0, 1)");
    // Acklam's rational approximation
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.38357751867269e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    let p_low = 0.02425;
    let mut x = if p < p_low {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    for _ in 0..2 {
        let e = normal_cdf(x) - p;
        let u = e * (2.0 * std::f64::consts::PI).sqrt() * (0.5 * x * x).exp();
        x -= u / (1.0 + 0.5 * x * u);
    }
    x
}

/// Kolmogorov-Smirnov distance of the empirical CDF of `samples` to `N(0, 1)`.
pub fn ks_statistic(samples: &[f64]) -> f64 {
    let mut sorted: Vec<f64> = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let cdf = normal_cdf(x);
            (((i + 1) as f64 / n) - cdf).max(cdf - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

/// Result of [`normality_diagnostics`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormalityReport {
    pub ks_stat: f64,
    pub mean: f64,
    pub variance: f64,
    pub samples: usize,
    /// All samples equal; the KS statistic is reported as 1.
    pub degenerate: bool,
}

/// How samples are centred and scaled before the KS comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Standardization {
    /// Use the sample mean and standard deviation.
    Sample,
    /// Samples are already on the `N(0, 1)` scale.
    None,
}

pub fn normality_diagnostics(
    samples: &[f64],
    standardization: Standardization,
) -> Result<NormalityReport> {
    let n = samples.len();
    if n < MIN_NORMALITY_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: MIN_NORMALITY_SAMPLES,
            got: n,
        });
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let variance = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let degenerate = samples.iter().all(|&x| x == samples[0]);
    let ks_stat = if degenerate {
        1.0
    } else {
        match standardization {
            Standardization::None => ks_statistic(samples),
            Standardization::Sample => {
                let sd = variance.sqrt();
                let z: Vec<f64> = samples.iter().map(|x| (x - mean) / sd).collect();
                ks_statistic(&z)
            }
        }
    };
    Ok(NormalityReport {
        ks_stat,
        mean,
        variance,
        samples: n,
        degenerate,
    })
}
