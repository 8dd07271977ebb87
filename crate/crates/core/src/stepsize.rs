//! Deterministic stepsize envelopes and random stepsizes inside them.
//!
//! With `beta_t = c1 / t^c2` and `chi_t = beta_t^c3`, the stepsize of
//! iteration `t` must satisfy `beta_t <= alpha_t <= eta_t = beta_t + chi_t`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::Serialize;

use crate::{Error, Result};

/// Polynomial stepsize schedule `beta_t = c1 / t^c2`, `chi_t = beta_t^c3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub c1: f64,
    pub c2: f64,
    /// `f64::INFINITY` turns the gap off (`chi_t = 0`).
    pub c3: f64,
}

/// Envelope values at one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Envelope {
    pub beta: f64,
    pub chi: f64,
    pub eta: f64,
    /// `beta + chi / 2`, the midpoint of the envelope.
    pub phi: f64,
}

impl Schedule {
    pub fn new(c1: f64, c2: f64, c3: f64) -> Result<Self> {
        if !(c1 > 0.0 && c1.is_finite()) {
            return Err(Error::InvalidSchedule(format!(
                "c1 must be positive, got {c1}"
            )));
        }
        if !(c2 > 0.0 && c2 <= 1.0) {
            return Err(Error::InvalidSchedule(format!(
                "c2 must lie in (0, 1], got {c2}"
            )));
        }
        if !(c3 > 0.0) {
            return Err(Error::InvalidSchedule(format!(
                "c3 must be positive, got {c3}"
            )));
        }
        Ok(Self { c1, c2, c3 })
    }

    /// `lim t (1 - beta_{t-1}/beta_t) = -c2`.
    pub fn beta_lim(&self) -> f64 {
        -self.c2
    }

    /// `lim t beta_t`: `c1` when `c2 = 1`, infinite otherwise.
    pub fn beta_tilde(&self) -> f64 {
        if self.c2 == 1.0 {
            self.c1
        } else {
            f64::INFINITY
        }
    }

    /// `lim t (1 - chi_{t-1}/chi_t) = -c2 c3`.
    pub fn chi_lim(&self) -> f64 {
        -self.c2 * self.c3
    }

    /// `beta_lim / beta_tilde`, zero when `beta_tilde` is infinite.
    pub fn limit_ratio(&self) -> f64 {
        let tilde = self.beta_tilde();
        if tilde.is_infinite() {
            0.0
        } else {
            self.beta_lim() / tilde
        }
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.c1 / (t.max(1) as f64).powf(self.c2)
    }

    /// Envelope at iteration `t`; `t = 0` uses the `t = 1` values.
    pub fn envelope(&self, t: usize) -> Envelope {
        let beta = self.beta(t);
        let chi = if self.c3.is_infinite() {
            0.0
        } else {
            beta.powf(self.c3)
        };
        Envelope {
            beta,
            chi,
            eta: beta + chi,
            phi: beta + 0.5 * chi,
        }
    }
}

/// How the stepsize is picked inside `[beta_t, eta_t]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StepPolicy {
    UniformRandom,
    DeterministicLower,
    DeterministicMidpoint,
}

impl StepPolicy {
    pub fn draw<R: Rng + ?Sized>(&self, beta: f64, eta: f64, rng: &mut R) -> f64 {
        debug_assert!(beta > 0.0 && beta <= eta);
        match self {
            StepPolicy::DeterministicLower => beta,
            StepPolicy::DeterministicMidpoint => 0.5 * (beta + eta),
            StepPolicy::UniformRandom => {
                let u: f64 = rng.random();
                (beta + u * (eta - beta)).clamp(beta, eta)
            }
        }
    }
}

impl fmt::Display for StepPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StepPolicy::UniformRandom => "uniform",
            StepPolicy::DeterministicLower => "lower",
            StepPolicy::DeterministicMidpoint => "midpoint",
        })
    }
}

impl FromStr for StepPolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(StepPolicy::UniformRandom),
            "lower" => Ok(StepPolicy::DeterministicLower),
            "midpoint" => Ok(StepPolicy::DeterministicMidpoint),
            _ => Err(Error::InvalidConfig(format!(
                "unknown step policy `{s}` (expected uniform, lower or midpoint)"
            ))),
        }
    }
}

/// Which groups of convergence conditions a polynomial schedule meets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RegimeReport {
    /// Almost-sure convergence of the KKT residual.
    pub global: bool,
    /// Local rate `O(sqrt(beta_t log(1/beta_t)))`.
    pub rate: bool,
    /// Asymptotic normality.
    pub normality: bool,
}

/// Check the parameter regimes for `beta_t = c1/t^c2`, `chi_t = beta_t^c3`.
///
/// `rho` is the per-step sketch contraction factor and `omega` the decay
/// exponent of the regularization bound; `None` means the regularization
/// vanishes after finitely many iterations.
pub fn validate_schedule(
    sched: &Schedule,
    rho: f64,
    tau: usize,
    omega: Option<f64>,
) -> RegimeReport {
    let Schedule { c1, c2, c3 } = *sched;
    let contraction = 1.0 - rho.powi(tau as i32);
    let omega = omega.unwrap_or(0.0);
    let interior = c2 > 0.5 && c2 < 1.0;
    let unit = c2 == 1.0;

    let global = c1 > 0.0 && c2 > 0.5 && c2 <= 1.0 && c3 > 1.0 / c2;
    let rate = (unit && c3 > 1.0 && c1 > 1f64.max(c3 - 0.5) / contraction)
        || (interior && c1 > 0.0 && c3 > 1.0 / c2);
    let normality = (unit && c3 > 1.5 && c1 > (0.5 - omega).max(c3 - 0.5) / contraction)
        || (interior && c1 > 0.0 && c3 > 1.5f64.max(1.0 / c2));
    RegimeReport {
        global,
        rate,
        normality,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::auxiliary_stream;

    #[test]
    fn envelope_values() {
        let s = Schedule::new(2.0, 0.5, 2.0).unwrap();
        let e = s.envelope(100);
        assert!((e.beta - 0.2).abs() < 1e-15);
        assert!((e.chi - 0.04).abs() < 1e-15);
        assert!((e.eta - 0.24).abs() < 1e-15);
        assert!((e.phi - 0.22).abs() < 1e-15);

        let s = Schedule::new(2.0, 0.6, 2.0).unwrap();
        let e = s.envelope(1);
        assert_eq!((e.beta, e.chi, e.eta), (2.0, 4.0, 6.0));
        assert_eq!(s.envelope(0), e);
    }

    #[test]
    fn chi_is_power_of_beta() {
        let s = Schedule::new(1.3, 0.8, 2.7).unwrap();
        for t in [1, 7, 1000] {
            let e = s.envelope(t);
            assert_eq!(e.chi, e.beta.powf(2.7));
        }
    }

    #[test]
    fn limit_constants() {
        let s = Schedule::new(2.0, 1.0, 2.0).unwrap();
        assert_eq!(s.beta_tilde(), 2.0);
        assert_eq!(s.limit_ratio(), -0.5);
        let s = Schedule::new(2.0, 0.7, 2.0).unwrap();
        assert!(s.beta_tilde().is_infinite());
        assert_eq!(s.limit_ratio(), 0.0);
        assert!((s.chi_lim() + 1.4).abs() < 1e-15);
    }

    #[test]
    fn bad_parameters_are_rejected() {
        assert!(Schedule::new(0.0, 0.5, 2.0).is_err());
        assert!(Schedule::new(1.0, 1.5, 2.0).is_err());
        assert!(Schedule::new(1.0, 0.5, 0.0).is_err());
    }

    #[test]
    fn policies_stay_in_envelope() {
        let mut rng = auxiliary_stream(1, 0);
        assert_eq!(
            StepPolicy::DeterministicLower.draw(0.2, 0.24, &mut rng),
            0.2
        );
        assert!((StepPolicy::DeterministicMidpoint.draw(0.2, 0.24, &mut rng) - 0.22).abs() < 1e-15);
        for _ in 0..1000 {
            let a = StepPolicy::UniformRandom.draw(0.2, 0.24, &mut rng);
            assert!((0.2..=0.24).contains(&a));
        }
        for p in [
            StepPolicy::UniformRandom,
            StepPolicy::DeterministicLower,
            StepPolicy::DeterministicMidpoint,
        ] {
            assert_eq!(p.draw(0.3, 0.3, &mut rng), 0.3);
        }
    }

    #[test]
    fn uniform_mean_is_midpoint() {
        let mut rng = auxiliary_stream(1, 1);
        let (beta, eta) = (0.2, 0.24);
        let n = 100_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| StepPolicy::UniformRandom.draw(beta, eta, &mut rng))
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        // sd of U[a,b] is (b-a)/sqrt(12)
        let se = (eta - beta) / 12f64.sqrt() / (n as f64).sqrt();
        assert!((mean - 0.22).abs() < 4.0 * se);
    }

    #[test]
    fn regimes() {
        let r = validate_schedule(&Schedule::new(2.0, 0.7, 2.0).unwrap(), 0.9, 50, None);
        assert!(r.global && r.rate && r.normality);
        let r = validate_schedule(&Schedule::new(2.0, 0.5, 2.0).unwrap(), 0.9, 50, None);
        assert!(!r.global);
        let r = validate_schedule(&Schedule::new(10.0, 1.0, 2.0).unwrap(), 0.0, 50, None);
        assert!(r.rate);
        let r = validate_schedule(&Schedule::new(1.2, 1.0, 2.0).unwrap(), 0.0, 50, None);
        assert!(!r.rate);
    }

    #[test]
    fn policy_round_trip() {
        for p in [
            StepPolicy::UniformRandom,
            StepPolicy::DeterministicLower,
            StepPolicy::DeterministicMidpoint,
        ] {
            assert_eq!(p.to_string().parse::<StepPolicy>().unwrap(), p);
        }
    }
}
