//! Flat `key = value` experiment configuration.
//!
//! One assignment per line, `#` starts a comment. Every key has a default, so
//! a file only needs the keys it changes; command-line flags are applied on
//! top with [`ExperimentConfig::set`].

use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;

use crate::inference::ConfidenceQuery;
use crate::kkt::DEFAULT_PD_FLOOR;
use crate::sketch::SketchKind;
use crate::solver::RunConfig;
use crate::stepsize::{Schedule, StepPolicy};
use crate::{Error, Result, Vector};

/// How `normality` collects its samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NormalityMode {
    /// Post burn-in iterates of a single run.
    Within,
    /// Final standardized errors of independent runs.
    MonteCarlo,
}

impl FromStr for NormalityMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "within" => Ok(Self::Within),
            "mc" => Ok(Self::MonteCarlo),
            _ => Err(Error::InvalidConfig(format!(
                "unknown normality mode `{s}` (expected within or mc)"
            ))),
        }
    }
}

impl NormalityMode {
    fn as_str(&self) -> &'static str {
        match self {
            Self::Within => "within",
            Self::MonteCarlo => "mc",
        }
    }
}

/// Source of the KKT matrix audited by `sketch-audit`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AuditSource {
    /// `K*` of the configured problem (or `K` at the start point when no
    /// solution is known).
    Problem,
    /// A seeded random symmetric invertible matrix.
    Random(usize),
}

impl FromStr for AuditSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "problem" => Ok(Self::Problem),
            Some(("random", n)) => n
                .parse()
                .ok()
                .filter(|&n: &usize| n > 0)
                .map(Self::Random)
                .ok_or_else(|| Error::InvalidConfig(format!("invalid random audit size `{n}`"))),
            _ => Err(Error::InvalidConfig(format!(
                "unknown audit source `{s}` (expected problem or random:n)"
            ))),
        }
    }
}

impl AuditSource {
    fn render(&self) -> String {
        match self {
            Self::Problem => "problem".into(),
            Self::Random(n) => format!("random:{n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem: String,
    pub sigma2: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub tau: usize,
    pub sketch: SketchKind,
    pub policy: StepPolicy,
    pub iters: usize,
    pub stride: usize,
    pub seed: u64,
    pub runs: usize,
    pub burnin: f64,
    pub level: f64,
    /// Sparse direction `index:value`; `None` means `e_1 + e_{d+1}`.
    pub w: Option<Vec<(usize, f64)>>,
    pub pd_floor: f64,
    pub normality_mode: NormalityMode,
    pub epsilons: Vec<f64>,
    pub audit_taus: Vec<usize>,
    pub audit_source: AuditSource,
    pub mc_samples: usize,
    /// First iteration of the log-log slope fit in `complexity`.
    pub slope_from: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            problem: "eq_quadratic".into(),
            sigma2: 1e-2,
            c1: 2.0,
            c2: 0.6,
            c3: 2.0,
            tau: 50,
            sketch: SketchKind::Coordinate,
            policy: StepPolicy::UniformRandom,
            iters: 10_000,
            stride: 10,
            seed: 0,
            runs: 200,
            burnin: 0.5,
            level: 0.95,
            w: None,
            pd_floor: DEFAULT_PD_FLOOR,
            normality_mode: NormalityMode::MonteCarlo,
            epsilons: vec![1e-1, 5e-2, 2e-2],
            audit_taus: vec![1, 5, 20, 50],
            audit_source: AuditSource::Problem,
            mc_samples: 2000,
            slope_from: 100,
        }
    }
}

pub const KEYS: [&str; 23] = [
    "problem",
    "sigma2",
    "c1",
    "c2",
    "c3",
    "tau",
    "sketch",
    "policy",
    "iters",
    "stride",
    "seed",
    "runs",
    "burnin",
    "level",
    "w",
    "pd_floor",
    "normality_mode",
    "epsilons",
    "audit_taus",
    "audit_source",
    "mc_samples",
    "slope_from",
    "preset",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("invalid value `{value}` for `{key}`")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

/// `index:value,index:value` (0-based indices into the stacked `(x, lambda)`).
pub fn parse_direction(value: &str) -> Result<Option<Vec<(usize, f64)>>> {
    if value == "default" {
        return Ok(None);
    }
    let entries = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|entry| {
            let (i, v) = entry.split_once(':').ok_or_else(|| {
                Error::InvalidConfig(format!("direction entry `{entry}` is not index:value"))
            })?;
            Ok((parse("w", i.trim())?, parse("w", v.trim())?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Some(entries))
}

fn join<T: ToString>(items: &[T]) -> String {
    items
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

impl ExperimentConfig {
    /// Full-scale settings: `10^5` iterations with 50 Kaczmarz steps each,
    /// `beta_t = 2/t^0.5`, `chi_t = beta_t^2`.
    pub fn full_scale_preset() -> Self {
        Self {
            c1: 2.0,
            c2: 0.5,
            c3: 2.0,
            tau: 50,
            sketch: SketchKind::Coordinate,
            policy: StepPolicy::UniformRandom,
            iters: 100_000,
            stride: 100,
            ..Self::default()
        }
    }

    /// Set one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "problem" => self.problem = value.to_string(),
            "sigma2" => self.sigma2 = parse(key, value)?,
            "c1" => self.c1 = parse(key, value)?,
            "c2" => self.c2 = parse(key, value)?,
            "c3" => self.c3 = parse(key, value)?,
            "tau" => self.tau = parse(key, value)?,
            "sketch" => self.sketch = value.parse()?,
            "policy" => self.policy = value.parse()?,
            "iters" => self.iters = parse(key, value)?,
            "stride" => self.stride = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "runs" => self.runs = parse(key, value)?,
            "burnin" => self.burnin = parse(key, value)?,
            "level" => self.level = parse(key, value)?,
            "w" => self.w = parse_direction(value)?,
            "pd_floor" => self.pd_floor = parse(key, value)?,
            "normality_mode" => self.normality_mode = value.parse()?,
            "epsilons" => self.epsilons = parse_list(key, value)?,
            "audit_taus" => self.audit_taus = parse_list(key, value)?,
            "audit_source" => self.audit_source = value.parse()?,
            "mc_samples" => self.mc_samples = parse(key, value)?,
            "slope_from" => self.slope_from = parse(key, value)?,
            "preset" => match value {
                "paper" => *self = Self::full_scale_preset(),
                "desk" => *self = Self::default(),
                _ => return Err(Error::InvalidConfig(format!("unknown preset `{value}`"))),
            },
            _ => {
                return Err(Error::InvalidConfig(format!(
                    "unknown key `{key}`; known keys: {}",
                    KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Parse a configuration file on top of the defaults.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut config = Self::default();
        config.apply_str(text)?;
        Ok(config)
    }

    /// Apply the assignments of a configuration file in order.
    pub fn apply_str(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            self.set(key.trim(), value)
                .map_err(|e| Error::InvalidConfig(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    /// Every key, one per line, in a fixed order.
    pub fn to_config_string(&self) -> String {
        let w = match &self.w {
            None => "default".to_string(),
            Some(entries) => entries
                .iter()
                .map(|(i, v)| format!("{i}:{v}"))
                .collect::<Vec<_>>()
                .join(","),
        };
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("problem", self.problem.clone());
        put("sigma2", self.sigma2.to_string());
        put("c1", self.c1.to_string());
        put("c2", self.c2.to_string());
        put("c3", self.c3.to_string());
        put("tau", self.tau.to_string());
        put("sketch", self.sketch.to_string());
        put("policy", self.policy.to_string());
        put("iters", self.iters.to_string());
        put("stride", self.stride.to_string());
        put("seed", self.seed.to_string());
        put("runs", self.runs.to_string());
        put("burnin", self.burnin.to_string());
        put("level", self.level.to_string());
        put("w", w);
        put("pd_floor", self.pd_floor.to_string());
        put("normality_mode", self.normality_mode.as_str().to_string());
        put("epsilons", join(&self.epsilons));
        put("audit_taus", join(&self.audit_taus));
        put("audit_source", self.audit_source.render());
        put("mc_samples", self.mc_samples.to_string());
        put("slope_from", self.slope_from.to_string());
        out
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, ok: bool| {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("`{name}` must be positive")))
            }
        };
        positive("sigma2", self.sigma2 >= 0.0 && self.sigma2.is_finite())?;
        positive("tau", self.tau > 0)?;
        positive("iters", self.iters > 0)?;
        positive("stride", self.stride > 0)?;
        positive("runs", self.runs > 0)?;
        positive("pd_floor", self.pd_floor > 0.0)?;
        if !(0.0..1.0).contains(&self.burnin) {
            return Err(Error::InvalidConfig("`burnin` must lie in [0, 1)".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidConfig("`level` must lie in (0, 1)".into()));
        }
        self.schedule().map(|_| ())
    }

    pub fn schedule(&self) -> Result<Schedule> {
        Schedule::new(self.c1, self.c2, self.c3)
    }

    pub fn run_config(&self) -> Result<RunConfig> {
        self.validate()?;
        Ok(RunConfig {
            schedule: self.schedule()?,
            policy: self.policy,
            sketch: self.sketch,
            tau: self.tau,
            pd_floor: self.pd_floor,
            sigma2: self.sigma2,
            iterations: self.iters,
            stride: self.stride,
            seed: self.seed,
            merit: None,
        })
    }

    /// The inference direction for a problem with `d` primal and `m` dual
    /// variables.
    pub fn query(&self, d: usize, m: usize) -> Result<ConfidenceQuery> {
        match &self.w {
            None => ConfidenceQuery::first_pair(d, m, self.level),
            Some(entries) => {
                let mut w = Vector::zeros(d + m);
                for &(i, v) in entries {
                    if i >= d + m {
                        return Err(Error::InvalidConfig(format!(
                            "direction index {i} out of range for dimension {}",
                            d + m
                        )));
                    }
                    w[i] = v;
                }
                ConfidenceQuery::new(w, self.level)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_with_comments_and_overrides() {
        let text = "# experiment\nproblem = hs7  # inline\nsigma2 = 1e-4\n\nsketch = block:2\nw = 0:1,3:-0.5\n";
        let c = ExperimentConfig::parse_str(text).unwrap();
        assert_eq!(c.problem, "hs7");
        assert_eq!(c.sigma2, 1e-4);
        assert_eq!(c.sketch, SketchKind::BlockCoordinate(2));
        assert_eq!(c.w, Some(vec![(0, 1.0), (3, -0.5)]));
        assert_eq!(c.iters, ExperimentConfig::default().iters);
    }

    #[test]
    fn unknown_key_is_an_error() {
        let err = ExperimentConfig::parse_str("gamma = 3").unwrap_err();
        assert!(err.to_string().contains("unknown key `gamma`"));
        assert!(ExperimentConfig::parse_str("just text").is_err());
    }

    #[test]
    fn full_scale_preset_values() {
        let mut c = ExperimentConfig::default();
        c.set("preset", "paper").unwrap();
        assert_eq!(
            (c.iters, c.tau, c.c1, c.c2, c.c3),
            (100_000, 50, 2.0, 0.5, 2.0)
        );
    }

    #[test]
    fn direction_bounds() {
        let mut c = ExperimentConfig::default();
        c.set("w", "7:1").unwrap();
        assert!(c.query(2, 1).is_err());
        c.set("w", "default").unwrap();
        assert_eq!(c.query(2, 1).unwrap().w.as_slice(), &[1.0, 0.0, 1.0]);
    }
}
