//! JSON experiment configuration and dry-run validation.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};

use crate::casestudies::{emps, linear, oscillator, vehicle, BasisHyper};
use crate::error::{Error, Result};
use crate::offline::AncestorBase;
use crate::online::Resampler;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Online,
    Offline,
}

/// A registered case study and its parameters (`null` takes the defaults).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseStudyRef {
    pub name: String,
    #[serde(default)]
    pub params: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CaseStudy {
    Oscillator(oscillator::OscillatorConfig),
    Vehicle(vehicle::VehicleConfig),
    Emps(emps::EmpsConfig),
    LinearGaussian(linear::LinearConfig),
}

/// Name and one-line description of every registered case study.
pub const REGISTRY: &[(&str, &str)] = &[
    ("oscillator", "mass with a nonlinear spring and damper; learns F_sd(s, s_dot)"),
    ("vehicle", "single-track vehicle; learns front and rear tire friction over slip angle"),
    ("emps", "electro-mechanical positioning system; learns friction over velocity (synthetic or CSV)"),
    ("linear-gaussian", "scalar linear system; learns the linear term b x"),
];

impl CaseStudy {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Oscillator(_) => "oscillator",
            Self::Vehicle(_) => "vehicle",
            Self::Emps(_) => "emps",
            Self::LinearGaussian(_) => "linear-gaussian",
        }
    }

    pub fn default_hyper(&self) -> BasisHyper {
        match self {
            Self::Oscillator(_) => oscillator::default_hyper(),
            Self::Vehicle(_) => vehicle::default_hyper(),
            Self::Emps(_) => emps::default_hyper(),
            Self::LinearGaussian(_) => linear::default_hyper(),
        }
    }

    /// Dimension of the learned function's input.
    pub fn input_dims(&self) -> usize {
        match self {
            Self::Oscillator(_) => 2,
            _ => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Oscillator(c) => c.validate(),
            Self::Vehicle(c) => c.validate(),
            Self::Emps(c) => c.validate(),
            Self::LinearGaussian(c) => c.validate(),
        }
    }

    fn params_json(&self) -> serde_json::Value {
        match self {
            Self::Oscillator(c) => serde_json::to_value(c),
            Self::Vehicle(c) => serde_json::to_value(c),
            Self::Emps(c) => serde_json::to_value(c),
            Self::LinearGaussian(c) => serde_json::to_value(c),
        }
        .expect("case configs serialize")
    }
}

impl CaseStudyRef {
    pub fn resolve(&self) -> Result<CaseStudy> {
        fn parse<T: serde::de::DeserializeOwned + Default>(v: &serde_json::Value) -> Result<T> {
            if v.is_null() {
                return Ok(T::default());
            }
            Ok(serde_json::from_value(v.clone())?)
        }
        Ok(match self.name.as_str() {
            "oscillator" => CaseStudy::Oscillator(parse(&self.params)?),
            "vehicle" => CaseStudy::Vehicle(parse(&self.params)?),
            "emps" => CaseStudy::Emps(parse(&self.params)?),
            "linear-gaussian" => CaseStudy::LinearGaussian(parse(&self.params)?),
            other => {
                let names: Vec<_> = REGISTRY.iter().map(|(n, _)| *n).collect();
                return Err(Error::Config(format!("unknown case study {other:?}; known: {}", names.join(", "))));
            }
        })
    }
}

fn default_particles() -> usize {
    200
}
fn default_iterations() -> usize {
    800
}
fn default_gamma() -> f64 {
    0.999
}
fn default_grid_points() -> usize {
    crate::eval::DEFAULT_POINTS_PER_DIM
}
fn default_eval_every() -> usize {
    25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub case_study: CaseStudyRef,
    #[serde(default = "default_particles")]
    pub particles: usize,
    /// Conditional sweeps `K` (offline only).
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    /// Sweeps discarded before averaging; `None` is a quarter of `iterations`.
    #[serde(default)]
    pub burn_in: Option<usize>,
    /// Forgetting factor of the online filter.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub resampler: Resampler,
    #[serde(default)]
    pub ancestor_base: AncestorBase,
    /// Basis and prior hyperparameters; `None` takes the case-study defaults.
    #[serde(default)]
    pub basis: Option<BasisHyper>,
    /// Grid points per input dimension for the learned functions.
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    /// Error metrics every this many time steps (online) or sweeps (offline).
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in.unwrap_or(self.iterations / 4)
    }

    /// Fill every defaulted field so the result documents the full run.
    pub fn resolved(&self) -> Result<Self> {
        let case = self.case_study.resolve()?;
        let mut out = self.clone();
        out.case_study.params = case.params_json();
        out.basis = Some(self.basis.clone().unwrap_or_else(|| case.default_hyper()));
        out.burn_in = Some(self.burn_in());
        Ok(out)
    }
}

/// One failed check, addressed by its path in the JSON document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, path: &str, message: impl Into<String>) {
        self.violations.push(Violation {
            path: path.into(),
            message: message.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Check everything that can be checked without running inference, including
/// building the model and prior.
pub fn validate(cfg: &ExperimentConfig) -> ValidationReport {
    let mut r = ValidationReport::default();
    if cfg.particles < 2 {
        r.push("particles", format!("{} particles; at least 2 are required", cfg.particles));
    }
    if !(cfg.gamma > 0.0 && cfg.gamma <= 1.0) {
        r.push("gamma", format!("forgetting factor {} is outside (0, 1]", cfg.gamma));
    }
    if cfg.mode == Mode::Offline {
        if cfg.iterations == 0 {
            r.push("iterations", "at least one sweep is required");
        } else if cfg.burn_in() >= cfg.iterations {
            r.push("burn_in", format!("burn-in {} leaves no sweeps out of {}", cfg.burn_in(), cfg.iterations));
        }
    }
    if cfg.grid_points == 0 {
        r.push("grid_points", "at least one grid point per dimension is required");
    }
    if cfg.eval_every == 0 {
        r.push("eval_every", "must be at least 1");
    }
    let case = match cfg.case_study.resolve() {
        Ok(c) => c,
        Err(e) => {
            let path = if matches!(e, Error::Json(_)) { "case_study.params" } else { "case_study.name" };
            r.push(path, e.to_string());
            return r;
        }
    };
    if let Err(e) = case.validate() {
        r.push("case_study.params", e.to_string());
    }
    let hyper = cfg.basis.clone().unwrap_or_else(|| case.default_hyper());
    if let Err(e) = hyper.validate() {
        r.push("basis", e.to_string());
    } else if hyper.half_lengths.len() != case.input_dims() {
        r.push(
            "basis.half_lengths",
            format!("{} expects {} input dimensions, found {}", case.name(), case.input_dims(), hyper.half_lengths.len()),
        );
    } else if let Err(e) = hyper.basis() {
        r.push("basis", e.to_string());
    }
    if let CaseStudy::Emps(c) = &case {
        for (path, file) in [("case_study.params.train_csv", &c.train_csv), ("case_study.params.test_csv", &c.test_csv)] {
            if let Some(f) = file {
                if !f.is_file() {
                    r.push(path, format!("{} does not exist", f.display()));
                }
            }
        }
        if c.test_csv.is_some() && cfg.mode == Mode::Online {
            r.push("case_study.params.test_csv", "forward simulation is only available offline");
        }
    }
    if r.is_ok() {
        if let Err(e) = super::build_problem(&case, &hyper, cfg.seed) {
            r.push("case_study", e.to_string());
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> ExperimentConfig {
        ExperimentConfig::from_json(r#"{"mode": "online", "case_study": {"name": "linear-gaussian"}}"#).unwrap()
    }

    #[test]
    fn default_config_is_valid() {
        assert!(validate(&base()).is_ok(), "{}", validate(&base()));
    }

    #[test]
    fn violations_carry_paths() {
        let mut c = base();
        c.particles = 1;
        c.gamma = 1.5;
        let r = validate(&c);
        let paths: Vec<_> = r.violations.iter().map(|v| v.path.as_str()).collect();
        assert_eq!(paths, vec!["particles", "gamma"]);
    }

    #[test]
    fn unknown_names_and_fields() {
        let mut c = base();
        c.case_study.name = "pendulum".into();
        assert_eq!(validate(&c).violations[0].path, "case_study.name");
        c.case_study = CaseStudyRef {
            name: "oscillator".into(),
            params: serde_json::json!({"mass": 3.0}),
        };
        assert_eq!(validate(&c).violations[0].path, "case_study.params");
        assert!(ExperimentConfig::from_json(r#"{"mode": "online", "case_study": {"name": "emps"}, "partcles": 3}"#).is_err());
    }
}
