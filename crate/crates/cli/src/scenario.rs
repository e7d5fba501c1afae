use std::collections::BTreeMap;
use std::path::Path;

use barrier_core::integrator::IntegratorOptions;
use barrier_core::model::{builtin, SystemDefinition};
use barrier_core::tangency::TangencyOptions;
use barrier_core::verify::ProbeOptions;
use serde::Deserialize;

use crate::Failure;

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum SystemSpec {
    Builtin(String),
    Inline(InlineSystem),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineSystem {
    pub name: String,
    pub n: usize,
    pub m: usize,
    pub f: Vec<String>,
    #[serde(default)]
    pub g: Vec<String>,
    #[serde(default)]
    pub gamma: Vec<String>,
    #[serde(default)]
    pub control_box: Option<Vec<(f64, f64)>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Artifact {
    Endpoints,
    BarrierCsv,
    Verify,
    Svg,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    #[serde(default = "default_offsets")]
    pub offsets: Vec<f64>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_probe_horizon")]
    pub horizon: f64,
    #[serde(default = "default_budget")]
    pub budget: usize,
}

fn default_offsets() -> Vec<f64> {
    vec![-1e-3, 1e-3]
}
fn default_samples() -> usize {
    20
}
fn default_probe_horizon() -> f64 {
    15.0
}
fn default_budget() -> usize {
    2000
}

impl Default for VerifySpec {
    fn default() -> Self {
        VerifySpec {
            offsets: default_offsets(),
            samples: default_samples(),
            horizon: default_probe_horizon(),
            budget: default_budget(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub system: SystemSpec,
    pub seed_box: SeedBox,
    pub horizon: f64,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    pub growth_constant: Option<f64>,
    pub outputs: Option<Vec<Artifact>>,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default)]
    pub verify: VerifySpec,
}

/// Everything the pipeline needs, with overrides applied.
pub struct Settings {
    pub tangency: TangencyOptions,
    pub integrator: IntegratorOptions,
    pub probe: ProbeOptions,
    pub h_residual_tol: f64,
    pub feasibility_tol: f64,
    pub drift_tol: f64,
}

pub const TOLERANCE_KEYS: &[&str] = &[
    "tangency_tol",
    "tie_tol",
    "classify_tol",
    "rtol",
    "atol",
    "max_step",
    "min_step",
    "initial_step",
    "event_tol",
    "h_drift_tol",
    "reentry_tol",
    "lambda_tol",
    "oracle_tol",
    "dt",
    "asymmetry_threshold",
    "h_residual_tol",
    "feasibility_tol",
    "drift_tol",
];

impl Settings {
    pub fn new(rng_seed: u64, growth_constant: Option<f64>) -> Self {
        let mut s = Settings {
            tangency: TangencyOptions::default(),
            integrator: IntegratorOptions { growth_constant, ..IntegratorOptions::default() },
            probe: ProbeOptions::default(),
            h_residual_tol: 1e-6,
            feasibility_tol: 1e-6,
            drift_tol: 1e-6,
        };
        s.tangency.minmax.rng_seed = rng_seed;
        s.tangency.hamiltonian.rng_seed = rng_seed;
        s.integrator.minmax.rng_seed = rng_seed;
        s.integrator.hamiltonian.rng_seed = rng_seed;
        s.probe.oracle.rng_seed = rng_seed;
        s.probe.oracle.minmax.rng_seed = rng_seed;
        s
    }

    pub fn set(&mut self, key: &str, value: f64) -> Result<(), Failure> {
        if !value.is_finite() || value < 0.0 {
            return Err(Failure::Parse(format!("tolerance {key} must be finite and non-negative, got {value}")));
        }
        match key {
            "tangency_tol" => self.tangency.tangency_tol = value,
            "tie_tol" => self.tangency.tie_tol = value,
            "classify_tol" => {
                self.tangency.classify_tol = value;
                self.probe.classify_tol = value;
            }
            "rtol" => self.integrator.rtol = value,
            "atol" => self.integrator.atol = value,
            "max_step" => self.integrator.max_step = value,
            "min_step" => self.integrator.min_step = value,
            "initial_step" => self.integrator.initial_step = value,
            "event_tol" => self.integrator.event_tol = value,
            "h_drift_tol" => self.integrator.h_drift_tol = value,
            "reentry_tol" => self.integrator.reentry_tol = value,
            "lambda_tol" => self.integrator.lambda_tol = value,
            "oracle_tol" => self.probe.oracle.oracle_tol = value,
            "dt" => self.probe.oracle.dt = value,
            "asymmetry_threshold" => self.probe.asymmetry_threshold = value,
            "h_residual_tol" => self.h_residual_tol = value,
            "feasibility_tol" => self.feasibility_tol = value,
            "drift_tol" => self.drift_tol = value,
            _ => {
                return Err(Failure::Parse(format!(
                    "unknown tolerance {key}; expected one of {}",
                    TOLERANCE_KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }
}

pub fn parse_override(s: &str) -> Result<(String, f64), Failure> {
    let (k, v) = s.split_once('=').ok_or_else(|| Failure::Parse(format!("expected KEY=VAL, got {s:?}")))?;
    let v: f64 = v.trim().parse().map_err(|_| Failure::Parse(format!("bad value in {s:?}")))?;
    Ok((k.trim().to_string(), v))
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Scenario, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::Parse(format!("{}: {e}", path.display())))?;
        let sc: Scenario =
            serde_json::from_str(&text).map_err(|e| Failure::Parse(format!("{}: {e}", path.display())))?;
        Ok(sc)
    }

    /// Builds the system and checks the scenario against it.
    pub fn system(&self) -> Result<SystemDefinition, Failure> {
        let sys = match &self.system {
            SystemSpec::Builtin(name) => {
                builtin(name).ok_or_else(|| Failure::Parse(format!("unknown built-in system {name:?}")))?
            }
            SystemSpec::Inline(s) => {
                fn refs(v: &[String]) -> Vec<&str> {
                    v.iter().map(String::as_str).collect()
                }
                SystemDefinition::from_strings(
                    &s.name,
                    s.n,
                    s.m,
                    &refs(&s.f),
                    &refs(&s.g),
                    &refs(&s.gamma),
                    s.control_box.as_deref(),
                )
                .map_err(|e| Failure::Parse(format!("system: {e}")))?
            }
        };
        let n = sys.n();
        let b = &self.seed_box;
        if b.lower.len() != n || b.upper.len() != n || b.counts.len() != n {
            return Err(Failure::Parse(format!("seed_box must have {n} entries per field")));
        }
        if b.counts.contains(&0) {
            return Err(Failure::Parse("seed_box counts must be at least 1".into()));
        }
        if b.lower.iter().zip(&b.upper).any(|(lo, hi)| !(lo <= hi)) {
            return Err(Failure::Parse("seed_box lower must not exceed upper".into()));
        }
        if !self.horizon.is_finite() || self.horizon < 0.0 {
            return Err(Failure::Parse(format!("horizon must be finite and non-negative, got {}", self.horizon)));
        }
        if let Some(c) = self.growth_constant {
            if !c.is_finite() || c <= 0.0 {
                return Err(Failure::Parse(format!("growth_constant must be positive, got {c}")));
            }
        }
        let v = &self.verify;
        if v.samples == 0 || v.budget == 0 || !(v.horizon > 0.0) {
            return Err(Failure::Parse("verify needs positive samples, budget and horizon".into()));
        }
        if self.artifacts(n)?.contains(&Artifact::Svg) && n != 2 {
            return Err(Failure::Parse("svg output needs a two-dimensional state".into()));
        }
        Ok(sys)
    }

    pub fn artifacts(&self, n: usize) -> Result<Vec<Artifact>, Failure> {
        Ok(match &self.outputs {
            Some(list) => list.clone(),
            None => {
                let mut all = vec![Artifact::Endpoints, Artifact::BarrierCsv, Artifact::Verify];
                if n == 2 {
                    all.push(Artifact::Svg);
                }
                all
            }
        })
    }
}
