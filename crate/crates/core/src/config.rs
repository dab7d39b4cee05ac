//! JSON run configuration shared by the command-line tools.
//!
//! ```json
//! {
//!   "model": { "kind": "ratio" },
//!   "grades": [4, 7, 10],
//!   "ability": { "p_lo": 1, "p_hi": 13 },
//!   "bank": { "interval": { "lo": 2, "hi": 10 } },
//!   "stopping": { "delta": 0.1 },
//!   "engine": { "policy": "grid" },
//!   "experiment": { "p_true": 5.5, "replications": 2000, "seed": 7 }
//! }
//! ```
//!
//! Unknown keys are rejected everywhere.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{AbilityDomain, GradeScheme, QuestionBank};
use crate::engine::{Engine, EngineOptions, StoppingConfig};
use crate::error::{Error, Result};
use crate::response_models::{ModelSpec, ResponseModel};
use crate::simulator::{ExperimentSpec, StartPolicy};

fn default_replications() -> usize {
    1
}

fn default_path_len() -> usize {
    200
}

fn default_horizon() -> u64 {
    200
}

/// Simulation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub p_true: f64,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub start: StartPolicy,
    /// Leading steps kept for the mean hardness path.
    #[serde(default = "default_path_len")]
    pub path_len: usize,
    /// Questions per session in the exploration experiment.
    #[serde(default = "default_horizon")]
    pub horizon: u64,
    /// Error levels of a Monte Carlo sweep; empty for a single run at the
    /// stopping δ.
    #[serde(default)]
    pub deltas: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    /// Grade thresholds `u_1 < ... < u_J`.
    pub grades: Vec<f64>,
    pub ability: AbilityDomain,
    pub bank: QuestionBank,
    pub stopping: StoppingConfig,
    #[serde(default)]
    pub engine: EngineOptions,
    #[serde(default)]
    pub experiment: Option<ExperimentConfig>,
}

impl RunConfig {
    /// Parses and validates a configuration document.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.response_model()?;
        let grades = self.grade_scheme()?;
        self.stopping.validate()?;
        if let Some(x) = self.engine.first_level {
            if !x.is_finite() {
                return Err(Error::InvalidConfig(format!("first level {x} is not finite")));
            }
        }
        if let Some(exp) = &self.experiment {
            if exp.replications == 0 {
                return Err(Error::InvalidConfig("replications must be at least 1".into()));
            }
            if exp.horizon == 0 {
                return Err(Error::InvalidConfig("horizon must be at least 1".into()));
            }
            if let Some(d) = exp.deltas.iter().find(|d| !(**d > 0.0 && **d < 1.0)) {
                return Err(Error::InvalidConfig(format!("sweep delta {d} is outside (0, 1)")));
            }
            if !grades.domain().contains(exp.p_true) {
                return Err(Error::InvalidConfig(format!("p_true {} is outside the ability domain", exp.p_true)));
            }
        }
        Ok(())
    }

    pub fn response_model(&self) -> Result<ResponseModel> {
        ResponseModel::from_spec(&self.model)
    }

    pub fn grade_scheme(&self) -> Result<GradeScheme> {
        GradeScheme::new(self.grades.clone(), self.ability)
    }

    pub fn engine(&self) -> Result<Engine> {
        Engine::new(self.response_model()?, self.grade_scheme()?, self.bank.clone(), self.stopping, self.engine)
    }

    pub fn experiment(&self) -> Result<&ExperimentConfig> {
        self.experiment
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("the configuration has no experiment section".into()))
    }

    pub fn experiment_spec(&self) -> Result<ExperimentSpec> {
        let exp = self.experiment()?;
        let start = match (exp.start, self.engine.first_level) {
            // an explicit first level in the engine section overrides the default start
            (StartPolicy::Easy, Some(x)) => StartPolicy::Level(x),
            (s, _) => s,
        };
        Ok(ExperimentSpec {
            model: self.response_model()?,
            grades: self.grade_scheme()?,
            bank: self.bank.clone(),
            stopping: self.stopping,
            options: self.engine,
            p_true: exp.p_true,
            replications: exp.replications,
            seed: exp.seed,
            start,
            path_len: exp.path_len,
        })
    }
}
