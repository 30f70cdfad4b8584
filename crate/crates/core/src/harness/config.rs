use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::belief::BeliefParams;
use crate::planner::PlannerParams;
use crate::scene::SceneGenConfig;
use crate::segmenter::OracleConfig;
use crate::uncos::UncosParams;
use crate::update::{TrackerParams, UpdateParams};

use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Method {
    Eos,
    Random,
    FinalFrame,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Eos, Method::Random, Method::FinalFrame];

    pub fn name(self) -> &'static str {
        match self {
            Method::Eos => "eos",
            Method::Random => "random",
            Method::FinalFrame => "finalFrame",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown method {s:?}"))
    }
}

/// Everything one experiment needs. Read from TOML; every section is
/// optional and unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub scenes: usize,
    pub steps: usize,
    pub methods: Vec<Method>,
    /// Pixel size of rendered frames (meters).
    pub resolution: f64,
    /// Keep per-step predicted label maps in the output.
    pub save_frames: bool,
    pub scene: SceneGenConfig,
    pub oracle: OracleConfig,
    pub uncos: UncosParams,
    pub belief: BeliefParams,
    pub planner: PlannerParams,
    pub tracker: TrackerParams,
    pub update: UpdateParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            scenes: 20,
            steps: 3,
            methods: Method::ALL.to_vec(),
            resolution: 0.004,
            save_frames: false,
            scene: SceneGenConfig::default(),
            oracle: OracleConfig::default(),
            uncos: UncosParams::default(),
            belief: BeliefParams::default(),
            planner: PlannerParams::default(),
            tracker: TrackerParams::default(),
            update: UpdateParams::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let config: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |e: String| HarnessError::Config(e);
        if self.scenes == 0 {
            return Err(bad("scenes must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(bad("no methods selected".into()));
        }
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            return Err(bad(format!(
                "resolution = {} must be positive",
                self.resolution
            )));
        }
        self.scene.validate().map_err(|e| bad(e.to_string()))?;
        self.oracle.validate().map_err(bad)?;
        self.uncos.validate().map_err(|e| bad(e.to_string()))?;
        self.belief.validate().map_err(bad)?;
        self.planner.validate().map_err(bad)?;
        self.tracker.validate().map_err(bad)?;
        self.update.validate().map_err(bad)?;
        Ok(())
    }
}
