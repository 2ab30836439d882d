//! Run configuration: one TOML file, every field optional with SI defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{ControllerConfig, ControllerMode};
use crate::footstep::{CmpOffsets, TimingParams};
use crate::sim::{PushConfig, RobotConfig, Scenario, SuccessCriteria, SweepConfig, WalkConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Fill the wall-clock columns of summary.csv. Off by default so that
    /// repeated runs produce identical files.
    pub report_timing: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            report_timing: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads for sweeps; 0 uses every core.
    pub jobs: usize,
    pub mode: ControllerMode,
    /// s
    pub control_period: f64,
    /// Half-width of uniform CMP command noise (m); 0 disables.
    pub cmp_noise: f64,
    pub robot: RobotConfig,
    pub walk: WalkConfig,
    pub timing: TimingParams,
    pub offsets: CmpOffsets,
    pub push: PushConfig,
    pub controller: ControllerConfig,
    pub success: SuccessCriteria,
    pub sweep: SweepConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let s = Scenario::default();
        Self {
            seed: s.seed,
            jobs: 0,
            mode: s.mode,
            control_period: s.control_period,
            cmp_noise: s.cmp_noise,
            robot: s.robot,
            walk: s.walk,
            timing: s.timing,
            offsets: s.offsets,
            push: s.push,
            controller: s.controller,
            success: s.success,
            sweep: SweepConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_owned(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    pub fn scenario(&self) -> Scenario {
        Scenario {
            robot: self.robot,
            walk: self.walk,
            timing: self.timing,
            offsets: self.offsets,
            push: self.push,
            mode: self.mode,
            controller: self.controller.clone(),
            control_period: self.control_period,
            success: self.success,
            cmp_noise: self.cmp_noise,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        // TOML integers are signed 64-bit.
        if self.seed > i64::MAX as u64 {
            return Err(ConfigError::Invalid(format!("seed must be at most {}", i64::MAX)));
        }
        let invalid = |e: crate::sim::SimError| ConfigError::Invalid(e.to_string());
        self.scenario().validate().map_err(invalid)?;
        self.sweep.validate().map_err(invalid)?;
        let foothold = self.robot.foothold().map_err(invalid)?;
        for (i, f) in self.walk.footsteps(&foothold).iter().enumerate() {
            self.offsets
                .validate_for(i, f)
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        Ok(())
    }
}
