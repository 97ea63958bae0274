//! Single-file transfer configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineError;
use crate::adapt::{AdaptSettings, PpoConfig};
use crate::demo::DEFAULT_COM_LOWERING;
use crate::metrics::SemanticsConfig;
use crate::retarget::{RetargetWeights, SolverOptions};
use crate::sim::SimConfig;
use crate::wrist::TrackingConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferConfig {
    /// Hand description file, relative to the config file.
    pub hand: PathBuf,
    /// Demonstration file, relative to the config file.
    pub demo: PathBuf,
    /// Bundle directory, relative to the config file.
    pub output: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Grasp frame override; the default is the tightest-grip frame.
    #[serde(default)]
    pub grasp_frame: Option<usize>,
    /// Fraction of the object height by which its center of mass is lowered.
    #[serde(default = "default_com_lowering")]
    pub com_lowering: f64,
    #[serde(default = "default_frequency")]
    pub control_frequency: f64,
    #[serde(default)]
    pub retarget: RetargetWeights,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub adapt: AdaptSettings,
    #[serde(default)]
    pub ppo: PpoConfig,
    #[serde(default)]
    pub tracking: TrackingConfig,
    #[serde(default)]
    pub semantics: SemanticsConfig,
}

fn default_com_lowering() -> f64 {
    DEFAULT_COM_LOWERING
}

fn default_frequency() -> f64 {
    120.0
}

impl TransferConfig {
    /// Minimal config with library defaults.
    pub fn new(
        hand: impl Into<PathBuf>,
        demo: impl Into<PathBuf>,
        output: impl Into<PathBuf>,
    ) -> Self {
        Self {
            hand: hand.into(),
            demo: demo.into(),
            output: output.into(),
            seed: 0,
            grasp_frame: None,
            com_lowering: DEFAULT_COM_LOWERING,
            control_frequency: default_frequency(),
            retarget: RetargetWeights::default(),
            solver: SolverOptions::default(),
            sim: SimConfig::default(),
            adapt: AdaptSettings::default(),
            ppo: PpoConfig::default(),
            tracking: TrackingConfig::default(),
            semantics: SemanticsConfig::default(),
        }
    }

    /// Reads a config and resolves its paths against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut cfg: Self = serde_json::from_str(&text).map_err(|e| PipelineError::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.hand, &mut cfg.demo, &mut cfg.output] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks every setting and referenced file without writing anything.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let invalid = |m: String| PipelineError::Validation(m);
        for (what, p) in [("hand", &self.hand), ("demo", &self.demo)] {
            if !p.is_file() {
                return Err(invalid(format!(
                    "{what} file {} does not exist",
                    p.display()
                )));
            }
        }
        if !(self.control_frequency > 0.0 && self.control_frequency.is_finite()) {
            return Err(invalid(format!(
                "control_frequency must be positive, got {}",
                self.control_frequency
            )));
        }
        if !(0.0..=1.0).contains(&self.com_lowering) {
            return Err(invalid(format!(
                "com_lowering must lie in [0, 1], got {}",
                self.com_lowering
            )));
        }
        self.retarget
            .validate()
            .map_err(|e| invalid(e.to_string()))?;
        self.sim.validate().map_err(|e| invalid(e.to_string()))?;
        self.adapt.validate().map_err(|e| invalid(e.to_string()))?;
        self.ppo.validate().map_err(|e| invalid(e.to_string()))?;
        self.semantics
            .validate()
            .map_err(|e| invalid(e.to_string()))?;
        if !(self.tracking.gain_scale > 0.0
            && self.tracking.drop_time > 0.0
            && self.tracking.start_tolerance >= 0.0)
        {
            return Err(invalid(
                "tracking gain_scale and drop_time must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
