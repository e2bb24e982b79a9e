//! TOML run configuration. Command-line flags override file values, which
//! override built-in defaults.

use std::path::{Path as FsPath, PathBuf};

use serde::Deserialize;
use smartnie_core::planning::TestMode;
use smartnie_core::{EmbeddedAi, Path, SmartDesign};

use crate::CliError;

/// Every key is optional; unknown keys are rejected so typos surface.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Option<TestMode>,
    pub path: Option<Path>,
    pub control: Option<EmbeddedAi>,
    pub new: Option<EmbeddedAi>,
    pub theta: Option<f64>,
    pub delta: Option<f64>,
    pub eta: Option<f64>,
    pub eta_theta: Option<f64>,
    pub eta_delta: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub dropout: Option<f64>,
    pub n: Option<u64>,
    pub n_list: Option<Vec<u64>>,
    pub pi_a: Option<f64>,
    pub pi_a_v: Option<f64>,
    pub pi_ac_v: Option<f64>,
    pub data: Option<PathBuf>,
    pub preset: Option<String>,
    pub row: Option<usize>,
    pub reps: Option<u64>,
    pub seed: Option<u64>,
    pub robust: Option<bool>,
    /// A full design for planning from cell means instead of effect sizes.
    pub design: Option<SmartDesign>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))
    }

    pub fn load(path: &FsPath) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        // Data paths in a config file are relative to the file.
        if let (Some(data), Some(dir)) = (&cfg.data, path.parent()) {
            if data.is_relative() {
                cfg.data = Some(dir.join(data));
            }
        }
        Ok(cfg)
    }
}
