use std::path::Path;

use ddfuse_core::metrics::{EvalConfig, Interpolation};
use ddfuse_core::pipeline::FusionConfig;
use ddfuse_core::sim::ScenarioConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::formats::read_json;

/// Contents of the `--config` file. Every section is optional.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub fusion: FusionConfig,
    pub eval: EvalSettings,
    pub simulate: ScenarioConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub iou_threshold: f64,
    pub interp: Interpolation,
}

impl Default for EvalSettings {
    fn default() -> Self {
        let d = EvalConfig::default();
        Self {
            iou_threshold: d.iou_threshold,
            interp: d.interpolation,
        }
    }
}

impl CliConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let cfg: Self = match path {
            Some(p) => read_json(p)?,
            None => Self::default(),
        };
        cfg.fusion.validate()?;
        Ok(cfg)
    }
}
