//! Scene configuration, loadable from TOML. Every field has a default, so a
//! file only needs the values it changes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::orchestrator::{OrchestratorConfig, PolicyTable};
use crate::policy::{AttemptCounter, GraspStubConfig, PowerGraspConfig, VlaStubConfig};
use crate::sim::SimConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub tick_hz: f64,
    pub sim: SimConfig,
    pub vla: VlaStubConfig,
    pub grasp_stub: GraspStubConfig,
    pub power_grasp: PowerGraspConfig,
    pub orchestrator: OrchestratorConfig,
    pub policy_table: PolicyTable,
    pub attempts: AttemptCounter,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            tick_hz: 5.0,
            sim: SimConfig::default(),
            vla: VlaStubConfig::default(),
            grasp_stub: GraspStubConfig::default(),
            power_grasp: PowerGraspConfig::default(),
            orchestrator: OrchestratorConfig::default(),
            policy_table: PolicyTable::default(),
            attempts: AttemptCounter::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Parse { path: String, source: toml::de::Error },
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl SceneConfig {
    pub fn dt(&self) -> f64 {
        1.0 / self.tick_hz
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: SceneConfig =
            toml::from_str(text).map_err(|source| ConfigError::Parse { path: "<string>".into(), source })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        let cfg: SceneConfig =
            toml::from_str(&text).map_err(|source| ConfigError::Parse { path: path.display().to_string(), source })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scene config is always representable in TOML")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if !(self.tick_hz > 0.0 && self.tick_hz.is_finite()) {
            return bad("tick_hz must be positive");
        }
        let e = &self.orchestrator.edge;
        if e.low_threshold.partial_cmp(&e.high_threshold) != Some(std::cmp::Ordering::Less) || e.debounce_ticks == 0 {
            return bad("edge thresholds must satisfy low < high and debounce >= 1");
        }
        if self.vla.dual_noise_std.iter().chain(&self.vla.single_noise_std).any(|s| *s < 0.0) {
            return bad("noise standard deviations must be non-negative");
        }
        if self.sim.grasp.lambda_offset <= 0.0 {
            return bad("lambda_offset must be positive");
        }
        for kind in self.sim.scene_objects.iter().chain(self.policy_table.0.keys()) {
            if !self.sim.objects.contains_key(kind) {
                return Err(ConfigError::Invalid(format!("no object spec for `{kind}`")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let cfg = SceneConfig::default();
        let text = cfg.to_toml_string();
        assert_eq!(SceneConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg = SceneConfig::from_toml_str("tick_hz = 10.0\n[vla]\ncamera_mode = \"SingleCamera\"\n").unwrap();
        assert_eq!(cfg.tick_hz, 10.0);
        assert_eq!(cfg.vla.camera_mode, crate::policy::CameraMode::SingleCamera);
        assert_eq!(cfg.sim, SimConfig::default());
    }

    #[test]
    fn rejects_bad_thresholds() {
        let r = SceneConfig::from_toml_str("[orchestrator.edge]\nhigh_threshold = 0.1\nlow_threshold = 0.5\n");
        assert!(r.is_err());
    }
}
