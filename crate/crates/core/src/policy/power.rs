use serde::{Deserialize, Serialize};

use super::{Policy, PolicyError, PolicyInput};
use crate::types::{Action, HandCommand};

/// Fixed whole-hand closing sequence used by the baseline in place of a
/// learned grasp: descend, close, ascend, then raise the signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PowerGraspConfig {
    /// Total descent (m), spread evenly over `descend_ticks`.
    pub descend: f64,
    pub descend_ticks: u32,
    pub close_ticks: u32,
    pub ascend: f64,
    pub ascend_ticks: u32,
}

impl Default for PowerGraspConfig {
    fn default() -> Self {
        Self { descend: 0.05, descend_ticks: 2, close_ticks: 4, ascend: 0.08, ascend_ticks: 3 }
    }
}

impl PowerGraspConfig {
    pub fn len(&self) -> u32 {
        self.descend_ticks + self.close_ticks + self.ascend_ticks
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Command for tick `t` (0-based) of the sequence. After the sequence the
/// hand stays closed and the signal is 1.
pub fn power_grasp_proxy(t: u32, cfg: &PowerGraspConfig) -> Action {
    let d = cfg.descend_ticks;
    let c = cfg.close_ticks;
    if t < d {
        let dz = -cfg.descend / d as f64;
        Action::new([0.0, 0.0, dz, 0.0, 0.0, 0.0], HandCommand::GripScalar(0.0), 0.0)
    } else if t < d + c {
        let s = (t - d + 1) as f64 / c as f64;
        Action::hold(HandCommand::GripScalar(s), 0.0)
    } else if t < cfg.len() {
        let dz = cfg.ascend / cfg.ascend_ticks as f64;
        Action::new([0.0, 0.0, dz, 0.0, 0.0, 0.0], HandCommand::GripScalar(1.0), 0.0)
    } else {
        Action::hold(HandCommand::GripScalar(1.0), 1.0)
    }
}

#[derive(Debug, Clone, Default)]
pub struct PowerGraspPolicy {
    cfg: PowerGraspConfig,
    t: u32,
}

impl PowerGraspPolicy {
    pub fn new(cfg: PowerGraspConfig) -> Self {
        Self { cfg, t: 0 }
    }
}

impl Policy for PowerGraspPolicy {
    fn act(&mut self, _input: &PolicyInput<'_>) -> Result<Action, PolicyError> {
        let a = power_grasp_proxy(self.t, &self.cfg);
        self.t = self.t.saturating_add(1);
        Ok(a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequence_shape() {
        let cfg = PowerGraspConfig::default();
        let descent: f64 = (0..cfg.len()).map(|t| power_grasp_proxy(t, &cfg).arm_delta[2]).filter(|v| *v < 0.0).sum();
        assert!((descent + 0.05).abs() < 1e-12);
        let grips: Vec<f64> = (0..cfg.len())
            .map(|t| match power_grasp_proxy(t, &cfg).hand {
                HandCommand::GripScalar(s) => s,
                HandCommand::JointTargets(_) => panic!("joint targets"),
            })
            .collect();
        assert!(grips.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(*grips.last().unwrap(), 1.0);
        assert!((0..cfg.len()).all(|t| power_grasp_proxy(t, &cfg).sigma == 0.0));
        assert_eq!(power_grasp_proxy(cfg.len(), &cfg).sigma, 1.0);
    }
}
