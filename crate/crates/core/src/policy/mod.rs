//! Policy interface and the scripted reference policies.

mod attempts;
mod grasp;
mod power;
mod vla;

use serde::{Deserialize, Serialize};

use crate::orchestrator::TaskPhase;
use crate::sim::WorldTruth;
use crate::types::{Action, ArmPose, HandCommand, Observation};

pub use attempts::{attempts_count, AttemptCounter};
pub use grasp::{slide_probability, GraspStub, GraspStubConfig, ModeLogistic};
pub use power::{power_grasp_proxy, PowerGraspConfig, PowerGraspPolicy};
pub use vla::{CameraMode, VlaStub, VlaStubConfig};

/// What a policy receives each tick it is active.
#[derive(Debug, Clone, Copy)]
pub struct PolicyInput<'a> {
    pub obs: &'a Observation,
    pub phase: TaskPhase,
    /// Privileged ground truth. Learned policies ignore it; scripted
    /// stand-ins read object poses from it instead of from pixels.
    pub truth: &'a WorldTruth,
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum PolicyError {
    #[error("safety stop after {0} consecutive missed replies")]
    SafetyStop(u32),
}

pub trait Policy: Send {
    fn act(&mut self, input: &PolicyInput<'_>) -> Result<Action, PolicyError>;
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn act(&mut self, input: &PolicyInput<'_>) -> Result<Action, PolicyError> {
        (**self).act(input)
    }
}

/// Holds the hand open and does not move. Used for the release phase.
#[derive(Debug, Clone, Default)]
pub struct ReleaseHold;

impl Policy for ReleaseHold {
    fn act(&mut self, _input: &PolicyInput<'_>) -> Result<Action, PolicyError> {
        Ok(Action::hold(HandCommand::open(), 0.0))
    }
}

/// Never moves, never closes, never signals.
#[derive(Debug, Clone, Default)]
pub struct NullPolicy;

impl Policy for NullPolicy {
    fn act(&mut self, _input: &PolicyInput<'_>) -> Result<Action, PolicyError> {
        Ok(Action::hold(HandCommand::open(), 0.0))
    }
}

/// Planar + vertical move toward `target`, limited to `max_step` meters.
pub(crate) fn step_toward(from: &ArmPose, target: [f64; 3], max_step: f64) -> [f64; 6] {
    let d = [target[0] - from.x, target[1] - from.y, target[2] - from.z];
    let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    let k = if n > max_step && n > 0.0 { max_step / n } else { 1.0 };
    [d[0] * k, d[1] * k, d[2] * k, 0.0, 0.0, 0.0]
}

pub(crate) fn distance3(p: &ArmPose, t: [f64; 3]) -> f64 {
    ((p.x - t[0]).powi(2) + (p.y - t[1]).powi(2) + (p.z - t[2]).powi(2)).sqrt()
}

/// Name and kind of a policy slot in the orchestrator.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PolicyId {
    Vla,
    Grasp(String),
    PowerGraspProxy,
    ReleaseHold,
}

impl std::fmt::Display for PolicyId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PolicyId::Vla => f.write_str("vla"),
            PolicyId::Grasp(name) => write!(f, "grasp:{name}"),
            PolicyId::PowerGraspProxy => f.write_str("power_grasp_proxy"),
            PolicyId::ReleaseHold => f.write_str("release_hold"),
        }
    }
}
