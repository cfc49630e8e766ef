//! Shared domain types: poses, hand state, commands and observations.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::image::Image;
use crate::instruction::Instruction;

/// Number of actuated hand joints.
pub const HAND_JOINTS: usize = 13;

/// Joint index layout of the hand.
pub mod joint {
    pub const THUMB_ROTATION: usize = 0;
    pub const THUMB_CMC: usize = 1;
    pub const THUMB_MCP: usize = 2;
    pub const THUMB_IP: usize = 3;
    pub const INDEX_ABDUCTION: usize = 4;
    pub const INDEX_MCP: usize = 5;
    pub const INDEX_PIP: usize = 6;
    pub const MIDDLE_MCP: usize = 7;
    pub const MIDDLE_PIP: usize = 8;
    pub const RING_MCP: usize = 9;
    pub const RING_PIP: usize = 10;
    pub const LITTLE_MCP: usize = 11;
    pub const LITTLE_PIP: usize = 12;

    /// Joints that flex when the hand closes into a power grasp.
    pub const FLEXION: [usize; 11] = [
        THUMB_CMC, THUMB_MCP, THUMB_IP, INDEX_MCP, INDEX_PIP, MIDDLE_MCP, MIDDLE_PIP, RING_MCP,
        RING_PIP, LITTLE_MCP, LITTLE_PIP,
    ];
}

pub type JointVector = [f64; HAND_JOINTS];

/// End-effector pose. Positions in meters, angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct ArmPose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl ArmPose {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z, ..Self::default() }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.x, self.y, self.z, self.roll, self.pitch, self.yaw]
    }

    pub fn from_array(v: [f64; 6]) -> Self {
        Self { x: v[0], y: v[1], z: v[2], roll: v[3], pitch: v[4], yaw: v[5] }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    pub fn planar_distance_to(&self, x: f64, y: f64) -> f64 {
        (self.x - x).hypot(self.y - y)
    }

    pub fn offset_by(&self, delta: &[f64; 6]) -> Self {
        let mut v = self.to_array();
        for (a, d) in v.iter_mut().zip(delta) {
            *a += d;
        }
        Self::from_array(v)
    }
}

/// Joint positions of the hand plus the derived grasp synergy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HandState {
    pub joints: JointVector,
    /// 0 = open, 1 = closed power grasp.
    pub synergy: f64,
}

/// Joint limits and the linear synergy map of the hand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HandModel {
    pub lower: JointVector,
    pub upper: JointVector,
    /// Posture commanded by synergy 0.
    pub open: JointVector,
    /// Posture commanded by synergy 1.
    pub closed: JointVector,
    /// Joint speed limit in rad/s.
    pub joint_speed: f64,
}

impl Default for HandModel {
    fn default() -> Self {
        use joint::*;
        let mut lower = [0.0; HAND_JOINTS];
        let mut upper = [0.0; HAND_JOINTS];
        lower[INDEX_ABDUCTION] = -0.3;
        upper[INDEX_ABDUCTION] = 0.3;
        upper[THUMB_ROTATION] = 1.2;
        upper[THUMB_CMC] = 1.0;
        upper[THUMB_MCP] = 1.0;
        upper[THUMB_IP] = 1.2;
        for &j in &[INDEX_MCP, MIDDLE_MCP, RING_MCP, LITTLE_MCP] {
            upper[j] = 1.6;
        }
        for &j in &[INDEX_PIP, MIDDLE_PIP, RING_PIP, LITTLE_PIP] {
            upper[j] = 1.7;
        }
        let open = [0.0; HAND_JOINTS];
        let mut closed = upper;
        closed[INDEX_ABDUCTION] = 0.0;
        closed[THUMB_ROTATION] = 1.0;
        Self { lower, upper, open, closed, joint_speed: 3.0 }
    }
}

impl HandModel {
    /// Normalized mean of the flexion joints.
    pub fn synergy(&self, joints: &JointVector) -> f64 {
        let sum: f64 = joint::FLEXION
            .iter()
            .map(|&j| {
                let span = self.upper[j] - self.lower[j];
                ((joints[j] - self.lower[j]) / span).clamp(0.0, 1.0)
            })
            .sum();
        (sum / joint::FLEXION.len() as f64).clamp(0.0, 1.0)
    }

    /// Joint posture along the open→closed line.
    pub fn posture(&self, synergy: f64) -> JointVector {
        let s = synergy.clamp(0.0, 1.0);
        let mut out = [0.0; HAND_JOINTS];
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.open[j] + s * (self.closed[j] - self.open[j]);
        }
        out
    }

    pub fn clamp(&self, joints: &JointVector) -> JointVector {
        let mut out = *joints;
        for (j, o) in out.iter_mut().enumerate() {
            *o = o.clamp(self.lower[j], self.upper[j]);
        }
        out
    }

    pub fn state(&self, joints: JointVector) -> HandState {
        let joints = self.clamp(&joints);
        HandState { joints, synergy: self.synergy(&joints) }
    }

    pub fn state_for_synergy(&self, synergy: f64) -> HandState {
        self.state(self.posture(synergy))
    }

    pub fn within_limits(&self, joints: &JointVector) -> bool {
        joints
            .iter()
            .enumerate()
            .all(|(j, q)| q.is_finite() && *q >= self.lower[j] - 1e-12 && *q <= self.upper[j] + 1e-12)
    }
}

/// Hand part of a command, in either the 1-DoF gripper convention or the
/// full joint convention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum HandCommand {
    GripScalar(f64),
    JointTargets(JointVector),
}

impl HandCommand {
    pub fn open() -> Self {
        HandCommand::GripScalar(0.0)
    }

    pub fn target_joints(&self, model: &HandModel) -> JointVector {
        match self {
            HandCommand::GripScalar(s) => model.posture(*s),
            HandCommand::JointTargets(j) => model.clamp(j),
        }
    }
}

/// One command emitted per tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    /// Pose increment for this tick (meters, radians).
    pub arm_delta: [f64; 6],
    pub hand: HandCommand,
    pub sigma: f64,
}

impl Action {
    pub fn new(arm_delta: [f64; 6], hand: HandCommand, sigma: f64) -> Self {
        Self { arm_delta, hand, sigma: clamp_sigma(sigma) }
    }

    pub fn hold(hand: HandCommand, sigma: f64) -> Self {
        Self::new([0.0; 6], hand, sigma)
    }

    /// Scales the linear and angular parts so neither exceeds its per-tick limit.
    pub fn clamp_velocity(&self, limits: &VelocityLimits, dt: f64) -> Self {
        let mut out = *self;
        let lin = limits.linear * dt;
        let ang = limits.angular * dt;
        let ln = (out.arm_delta[0].powi(2) + out.arm_delta[1].powi(2) + out.arm_delta[2].powi(2)).sqrt();
        if ln > lin {
            let k = lin / ln;
            out.arm_delta[..3].iter_mut().for_each(|v| *v *= k);
        }
        let an = (out.arm_delta[3].powi(2) + out.arm_delta[4].powi(2) + out.arm_delta[5].powi(2)).sqrt();
        if an > ang {
            let k = ang / an;
            out.arm_delta[3..].iter_mut().for_each(|v| *v *= k);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        let hand_ok = match &self.hand {
            HandCommand::GripScalar(s) => s.is_finite(),
            HandCommand::JointTargets(j) => j.iter().all(|v| v.is_finite()),
        };
        hand_ok && self.sigma.is_finite() && self.arm_delta.iter().all(|v| v.is_finite())
    }
}

pub fn clamp_sigma(sigma: f64) -> f64 {
    if sigma.is_nan() {
        0.0
    } else {
        sigma.clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VelocityLimits {
    /// m/s
    pub linear: f64,
    /// rad/s
    pub angular: f64,
}

impl Default for VelocityLimits {
    fn default() -> Self {
        Self { linear: 0.15, angular: 0.5 }
    }
}

/// Everything a policy sees on one tick.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub cam1: Image,
    pub cam2: Image,
    pub arm: ArmPose,
    pub hand: HandState,
    pub instruction: Instruction,
    pub tick: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectKind {
    Pepper,
    Tape,
    Paper,
    Block,
}

impl ObjectKind {
    pub const ALL: [ObjectKind; 4] = [ObjectKind::Pepper, ObjectKind::Tape, ObjectKind::Paper, ObjectKind::Block];

    pub fn as_str(&self) -> &'static str {
        match self {
            ObjectKind::Pepper => "pepper",
            ObjectKind::Tape => "tape",
            ObjectKind::Paper => "paper",
            ObjectKind::Block => "block",
        }
    }
}

impl fmt::Display for ObjectKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ObjectKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ObjectKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown object kind `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlateColor {
    Yellow,
    Purple,
}

impl PlateColor {
    pub const ALL: [PlateColor; 2] = [PlateColor::Yellow, PlateColor::Purple];

    pub fn as_str(&self) -> &'static str {
        match self {
            PlateColor::Yellow => "yellow",
            PlateColor::Purple => "purple",
        }
    }

    pub fn other(&self) -> Self {
        match self {
            PlateColor::Yellow => PlateColor::Purple,
            PlateColor::Purple => PlateColor::Yellow,
        }
    }
}

impl fmt::Display for PlateColor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PlateColor {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PlateColor::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown plate color `{s}`"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synergy_endpoints() {
        let m = HandModel::default();
        assert_eq!(m.synergy(&m.posture(0.0)), 0.0);
        assert!((m.synergy(&m.posture(1.0)) - 1.0).abs() < 1e-12);
        assert!((m.synergy(&m.posture(0.4)) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn postures_respect_limits() {
        let m = HandModel::default();
        for i in 0..=10 {
            assert!(m.within_limits(&m.posture(i as f64 / 10.0)));
        }
    }

    #[test]
    fn velocity_clamp_scales_linear_part() {
        let a = Action::new([1.0, 0.0, 0.0, 0.0, 0.0, 0.0], HandCommand::open(), 0.0);
        let c = a.clamp_velocity(&VelocityLimits::default(), 0.2);
        assert!((c.arm_delta[0] - 0.03).abs() < 1e-12);
        let small = Action::new([0.01, 0.0, 0.0, 0.0, 0.0, 0.0], HandCommand::open(), 0.0);
        assert_eq!(small.clamp_velocity(&VelocityLimits::default(), 0.2), small);
    }

    #[test]
    fn sigma_is_clamped() {
        assert_eq!(Action::hold(HandCommand::open(), 3.0).sigma, 1.0);
        assert_eq!(Action::hold(HandCommand::open(), -1.0).sigma, 0.0);
        assert_eq!(clamp_sigma(f64::NAN), 0.0);
    }
}
