use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{distance3, step_toward, Policy, PolicyError, PolicyInput};
use crate::rng::{self, Stream};
use crate::sim::{GraspStrategy, ObjectTruth};
use crate::types::{Action, ArmPose, HandCommand, HandModel, ObjectKind};

/// Probability of choosing slide-and-pick given the edge distance `d`:
/// `p(d) = 1 / (1 + exp((d - d0) / k))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModeLogistic {
    pub d0: f64,
    pub k: f64,
}

impl Default for ModeLogistic {
    fn default() -> Self {
        Self { d0: 0.06, k: 0.015 }
    }
}

pub fn slide_probability(edge_distance: f64, m: &ModeLogistic) -> f64 {
    1.0 / (1.0 + ((edge_distance - m.d0) / m.k).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraspStubConfig {
    pub mode: ModeLogistic,
    pub recovery_enabled: bool,
    /// Deliberately close out of reach on the first attempt.
    pub force_first_attempt_failure: bool,
    /// Fixes the strategy instead of sampling it.
    pub strategy_override: Option<GraspStrategy>,
    /// Planar distance the hand can correct toward the object before closing (m).
    pub coverage: f64,
    /// m/s
    pub speed: f64,
    pub lift_height: f64,
    /// Synergy held while pushing an object toward the edge.
    pub slide_synergy: f64,
    /// Overhang fraction to reach before closing during slide-and-pick.
    pub overhang_target: f64,
    /// Height above the grasp point of a deliberately missed close (m).
    pub miss_height: f64,
    /// Ticks of raised signal after a confirmed lift.
    pub sigma_tail_ticks: u32,
    pub synergy_tolerance: f64,
}

impl Default for GraspStubConfig {
    fn default() -> Self {
        Self {
            mode: ModeLogistic::default(),
            recovery_enabled: true,
            force_first_attempt_failure: false,
            strategy_override: None,
            coverage: 0.04,
            speed: 0.10,
            lift_height: 0.08,
            slide_synergy: 0.4,
            overhang_target: 0.4,
            miss_height: 0.06,
            sigma_tail_ticks: 10,
            synergy_tolerance: 0.02,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Stage {
    Start,
    Align { target: [f64; 3], synergy: f64 },
    Slide { end_y: f64 },
    Raise { z: f64 },
    Close,
    Lift { z: f64 },
    Check,
    Tail { remaining: u32 },
    Reopen,
    GiveUp,
}

/// Scripted stand-in for an object-specific grasp policy.
#[derive(Debug, Clone)]
pub struct GraspStub {
    cfg: GraspStubConfig,
    object: ObjectKind,
    hand: HandModel,
    dt: f64,
    rng: ChaCha8Rng,
    stage: Stage,
    strategy: GraspStrategy,
    attempt: u32,
    strategies: Vec<GraspStrategy>,
}

impl GraspStub {
    pub fn new(cfg: GraspStubConfig, object: ObjectKind, hand: HandModel, dt: f64, seed: u64) -> Self {
        Self {
            cfg,
            object,
            hand,
            dt,
            rng: rng::stream(seed, Stream::Grasp),
            stage: Stage::Start,
            strategy: GraspStrategy::DirectPick,
            attempt: 0,
            strategies: Vec::new(),
        }
    }

    pub fn object(&self) -> ObjectKind {
        self.object
    }

    /// Strategy chosen for each attempt so far.
    pub fn strategies(&self) -> &[GraspStrategy] {
        &self.strategies
    }

    /// True once the raised-signal tail after a successful lift has been emitted.
    pub fn finished(&self) -> bool {
        matches!(self.stage, Stage::Tail { remaining: 0 })
    }

    pub fn gave_up(&self) -> bool {
        self.stage == Stage::GiveUp
    }

    fn choose_strategy(&mut self, obj: &ObjectTruth) -> GraspStrategy {
        // one draw per attempt keeps the stream aligned whether or not an override is set
        let u: f64 = self.rng.random();
        if let Some(s) = self.cfg.strategy_override {
            return s;
        }
        if u < slide_probability(obj.edge_distance(), &self.cfg.mode) {
            GraspStrategy::SlideAndPick
        } else {
            GraspStrategy::DirectPick
        }
    }

    fn corrected_xy(&self, hand: &ArmPose, obj: &ObjectTruth) -> [f64; 2] {
        let v = [obj.position[0] - hand.x, obj.position[1] - hand.y];
        let n = v[0].hypot(v[1]);
        let k = if n > self.cfg.coverage { self.cfg.coverage / n } else { 1.0 };
        [hand.x + v[0] * k, hand.y + v[1] * k]
    }

    fn posture(&self, s: f64) -> HandCommand {
        HandCommand::JointTargets(self.hand.posture(s))
    }

    fn after_positioning(&self, hand: &ArmPose) -> Stage {
        if self.cfg.force_first_attempt_failure && self.attempt == 1 {
            Stage::Raise { z: hand.z + self.cfg.miss_height }
        } else {
            Stage::Close
        }
    }

    fn step(&mut self, input: &PolicyInput<'_>) -> Option<Action> {
        let obs = input.obs;
        let arm = obs.arm;
        let synergy = obs.hand.synergy;
        let max_step = self.cfg.speed * self.dt;
        let tol = self.cfg.synergy_tolerance;
        let obj = input.truth.object(self.object).cloned();
        match self.stage {
            Stage::Start => {
                let Some(obj) = obj else {
                    self.stage = Stage::GiveUp;
                    return None;
                };
                self.attempt += 1;
                self.strategy = self.choose_strategy(&obj);
                self.strategies.push(self.strategy);
                let [x, y] = self.corrected_xy(&arm, &obj);
                let synergy = match self.strategy {
                    GraspStrategy::SlideAndPick => self.cfg.slide_synergy,
                    _ => 0.0,
                };
                self.stage = Stage::Align { target: [x, y, obj.top()], synergy };
                None
            }
            Stage::Align { target, synergy: s } => {
                if distance3(&arm, target) < 1e-9 && (synergy - s).abs() <= tol {
                    self.stage = match (self.strategy, obj) {
                        (GraspStrategy::SlideAndPick, Some(o)) => {
                            let depth = o.footprint[1];
                            let wanted = depth / 2.0 - self.cfg.overhang_target * depth;
                            let push = (o.position[1] - wanted).max(0.0);
                            Stage::Slide { end_y: arm.y - push }
                        }
                        _ => self.after_positioning(&arm),
                    };
                    return None;
                }
                Some(Action::new(step_toward(&arm, target, max_step), self.posture(s), 0.0))
            }
            Stage::Slide { end_y } => {
                let done = obj.map(|o| o.overhang() >= self.cfg.overhang_target - 1e-9).unwrap_or(true);
                if done || arm.y <= end_y + 1e-9 {
                    self.stage = self.after_positioning(&arm);
                    return None;
                }
                let target = [arm.x, end_y, arm.z];
                Some(Action::new(step_toward(&arm, target, max_step), self.posture(self.cfg.slide_synergy), 0.0))
            }
            Stage::Raise { z } => {
                let target = [arm.x, arm.y, z];
                if distance3(&arm, target) < 1e-9 {
                    self.stage = Stage::Close;
                    return None;
                }
                // keep the current finger posture while moving up
                Some(Action::new(step_toward(&arm, target, max_step), self.posture(synergy), 0.0))
            }
            Stage::Close => {
                if synergy >= 1.0 - tol {
                    self.stage = Stage::Lift { z: arm.z + self.cfg.lift_height };
                    return None;
                }
                Some(Action::hold(self.posture(1.0), 0.0))
            }
            Stage::Lift { z } => {
                let target = [arm.x, arm.y, z];
                if distance3(&arm, target) < 1e-9 {
                    self.stage = Stage::Check;
                    return None;
                }
                Some(Action::new(step_toward(&arm, target, max_step), self.posture(1.0), 0.0))
            }
            Stage::Check => {
                let attached = obj.map(|o| o.attached).unwrap_or(false);
                self.stage = if attached {
                    Stage::Tail { remaining: self.cfg.sigma_tail_ticks }
                } else if self.cfg.recovery_enabled {
                    Stage::Reopen
                } else {
                    Stage::GiveUp
                };
                None
            }
            Stage::Tail { remaining } => {
                self.stage = Stage::Tail { remaining: remaining.saturating_sub(1) };
                Some(Action::hold(self.posture(1.0), 1.0))
            }
            Stage::Reopen => {
                if synergy <= tol {
                    self.stage = Stage::Start;
                    return None;
                }
                Some(Action::hold(self.posture(0.0), 0.0))
            }
            Stage::GiveUp => Some(Action::hold(self.posture(0.0), 0.0)),
        }
    }
}

impl Policy for GraspStub {
    fn act(&mut self, input: &PolicyInput<'_>) -> Result<Action, PolicyError> {
        // stage changes that emit nothing fall through to the next stage in the same tick
        for _ in 0..8 {
            if let Some(a) = self.step(input) {
                return Ok(a);
            }
        }
        Ok(Action::hold(self.posture(input.obs.hand.synergy), 0.0))
    }
}
