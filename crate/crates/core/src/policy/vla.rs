use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{distance3, step_toward, Policy, PolicyError, PolicyInput};
use crate::orchestrator::TaskPhase;
use crate::rng::{self, Stream};
use crate::sim::Bounds;
use crate::types::{Action, HandCommand};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CameraMode {
    DualCamera,
    SingleCamera,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VlaStubConfig {
    pub camera_mode: CameraMode,
    /// Goal-estimate noise std (x = lateral, y = depth) with both cameras.
    pub dual_noise_std: [f64; 2],
    /// Same with the static camera only; depth is poorly observed.
    pub single_noise_std: [f64; 2],
    /// Noise on the placement target during transport.
    pub plate_noise_std: f64,
    /// m/s
    pub approach_speed: f64,
    /// Distance to the goal estimate at which the event signal starts rising.
    pub rise_threshold: f64,
    /// Signal change per tick while rising or falling.
    pub sigma_step: f64,
    /// Hover height above the object top at the end of the approach.
    pub hover_height: f64,
    /// Hand height while carrying.
    pub carry_height: f64,
}

impl Default for VlaStubConfig {
    fn default() -> Self {
        Self {
            camera_mode: CameraMode::DualCamera,
            dual_noise_std: [0.022, 0.022],
            single_noise_std: [0.024, 0.145],
            plate_noise_std: 0.015,
            approach_speed: 0.15,
            rise_threshold: 0.01,
            sigma_step: 0.5,
            hover_height: 0.05,
            carry_height: 0.15,
        }
    }
}

impl VlaStubConfig {
    pub fn noise_std(&self) -> [f64; 2] {
        match self.camera_mode {
            CameraMode::DualCamera => self.dual_noise_std,
            CameraMode::SingleCamera => self.single_noise_std,
        }
    }
}

/// Scripted approach/transport policy. The goal estimate for each phase is
/// drawn once and kept for the rest of the episode.
#[derive(Debug, Clone)]
pub struct VlaStub {
    cfg: VlaStubConfig,
    workspace: Bounds,
    dt: f64,
    rng: ChaCha8Rng,
    approach_goal: Option<[f64; 3]>,
    place_goal: Option<[f64; 3]>,
    sigma: f64,
}

impl VlaStub {
    pub fn new(cfg: VlaStubConfig, workspace: Bounds, dt: f64, seed: u64) -> Self {
        Self {
            cfg,
            workspace,
            dt,
            rng: rng::stream(seed, Stream::Approach),
            approach_goal: None,
            place_goal: None,
            sigma: 0.0,
        }
    }

    pub fn approach_goal(&self) -> Option<[f64; 3]> {
        self.approach_goal
    }

    fn gaussian(&mut self, std: f64) -> f64 {
        let z: f64 = self.rng.sample(StandardNormal);
        std * z
    }

    fn clamp(&self, p: [f64; 3]) -> [f64; 3] {
        let b = &self.workspace;
        [p[0].clamp(b.min[0], b.max[0]), p[1].clamp(b.min[1], b.max[1]), p[2].clamp(b.min[2], b.max[2])]
    }

    fn move_and_signal(&mut self, input: &PolicyInput<'_>, goal: [f64; 3], rising: bool, hand: HandCommand) -> Action {
        let delta = step_toward(&input.obs.arm, goal, self.cfg.approach_speed * self.dt);
        let after = input.obs.arm.offset_by(&delta);
        let near = distance3(&after, goal) <= self.cfg.rise_threshold;
        let step = self.cfg.sigma_step;
        self.sigma = if near == rising { (self.sigma + step).min(1.0) } else { (self.sigma - step).max(0.0) };
        Action::new(delta, hand, self.sigma)
    }
}

impl Policy for VlaStub {
    fn act(&mut self, input: &PolicyInput<'_>) -> Result<Action, PolicyError> {
        let instruction = &input.obs.instruction;
        match input.phase {
            TaskPhase::Transport => {
                let goal = match self.place_goal {
                    Some(g) => g,
                    None => {
                        let center = input.truth.plate(instruction.plate).map(|p| p.center).unwrap_or([0.0, 0.0]);
                        let std = self.cfg.plate_noise_std;
                        let g = [center[0] + self.gaussian(std), center[1] + self.gaussian(std), self.cfg.carry_height];
                        let g = self.clamp(g);
                        self.place_goal = Some(g);
                        self.sigma = 1.0;
                        g
                    }
                };
                // the signal stays high while carrying and drops once above the plate
                Ok(self.move_and_signal(input, goal, false, HandCommand::GripScalar(1.0)))
            }
            _ => {
                let goal = match self.approach_goal {
                    Some(g) => g,
                    None => {
                        let Some(obj) = input.truth.object(instruction.object) else {
                            return Ok(Action::hold(HandCommand::open(), 0.0));
                        };
                        let [sx, sy] = self.cfg.noise_std();
                        let g = [
                            obj.position[0] + self.gaussian(sx),
                            obj.position[1] + self.gaussian(sy),
                            obj.top() + self.cfg.hover_height,
                        ];
                        let g = self.clamp(g);
                        self.approach_goal = Some(g);
                        g
                    }
                };
                Ok(self.move_and_signal(input, goal, true, HandCommand::open()))
            }
        }
    }
}
