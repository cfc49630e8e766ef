//! Single-trial runners shared by the experiments.

use std::sync::Arc;

use crate::config::SceneConfig;
use crate::instruction::Instruction;
use crate::orchestrator::{EpisodeResult, Mode, OrchestratorError, PolicySet, RunOptions, Snapshot, Stage, TaskPhase, TickObserver};
use crate::policy::{attempts_count, CameraMode, GraspStubConfig, NullPolicy, PowerGraspPolicy, ReleaseHold, VlaStub};
use crate::scenario::{grasp_stubs, random_world, run_options, run_with};
use crate::sim::World;
use crate::types::{joint, ArmPose, ObjectKind, PlateColor};

/// Planar hand-to-target distance when the approach policy hands over.
pub fn reach_trial(cfg: &SceneConfig, object: ObjectKind, camera: CameraMode, seed: u64) -> Result<(Option<f64>, EpisodeResult), OrchestratorError> {
    let mut vla = cfg.vla.clone();
    vla.camera_mode = camera;
    let instruction = Instruction::canonical(object, PlateColor::Yellow);
    let mut world = random_world(cfg, object, seed)?;
    let mut policies = PolicySet {
        vla: Box::new(VlaStub::new(vla, cfg.sim.workspace.clone(), cfg.dt(), seed)),
        grasp: grasp_stubs(cfg, &cfg.grasp_stub, seed),
        power_grasp: Box::new(PowerGraspPolicy::new(cfg.power_grasp.clone())),
        release: Box::new(ReleaseHold),
    };
    let opts = RunOptions { stop_after: Some(Stage::Approach), ..run_options(cfg) };
    let r = run_with(cfg, &mut world, &mut policies, &instruction, Mode::Hybrid, &opts, &mut [])?;
    Ok((r.handoff.map(|h| h.offset), r))
}

/// Records how far the target moved before the hand first closed.
struct DisplacementProbe {
    object: ObjectKind,
    close_threshold: f64,
    start: Option<[f64; 2]>,
    max_before_close: f64,
    closed: bool,
}

impl TickObserver for DisplacementProbe {
    fn on_tick(&mut self, s: &Snapshot) {
        let Some(o) = s.objects.iter().find(|o| o.kind == self.object) else { return };
        let p = [o.position[0], o.position[1]];
        let start = *self.start.get_or_insert(p);
        if !self.closed {
            self.max_before_close = self.max_before_close.max((p[0] - start[0]).hypot(p[1] - start[1]));
            self.closed = s.synergy >= self.close_threshold;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraspTrial {
    pub seed: u64,
    pub success: bool,
    pub attempts: usize,
    /// Target displacement before the first close (m).
    pub pre_close_displacement: f64,
    pub result: EpisodeResult,
}

/// A grasp-only trial: a single object at `object_xy`, the hand at
/// `hand`, the table-selected grasp policy in control until it signals.
pub fn grasp_trial(
    cfg: &SceneConfig,
    object: ObjectKind,
    object_xy: [f64; 2],
    hand: [f64; 3],
    grasp: &GraspStubConfig,
    seed: u64,
) -> Result<GraspTrial, OrchestratorError> {
    let sim = Arc::new(cfg.sim.clone());
    let mut world = World::new(Arc::clone(&sim), &[(object, object_xy)], seed)?;
    world.set_hand_pose(ArmPose::new(hand[0], hand[1], hand[2]));
    let instruction = Instruction::canonical(object, PlateColor::Yellow);
    let mut policies = PolicySet {
        vla: Box::new(NullPolicy),
        grasp: grasp_stubs(cfg, grasp, seed),
        power_grasp: Box::new(PowerGraspPolicy::new(cfg.power_grasp.clone())),
        release: Box::new(ReleaseHold),
    };
    let opts = RunOptions { start: Stage::Grasping, stop_after: Some(Stage::Grasping), ..run_options(cfg) };
    let mut probe = DisplacementProbe {
        object,
        close_threshold: sim.grasp.close_threshold,
        start: Some(object_xy),
        max_before_close: 0.0,
        closed: false,
    };
    let r = run_with(cfg, &mut world, &mut policies, &instruction, Mode::Hybrid, &opts, &mut [&mut probe])?;
    let success = r.phases().contains(&TaskPhase::Transport);
    let attempts = attempts_count(&index_mcp(&r), &cfg.attempts);
    Ok(GraspTrial { seed, success, attempts, pre_close_displacement: probe.max_before_close, result: r })
}

pub fn index_mcp(r: &EpisodeResult) -> Vec<f64> {
    r.trace.iter().map(|t| t.hand[joint::INDEX_MCP]).collect()
}
