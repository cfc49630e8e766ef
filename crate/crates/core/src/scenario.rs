//! Assembly of the reference system: world, scripted policies and phase
//! machine for one seeded episode.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::config::SceneConfig;
use crate::instruction::Instruction;
use crate::orchestrator::{
    run_episode, EpisodeResult, Mode, OrchestratorError, PhaseMachine, PolicySet, RunOptions, TickObserver,
};
use crate::policy::{GraspStub, GraspStubConfig, Policy, PowerGraspPolicy, ReleaseHold, VlaStub};
use crate::sim::{SimConfig, World};
use crate::types::ObjectKind;

/// Scene objects for an episode: the configured set plus the target if absent.
pub fn scene_kinds(sim: &SimConfig, target: ObjectKind) -> Vec<ObjectKind> {
    let mut kinds = sim.scene_objects.clone();
    if !kinds.contains(&target) {
        kinds.push(target);
    }
    kinds
}

pub fn grasp_stubs(cfg: &SceneConfig, grasp: &GraspStubConfig, seed: u64) -> BTreeMap<String, Box<dyn Policy>> {
    cfg.policy_table
        .0
        .iter()
        .map(|(kind, name)| {
            let stub = GraspStub::new(grasp.clone(), *kind, cfg.sim.hand.clone(), cfg.dt(), seed);
            (name.clone(), Box::new(stub) as Box<dyn Policy>)
        })
        .collect()
}

pub fn reference_policies(cfg: &SceneConfig, seed: u64) -> PolicySet {
    PolicySet {
        vla: Box::new(VlaStub::new(cfg.vla.clone(), cfg.sim.workspace.clone(), cfg.dt(), seed)),
        grasp: grasp_stubs(cfg, &cfg.grasp_stub, seed),
        power_grasp: Box::new(PowerGraspPolicy::new(cfg.power_grasp.clone())),
        release: Box::new(ReleaseHold),
    }
}

pub fn random_world(cfg: &SceneConfig, target: ObjectKind, seed: u64) -> Result<World, OrchestratorError> {
    let sim = Arc::new(cfg.sim.clone());
    let kinds = scene_kinds(&sim, target);
    Ok(World::random(sim, &kinds, seed)?)
}

pub fn run_options(cfg: &SceneConfig) -> RunOptions {
    RunOptions { tick_hz: cfg.tick_hz, max_ticks: cfg.orchestrator.budgets.total() + 10, ..RunOptions::default() }
}

/// Full reference episode on a random layout.
pub fn run_reference_episode(
    cfg: &SceneConfig,
    instruction: &Instruction,
    seed: u64,
    mode: Mode,
) -> Result<EpisodeResult, OrchestratorError> {
    let mut world = random_world(cfg, instruction.object, seed)?;
    let mut policies = reference_policies(cfg, seed);
    run_with(cfg, &mut world, &mut policies, instruction, mode, &run_options(cfg), &mut [])
}

pub fn run_with(
    cfg: &SceneConfig,
    world: &mut World,
    policies: &mut PolicySet,
    instruction: &Instruction,
    mode: Mode,
    opts: &RunOptions,
    observers: &mut [&mut dyn TickObserver],
) -> Result<EpisodeResult, OrchestratorError> {
    let machine = PhaseMachine::new(cfg.orchestrator.clone(), mode)?;
    run_episode(world, policies, &cfg.policy_table, machine, instruction, opts, observers)
}
