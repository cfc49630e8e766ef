use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{
    score_episode, FailureReason, Mode, OrchestratorError, PhaseMachine, PolicyTable, Score, Stage, TaskPhase,
};
use crate::instruction::Instruction;
use crate::policy::{Policy, PolicyError, PolicyId, PolicyInput};
use crate::sim::{GraspStrategy, ObjectTruth, PlateTruth, World, WorldOutcome};
use crate::types::{ArmPose, ObjectKind, HAND_JOINTS};

/// Loaded policies, addressed by [`PolicyId`].
pub struct PolicySet {
    pub vla: Box<dyn Policy>,
    pub grasp: BTreeMap<String, Box<dyn Policy>>,
    pub power_grasp: Box<dyn Policy>,
    pub release: Box<dyn Policy>,
}

impl PolicySet {
    pub fn get_mut(&mut self, id: &PolicyId) -> Option<&mut (dyn Policy + 'static)> {
        match id {
            PolicyId::Vla => Some(self.vla.as_mut()),
            PolicyId::Grasp(name) => self.grasp.get_mut(name).map(|p| p.as_mut()),
            PolicyId::PowerGraspProxy => Some(self.power_grasp.as_mut()),
            PolicyId::ReleaseHold => Some(self.release.as_mut()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub tick_hz: f64,
    /// Phase the machine is started in.
    pub start: Stage,
    /// End the run as soon as the machine leaves this phase.
    pub stop_after: Option<Stage>,
    /// Hard cap on ticks regardless of phase budgets.
    pub max_ticks: u64,
    /// Pace ticks against the wall clock.
    pub realtime: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { tick_hz: 5.0, start: Stage::Approach, stop_after: None, max_ticks: 2000, realtime: false }
    }
}

/// One line of the per-tick trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub tick: u64,
    pub phase: String,
    pub active_policy: String,
    pub arm: [f64; 6],
    pub hand: [f64; HAND_JOINTS],
    pub synergy: f64,
    pub sigma_vla: f64,
    pub sigma_grasp: f64,
}

/// Immutable per-tick view published to observers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub tick: u64,
    pub phase: String,
    pub active_policy: String,
    pub instruction: String,
    pub arm: [f64; 6],
    pub hand: [f64; HAND_JOINTS],
    pub synergy: f64,
    pub sigma_vla: f64,
    pub sigma_grasp: f64,
    pub objects: Vec<ObjectTruth>,
    pub plates: Vec<PlateTruth>,
}

pub trait TickObserver {
    fn on_tick(&mut self, snapshot: &Snapshot);
}

/// State at the approach-to-grasp handoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Handoff {
    pub tick: u64,
    pub hand: ArmPose,
    /// Planar hand-to-target distance (m).
    pub offset: f64,
    pub nearest: Option<ObjectKind>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraspRecord {
    pub tick: u64,
    pub object: ObjectKind,
    pub strategy: GraspStrategy,
    pub probability: f64,
    pub attached: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub trace: Vec<TraceRecord>,
    /// Tick at which each phase was entered, in order.
    pub phase_log: Vec<(u64, TaskPhase)>,
    pub final_phase: TaskPhase,
    pub outcome: WorldOutcome,
    /// Present when the run went to a terminal phase.
    pub score: Option<Score>,
    pub handoff: Option<Handoff>,
    pub grasps: Vec<GraspRecord>,
    /// Wall-clock time between consecutive tick starts (realtime runs only).
    pub tick_periods: Vec<Duration>,
}

impl EpisodeResult {
    pub fn phases(&self) -> Vec<TaskPhase> {
        self.phase_log.iter().map(|(_, p)| *p).collect()
    }
}

/// Contents of `meta.json` next to a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMeta {
    pub instruction: String,
    pub object: ObjectKind,
    pub plate: crate::types::PlateColor,
    pub seed: u64,
    pub mode: Mode,
    pub final_phase: String,
    pub score: Option<f64>,
    pub reason: Option<String>,
    pub ticks: usize,
    pub handoff_offset: Option<f64>,
}

impl EpisodeMeta {
    pub fn new(result: &EpisodeResult, instruction: &Instruction, seed: u64, mode: Mode) -> Self {
        Self {
            instruction: instruction.raw_text.clone(),
            object: instruction.object,
            plate: instruction.plate,
            seed,
            mode,
            final_phase: result.final_phase.to_string(),
            score: result.score.map(|s| s.value),
            reason: result.score.map(|s| s.reason.as_str().to_string()),
            ticks: result.trace.len(),
            handoff_offset: result.handoff.map(|h| h.offset),
        }
    }
}

pub fn write_trace_jsonl(path: &Path, trace: &[TraceRecord]) -> std::io::Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for r in trace {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_trace_jsonl(path: &Path) -> std::io::Result<Vec<TraceRecord>> {
    let r = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

/// Runs one episode until a terminal phase, the stop phase is left, or the
/// tick cap is reached.
pub fn run_episode(
    world: &mut World,
    policies: &mut PolicySet,
    table: &PolicyTable,
    mut machine: PhaseMachine,
    instruction: &Instruction,
    opts: &RunOptions,
    observers: &mut [&mut dyn TickObserver],
) -> Result<EpisodeResult, OrchestratorError> {
    let dt = 1.0 / opts.tick_hz;
    let period = Duration::from_secs_f64(dt);
    machine.start_at(opts.start, 0);
    let mut phase_log = vec![(0, machine.phase())];
    let mut trace = Vec::new();
    let mut grasps = Vec::new();
    let mut handoff = None;
    let mut nearest_at_entry = None;
    if opts.start == Stage::Grasping {
        let h = world.hand_pose();
        nearest_at_entry = world.truth().nearest(h.x, h.y).map(|o| o.kind);
    }
    let (mut sigma_vla, mut sigma_grasp) = (0.0, 0.0);
    let mut tick_periods = Vec::new();
    let started = Instant::now();
    let mut last_start: Option<Instant> = None;

    for t in 0..opts.max_ticks {
        let phase = machine.phase();
        if phase.is_terminal() {
            break;
        }
        if let Some(stop) = opts.stop_after {
            if phase.stage() != Some(stop) {
                break;
            }
        }
        if opts.realtime {
            let now = Instant::now();
            if let Some(prev) = last_start {
                tick_periods.push(now - prev);
            }
            last_start = Some(now);
        }

        let obs = world.observe(instruction, t);
        let truth = world.truth();
        let id = machine.active_policy(table, instruction.object)?;
        let policy = policies.get_mut(&id).ok_or_else(|| OrchestratorError::MissingPolicy(id.clone()))?;
        let output = match policy.act(&PolicyInput { obs: &obs, phase, truth: &truth }) {
            Ok(a) => a,
            Err(PolicyError::SafetyStop(_)) => {
                machine.fail(FailureReason::SafetyStop);
                phase_log.push((t, machine.phase()));
                break;
            }
        };
        match id {
            PolicyId::Vla => sigma_vla = output.sigma,
            PolicyId::Grasp(_) | PolicyId::PowerGraspProxy => sigma_grasp = output.sigma,
            PolicyId::ReleaseHold => {}
        }
        let out = machine.tick(table, &obs, &output)?;
        let record = TraceRecord {
            tick: t,
            phase: phase.to_string(),
            active_policy: id.to_string(),
            arm: obs.arm.to_array(),
            hand: obs.hand.joints,
            synergy: obs.hand.synergy,
            sigma_vla,
            sigma_grasp,
        };

        let report = world.step(&out.command, dt);
        if let Some(Ok(g)) = report.grasp {
            grasps.push(GraspRecord {
                tick: t,
                object: g.kind,
                strategy: g.strategy,
                probability: g.probability,
                attached: g.attached,
            });
        }
        if out.phase != phase {
            phase_log.push((t + 1, out.phase));
        }
        if phase == TaskPhase::Approach && out.phase == TaskPhase::Grasping {
            let hand = world.hand_pose();
            let truth = world.truth();
            let nearest = truth.nearest(hand.x, hand.y).map(|o| o.kind);
            let offset = truth
                .object(instruction.object)
                .map(|o| hand.planar_distance_to(o.position[0], o.position[1]))
                .unwrap_or(f64::INFINITY);
            nearest_at_entry = nearest;
            handoff = Some(Handoff { tick: t, hand, offset, nearest });
        }

        if !observers.is_empty() {
            let snapshot = Snapshot {
                tick: t,
                phase: out.phase.to_string(),
                active_policy: record.active_policy.clone(),
                instruction: instruction.raw_text.clone(),
                arm: world.hand_pose().to_array(),
                hand: world.hand().joints,
                synergy: world.hand().synergy,
                sigma_vla,
                sigma_grasp,
                objects: world.truth().objects,
                plates: truth.plates.clone(),
            };
            for o in observers.iter_mut() {
                o.on_tick(&snapshot);
            }
        }
        trace.push(record);

        if opts.realtime {
            let deadline = started + period * (t as u32 + 1);
            let now = Instant::now();
            if deadline > now {
                std::thread::sleep(deadline - now);
            }
        }
    }

    let final_phase = machine.phase();
    let outcome = world.outcome(instruction.object, nearest_at_entry);
    let score = final_phase.is_terminal().then(|| score_episode(&outcome, instruction));
    Ok(EpisodeResult { trace, phase_log, final_phase, outcome, score, handoff, grasps, tick_periods })
}
