//! Phase machine that hands control between the approach/transport policy
//! and the object-specific grasp policies on event-signal edges.

mod episode;
mod score;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::event::{Edge, EdgeConfig, EdgeConfigError, EdgeDetector, EventSample};
use crate::policy::PolicyId;
use crate::types::{Action, HandCommand, ObjectKind, Observation};

pub use episode::{
    read_trace_jsonl, run_episode, write_trace_jsonl, EpisodeMeta, EpisodeResult, GraspRecord, Handoff, PolicySet,
    RunOptions, Snapshot, TickObserver, TraceRecord,
};
pub use score::{score_episode, Score, ScoreReason};

/// A phase in which some policy is in control.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Approach,
    Grasping,
    Transport,
    Release,
}

impl Stage {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Approach => "approach",
            Stage::Grasping => "grasping",
            Stage::Transport => "transport",
            Stage::Release => "release",
        }
    }

    pub fn phase(&self) -> TaskPhase {
        match self {
            Stage::Approach => TaskPhase::Approach,
            Stage::Grasping => TaskPhase::Grasping,
            Stage::Transport => TaskPhase::Transport,
            Stage::Release => TaskPhase::Release,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FailureReason {
    Timeout(Stage),
    SafetyStop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskPhase {
    Idle,
    Approach,
    Grasping,
    Transport,
    Release,
    Done,
    Failure(FailureReason),
}

impl TaskPhase {
    pub fn is_terminal(&self) -> bool {
        matches!(self, TaskPhase::Done | TaskPhase::Failure(_))
    }

    pub fn stage(&self) -> Option<Stage> {
        match self {
            TaskPhase::Approach => Some(Stage::Approach),
            TaskPhase::Grasping => Some(Stage::Grasping),
            TaskPhase::Transport => Some(Stage::Transport),
            TaskPhase::Release => Some(Stage::Release),
            _ => None,
        }
    }

    /// Position in the nominal sequence Idle..Done. Failure has none.
    pub fn ordinal(&self) -> Option<u8> {
        match self {
            TaskPhase::Idle => Some(0),
            TaskPhase::Approach => Some(1),
            TaskPhase::Grasping => Some(2),
            TaskPhase::Transport => Some(3),
            TaskPhase::Release => Some(4),
            TaskPhase::Done => Some(5),
            TaskPhase::Failure(_) => None,
        }
    }
}

impl fmt::Display for TaskPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TaskPhase::Idle => f.write_str("idle"),
            TaskPhase::Approach => f.write_str("approach"),
            TaskPhase::Grasping => f.write_str("grasping"),
            TaskPhase::Transport => f.write_str("transport"),
            TaskPhase::Release => f.write_str("release"),
            TaskPhase::Done => f.write_str("done"),
            TaskPhase::Failure(FailureReason::Timeout(s)) => write!(f, "failure:timeout:{}", s.as_str()),
            TaskPhase::Failure(FailureReason::SafetyStop) => f.write_str("failure:safety_stop"),
        }
    }
}

impl std::str::FromStr for TaskPhase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "idle" => TaskPhase::Idle,
            "approach" => TaskPhase::Approach,
            "grasping" => TaskPhase::Grasping,
            "transport" => TaskPhase::Transport,
            "release" => TaskPhase::Release,
            "done" => TaskPhase::Done,
            "failure:safety_stop" => TaskPhase::Failure(FailureReason::SafetyStop),
            other => {
                let stage = match other.strip_prefix("failure:timeout:") {
                    Some("approach") => Stage::Approach,
                    Some("grasping") => Stage::Grasping,
                    Some("transport") => Stage::Transport,
                    Some("release") => Stage::Release,
                    _ => return Err(format!("unknown phase `{other}`")),
                };
                TaskPhase::Failure(FailureReason::Timeout(stage))
            }
        })
    }
}

/// True when `phases` (consecutive distinct phases of one episode) is a
/// prefix of Idle, Approach, Grasping, Transport, Release, Done, optionally
/// ending in a single Failure.
pub fn is_legal_phase_sequence(phases: &[TaskPhase]) -> bool {
    let mut prev: Option<u8> = None;
    for (i, p) in phases.iter().enumerate() {
        match p.ordinal() {
            Some(o) => {
                let expected = prev.map(|v| v + 1).unwrap_or(o);
                // the first entry may be any running phase (trials can start mid-task)
                if o != expected {
                    return false;
                }
                prev = Some(o);
            }
            None => return i + 1 == phases.len() && prev.is_some_and(|v| v < 5),
        }
    }
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Hybrid,
    Baseline,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Hybrid => "hybrid",
            Mode::Baseline => "baseline",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hybrid" => Ok(Mode::Hybrid),
            "baseline" => Ok(Mode::Baseline),
            other => Err(format!("unknown mode `{other}` (expected hybrid or baseline)")),
        }
    }
}

/// Object kind → name of the grasp policy trained for it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PolicyTable(pub BTreeMap<ObjectKind, String>);

impl Default for PolicyTable {
    fn default() -> Self {
        Self(ObjectKind::ALL.iter().map(|k| (*k, format!("diffusion_{k}"))).collect())
    }
}

impl PolicyTable {
    pub fn lookup(&self, object: ObjectKind) -> Result<PolicyId, OrchestratorError> {
        self.0.get(&object).map(|n| PolicyId::Grasp(n.clone())).ok_or(OrchestratorError::LookupMiss(object))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhaseBudgets {
    pub approach: u64,
    pub grasping: u64,
    pub transport: u64,
    pub release: u64,
}

impl Default for PhaseBudgets {
    fn default() -> Self {
        Self { approach: 300, grasping: 300, transport: 300, release: 25 }
    }
}

impl PhaseBudgets {
    pub fn get(&self, stage: Stage) -> u64 {
        match stage {
            Stage::Approach => self.approach,
            Stage::Grasping => self.grasping,
            Stage::Transport => self.transport,
            Stage::Release => self.release,
        }
    }

    pub fn total(&self) -> u64 {
        self.approach + self.grasping + self.transport + self.release
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OrchestratorConfig {
    pub edge: EdgeConfig,
    pub budgets: PhaseBudgets,
    /// Ticks the hand is held open in Release before the episode is done.
    pub release_hold_ticks: u32,
}

impl Default for OrchestratorConfig {
    fn default() -> Self {
        Self { edge: EdgeConfig::default(), budgets: PhaseBudgets::default(), release_hold_ticks: 10 }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum OrchestratorError {
    #[error("no grasp policy configured for `{0}`")]
    LookupMiss(ObjectKind),
    #[error("policy `{0}` is not loaded")]
    MissingPolicy(PolicyId),
    #[error("tick called in terminal phase {0}")]
    Terminal(TaskPhase),
    #[error(transparent)]
    Edge(#[from] EdgeConfigError),
    #[error(transparent)]
    Scene(#[from] crate::sim::SceneError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TickOutput {
    pub phase: TaskPhase,
    pub command: Action,
    pub switch: Option<PolicyId>,
    pub edge: Edge,
}

#[derive(Debug, Clone)]
pub struct PhaseMachine {
    phase: TaskPhase,
    vla_edge: EdgeDetector,
    grasp_edge: EdgeDetector,
    phase_entry_tick: u64,
    config: OrchestratorConfig,
    mode: Mode,
    release_ticks: u32,
    grasp_rising_seen: bool,
}

impl PhaseMachine {
    pub fn new(config: OrchestratorConfig, mode: Mode) -> Result<Self, OrchestratorError> {
        Ok(Self {
            phase: TaskPhase::Idle,
            vla_edge: EdgeDetector::new(config.edge)?,
            grasp_edge: EdgeDetector::new(config.edge)?,
            phase_entry_tick: 0,
            config,
            mode,
            release_ticks: 0,
            grasp_rising_seen: false,
        })
    }

    pub fn phase(&self) -> TaskPhase {
        self.phase
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn phase_entry_tick(&self) -> u64 {
        self.phase_entry_tick
    }

    pub fn grasp_rising_seen(&self) -> bool {
        self.grasp_rising_seen
    }

    /// Enters `stage` directly, for trials that begin mid-task.
    pub fn start_at(&mut self, stage: Stage, tick: u64) {
        self.enter(stage.phase(), tick);
    }

    pub fn fail(&mut self, reason: FailureReason) {
        self.phase = TaskPhase::Failure(reason);
    }

    fn enter(&mut self, phase: TaskPhase, tick: u64) {
        self.phase = phase;
        self.phase_entry_tick = tick;
        self.release_ticks = 0;
    }

    /// The policy that must be queried this tick.
    pub fn active_policy(&self, table: &PolicyTable, object: ObjectKind) -> Result<PolicyId, OrchestratorError> {
        match self.phase {
            TaskPhase::Idle | TaskPhase::Approach | TaskPhase::Transport => Ok(PolicyId::Vla),
            TaskPhase::Grasping => self.grasp_policy(table, object),
            TaskPhase::Release => Ok(PolicyId::ReleaseHold),
            p @ (TaskPhase::Done | TaskPhase::Failure(_)) => Err(OrchestratorError::Terminal(p)),
        }
    }

    fn grasp_policy(&self, table: &PolicyTable, object: ObjectKind) -> Result<PolicyId, OrchestratorError> {
        match self.mode {
            Mode::Hybrid => table.lookup(object),
            Mode::Baseline => Ok(PolicyId::PowerGraspProxy),
        }
    }

    pub fn tick(&mut self, table: &PolicyTable, obs: &Observation, output: &Action) -> Result<TickOutput, OrchestratorError> {
        let t = obs.tick;
        if self.phase == TaskPhase::Idle {
            self.enter(TaskPhase::Approach, t);
        }
        let sample = EventSample::new(output.sigma, t);
        let mut command = *output;
        let mut switch = None;
        let mut edge = Edge::None;
        match self.phase {
            TaskPhase::Approach => {
                edge = self.vla_edge.detect(sample);
                if edge == Edge::Rising {
                    let id = self.grasp_policy(table, obs.instruction.object)?;
                    command.arm_delta = [0.0; 6];
                    self.grasp_edge.reset();
                    self.enter(TaskPhase::Grasping, t + 1);
                    switch = Some(id);
                }
            }
            TaskPhase::Grasping => {
                edge = self.grasp_edge.detect(sample);
                if edge == Edge::Rising {
                    command.arm_delta = [0.0; 6];
                    self.grasp_rising_seen = true;
                    self.enter(TaskPhase::Transport, t + 1);
                    switch = Some(PolicyId::Vla);
                }
            }
            TaskPhase::Transport => {
                edge = self.vla_edge.detect(sample);
                if edge == Edge::Falling {
                    command.arm_delta = [0.0; 6];
                    self.enter(TaskPhase::Release, t + 1);
                    switch = Some(PolicyId::ReleaseHold);
                }
            }
            TaskPhase::Release => {
                command = Action::hold(HandCommand::open(), 0.0);
                self.release_ticks += 1;
                if self.release_ticks >= self.config.release_hold_ticks {
                    self.phase = TaskPhase::Done;
                }
            }
            p => return Err(OrchestratorError::Terminal(p)),
        }
        if switch.is_none() {
            if let Some(stage) = self.phase.stage() {
                if t + 1 >= self.phase_entry_tick + self.config.budgets.get(stage) {
                    command.arm_delta = [0.0; 6];
                    self.phase = TaskPhase::Failure(FailureReason::Timeout(stage));
                }
            }
        }
        Ok(TickOutput { phase: self.phase, command, switch, edge })
    }
}
