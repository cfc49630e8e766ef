//! Event-signal policy switching for pick-and-place with a multi-fingered
//! hand: a phase machine hands control between a high-level approach and
//! transport policy and object-specific grasp policies on debounced edges
//! of a scalar event channel.

pub mod config;
pub mod data;
pub mod eval;
pub mod event;
pub mod image;
pub mod instruction;
pub mod orchestrator;
pub mod policy;
pub mod rng;
pub mod scenario;
pub mod sim;
pub mod teleop;
pub mod transport;
pub mod types;

pub use config::SceneConfig;
pub use event::{Edge, EdgeConfig, EdgeDetector, EventSample};
pub use instruction::{parse_instruction, Instruction, Vocabulary};
pub use orchestrator::{Mode, PhaseMachine, Score, ScoreReason, TaskPhase};
pub use types::{Action, ArmPose, HandCommand, ObjectKind, Observation, PlateColor};
