//! Live teleoperation: a world driven by queued operator commands, the
//! snapshot stream a console renders from, and saving a recording into the
//! dataset format.
//!
//! On the wire both directions are HPS1 frames with JSON payloads:
//! [`TeleopSnapshot`] as `Snapshot` (0x04), [`TeleopCmd`] as `TeleopCmd` (0x05).

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::Receiver;
use std::sync::Arc;
use std::time::{Duration, Instant};

use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::config::SceneConfig;
use crate::data::{self, DataError, DemoMeta, Marker, Purpose, Segment, Step, Violation};
use crate::image::Image;
use crate::instruction::{parse_instruction, Instruction, InstructionError, Vocabulary};
use crate::orchestrator::{Mode, OrchestratorError, Snapshot, TickObserver};
use crate::scenario::{random_world, reference_policies, run_options, run_with};
use crate::sim::{CameraConfig, ObjectTruth, PlateTruth, World};
use crate::transport::{Frame, FrameType};
use crate::types::{Action, HandCommand, ObjectKind, PlateColor, HAND_JOINTS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TeleopCmd {
    /// Arm motion for the next tick; queued drives add up.
    Drive { arm_delta: [f64; 6] },
    /// Hand closure target, held until changed.
    Grip { synergy: f64 },
    /// Event button state.
    Sigma { pressed: bool },
    /// Starts a segment at the next tick.
    Marker { segment: Segment },
    /// New random layout.
    Reset { object: ObjectKind, plate: PlateColor, seed: u64 },
    /// Hands the scene to the autonomous system until the episode ends.
    Command { text: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionMode {
    Teleop,
    Watch,
}

/// What the console sees each tick. State is before the tick's motion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeleopSnapshot {
    pub tick: u64,
    pub mode: SessionMode,
    pub phase: String,
    pub active_policy: String,
    pub instruction: String,
    pub arm: [f64; 6],
    pub hand: [f64; HAND_JOINTS],
    pub synergy: f64,
    pub sigma_operator: u8,
    pub sigma_vla: f64,
    pub sigma_grasp: f64,
    pub segment: Option<Segment>,
    pub objects: Vec<ObjectTruth>,
    pub plates: Vec<PlateTruth>,
    /// Frame size of `cam1`/`cam2`.
    pub camera: [u32; 2],
    /// Base64 of raw RGB rows; empty when rendering is off.
    pub cam1: String,
    pub cam2: String,
}

#[derive(Debug, thiserror::Error)]
pub enum TeleopError {
    #[error(transparent)]
    Instruction(#[from] InstructionError),
    #[error(transparent)]
    Scene(#[from] OrchestratorError),
    #[error("bad frame: {0}")]
    Frame(String),
}

pub fn encode_snapshot(seq: u32, s: &TeleopSnapshot) -> Frame {
    Frame::new(FrameType::Snapshot, seq, serde_json::to_vec(s).expect("snapshot serializes"))
}

pub fn decode_snapshot(f: &Frame) -> Result<TeleopSnapshot, TeleopError> {
    if f.kind != FrameType::Snapshot {
        return Err(TeleopError::Frame(format!("expected a snapshot, got {:?}", f.kind)));
    }
    serde_json::from_slice(&f.payload).map_err(|e| TeleopError::Frame(e.to_string()))
}

pub fn encode_cmd(seq: u32, c: &TeleopCmd) -> Frame {
    Frame::new(FrameType::TeleopCmd, seq, serde_json::to_vec(c).expect("command serializes"))
}

pub fn decode_cmd(f: &Frame) -> Result<TeleopCmd, TeleopError> {
    if f.kind != FrameType::TeleopCmd {
        return Err(TeleopError::Frame(format!("expected a teleop command, got {:?}", f.kind)));
    }
    serde_json::from_slice(&f.payload).map_err(|e| TeleopError::Frame(e.to_string()))
}

fn b64(img: &Image) -> String {
    base64::engine::general_purpose::STANDARD.encode(img.pixels())
}

pub struct TeleopSession {
    scene: SceneConfig,
    vocabulary: Vocabulary,
    world: World,
    instruction: Instruction,
    seed: u64,
    tick: u64,
    arm_delta: [f64; 6],
    synergy: f64,
    sigma: bool,
    segment: Option<Segment>,
    watch: Option<Instruction>,
}

impl TeleopSession {
    /// `camera` sets the rendered frame size for the console and recordings.
    pub fn new(scene: &SceneConfig, camera: CameraConfig, instruction: Instruction, seed: u64) -> Result<Self, TeleopError> {
        let mut scene = scene.clone();
        scene.sim.camera = camera;
        let world = random_world(&scene, instruction.object, seed)?;
        let synergy = world.hand().synergy;
        Ok(Self {
            scene,
            vocabulary: Vocabulary::default(),
            world,
            instruction,
            seed,
            tick: 0,
            arm_delta: [0.0; 6],
            synergy,
            sigma: false,
            segment: None,
            watch: None,
        })
    }

    pub fn with_vocabulary(mut self, v: Vocabulary) -> Self {
        self.vocabulary = v;
        self
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn apply(&mut self, cmd: &TeleopCmd) -> Result<(), TeleopError> {
        match cmd {
            TeleopCmd::Drive { arm_delta } => {
                for (a, d) in self.arm_delta.iter_mut().zip(arm_delta) {
                    *a += d;
                }
            }
            TeleopCmd::Grip { synergy } => self.synergy = synergy.clamp(0.0, 1.0),
            TeleopCmd::Sigma { pressed } => self.sigma = *pressed,
            TeleopCmd::Marker { segment } => self.segment = Some(*segment),
            TeleopCmd::Reset { object, plate, seed } => {
                self.instruction = Instruction::canonical(*object, *plate);
                self.world = random_world(&self.scene, *object, *seed)?;
                self.seed = *seed;
                self.arm_delta = [0.0; 6];
                self.synergy = self.world.hand().synergy;
                self.sigma = false;
                self.segment = None;
            }
            TeleopCmd::Command { text } => self.watch = Some(parse_instruction(text, &self.vocabulary)?),
        }
        Ok(())
    }

    /// Publishes the current state, then advances the world one tick.
    pub fn step(&mut self) -> TeleopSnapshot {
        let obs = self.world.observe(&self.instruction, self.tick);
        let truth = self.world.truth();
        let snapshot = TeleopSnapshot {
            tick: self.tick,
            mode: SessionMode::Teleop,
            phase: "teleop".into(),
            active_policy: "operator".into(),
            instruction: self.instruction.raw_text.clone(),
            arm: obs.arm.to_array(),
            hand: obs.hand.joints,
            synergy: obs.hand.synergy,
            sigma_operator: self.sigma as u8,
            sigma_vla: 0.0,
            sigma_grasp: 0.0,
            segment: self.segment,
            objects: truth.objects,
            plates: truth.plates,
            camera: [obs.cam1.width(), obs.cam1.height()],
            cam1: b64(&obs.cam1),
            cam2: b64(&obs.cam2),
        };
        let hand = HandCommand::JointTargets(self.scene.sim.hand.posture(self.synergy));
        let action = Action::new(std::mem::take(&mut self.arm_delta), hand, self.sigma as u8 as f64);
        self.world.step(&action, self.scene.dt());
        self.tick += 1;
        snapshot
    }

    /// Runs a pending language command as a full autonomous episode on a
    /// fresh layout, publishing every tick.
    fn run_watch(&mut self, instruction: Instruction, realtime: bool, publish: &mut dyn FnMut(TeleopSnapshot)) -> Result<(), TeleopError> {
        struct Forward<'a> {
            publish: &'a mut dyn FnMut(TeleopSnapshot),
            first_tick: u64,
        }
        impl TickObserver for Forward<'_> {
            fn on_tick(&mut self, s: &Snapshot) {
                (self.publish)(TeleopSnapshot {
                    tick: self.first_tick + s.tick,
                    mode: SessionMode::Watch,
                    phase: s.phase.clone(),
                    active_policy: s.active_policy.clone(),
                    instruction: s.instruction.clone(),
                    arm: s.arm,
                    hand: s.hand,
                    synergy: s.synergy,
                    sigma_operator: 0,
                    sigma_vla: s.sigma_vla,
                    sigma_grasp: s.sigma_grasp,
                    segment: None,
                    objects: s.objects.clone(),
                    plates: s.plates.clone(),
                    camera: [0, 0],
                    cam1: String::new(),
                    cam2: String::new(),
                });
            }
        }
        let seed = self.seed.wrapping_add(self.tick);
        let mut world = random_world(&self.scene, instruction.object, seed)?;
        let mut policies = reference_policies(&self.scene, seed);
        let opts = crate::orchestrator::RunOptions { realtime, ..run_options(&self.scene) };
        let mut fwd = Forward { publish, first_tick: self.tick };
        let r = run_with(&self.scene, &mut world, &mut policies, &instruction, Mode::Hybrid, &opts, &mut [&mut fwd])?;
        self.tick += r.trace.len() as u64;
        self.world = world;
        self.instruction = instruction;
        self.arm_delta = [0.0; 6];
        self.synergy = self.world.hand().synergy;
        Ok(())
    }
}

/// Fixed-rate loop: drains queued commands at each tick boundary, steps the
/// session and publishes the snapshot. Returns when `stop` is set or the
/// command channel closes.
pub fn run_teleop_loop(
    session: &mut TeleopSession,
    commands: &Receiver<TeleopCmd>,
    stop: &Arc<AtomicBool>,
    realtime: bool,
    mut publish: impl FnMut(TeleopSnapshot),
    mut on_error: impl FnMut(TeleopError),
) {
    let period = Duration::from_secs_f64(session.scene.dt());
    let mut next = Instant::now();
    while !stop.load(Ordering::SeqCst) {
        loop {
            match commands.try_recv() {
                Ok(cmd) => {
                    if let Err(e) = session.apply(&cmd) {
                        on_error(e);
                    }
                }
                Err(std::sync::mpsc::TryRecvError::Empty) => break,
                Err(std::sync::mpsc::TryRecvError::Disconnected) => return,
            }
        }
        if let Some(instruction) = session.watch.take() {
            if let Err(e) = session.run_watch(instruction, realtime, &mut publish) {
                on_error(e);
            }
            next = Instant::now();
            continue;
        }
        publish(session.step());
        if realtime {
            next += period;
            let now = Instant::now();
            if next > now {
                std::thread::sleep(next - now);
            } else {
                next = now;
            }
        }
    }
}

/// One recorded tick as uploaded by a console.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UploadStep {
    pub arm: [f64; 6],
    pub hand: [f64; HAND_JOINTS],
    pub sigma_operator: u8,
    pub segment: Option<Segment>,
    /// Base64 of raw RGB rows at `camera` size.
    pub cam1: String,
    pub cam2: String,
}

impl From<&TeleopSnapshot> for UploadStep {
    fn from(s: &TeleopSnapshot) -> Self {
        Self {
            arm: s.arm,
            hand: s.hand,
            sigma_operator: s.sigma_operator,
            segment: s.segment,
            cam1: s.cam1.clone(),
            cam2: s.cam2.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeUpload {
    pub purpose: Purpose,
    pub instruction: String,
    pub object: ObjectKind,
    #[serde(default)]
    pub plate: Option<PlateColor>,
    pub operator: String,
    #[serde(default)]
    pub seed: u64,
    pub camera: [u32; 2],
    pub steps: Vec<UploadStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SavedEpisode {
    pub id: String,
    pub path: PathBuf,
    pub violations: Vec<Violation>,
}

fn decode_frame_image(text: &str, camera: [u32; 2], tick: usize) -> Result<Image, DataError> {
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(text)
        .map_err(|e| DataError::Upload(format!("step {tick}: frame is not base64: {e}")))?;
    Image::from_raw(camera[0], camera[1], bytes).map_err(|source| DataError::Image { path: format!("step {tick}").into(), source })
}

/// Markers from the per-step segment labels; every step needs one.
pub fn markers_from_steps(steps: &[UploadStep]) -> Result<Vec<Marker>, DataError> {
    let mut out: Vec<Marker> = Vec::new();
    for (t, s) in steps.iter().enumerate() {
        let seg = s.segment.ok_or_else(|| DataError::IncompleteMarkers(format!("step {t} has no segment")))?;
        match out.last_mut() {
            Some(m) if m.segment == seg => m.end = t as u64,
            _ => out.push(Marker { segment: seg, start: t as u64, end: t as u64 }),
        }
    }
    Ok(out)
}

/// Writes an uploaded recording under `<dataset>/episodes/` and validates it.
pub fn save_upload(dataset: &Path, upload: &EpisodeUpload, hand: &crate::types::HandModel) -> Result<SavedEpisode, DataError> {
    if upload.purpose == Purpose::Vla && upload.plate.is_none() {
        return Err(DataError::Upload("pick-and-place recording without a plate".into()));
    }
    let markers = markers_from_steps(&upload.steps)?;
    let steps: Vec<Step> = upload
        .steps
        .iter()
        .enumerate()
        .map(|(t, s)| {
            let (cam1, cam2) = data::frame_names(t as u64);
            Step { tick: t as u64, arm: s.arm, hand: s.hand, sigma_operator: s.sigma_operator, cam1, cam2 }
        })
        .collect();
    let root = dataset.join(data::EPISODES);
    let prefix = match upload.purpose {
        Purpose::Vla => "vla",
        Purpose::Diffusion => "diffusion",
    };
    let id = (0..)
        .map(|n| format!("{prefix}_{}_ui_{n:03}", upload.object))
        .find(|id| !root.join(id).exists())
        .expect("unbounded search");
    let meta = DemoMeta {
        id,
        purpose: upload.purpose,
        instruction: upload.instruction.clone(),
        object: upload.object,
        plate: upload.plate,
        seed: upload.seed,
        operator: upload.operator.clone(),
        camera: upload.camera,
        markers,
    };
    data::check_complete(&meta, &steps)?;
    let frames = upload
        .steps
        .iter()
        .enumerate()
        .map(|(t, s)| Ok((decode_frame_image(&s.cam1, upload.camera, t)?, decode_frame_image(&s.cam2, upload.camera, t)?)))
        .collect::<Result<Vec<_>, DataError>>()?;
    let dir = root.join(&meta.id);
    data::write_episode(&dir, &meta, &steps, &frames)?;
    let rel = format!("{}/{}", data::EPISODES, meta.id);
    let (_, violations) = data::validate_episode(&dir, &rel, hand, data::DEFAULT_CLOSE_TICKS);
    Ok(SavedEpisode { id: meta.id, path: dir, violations })
}
