//! Scripted stand-in for teleoperated demonstration collection.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::{Arc, Mutex};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{episode_digest, io_err, par_map, DataError, DemoMeta, Marker, Purpose, Segment, Step, EPISODES, MANIFEST};
use crate::config::SceneConfig;
use crate::image::Image;
use crate::instruction::Instruction;
use crate::orchestrator::{Mode, OrchestratorError, PolicySet, Stage, TaskPhase};
use crate::policy::{attempts_count, GraspStub, Policy, PolicyError, PolicyInput};
use crate::rng::{self, Stream};
use crate::scenario::{random_world, reference_policies, run_options, run_with};
use crate::sim::{CameraConfig, World};
use crate::types::{joint, Action, ArmPose, ObjectKind, PlateColor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CollectionPlan {
    pub name: String,
    /// Objects recorded in full pick-and-place demos, once per plate.
    pub vla_objects: Vec<ObjectKind>,
    pub plates: Vec<PlateColor>,
    pub vla_per_combo: usize,
    /// Grasp-only demos per object.
    pub diffusion: BTreeMap<ObjectKind, usize>,
    /// Grasp demos per object that deliberately miss first and re-grasp.
    pub recovery_per_object: usize,
    /// Hand height above the object top at the start of a grasp demo (m).
    pub start_height: f64,
    /// Planar scatter of the grasp-demo start over the object (m).
    pub start_jitter: f64,
    /// Range of object-to-table-edge gaps for grasp demos (m).
    pub edge_distance: [f64; 2],
    /// Recorded frame size (width, height).
    pub camera: [u32; 2],
    /// Re-recordings allowed when a scripted demo fails.
    pub max_retries: u32,
}

impl Default for CollectionPlan {
    fn default() -> Self {
        Self {
            name: "default".into(),
            vla_objects: vec![ObjectKind::Pepper, ObjectKind::Tape, ObjectKind::Paper],
            plates: vec![PlateColor::Yellow, PlateColor::Purple],
            vla_per_combo: 20,
            diffusion: BTreeMap::from([(ObjectKind::Tape, 40), (ObjectKind::Paper, 40), (ObjectKind::Pepper, 30)]),
            recovery_per_object: 3,
            start_height: 0.05,
            start_jitter: 0.01,
            edge_distance: [0.01, 0.12],
            camera: [64, 48],
            max_retries: 20,
        }
    }
}

impl CollectionPlan {
    pub fn named(name: &str) -> Option<Self> {
        (name == "default").then(Self::default)
    }

    pub fn validate(&self, scene: &SceneConfig) -> Result<(), DataError> {
        let objects = self.vla_objects.iter().chain(self.diffusion.keys());
        for o in objects {
            if !scene.sim.objects.contains_key(o) {
                return Err(DataError::Plan(format!("object {o} has no geometry in the scene config")));
            }
        }
        for p in &self.plates {
            if !scene.sim.plates.contains_key(p) {
                return Err(DataError::Plan(format!("plate {p} missing from the scene config")));
            }
        }
        for (o, &n) in &self.diffusion {
            if self.recovery_per_object > n {
                return Err(DataError::Plan(format!("{o}: {} recovery demos but only {n} grasp demos", self.recovery_per_object)));
            }
        }
        if self.camera[0] == 0 || self.camera[1] == 0 {
            return Err(DataError::Plan("camera size must be positive".into()));
        }
        if !(self.edge_distance[0] <= self.edge_distance[1] && self.edge_distance[0] >= 0.0) {
            return Err(DataError::Plan("edge distance range is empty".into()));
        }
        Ok(())
    }

    pub fn vla_counts(&self) -> BTreeMap<String, usize> {
        let mut m = BTreeMap::new();
        for o in &self.vla_objects {
            for p in &self.plates {
                m.insert(combo_key(*o, Some(*p)), self.vla_per_combo);
            }
        }
        m
    }

    pub fn diffusion_counts(&self) -> BTreeMap<String, usize> {
        self.diffusion.iter().map(|(o, n)| (o.to_string(), *n)).collect()
    }
}

pub(crate) fn combo_key(object: ObjectKind, plate: Option<PlateColor>) -> String {
    match plate {
        Some(p) => format!("{object}/{p}"),
        None => object.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub purpose: Purpose,
    pub object: ObjectKind,
    pub plate: Option<PlateColor>,
    pub attempts: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub plan: CollectionPlan,
    /// Episodes per "object/plate".
    pub vla_counts: BTreeMap<String, usize>,
    /// Episodes per object.
    pub diffusion_counts: BTreeMap<String, usize>,
    pub episodes: Vec<ManifestEntry>,
    pub dataset_sha256: String,
}

impl Manifest {
    pub fn load(dataset: &Path) -> Result<Self, DataError> {
        let path = dataset.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        serde_json::from_str(&text).map_err(|e| DataError::Json { path, line: e.line(), message: e.to_string() })
    }

    pub fn digest(entries: &[ManifestEntry]) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for e in entries {
            h.update(format!("{} {}\n", e.id, e.sha256).as_bytes());
        }
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, Copy)]
enum Job {
    Vla { object: ObjectKind, plate: PlateColor, index: usize },
    Diffusion { object: ObjectKind, index: usize, recover: bool },
}

impl Job {
    fn id(&self) -> String {
        match *self {
            Job::Vla { object, plate, index } => format!("vla_{object}_{plate}_{index:03}"),
            Job::Diffusion { object, index, .. } => format!("diffusion_{object}_{index:03}"),
        }
    }
}

fn jobs(plan: &CollectionPlan) -> Vec<Job> {
    let mut out = Vec::new();
    for &object in &plan.vla_objects {
        for &plate in &plan.plates {
            out.extend((0..plan.vla_per_combo).map(|index| Job::Vla { object, plate, index }));
        }
    }
    for (&object, &n) in &plan.diffusion {
        // spread the re-grasp demos through the run
        let stride = n / plan.recovery_per_object.max(1);
        out.extend((0..n).map(|index| Job::Diffusion {
            object,
            index,
            recover: plan.recovery_per_object > 0 && index % stride == 0 && index / stride < plan.recovery_per_object,
        }));
    }
    out
}

struct Recorded {
    meta: DemoMeta,
    steps: Vec<Step>,
    frames: Vec<(Image, Image)>,
    attempts: usize,
}

/// Records the camera frames every policy call sees.
struct Tap {
    inner: Box<dyn Policy>,
    frames: Arc<Mutex<Vec<(Image, Image)>>>,
}

impl Policy for Tap {
    fn act(&mut self, input: &PolicyInput<'_>) -> Result<Action, PolicyError> {
        self.frames.lock().expect("frame sink").push((input.obs.cam1.clone(), input.obs.cam2.clone()));
        self.inner.act(input)
    }
}


fn tap(set: PolicySet, frames: &Arc<Mutex<Vec<(Image, Image)>>>) -> PolicySet {
    let wrap = |inner: Box<dyn Policy>| Box::new(Tap { inner, frames: Arc::clone(frames) }) as Box<dyn Policy>;
    PolicySet {
        vla: wrap(set.vla),
        grasp: set.grasp.into_iter().map(|(k, p)| (k, wrap(p))).collect(),
        power_grasp: wrap(set.power_grasp),
        release: wrap(set.release),
    }
}

fn segment_of(phase: &str) -> Option<Segment> {
    let phase: TaskPhase = phase.parse().ok()?;
    Some(match phase.stage()? {
        Stage::Approach => Segment::Approach,
        Stage::Grasping => Segment::Grasp,
        Stage::Transport => Segment::Transport,
        Stage::Release => Segment::Release,
    })
}

fn markers_from(segments: &[Segment]) -> Vec<Marker> {
    let mut out: Vec<Marker> = Vec::new();
    for (t, &s) in segments.iter().enumerate() {
        match out.last_mut() {
            Some(m) if m.segment == s => m.end = t as u64,
            _ => out.push(Marker { segment: s, start: t as u64, end: t as u64 }),
        }
    }
    out
}

fn attempts_of(steps: &[Step], scene: &SceneConfig) -> usize {
    let mcp: Vec<f64> = steps.iter().map(|s| s.hand[joint::INDEX_MCP]).collect();
    attempts_count(&mcp, &scene.attempts)
}

fn record_vla(scene: &SceneConfig, plan: &CollectionPlan, job: Job, id: String, seed: u64) -> Result<Option<Recorded>, DataError> {
    let Job::Vla { object, plate, .. } = job else { unreachable!() };
    let instruction = Instruction::canonical(object, plate);
    let mut world = random_world(scene, object, seed)?;
    let sink = Arc::new(Mutex::new(Vec::new()));
    let mut policies = tap(reference_policies(scene, seed), &sink);
    let r = run_with(scene, &mut world, &mut policies, &instruction, Mode::Hybrid, &run_options(scene), &mut [])?;
    let success = r.score.is_some_and(|s| s.reason == crate::orchestrator::ScoreReason::Success);
    if r.final_phase != TaskPhase::Done || !success {
        return Ok(None);
    }
    drop(policies);
    let frames = std::mem::take(&mut *sink.lock().expect("frame sink"));
    let segments: Option<Vec<Segment>> = r.trace.iter().map(|t| segment_of(&t.phase)).collect();
    let segments = segments.ok_or_else(|| DataError::Plan(format!("{id}: trace has a non-task phase")))?;
    let steps: Vec<Step> = r
        .trace
        .iter()
        .zip(&segments)
        .map(|(t, s)| Step {
            tick: t.tick,
            arm: t.arm,
            hand: t.hand,
            sigma_operator: matches!(s, Segment::Grasp | Segment::Transport) as u8,
            cam1: String::new(),
            cam2: String::new(),
        })
        .collect();
    let attempts = attempts_of(&steps, scene);
    let meta = DemoMeta {
        id,
        purpose: Purpose::Vla,
        instruction: instruction.raw_text.clone(),
        object,
        plate: Some(plate),
        seed,
        operator: "scripted".into(),
        camera: plan.camera,
        markers: markers_from(&segments),
    };
    Ok(Some(Recorded { meta, steps, frames, attempts }))
}

fn record_grasp(scene: &SceneConfig, plan: &CollectionPlan, job: Job, id: String, seed: u64) -> Result<Option<Recorded>, DataError> {
    let Job::Diffusion { object, recover, .. } = job else { unreachable!() };
    let spec = &scene.sim.objects[&object];
    let mut r = rng::stream(seed, Stream::Layout);
    let gap = r.random_range(plan.edge_distance[0]..=plan.edge_distance[1]);
    let area = &scene.sim.test_area;
    let xy = [r.random_range(area.x[0]..=area.x[1]), gap + spec.footprint[1] / 2.0];
    let j = plan.start_jitter;
    let (jx, jy) = if j > 0.0 { (r.random_range(-j..=j), r.random_range(-j..=j)) } else { (0.0, 0.0) };

    let sim = Arc::new(scene.sim.clone());
    let mut world = World::new(sim, &[(object, xy)], seed).map_err(OrchestratorError::from)?;
    world.set_hand_pose(ArmPose::new(xy[0] + jx, xy[1] + jy, spec.height + plan.start_height));
    let mut cfg = scene.grasp_stub.clone();
    cfg.recovery_enabled = true;
    cfg.force_first_attempt_failure = recover;
    let mut stub = GraspStub::new(cfg, object, scene.sim.hand.clone(), scene.dt(), seed);
    let instruction = Instruction::canonical(object, PlateColor::Yellow);

    let (mut steps, mut frames) = (Vec::new(), Vec::new());
    let mut finished = false;
    for t in 0..scene.orchestrator.budgets.grasping {
        let obs = world.observe(&instruction, t);
        let truth = world.truth();
        let a = stub
            .act(&PolicyInput { obs: &obs, phase: TaskPhase::Grasping, truth: &truth })
            .map_err(|e| DataError::Plan(format!("{id}: {e}")))?;
        steps.push(Step {
            tick: t,
            arm: obs.arm.to_array(),
            hand: obs.hand.joints,
            sigma_operator: (a.sigma >= 0.5) as u8,
            cam1: String::new(),
            cam2: String::new(),
        });
        frames.push((obs.cam1, obs.cam2));
        world.step(&a, scene.dt());
        if stub.finished() {
            finished = true;
            break;
        }
        if stub.gave_up() {
            break;
        }
    }
    let held = world.attached().is_some() && world.attached() == world.object_index(object);
    let attempts = attempts_of(&steps, scene);
    if !finished || !held || steps.len() < super::DIFFUSION_TAIL || (recover && attempts < 2) {
        return Ok(None);
    }
    let last = steps.len() as u64 - 1;
    let meta = DemoMeta {
        id,
        purpose: Purpose::Diffusion,
        instruction: format!("pick up the {object}"),
        object,
        plate: None,
        seed,
        operator: "scripted".into(),
        camera: plan.camera,
        markers: vec![Marker { segment: Segment::Grasp, start: 0, end: last }],
    };
    Ok(Some(Recorded { meta, steps, frames, attempts }))
}

fn run_job(scene: &SceneConfig, plan: &CollectionPlan, job: Job, ordinal: usize, seed: u64, root: &Path) -> Result<ManifestEntry, DataError> {
    let id = job.id();
    for retry in 0..=plan.max_retries {
        let s = rng::mix(seed, ordinal as u64 * 1024 + retry as u64);
        let rec = match job {
            Job::Vla { .. } => record_vla(scene, plan, job, id.clone(), s)?,
            Job::Diffusion { .. } => record_grasp(scene, plan, job, id.clone(), s)?,
        };
        let Some(rec) = rec else { continue };
        let dir = root.join(EPISODES).join(&id);
        super::write_episode(&dir, &rec.meta, &rec.steps, &rec.frames)?;
        return Ok(ManifestEntry {
            id,
            purpose: rec.meta.purpose,
            object: rec.meta.object,
            plate: rec.meta.plate,
            attempts: rec.attempts,
            sha256: episode_digest(&dir)?,
        });
    }
    Err(DataError::Plan(format!("{id}: no usable demonstration in {} tries", plan.max_retries + 1)))
}

/// Records every demo of `plan` into `out` and writes the manifest.
/// Identical inputs give byte-identical datasets.
pub fn generate_demos(scene: &SceneConfig, plan: &CollectionPlan, seed: u64, out: &Path) -> Result<Manifest, DataError> {
    plan.validate(scene)?;
    if out.join(MANIFEST).exists() {
        return Err(DataError::Plan(format!("{} already holds a dataset", out.display())));
    }
    let mut scene = scene.clone();
    scene.sim.camera = CameraConfig { width: plan.camera[0], height: plan.camera[1] };
    let episodes = out.join(EPISODES);
    fs::create_dir_all(&episodes).map_err(io_err(&episodes))?;

    let jobs: Vec<(usize, Job)> = jobs(plan).into_iter().enumerate().collect();
    let results = par_map(&jobs, |&(i, job)| run_job(&scene, plan, job, i, seed, out));
    let mut entries = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    entries.sort_by(|a, b| a.id.cmp(&b.id));

    let manifest = Manifest {
        seed,
        plan: plan.clone(),
        vla_counts: plan.vla_counts(),
        diffusion_counts: plan.diffusion_counts(),
        dataset_sha256: Manifest::digest(&entries),
        episodes: entries,
    };
    let path = out.join(MANIFEST);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, json + "\n").map_err(io_err(&path))?;
    Ok(manifest)
}
