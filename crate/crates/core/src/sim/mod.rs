//! Kinematic pick-and-place world.
//!
//! The table top is the plane z = 0 for y in [0, y_max]; the table edge is
//! the line y = 0 and everything at y < 0 is off the table. Objects are
//! axis-aligned boxes described by their planar center, footprint
//! (width along x, depth along y) and height. The hand is a point at the
//! palm, carrying an attached object rigidly.

pub mod grasp;
pub mod render;

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::image::Image;
use crate::instruction::Instruction;
use crate::rng::{self, Stream};
use crate::types::{Action, ArmPose, HandCommand, HandModel, HandState, ObjectKind, Observation, PlateColor, VelocityLimits};

pub use grasp::{GraspGeometry, GraspModel, GraspStrategy, StrategyTable};
pub use render::{Camera, CameraConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Area {
    pub x: [f64; 2],
    pub y: [f64; 2],
}

impl Area {
    pub fn center(&self) -> [f64; 2] {
        [(self.x[0] + self.x[1]) / 2.0, (self.y[0] + self.y[1]) / 2.0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateConfig {
    pub center: [f64; 2],
    pub radius: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    /// Width along x and depth along y (m).
    pub footprint: [f64; 2],
    pub height: f64,
    /// Allowed |hand z - object top| for a top-down pick of a thin object.
    pub direct_pick_height_tol: f64,
    pub thin: bool,
    /// Minimum hand synergy for the object to stick to a sliding hand.
    pub slide_friction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub table: TableConfig,
    /// Reachable hand positions.
    pub workspace: Bounds,
    /// Region where objects are placed at random.
    pub test_area: Area,
    pub min_object_separation: f64,
    /// Objects placed on the table for full pick-and-place episodes.
    pub scene_objects: Vec<ObjectKind>,
    pub start_pose: [f64; 3],
    pub plates: BTreeMap<PlateColor, PlateConfig>,
    pub objects: BTreeMap<ObjectKind, ObjectSpec>,
    pub contact_margin: f64,
    pub contact_height: f64,
    pub floor_z: f64,
    pub grasp: GraspModel,
    pub hand: HandModel,
    pub velocity: VelocityLimits,
    pub camera: CameraConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        let spec = |w: f64, d: f64, h: f64, tol: f64, thin: bool, friction: f64| ObjectSpec {
            footprint: [w, d],
            height: h,
            direct_pick_height_tol: tol,
            thin,
            slide_friction: friction,
        };
        Self {
            table: TableConfig { x_min: -0.6, x_max: 0.6, y_max: 0.8 },
            workspace: Bounds { min: [-0.7, -0.25, 0.005], max: [0.7, 0.95, 0.5] },
            test_area: Area { x: [-0.2, 0.2], y: [0.15, 0.55] },
            min_object_separation: 0.16,
            scene_objects: vec![ObjectKind::Pepper, ObjectKind::Tape, ObjectKind::Paper],
            start_pose: [0.0, 0.7, 0.3],
            plates: BTreeMap::from([
                (PlateColor::Yellow, PlateConfig { center: [0.38, 0.35], radius: 0.09, height: 0.01 }),
                (PlateColor::Purple, PlateConfig { center: [-0.38, 0.35], radius: 0.09, height: 0.01 }),
            ]),
            objects: BTreeMap::from([
                (ObjectKind::Pepper, spec(0.08, 0.08, 0.07, 0.03, false, 0.8)),
                (ObjectKind::Tape, spec(0.10, 0.10, 0.025, 0.008, true, 0.3)),
                (ObjectKind::Paper, spec(0.12, 0.09, 0.008, 0.005, true, 0.2)),
                (ObjectKind::Block, spec(0.075, 0.075, 0.01, 0.006, true, 0.3)),
            ]),
            contact_margin: 0.01,
            contact_height: 0.015,
            floor_z: -0.75,
            grasp: GraspModel::default(),
            hand: HandModel::default(),
            velocity: VelocityLimits::default(),
            camera: CameraConfig::default(),
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SceneError {
    #[error("no object spec for `{0}`")]
    UnknownObject(ObjectKind),
    #[error("could not place {0} objects with the configured separation")]
    Placement(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectState {
    pub kind: ObjectKind,
    /// Center (x, y, z).
    pub position: [f64; 3],
    pub spec: ObjectSpec,
    pub fallen: bool,
}

impl ObjectState {
    pub fn top(&self) -> f64 {
        self.position[2] + self.spec.height / 2.0
    }

    /// Gap between the object's edge-facing side and the table edge.
    pub fn edge_distance(&self) -> f64 {
        self.position[1] - self.spec.footprint[1] / 2.0
    }

    /// Fraction of the depth hanging past the table edge.
    pub fn overhang(&self) -> f64 {
        overhang_fraction(self.position[1], self.spec.footprint[1])
    }
}

pub fn overhang_fraction(center_y: f64, depth: f64) -> f64 {
    ((depth / 2.0 - center_y) / depth).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct Attachment {
    index: usize,
    offset: [f64; 3],
}

/// Ground-truth view of an object handed to scripted policies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectTruth {
    pub kind: ObjectKind,
    pub position: [f64; 3],
    pub footprint: [f64; 2],
    pub height: f64,
    pub attached: bool,
    pub fallen: bool,
}

impl ObjectTruth {
    pub fn top(&self) -> f64 {
        self.position[2] + self.height / 2.0
    }

    pub fn edge_distance(&self) -> f64 {
        self.position[1] - self.footprint[1] / 2.0
    }

    pub fn overhang(&self) -> f64 {
        overhang_fraction(self.position[1], self.footprint[1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateTruth {
    pub color: PlateColor,
    pub center: [f64; 2],
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct WorldTruth {
    pub objects: Vec<ObjectTruth>,
    pub plates: Vec<PlateTruth>,
}

impl WorldTruth {
    pub fn object(&self, kind: ObjectKind) -> Option<&ObjectTruth> {
        self.objects.iter().find(|o| o.kind == kind)
    }

    pub fn plate(&self, color: PlateColor) -> Option<&PlateTruth> {
        self.plates.iter().find(|p| p.color == color)
    }

    /// Object closest to (x, y) in the table plane, ignoring fallen ones.
    pub fn nearest(&self, x: f64, y: f64) -> Option<&ObjectTruth> {
        self.objects
            .iter()
            .filter(|o| !o.fallen)
            .min_by(|a, b| {
                let da = (a.position[0] - x).hypot(a.position[1] - y);
                let db = (b.position[0] - x).hypot(b.position[1] - y);
                da.total_cmp(&db)
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraspEvent {
    pub object: usize,
    pub kind: ObjectKind,
    pub strategy: GraspStrategy,
    pub probability: f64,
    pub attached: bool,
}

#[derive(Debug, Clone, Copy, thiserror::Error, PartialEq, Eq)]
pub enum GraspError {
    #[error("no object within capture range of the hand")]
    NoObjectInRange,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepReport {
    /// Set when closing the hand triggered an attempt.
    pub grasp: Option<Result<GraspEvent, GraspError>>,
    pub released: Option<usize>,
    pub fell: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RestRegion {
    Plate(PlateColor),
    Table,
    Floor,
    Held,
}

/// Ground truth used for scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldOutcome {
    pub target: ObjectKind,
    pub nearest_at_grasp_entry: Option<ObjectKind>,
    pub target_attached_ever: bool,
    pub target_region: RestRegion,
}

#[derive(Debug, Clone)]
pub struct World {
    config: Arc<SimConfig>,
    objects: Vec<ObjectState>,
    hand_pose: ArmPose,
    hand: HandState,
    attachment: Option<Attachment>,
    attached_ever: Vec<bool>,
    rng: ChaCha8Rng,
}

/// Samples object centers uniformly in the test area with rejection on the
/// minimum separation.
pub fn random_layout(
    config: &SimConfig,
    kinds: &[ObjectKind],
    rng: &mut impl Rng,
) -> Result<Vec<(ObjectKind, [f64; 2])>, SceneError> {
    const MAX_TRIES: usize = 10_000;
    let area = config.test_area;
    for _ in 0..MAX_TRIES {
        let mut placed: Vec<(ObjectKind, [f64; 2])> = Vec::with_capacity(kinds.len());
        let mut ok = true;
        for &kind in kinds {
            let p = [rng.random_range(area.x[0]..=area.x[1]), rng.random_range(area.y[0]..=area.y[1])];
            if placed.iter().any(|(_, q)| (p[0] - q[0]).hypot(p[1] - q[1]) < config.min_object_separation) {
                ok = false;
                break;
            }
            placed.push((kind, p));
        }
        if ok {
            return Ok(placed);
        }
    }
    Err(SceneError::Placement(kinds.len()))
}

impl World {
    pub fn new(config: Arc<SimConfig>, layout: &[(ObjectKind, [f64; 2])], seed: u64) -> Result<Self, SceneError> {
        let mut objects = Vec::with_capacity(layout.len());
        for &(kind, [x, y]) in layout {
            let spec = config.objects.get(&kind).ok_or(SceneError::UnknownObject(kind))?.clone();
            let z = spec.height / 2.0;
            objects.push(ObjectState { kind, position: [x, y, z], spec, fallen: false });
        }
        let [sx, sy, sz] = config.start_pose;
        let hand = config.hand.state_for_synergy(0.0);
        let n = objects.len();
        let mut world = Self {
            config,
            objects,
            hand_pose: ArmPose::new(sx, sy, sz),
            hand,
            attachment: None,
            attached_ever: vec![false; n],
            rng: rng::stream(seed, Stream::World),
        };
        world.settle_unsupported();
        Ok(world)
    }

    /// A world with objects at random test-area positions.
    pub fn random(config: Arc<SimConfig>, kinds: &[ObjectKind], seed: u64) -> Result<Self, SceneError> {
        let mut layout_rng = rng::stream(seed, Stream::Layout);
        let layout = random_layout(&config, kinds, &mut layout_rng)?;
        Self::new(config, &layout, seed)
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn shared_config(&self) -> Arc<SimConfig> {
        Arc::clone(&self.config)
    }

    pub fn objects(&self) -> &[ObjectState] {
        &self.objects
    }

    pub fn hand_pose(&self) -> ArmPose {
        self.hand_pose
    }

    pub fn hand(&self) -> HandState {
        self.hand
    }

    pub fn attached(&self) -> Option<usize> {
        self.attachment.map(|a| a.index)
    }

    pub fn object_index(&self, kind: ObjectKind) -> Option<usize> {
        self.objects.iter().position(|o| o.kind == kind)
    }

    pub fn set_hand_pose(&mut self, pose: ArmPose) {
        self.hand_pose = self.clamp_to_workspace(pose);
        self.follow_hand();
    }

    fn clamp_to_workspace(&self, mut pose: ArmPose) -> ArmPose {
        let b = &self.config.workspace;
        pose.x = pose.x.clamp(b.min[0], b.max[0]);
        pose.y = pose.y.clamp(b.min[1], b.max[1]);
        pose.z = pose.z.clamp(b.min[2], b.max[2]);
        pose
    }

    pub fn truth(&self) -> WorldTruth {
        let attached = self.attached();
        WorldTruth {
            objects: self
                .objects
                .iter()
                .enumerate()
                .map(|(i, o)| ObjectTruth {
                    kind: o.kind,
                    position: o.position,
                    footprint: o.spec.footprint,
                    height: o.spec.height,
                    attached: attached == Some(i),
                    fallen: o.fallen,
                })
                .collect(),
            plates: self
                .config
                .plates
                .iter()
                .map(|(color, p)| PlateTruth { color: *color, center: p.center, radius: p.radius })
                .collect(),
        }
    }

    pub fn observe(&self, instruction: &Instruction, tick: u64) -> Observation {
        let cam = self.config.camera;
        Observation {
            cam1: self.render(Camera::Cam1Static, cam.width, cam.height),
            cam2: self.render(Camera::Cam2Wrist, cam.width, cam.height),
            arm: self.hand_pose,
            hand: self.hand,
            instruction: instruction.clone(),
            tick,
        }
    }

    pub fn render(&self, camera: Camera, width: u32, height: u32) -> Image {
        render::render(self, camera, width, height)
    }

    /// Integrates one command over `dt` seconds.
    pub fn step(&mut self, command: &Action, dt: f64) -> StepReport {
        assert!(dt > 0.0, "dt must be positive");
        let mut report = StepReport::default();
        let cfg = Arc::clone(&self.config);
        let command = command.clamp_velocity(&cfg.velocity, dt);
        let prev = self.hand_pose;
        let next = self.clamp_to_workspace(prev.offset_by(&command.arm_delta));

        let target = command.hand.target_joints(&cfg.hand);
        let max_step = cfg.hand.joint_speed * dt;
        let mut joints = self.hand.joints;
        for (q, t) in joints.iter_mut().zip(target.iter()) {
            *q += (t - *q).clamp(-max_step, max_step);
        }
        let before = self.hand.synergy;
        self.hand = cfg.hand.state(joints);
        let after = self.hand.synergy;

        if self.attachment.is_none() && after < cfg.grasp.close_threshold {
            self.slide_in_contact(&prev, &next, after);
        }
        self.hand_pose = next;
        self.follow_hand();

        if let Some(att) = self.attachment {
            if after < cfg.grasp.release_threshold {
                self.attachment = None;
                self.settle(att.index);
                report.released = Some(att.index);
            }
        } else if before < cfg.grasp.close_threshold && after >= cfg.grasp.close_threshold {
            let strategy = match command.hand {
                HandCommand::GripScalar(_) => GraspStrategy::PowerGrasp,
                HandCommand::JointTargets(_) => match self.capture_candidate() {
                    Some(i) if self.objects[i].overhang() > 0.0 => GraspStrategy::SlideAndPick,
                    _ => GraspStrategy::DirectPick,
                },
            };
            report.grasp = Some(self.attempt_grasp(strategy));
        }
        report.fell = self.settle_unsupported();
        report
    }

    fn contact_object(&self, pose: &ArmPose) -> Option<usize> {
        let margin = self.config.contact_margin;
        let height = self.config.contact_height;
        self.objects
            .iter()
            .enumerate()
            .filter(|(_, o)| !o.fallen)
            .filter(|(_, o)| {
                let reach = o.spec.footprint[0].max(o.spec.footprint[1]) / 2.0 + margin;
                pose.planar_distance_to(o.position[0], o.position[1]) <= reach && pose.z <= o.top() + height
            })
            .min_by(|(_, a), (_, b)| {
                pose.planar_distance_to(a.position[0], a.position[1])
                    .total_cmp(&pose.planar_distance_to(b.position[0], b.position[1]))
            })
            .map(|(i, _)| i)
    }

    /// A partially closed hand resting on an object drags it along (sticking contact).
    fn slide_in_contact(&mut self, prev: &ArmPose, next: &ArmPose, synergy: f64) {
        let Some(i) = self.contact_object(prev) else { return };
        let obj = &mut self.objects[i];
        if synergy <= 0.0 || synergy < obj.spec.slide_friction {
            return;
        }
        let (dx, dy) = (next.x - prev.x, next.y - prev.y);
        if dx == 0.0 && dy == 0.0 {
            return;
        }
        let half_w = obj.spec.footprint[0] / 2.0;
        obj.position[0] = (obj.position[0] + dx).clamp(self.config.table.x_min + half_w, self.config.table.x_max - half_w);
        obj.position[1] += dy;
    }

    fn follow_hand(&mut self) {
        if let Some(att) = self.attachment {
            let p = self.hand_pose;
            self.objects[att.index].position = [p.x + att.offset[0], p.y + att.offset[1], p.z + att.offset[2]];
        }
    }

    fn capture_candidate(&self) -> Option<usize> {
        let g = &self.config.grasp;
        let p = self.hand_pose;
        self.objects
            .iter()
            .enumerate()
            .filter(|(_, o)| !o.fallen)
            .filter(|(_, o)| {
                let bottom = o.position[2] - o.spec.height / 2.0;
                p.planar_distance_to(o.position[0], o.position[1]) <= g.capture_radius
                    && p.z >= bottom - 0.02
                    && p.z <= o.top() + g.capture_height
            })
            .min_by(|(_, a), (_, b)| {
                p.planar_distance_to(a.position[0], a.position[1])
                    .total_cmp(&p.planar_distance_to(b.position[0], b.position[1]))
            })
            .map(|(i, _)| i)
    }

    pub fn grasp_geometry(&self, index: usize, strategy: GraspStrategy) -> GraspGeometry {
        let o = &self.objects[index];
        let p = self.hand_pose;
        GraspGeometry {
            kind: o.kind,
            thin: o.spec.thin,
            strategy,
            overhang: o.overhang(),
            planar_offset: p.planar_distance_to(o.position[0], o.position[1]),
            height_error: (p.z - o.top()).abs(),
            height_tolerance: o.spec.direct_pick_height_tol,
        }
    }

    /// Samples attachment of the object in capture range. Consumes one draw
    /// from the world's generator when an object is in range.
    pub fn attempt_grasp(&mut self, strategy: GraspStrategy) -> Result<GraspEvent, GraspError> {
        if self.attachment.is_some() {
            return Err(GraspError::NoObjectInRange);
        }
        let index = self.capture_candidate().ok_or(GraspError::NoObjectInRange)?;
        let probability = self.config.grasp.probability(&self.grasp_geometry(index, strategy));
        let draw: f64 = self.rng.random();
        let attached = draw < probability;
        if attached {
            let o = self.objects[index].position;
            let p = self.hand_pose;
            self.attachment = Some(Attachment { index, offset: [o[0] - p.x, o[1] - p.y, o[2] - p.z] });
            self.attached_ever[index] = true;
        }
        Ok(GraspEvent { object: index, kind: self.objects[index].kind, strategy, probability, attached })
    }

    fn plate_under(&self, x: f64, y: f64) -> Option<(PlateColor, &PlateConfig)> {
        self.config
            .plates
            .iter()
            .find(|(_, p)| (x - p.center[0]).hypot(y - p.center[1]) <= p.radius)
            .map(|(c, p)| (*c, p))
    }

    fn supported_by_table(&self, o: &ObjectState) -> bool {
        let t = &self.config.table;
        o.overhang() <= self.config.grasp.fall_overhang
            && o.position[0] >= t.x_min
            && o.position[0] <= t.x_max
            && o.position[1] <= t.y_max
    }

    /// Drops a released object straight down onto whatever is below it.
    fn settle(&mut self, index: usize) {
        let (x, y) = (self.objects[index].position[0], self.objects[index].position[1]);
        let h = self.objects[index].spec.height;
        if let Some((_, plate)) = self.plate_under(x, y) {
            self.objects[index].position[2] = plate.height + h / 2.0;
        } else if self.supported_by_table(&self.objects[index]) {
            self.objects[index].position[2] = h / 2.0;
        } else {
            self.objects[index].position[2] = self.config.floor_z;
            self.objects[index].fallen = true;
        }
    }

    fn settle_unsupported(&mut self) -> Vec<usize> {
        let attached = self.attached();
        let mut fell = Vec::new();
        for i in 0..self.objects.len() {
            if attached == Some(i) || self.objects[i].fallen {
                continue;
            }
            let (x, y) = (self.objects[i].position[0], self.objects[i].position[1]);
            if self.plate_under(x, y).is_none() && !self.supported_by_table(&self.objects[i]) {
                self.objects[i].position[2] = self.config.floor_z;
                self.objects[i].fallen = true;
                fell.push(i);
            }
        }
        fell
    }

    pub fn rest_region(&self, index: usize) -> RestRegion {
        let o = &self.objects[index];
        if self.attached() == Some(index) {
            RestRegion::Held
        } else if o.fallen {
            RestRegion::Floor
        } else if let Some((color, _)) = self.plate_under(o.position[0], o.position[1]) {
            RestRegion::Plate(color)
        } else {
            RestRegion::Table
        }
    }

    pub fn outcome(&self, target: ObjectKind, nearest_at_grasp_entry: Option<ObjectKind>) -> WorldOutcome {
        let index = self.object_index(target);
        WorldOutcome {
            target,
            nearest_at_grasp_entry,
            target_attached_ever: index.map(|i| self.attached_ever[i]).unwrap_or(false),
            target_region: index.map(|i| self.rest_region(i)).unwrap_or(RestRegion::Table),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{HandCommand, HAND_JOINTS};

    fn world_with(layout: &[(ObjectKind, [f64; 2])]) -> World {
        World::new(Arc::new(SimConfig::default()), layout, 1).unwrap()
    }

    fn delta(dx: f64, dy: f64, dz: f64) -> [f64; 6] {
        [dx, dy, dz, 0.0, 0.0, 0.0]
    }

    #[test]
    fn free_space_motion() {
        let mut w = world_with(&[(ObjectKind::Pepper, [0.0, 0.35])]);
        let before = w.objects().to_vec();
        let x0 = w.hand_pose().x;
        w.step(&Action::new(delta(0.01, 0.0, 0.0), HandCommand::open(), 0.0), 0.2);
        assert!((w.hand_pose().x - x0 - 0.01).abs() < 1e-12);
        assert_eq!(w.objects(), &before[..]);
    }

    #[test]
    fn sticking_slide_moves_object_with_hand() {
        let mut w = world_with(&[(ObjectKind::Tape, [0.0, 0.20])]);
        let tape_top = w.objects()[0].top();
        w.set_hand_pose(ArmPose::new(0.0, 0.20, tape_top));
        let half_closed = HandCommand::JointTargets(w.config().hand.posture(0.5));
        // let the fingers reach the half-closed posture first
        for _ in 0..3 {
            w.step(&Action::hold(half_closed, 0.0), 0.2);
        }
        assert!((w.hand().synergy - 0.5).abs() < 1e-9);
        let y0 = w.objects()[0].position[1];
        w.step(&Action::new(delta(0.0, -0.02, 0.0), half_closed, 0.0), 0.2);
        assert!((w.objects()[0].position[1] - (y0 - 0.02)).abs() < 1e-12);
    }

    #[test]
    fn open_hand_does_not_slide() {
        let mut w = world_with(&[(ObjectKind::Tape, [0.0, 0.20])]);
        let top = w.objects()[0].top();
        w.set_hand_pose(ArmPose::new(0.0, 0.20, top));
        w.step(&Action::new(delta(0.0, -0.02, 0.0), HandCommand::open(), 0.0), 0.2);
        assert_eq!(w.objects()[0].position[1], 0.20);
    }

    #[test]
    fn release_over_plate_settles_on_plate() {
        let mut w = world_with(&[(ObjectKind::Pepper, [0.0, 0.35])]);
        let top = w.objects()[0].top();
        w.set_hand_pose(ArmPose::new(0.0, 0.35, top));
        // force attachment through the public attempt with a certain probability
        let mut cfg = SimConfig::default();
        cfg.grasp.q_base.get_mut(&ObjectKind::Pepper).unwrap().direct_pick = 1.0;
        w.config = Arc::new(cfg);
        w.hand = w.config.hand.state_for_synergy(1.0);
        assert!(w.attempt_grasp(GraspStrategy::DirectPick).unwrap().attached);
        let plate = w.config().plates[&PlateColor::Yellow].center;
        w.set_hand_pose(ArmPose::new(plate[0], plate[1], 0.1));
        assert_eq!(w.rest_region(0), RestRegion::Held);
        let mut released = None;
        for _ in 0..4 {
            let r = w.step(&Action::hold(HandCommand::open(), 0.0), 0.2);
            released = released.or(r.released);
        }
        assert_eq!(released, Some(0));
        assert_eq!(w.rest_region(0), RestRegion::Plate(PlateColor::Yellow));
        let o = &w.objects()[0];
        assert!((o.position[2] - (0.01 + o.spec.height / 2.0)).abs() < 1e-12);
    }

    #[test]
    fn attempt_without_object_in_range() {
        let mut w = world_with(&[(ObjectKind::Pepper, [0.0, 0.35])]);
        assert_eq!(w.attempt_grasp(GraspStrategy::DirectPick), Err(GraspError::NoObjectInRange));
    }

    #[test]
    fn pushed_past_edge_falls() {
        let mut w = world_with(&[(ObjectKind::Block, [0.0, 0.05])]);
        let top = w.objects()[0].top();
        w.set_hand_pose(ArmPose::new(0.0, 0.05, top));
        let cmd = HandCommand::JointTargets(w.config().hand.posture(0.4));
        for _ in 0..3 {
            w.step(&Action::hold(cmd, 0.0), 0.2);
        }
        let mut fell = false;
        for _ in 0..5 {
            fell |= !w.step(&Action::new(delta(0.0, -0.02, 0.0), cmd, 0.0), 0.2).fell.is_empty();
        }
        assert!(fell);
        assert_eq!(w.rest_region(0), RestRegion::Floor);
        assert_eq!(w.outcome(ObjectKind::Block, None).target_region, RestRegion::Floor);
    }

    #[test]
    fn closing_triggers_attempt_with_inferred_strategy() {
        let mut w = world_with(&[(ObjectKind::Tape, [0.0, 0.30])]);
        let top = w.objects()[0].top();
        w.set_hand_pose(ArmPose::new(0.0, 0.30, top));
        let closed = HandCommand::JointTargets(w.config().hand.posture(1.0));
        let mut event = None;
        for _ in 0..4 {
            if let Some(g) = w.step(&Action::hold(closed, 0.0), 0.2).grasp {
                event = Some(g);
            }
        }
        let e = event.expect("attempt").unwrap();
        assert_eq!(e.strategy, GraspStrategy::DirectPick);
        assert!(e.probability > 0.9);

        let mut w = world_with(&[(ObjectKind::Tape, [0.0, 0.30])]);
        w.set_hand_pose(ArmPose::new(0.0, 0.30, top));
        let mut event = None;
        for _ in 0..4 {
            if let Some(g) = w.step(&Action::hold(HandCommand::GripScalar(1.0), 0.0), 0.2).grasp {
                event = Some(g);
            }
        }
        assert_eq!(event.unwrap().unwrap().strategy, GraspStrategy::PowerGrasp);
    }

    #[test]
    fn never_attached_reported() {
        let w = world_with(&[(ObjectKind::Paper, [0.0, 0.35])]);
        let o = w.outcome(ObjectKind::Paper, Some(ObjectKind::Paper));
        assert!(!o.target_attached_ever);
        assert_eq!(o.target_region, RestRegion::Table);
    }

    #[test]
    fn same_seed_same_trajectory() {
        let run = |seed: u64| {
            let mut w = World::random(Arc::new(SimConfig::default()), &[ObjectKind::Pepper, ObjectKind::Tape], seed).unwrap();
            let mut states = Vec::new();
            for t in 0..40 {
                let s = (t % 10) as f64 / 9.0;
                let a = Action::new(delta(0.01 * ((t % 7) as f64 - 3.0), -0.02, -0.01), HandCommand::GripScalar(s), 0.0);
                w.step(&a, 0.2);
                states.push((w.objects().to_vec(), w.hand_pose(), w.hand().joints));
            }
            states
        };
        assert_eq!(run(3), run(3));
        let j: [f64; HAND_JOINTS] = run(3)[0].2;
        assert!(j.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn random_layout_respects_separation() {
        let cfg = SimConfig::default();
        let mut r = rng::stream(11, Stream::Layout);
        for _ in 0..50 {
            let l = random_layout(&cfg, &cfg.scene_objects, &mut r).unwrap();
            for (i, a) in l.iter().enumerate() {
                for b in &l[i + 1..] {
                    assert!((a.1[0] - b.1[0]).hypot(a.1[1] - b.1[1]) >= cfg.min_object_separation);
                }
            }
        }
    }
}
