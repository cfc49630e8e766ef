//! Demonstration episodes on disk, the two training-set segmenters, image
//! preprocessing, the scripted demo generator and the dataset validator.
//!
//! Dataset layout:
//!
//! ```text
//! <dataset>/manifest.json
//! <dataset>/episodes/<id>/meta.json
//! <dataset>/episodes/<id>/steps.jsonl
//! <dataset>/episodes/<id>/frames/<tick>_cam1.ppm, <tick>_cam2.ppm
//! ```

mod export;
mod generate;
mod preprocess;
mod segment;
mod validate;

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::image::{Image, ImageError};
use crate::types::{ObjectKind, PlateColor, HAND_JOINTS};

pub use export::{export_dataset, ExportOptions, ExportSummary, ExportTarget};
pub use generate::{generate_demos, CollectionPlan, Manifest, ManifestEntry};
pub use preprocess::{
    augment_diffusion_image, crop_origin, preprocess_diffusion_image, preprocess_vla_images, resize_bilinear,
    CROP_HEIGHT, CROP_WIDTH, DIFFUSION_HEIGHT, DIFFUSION_WIDTH, VLA_CAM1_HEIGHT, VLA_CAM2_HEIGHT, VLA_SIZE,
};
pub use segment::{release_label, segment_for_diffusion, segment_for_vla, tail_label, TrainingSample, DEFAULT_CLOSE_TICKS, DIFFUSION_TAIL, STATE_DIM};
pub use validate::{check_diffusion_export, check_vla_export, validate_dataset, validate_episode, ValidationReport, Violation};

pub const MANIFEST: &str = "manifest.json";
pub const EPISODES: &str = "episodes";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    Approach,
    Grasp,
    Transport,
    Release,
}

impl Segment {
    pub const ALL: [Segment; 4] = [Segment::Approach, Segment::Grasp, Segment::Transport, Segment::Release];

    pub fn as_str(&self) -> &'static str {
        match self {
            Segment::Approach => "approach",
            Segment::Grasp => "grasp",
            Segment::Transport => "transport",
            Segment::Release => "release",
        }
    }
}

impl fmt::Display for Segment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A labeled tick range, both ends inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Marker {
    pub segment: Segment,
    pub start: u64,
    pub end: u64,
}

impl Marker {
    pub fn contains(&self, tick: u64) -> bool {
        (self.start..=self.end).contains(&tick)
    }

    pub fn len(&self) -> usize {
        (self.end + 1).saturating_sub(self.start) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    /// Full pick-and-place, used for the approach/transport set.
    Vla,
    /// Grasp only, started above the object.
    Diffusion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoMeta {
    pub id: String,
    pub purpose: Purpose,
    pub instruction: String,
    pub object: ObjectKind,
    #[serde(default)]
    pub plate: Option<PlateColor>,
    pub seed: u64,
    pub operator: String,
    /// Recorded frame size (width, height).
    pub camera: [u32; 2],
    pub markers: Vec<Marker>,
}

impl DemoMeta {
    pub fn marker(&self, segment: Segment) -> Option<&Marker> {
        self.markers.iter().find(|m| m.segment == segment)
    }

    pub fn segment_of(&self, tick: u64) -> Option<Segment> {
        self.markers.iter().find(|m| m.contains(tick)).map(|m| m.segment)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub tick: u64,
    pub arm: [f64; 6],
    pub hand: [f64; HAND_JOINTS],
    /// Button state, 0 or 1.
    pub sigma_operator: u8,
    pub cam1: String,
    pub cam2: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawEpisode {
    pub meta: DemoMeta,
    pub steps: Vec<Step>,
}

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Json { path: PathBuf, line: usize, message: String },
    #[error("image {path}: {source}")]
    Image { path: PathBuf, source: ImageError },
    #[error("missing {0} marker")]
    MissingMarkers(Segment),
    #[error("markers incomplete: {0}")]
    IncompleteMarkers(String),
    #[error("grasp segment has {len} steps, need at least {min}")]
    SegmentTooShort { len: usize, min: usize },
    #[error("expected a {expected_w}x{expected_h} image, got {w}x{h}")]
    WrongInputSize { w: u32, h: u32, expected_w: u32, expected_h: u32 },
    #[error("episode {id}: frames for {frames} steps, {steps} steps")]
    FrameCount { id: String, frames: usize, steps: usize },
    #[error("plan: {0}")]
    Plan(String),
    #[error("upload: {0}")]
    Upload(String),
    #[error(transparent)]
    Scene(#[from] crate::orchestrator::OrchestratorError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io { path: path.to_path_buf(), source }
}

pub fn frame_names(tick: u64) -> (String, String) {
    (format!("frames/{tick:06}_cam1.ppm"), format!("frames/{tick:06}_cam2.ppm"))
}

/// Problems with the marker layout of one episode: order, contiguity and
/// coverage of every recorded tick.
pub fn marker_problems(meta: &DemoMeta, steps: &[Step]) -> Vec<String> {
    let mut out = Vec::new();
    for (i, s) in steps.iter().enumerate() {
        if s.tick != i as u64 {
            out.push(format!("step {i} has tick {}", s.tick));
            break;
        }
    }
    let Some(first) = meta.markers.first() else {
        out.push("no markers".into());
        return out;
    };
    if first.start != 0 {
        out.push(format!("first marker starts at {}", first.start));
    }
    for m in &meta.markers {
        if m.end < m.start {
            out.push(format!("{} marker ends before it starts", m.segment));
        }
    }
    for w in meta.markers.windows(2) {
        if w[1].segment <= w[0].segment {
            out.push(format!("{} marker after {}", w[1].segment, w[0].segment));
        }
        if w[1].start != w[0].end + 1 {
            out.push(format!("gap or overlap between {} and {}", w[0].segment, w[1].segment));
        }
    }
    let last = meta.markers.last().map(|m| m.end).unwrap_or(0);
    let expected = steps.len().saturating_sub(1) as u64;
    if steps.is_empty() || last != expected {
        out.push(format!("markers end at {last}, last tick is {expected}"));
    }
    out
}

/// Segments every episode of `purpose` must carry.
pub fn required_segments(purpose: Purpose) -> &'static [Segment] {
    match purpose {
        Purpose::Vla => &Segment::ALL,
        Purpose::Diffusion => &[Segment::Grasp],
    }
}

/// Marker layout plus presence of the segments the purpose needs.
pub fn check_complete(meta: &DemoMeta, steps: &[Step]) -> Result<(), DataError> {
    let mut problems = marker_problems(meta, steps);
    for s in required_segments(meta.purpose) {
        if meta.marker(*s).is_none() {
            problems.push(format!("no {s} marker"));
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(DataError::IncompleteMarkers(problems.join("; ")))
    }
}

/// Writes one episode directory. `frames[i]` holds the two camera images of
/// `steps[i]`; the step's frame paths are rewritten to the canonical names.
pub fn write_episode(dir: &Path, meta: &DemoMeta, steps: &[Step], frames: &[(Image, Image)]) -> Result<(), DataError> {
    if frames.len() != steps.len() {
        return Err(DataError::FrameCount { id: meta.id.clone(), frames: frames.len(), steps: steps.len() });
    }
    let frame_dir = dir.join("frames");
    fs::create_dir_all(&frame_dir).map_err(io_err(&frame_dir))?;
    let meta_path = dir.join("meta.json");
    let json = serde_json::to_string_pretty(meta).expect("meta serializes");
    fs::write(&meta_path, json + "\n").map_err(io_err(&meta_path))?;

    let steps_path = dir.join("steps.jsonl");
    let file = fs::File::create(&steps_path).map_err(io_err(&steps_path))?;
    let mut w = BufWriter::new(file);
    for (step, (cam1, cam2)) in steps.iter().zip(frames) {
        let (n1, n2) = frame_names(step.tick);
        for (name, img) in [(&n1, cam1), (&n2, cam2)] {
            let p = dir.join(name);
            img.save_ppm(&p).map_err(io_err(&p))?;
        }
        let step = Step { cam1: n1, cam2: n2, ..step.clone() };
        let line = serde_json::to_string(&step).expect("step serializes");
        writeln!(w, "{line}").map_err(io_err(&steps_path))?;
    }
    w.flush().map_err(io_err(&steps_path))?;
    Ok(())
}

pub fn read_meta(dir: &Path) -> Result<DemoMeta, DataError> {
    let path = dir.join("meta.json");
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(|e| DataError::Json { path, line: e.line(), message: e.to_string() })
}

pub fn read_steps(dir: &Path) -> Result<Vec<Step>, DataError> {
    let path = dir.join("steps.jsonl");
    let file = fs::File::open(&path).map_err(io_err(&path))?;
    let mut steps = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(&path))?;
        if line.trim().is_empty() {
            continue;
        }
        let step = serde_json::from_str(&line)
            .map_err(|e| DataError::Json { path: path.clone(), line: i + 1, message: e.to_string() })?;
        steps.push(step);
    }
    Ok(steps)
}

pub fn read_episode(dir: &Path) -> Result<RawEpisode, DataError> {
    Ok(RawEpisode { meta: read_meta(dir)?, steps: read_steps(dir)? })
}

pub fn load_frame(episode_dir: &Path, name: &str) -> Result<Image, DataError> {
    let path = episode_dir.join(name);
    Image::load_ppm(&path).map_err(|source| DataError::Image { path, source })
}

/// Episode directories under `<dataset>/episodes`, sorted by name.
pub fn episode_dirs(dataset: &Path) -> Result<Vec<PathBuf>, DataError> {
    let root = dataset.join(EPISODES);
    let mut dirs = Vec::new();
    for entry in fs::read_dir(&root).map_err(io_err(&root))? {
        let entry = entry.map_err(io_err(&root))?;
        if entry.path().is_dir() {
            dirs.push(entry.path());
        }
    }
    dirs.sort();
    Ok(dirs)
}

/// Content hash over every file of an episode directory, in path order.
pub fn episode_digest(dir: &Path) -> Result<String, DataError> {
    use sha2::{Digest, Sha256};
    let mut files = Vec::new();
    collect_files(dir, dir, &mut files)?;
    files.sort();
    let mut h = Sha256::new();
    for rel in files {
        let p = dir.join(&rel);
        let bytes = fs::read(&p).map_err(io_err(&p))?;
        h.update(rel.as_bytes());
        h.update([0]);
        h.update((bytes.len() as u64).to_be_bytes());
        h.update(&bytes);
    }
    Ok(hex::encode(h.finalize()))
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<(), DataError> {
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let p = entry.map_err(io_err(dir))?.path();
        if p.is_dir() {
            collect_files(root, &p, out)?;
        } else {
            let rel = p.strip_prefix(root).expect("under root");
            out.push(rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/"));
        }
    }
    Ok(())
}

/// Maps `f` over `items` on all cores, keeping input order.
pub(crate) fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Mutex;
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).min(items.len()).max(1);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(item) = items.get(i) else { break };
                let r = f(item);
                *slots[i].lock().expect("result slot") = Some(r);
            });
        }
    });
    slots.into_iter().map(|m| m.into_inner().expect("result slot").expect("every item ran")).collect()
}
