use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::Serialize;

use super::generate::combo_key;
use super::segment::{release_label, tail_label};
use super::{
    episode_digest, episode_dirs, marker_problems, par_map, read_meta, read_steps, required_segments, segment_for_diffusion,
    segment_for_vla, DataError, DemoMeta, Manifest, Purpose, RawEpisode, Segment, TrainingSample, MANIFEST,
};
use crate::image::ppm_dimensions;
use crate::types::HandModel;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    /// Path relative to the dataset root.
    pub file: String,
    pub step: Option<u64>,
    pub rule: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.step {
            Some(s) => write!(f, "{} step {s}: [{}] {}", self.file, self.rule, self.message),
            None => write!(f, "{}: [{}] {}", self.file, self.rule, self.message),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub episodes: usize,
    pub violations: Vec<Violation>,
    /// Episodes whose content no longer matches the manifest hash.
    pub modified: Vec<String>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{} episodes, {} violations\n", self.episodes, self.violations.len());
        for v in &self.violations {
            s += &format!("{v}\n");
        }
        for m in &self.modified {
            s += &format!("modified since generation: {m}\n");
        }
        s
    }
}

struct Sink<'a> {
    file: &'a str,
    out: Vec<Violation>,
}

impl Sink<'_> {
    fn push(&mut self, step: Option<u64>, rule: &str, message: impl Into<String>) {
        self.out.push(Violation { file: self.file.to_string(), step, rule: rule.into(), message: message.into() });
    }
}

/// Checks the VLA-set rules on the samples of one episode.
pub fn check_vla_export(ep: &RawEpisode, samples: &[TrainingSample], close_ticks: usize) -> Vec<Violation> {
    let file = format!("episodes/{}/steps.jsonl", ep.meta.id);
    let mut v = Sink { file: &file, out: Vec::new() };
    let mut seen = BTreeSet::new();
    let mut synthetic = 0;
    let release = ep.meta.marker(Segment::Release).copied();
    for s in samples {
        let Some(t) = s.source_tick else {
            synthetic += 1;
            if s.sigma_label != 1.0 {
                v.push(None, "vla_close", "inserted close step not labeled 1");
            }
            if s.action[..6].iter().any(|&a| a != 0.0) {
                v.push(None, "vla_close", "inserted close step moves the arm");
            }
            continue;
        };
        if !seen.insert(t) {
            v.push(Some(t), "vla_duplicate", "tick exported twice");
        }
        let expected = match ep.meta.segment_of(t) {
            Some(Segment::Grasp) | None => {
                v.push(Some(t), "vla_grasp_excluded", "grasp-segment tick in the VLA set");
                continue;
            }
            Some(Segment::Approach) => 0.0,
            Some(Segment::Transport) => 1.0,
            Some(Segment::Release) => {
                let m = release.expect("segment found");
                release_label((t - m.start) as usize, m.len())
            }
        };
        if s.sigma_label != expected {
            v.push(Some(t), "vla_sigma", format!("label {} where {} expected", s.sigma_label, expected));
        }
    }
    if synthetic != close_ticks {
        v.push(None, "vla_close", format!("{synthetic} inserted close steps, expected {close_ticks}"));
    }
    for step in &ep.steps {
        if ep.meta.segment_of(step.tick) != Some(Segment::Grasp) && !seen.contains(&step.tick) {
            v.push(Some(step.tick), "vla_missing", "non-grasp tick not exported");
        }
    }
    v.out
}

/// Checks the grasp-set rules: only grasp ticks, and a signal suffix of
/// exactly min(10, len) ones.
pub fn check_diffusion_export(ep: &RawEpisode, samples: &[TrainingSample]) -> Vec<Violation> {
    let file = format!("episodes/{}/steps.jsonl", ep.meta.id);
    let mut v = Sink { file: &file, out: Vec::new() };
    let n = samples.len();
    for (j, s) in samples.iter().enumerate() {
        let t = s.source_tick;
        if t.and_then(|t| ep.meta.segment_of(t)) != Some(Segment::Grasp) {
            v.push(t, "diffusion_segment", "sample outside the grasp segment");
        }
        let expected = tail_label(j, n);
        if s.sigma_label != expected {
            v.push(t, "diffusion_sigma", format!("label {} where {} expected", s.sigma_label, expected));
        }
    }
    v.out
}

fn expected_operator(meta: &DemoMeta, tick: u64) -> Option<u8> {
    let seg = meta.segment_of(tick)?;
    Some(match meta.purpose {
        Purpose::Vla => matches!(seg, Segment::Grasp | Segment::Transport) as u8,
        Purpose::Diffusion => {
            let m = meta.marker(Segment::Grasp)?;
            if seg != Segment::Grasp {
                return None;
            }
            tail_label((tick - m.start) as usize, m.len()) as u8
        }
    })
}

/// All per-episode rules. `rel` is the episode path used in reports.
pub fn validate_episode(dir: &Path, rel: &str, hand: &HandModel, close_ticks: usize) -> (Option<DemoMeta>, Vec<Violation>) {
    let meta_file = format!("{rel}/meta.json");
    let steps_file = format!("{rel}/steps.jsonl");
    let meta = match read_meta(dir) {
        Ok(m) => m,
        Err(e) => {
            let mut v = Sink { file: &meta_file, out: Vec::new() };
            v.push(None, "read", e.to_string());
            return (None, v.out);
        }
    };
    let steps = match read_steps(dir) {
        Ok(s) => s,
        Err(e) => {
            let mut v = Sink { file: &steps_file, out: Vec::new() };
            v.push(None, "read", e.to_string());
            return (Some(meta), v.out);
        }
    };
    let mut v = Sink { file: &steps_file, out: Vec::new() };
    let mut structural = marker_problems(&meta, &steps);
    for s in required_segments(meta.purpose) {
        if meta.marker(*s).is_none() {
            structural.push(format!("no {s} marker"));
        }
    }
    let markers_ok = structural.is_empty();
    for p in structural {
        let mut m = Sink { file: &meta_file, out: Vec::new() };
        m.push(None, "markers", p);
        v.out.extend(m.out);
    }

    for step in &steps {
        if step.sigma_operator > 1 {
            v.push(Some(step.tick), "sigma_range", format!("button state {}", step.sigma_operator));
            continue;
        }
        if !markers_ok {
            continue;
        }
        if let Some(expected) = expected_operator(&meta, step.tick) {
            if step.sigma_operator != expected {
                let rule = if meta.purpose == Purpose::Diffusion { "sigma_tail" } else { "sigma_operator" };
                v.push(Some(step.tick), rule, format!("button {} where {} expected", step.sigma_operator, expected));
            }
        }
    }

    for step in &steps {
        for name in [&step.cam1, &step.cam2] {
            match ppm_dimensions(dir.join(name)) {
                Ok((w, h)) if [w, h] == meta.camera => {}
                Ok((w, h)) => v.push(Some(step.tick), "frame", format!("{name} is {w}x{h}, meta says {:?}", meta.camera)),
                Err(e) => v.push(Some(step.tick), "frame", format!("{name}: {e}")),
            }
        }
    }

    if markers_ok {
        let ep = RawEpisode { meta, steps };
        match ep.meta.purpose {
            Purpose::Vla => match segment_for_vla(&ep, hand, close_ticks) {
                Ok(s) => v.out.extend(check_vla_export(&ep, &s, close_ticks)),
                Err(e) => v.push(None, "segment", e.to_string()),
            },
            Purpose::Diffusion => match segment_for_diffusion(&ep) {
                Ok(s) => v.out.extend(check_diffusion_export(&ep, &s)),
                Err(e) => v.push(None, "segment", e.to_string()),
            },
        }
        return (Some(ep.meta), v.out);
    }
    (Some(meta), v.out)
}

/// Validates every episode plus, when a manifest is present, the episode
/// counts against it and its plan.
pub fn validate_dataset(dataset: &Path, hand: &HandModel, close_ticks: usize) -> Result<ValidationReport, DataError> {
    let dirs = episode_dirs(dataset)?;
    let names: Vec<String> =
        dirs.iter().map(|d| d.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()).collect();
    let results = par_map(&dirs, |d| {
        let name = d.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        validate_episode(d, &format!("episodes/{name}"), hand, close_ticks)
    });

    let mut report = ValidationReport { episodes: dirs.len(), ..ValidationReport::default() };
    let mut metas = BTreeMap::new();
    for (name, (meta, violations)) in names.iter().zip(results) {
        report.violations.extend(violations);
        if let Some(m) = meta {
            if &m.id != name {
                report.violations.push(Violation {
                    file: format!("episodes/{name}/meta.json"),
                    step: None,
                    rule: "id".into(),
                    message: format!("id {} does not match directory", m.id),
                });
            }
            metas.insert(name.clone(), m);
        }
    }

    if !dataset.join(MANIFEST).exists() {
        return Ok(report);
    }
    let mut fail = |rule: &str, message: String| {
        report.violations.push(Violation { file: MANIFEST.into(), step: None, rule: rule.into(), message })
    };
    let manifest = match Manifest::load(dataset) {
        Ok(m) => m,
        Err(e) => {
            fail("read", e.to_string());
            return Ok(report);
        }
    };
    if manifest.vla_counts != manifest.plan.vla_counts() || manifest.diffusion_counts != manifest.plan.diffusion_counts() {
        fail("plan", "manifest counts differ from its collection plan".into());
    }
    if Manifest::digest(&manifest.episodes) != manifest.dataset_sha256 {
        fail("hash", "dataset hash does not match the episode list".into());
    }
    let mut actual: BTreeMap<(Purpose, String), usize> = BTreeMap::new();
    for m in metas.values() {
        *actual.entry((m.purpose, combo_key(m.object, m.plate))).or_default() += 1;
    }
    let expected = manifest
        .vla_counts
        .iter()
        .map(|(k, n)| ((Purpose::Vla, k.clone()), *n))
        .chain(manifest.diffusion_counts.iter().map(|(k, n)| ((Purpose::Diffusion, k.clone()), *n)));
    let mut keys = BTreeSet::new();
    for (key, n) in expected {
        let have = actual.get(&key).copied().unwrap_or(0);
        if have != n {
            fail("count", format!("{:?} {}: {have} episodes, manifest lists {n}", key.0, key.1));
        }
        keys.insert(key);
    }
    for (key, have) in &actual {
        if !keys.contains(key) {
            fail("count", format!("{:?} {}: {have} episodes not in the manifest", key.0, key.1));
        }
    }
    let listed: BTreeSet<&str> = manifest.episodes.iter().map(|e| e.id.as_str()).collect();
    for name in metas.keys() {
        if !listed.contains(name.as_str()) {
            fail("unlisted", format!("episode {name} is not in the manifest"));
        }
    }
    let hashes = par_map(&manifest.episodes, |e| {
        let dir = dataset.join(super::EPISODES).join(&e.id);
        dir.exists().then(|| episode_digest(&dir).map(|h| h != e.sha256))
    });
    for (e, h) in manifest.episodes.iter().zip(hashes) {
        if let Some(Ok(true)) | Some(Err(_)) = h {
            report.modified.push(e.id.clone());
        }
    }
    Ok(report)
}
