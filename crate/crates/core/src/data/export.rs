use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{
    episode_dirs, io_err, load_frame, par_map, preprocess_diffusion_image, preprocess_vla_images, read_episode,
    segment_for_diffusion, segment_for_vla, DataError, Purpose, TrainingSample,
};
use crate::types::HandModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportTarget {
    Vla,
    Diffusion,
}

impl ExportTarget {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExportTarget::Vla => "vla",
            ExportTarget::Diffusion => "diffusion",
        }
    }

    fn purpose(&self) -> Purpose {
        match self {
            ExportTarget::Vla => Purpose::Vla,
            ExportTarget::Diffusion => Purpose::Diffusion,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExportOptions {
    /// Inserted hand-close steps in the VLA set.
    pub close_ticks: usize,
    /// Also write preprocessed model-input images.
    pub images: bool,
    pub hand: HandModel,
    /// Defaults to `<dataset>/export/<target>`.
    pub out: Option<PathBuf>,
}

impl Default for ExportOptions {
    fn default() -> Self {
        Self { close_ticks: super::segment::DEFAULT_CLOSE_TICKS, images: false, hand: HandModel::default(), out: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExportSummary {
    pub target: String,
    pub episodes: usize,
    pub samples: usize,
    pub out: PathBuf,
}

#[derive(Serialize)]
struct Record<'a> {
    #[serde(flatten)]
    sample: &'a TrainingSample,
    /// Preprocessed images, relative to the export directory.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    images: Vec<String>,
}

fn export_episode(dir: &Path, target: ExportTarget, opts: &ExportOptions, out: &Path) -> Result<Option<Vec<String>>, DataError> {
    let ep = read_episode(dir)?;
    if ep.meta.purpose != target.purpose() {
        return Ok(None);
    }
    let samples = match target {
        ExportTarget::Vla => segment_for_vla(&ep, &opts.hand, opts.close_ticks)?,
        ExportTarget::Diffusion => segment_for_diffusion(&ep)?,
    };
    let mut lines = Vec::with_capacity(samples.len());
    for (n, s) in samples.iter().enumerate() {
        let mut images = Vec::new();
        if opts.images {
            let cam1 = load_frame(dir, &s.frames[0])?;
            let cam2 = load_frame(dir, &s.frames[1])?;
            let processed = match target {
                ExportTarget::Vla => vec![preprocess_vla_images(&cam1, &cam2)],
                ExportTarget::Diffusion => vec![preprocess_diffusion_image(&cam1), preprocess_diffusion_image(&cam2)],
            };
            for (k, img) in processed.iter().enumerate() {
                let name = format!("images/{}_{n:05}_{k}.ppm", ep.meta.id);
                let p = out.join(&name);
                img.save_ppm(&p).map_err(io_err(&p))?;
                images.push(name);
            }
        }
        lines.push(serde_json::to_string(&Record { sample: s, images }).expect("sample serializes"));
    }
    Ok(Some(lines))
}

/// Writes `samples.jsonl` (and optionally images) for one training set.
pub fn export_dataset(dataset: &Path, target: ExportTarget, opts: &ExportOptions) -> Result<ExportSummary, DataError> {
    let out = opts.out.clone().unwrap_or_else(|| dataset.join("export").join(target.as_str()));
    let images = out.join("images");
    fs::create_dir_all(&images).map_err(io_err(&images))?;
    let dirs = episode_dirs(dataset)?;
    let results = par_map(&dirs, |d| export_episode(d, target, opts, &out));

    let path = out.join("samples.jsonl");
    let mut file = std::io::BufWriter::new(fs::File::create(&path).map_err(io_err(&path))?);
    let (mut episodes, mut samples) = (0, 0);
    for r in results {
        let Some(lines) = r? else { continue };
        episodes += 1;
        samples += lines.len();
        for l in lines {
            writeln!(file, "{l}").map_err(io_err(&path))?;
        }
    }
    file.flush().map_err(io_err(&path))?;
    Ok(ExportSummary { target: target.as_str().into(), episodes, samples, out })
}
