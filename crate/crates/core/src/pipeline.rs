//! Parallel batch mining over a manifest.
//!
//! The unit of work is one image. Workers receive immutable inputs and
//! return owned results; the merge into an [`AnnotationSet`] happens on
//! the calling thread in canonical (sorted image id) order, so the output
//! never depends on the worker count.

use std::borrow::Borrow;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::boxfit::PseudoBox;
use crate::cam::{CamError, CamStack, ClassId};
use crate::io::{read_camb, AnnotationSet, FormatError, ImageInfo, Manifest, ManifestEntry};
use crate::merge::{mine_classes, ConfigError, MiningConfig};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("image {image_id}: {source}")]
    Cam { image_id: String, source: CamError },
    #[error("image {image_id}: CAM file is for image {found:?}")]
    ImageIdMismatch { image_id: String, found: String },
    #[error("image {image_id}: manifest says {expected:?} but CAM file says {found:?}")]
    SizeMismatch {
        image_id: String,
        expected: (u32, u32),
        found: (u32, u32),
    },
    #[error("image {image_id}: labelled class {class_id} has no CAM entry")]
    MissingClass { image_id: String, class_id: ClassId },
    #[error("worker pool: {0}")]
    Pool(String),
}

impl PipelineError {
    /// 2 for filesystem failures, 1 for invalid inputs.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Format(e) if e.is_io() => 2,
            _ => 1,
        }
    }
}

/// Summed per-stage time across workers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StageTimings {
    pub read_s: f64,
    pub mine_s: f64,
    pub assemble_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub images: usize,
    pub boxes: usize,
    pub wall_time_s: f64,
    pub workers: usize,
    pub stages: StageTimings,
    pub config: MiningConfig,
    pub degenerate_cams: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct MineOutput {
    pub annotations: AnnotationSet,
    pub report: RunReport,
}

struct ImageResult {
    boxes: Vec<PseudoBox>,
    degenerate: Vec<ClassId>,
    read: Duration,
    mine: Duration,
}

/// Location of the CAMB file for a manifest entry.
pub fn camb_path(cams_dir: &Path, image_id: &str) -> PathBuf {
    cams_dir.join(format!("{image_id}.camb"))
}

fn mine_one<S: Borrow<CamStack>>(
    entry: &ManifestEntry,
    config: &MiningConfig,
    load: &(dyn Fn(&ManifestEntry) -> Result<S, PipelineError> + Sync),
) -> Result<ImageResult, PipelineError> {
    let t0 = Instant::now();
    let loaded = load(entry)?;
    let stack: &CamStack = loaded.borrow();
    let read = t0.elapsed();

    if stack.image_id != entry.image_id {
        return Err(PipelineError::ImageIdMismatch {
            image_id: entry.image_id.clone(),
            found: stack.image_id.clone(),
        });
    }
    if (stack.image_width, stack.image_height) != (entry.width, entry.height) {
        return Err(PipelineError::SizeMismatch {
            image_id: entry.image_id.clone(),
            expected: (entry.width, entry.height),
            found: (stack.image_width, stack.image_height),
        });
    }
    let present = stack.class_ids();
    if let Some(&class_id) = entry.labels.iter().find(|c| !present.contains(c)) {
        return Err(PipelineError::MissingClass {
            image_id: entry.image_id.clone(),
            class_id,
        });
    }

    let t1 = Instant::now();
    let mined = mine_classes(stack, &entry.labels, config).map_err(|source| PipelineError::Cam {
        image_id: entry.image_id.clone(),
        source,
    })?;
    Ok(ImageResult {
        boxes: mined.boxes,
        degenerate: mined.degenerate_classes,
        read,
        mine: t1.elapsed(),
    })
}

/// Mines every manifest entry with `workers` threads. `load` fetches the
/// CAM stack for an entry (from disk, or from memory in tests and
/// benchmarks).
pub fn mine_corpus<S, F>(
    manifest: &Manifest,
    config: &MiningConfig,
    workers: usize,
    load: F,
) -> Result<MineOutput, PipelineError>
where
    S: Borrow<CamStack>,
    F: Fn(&ManifestEntry) -> Result<S, PipelineError> + Sync,
{
    config.validate()?;
    let start = Instant::now();
    let workers = workers.max(1);
    let entries = manifest.canonical();

    let results: Vec<Result<ImageResult, PipelineError>> = if workers == 1 {
        entries.iter().map(|e| mine_one(e, config, &load)).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| PipelineError::Pool(e.to_string()))?;
        pool.install(|| entries.par_iter().map(|e| mine_one(e, config, &load)).collect())
    };

    let t_assemble = Instant::now();
    let mut set = AnnotationSet::default();
    let mut stages = StageTimings::default();
    let mut degenerate_cams = 0;
    let mut warnings = Vec::new();
    for (index, (entry, result)) in entries.iter().zip(results).enumerate() {
        let result = result?;
        let image_id = index as u64 + 1;
        set.images.push(ImageInfo {
            id: image_id,
            file_name: entry.file.clone(),
            width: entry.width,
            height: entry.height,
        });
        for &class_id in &entry.labels {
            set.ensure_category(class_id);
        }
        for b in &result.boxes {
            set.add_box(image_id, b.class_id, b.corner(), Some(b.score));
        }
        for class_id in &result.degenerate {
            warnings.push(format!(
                "image {}: CAM for class {class_id} is constant; no boxes",
                entry.image_id
            ));
        }
        degenerate_cams += result.degenerate.len();
        stages.read_s += result.read.as_secs_f64();
        stages.mine_s += result.mine.as_secs_f64();
    }
    set.sort();
    stages.assemble_s = t_assemble.elapsed().as_secs_f64();

    let report = RunReport {
        images: set.images.len(),
        boxes: set.annotations.len(),
        wall_time_s: start.elapsed().as_secs_f64(),
        workers,
        stages,
        config: config.clone(),
        degenerate_cams,
        warnings,
    };
    Ok(MineOutput {
        annotations: set,
        report,
    })
}

/// Mines a directory of CAMB files named `<image_id>.camb`.
pub fn mine_directory(
    cams_dir: &Path,
    manifest: &Manifest,
    config: &MiningConfig,
    workers: usize,
) -> Result<MineOutput, PipelineError> {
    mine_corpus(manifest, config, workers, |entry| {
        read_camb(&camb_path(cams_dir, &entry.image_id)).map_err(PipelineError::from)
    })
}

/// Mines stacks already in memory, matched to manifest entries by image id.
pub fn mine_in_memory(
    stacks: &[CamStack],
    manifest: &Manifest,
    config: &MiningConfig,
    workers: usize,
) -> Result<MineOutput, PipelineError> {
    let by_id: std::collections::HashMap<&str, &CamStack> =
        stacks.iter().map(|s| (s.image_id.as_str(), s)).collect();
    mine_corpus(manifest, config, workers, |entry| {
        by_id.get(entry.image_id.as_str()).copied().ok_or_else(|| {
            PipelineError::Format(FormatError::io(
                Path::new(&entry.image_id),
                std::io::Error::new(std::io::ErrorKind::NotFound, "no stack in memory"),
            ))
        })
    })
}
