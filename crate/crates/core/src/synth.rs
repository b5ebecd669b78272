//! Deterministic synthetic CAMs with known ground-truth boxes.
//!
//! Randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng`), seeded with
//! `seed_from_u64(seed)` and switched to stream `index` for the image at
//! that position in a corpus. Floats are drawn as `(next_u64() >> 11) ·
//! 2⁻⁵³` and integers in `[lo, hi]` as `lo + ((next_u64() · span) >> 64)`,
//! so fixtures are reproducible on any platform.

use std::f64::consts::TAU;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::boxfit::CornerBox;
use crate::cam::{Augmentation, CamMap, CamStack, ClassId};
use crate::io::{AnnotationSet, ImageInfo, Manifest, ManifestEntry};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("instance {0} lies outside the image")]
    SpecOutOfBounds(usize),
    #[error("invalid synthetic spec: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthKind {
    /// Indicator rectangles.
    Rect,
    /// Unclipped Gaussian blobs.
    Gauss,
    /// Sum of any instances, clipped to `[0, 1]`.
    Mixture,
}

impl std::str::FromStr for SynthKind {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rect" => Ok(Self::Rect),
            "gauss" => Ok(Self::Gauss),
            "mixture" => Ok(Self::Mixture),
            other => Err(SynthError::Invalid(format!("unknown kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Instance {
    /// Inclusive pixel corners.
    Rect {
        x0: u32,
        y0: u32,
        x1: u32,
        y1: u32,
        amplitude: f64,
    },
    Gauss {
        cx: f64,
        cy: f64,
        sigma: f64,
        amplitude: f64,
    },
}

impl Instance {
    /// Ground-truth box in pixel-center coordinates. Rectangles cover
    /// their pixels' full extent; Gaussians use ±2σ.
    pub fn ground_truth(&self) -> CornerBox {
        match *self {
            Instance::Rect { x0, y0, x1, y1, .. } => CornerBox {
                x_min: f64::from(x0) - 0.5,
                y_min: f64::from(y0) - 0.5,
                w: f64::from(x1 - x0 + 1),
                h: f64::from(y1 - y0 + 1),
            },
            Instance::Gauss { cx, cy, sigma, .. } => CornerBox {
                x_min: cx - 2.0 * sigma,
                y_min: cy - 2.0 * sigma,
                w: 4.0 * sigma,
                h: 4.0 * sigma,
            },
        }
    }

    fn value(&self, x: f64, y: f64) -> f64 {
        match *self {
            Instance::Rect { x0, y0, x1, y1, amplitude } => {
                let inside = x >= f64::from(x0) && x <= f64::from(x1) && y >= f64::from(y0) && y <= f64::from(y1);
                if inside {
                    amplitude
                } else {
                    0.0
                }
            }
            Instance::Gauss { cx, cy, sigma, amplitude } => {
                let d2 = (x - cx).powi(2) + (y - cy).powi(2);
                amplitude * (-d2 / (2.0 * sigma * sigma)).exp()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub seed: u64,
    /// Stream within the seed; a corpus uses the image index.
    pub stream: u64,
    pub kind: SynthKind,
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    pub class_id: ClassId,
    pub instances: Vec<Instance>,
    /// Uniform noise amplitude in `[0, 0.2]`.
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthImage {
    pub stack: CamStack,
    /// Ground truth as a one-image set with image id 1.
    pub ground_truth: AnnotationSet,
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn unit(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * unit(rng)
}

fn int_in(rng: &mut ChaCha8Rng, lo: u32, hi: u32) -> u32 {
    let span = u64::from(hi - lo) + 1;
    lo + ((u128::from(rng.next_u64()) * u128::from(span)) >> 64) as u32
}

fn within(b: &CornerBox, width: u32, height: u32) -> bool {
    let eps = 1e-9;
    b.x_min >= -0.5 - eps
        && b.y_min >= -0.5 - eps
        && b.x_max() <= f64::from(width) - 0.5 + eps
        && b.y_max() <= f64::from(height) - 0.5 + eps
}

/// Renders the spec into a single-entry CAM stack and its ground truth.
pub fn generate(spec: &SynthSpec) -> Result<SynthImage, SynthError> {
    if spec.width == 0 || spec.height == 0 {
        return Err(SynthError::Invalid("empty image".into()));
    }
    if !(0.0..=0.2).contains(&spec.noise) {
        return Err(SynthError::Invalid(format!("noise {} outside [0, 0.2]", spec.noise)));
    }
    for (i, inst) in spec.instances.iter().enumerate() {
        let ok_kind = matches!(
            (spec.kind, inst),
            (SynthKind::Rect, Instance::Rect { .. }) | (SynthKind::Gauss, Instance::Gauss { .. }) | (SynthKind::Mixture, _)
        );
        if !ok_kind {
            return Err(SynthError::Invalid(format!("instance {i} does not match kind {:?}", spec.kind)));
        }
        if let Instance::Rect { x0, y0, x1, y1, .. } = *inst {
            if x0 > x1 || y0 > y1 || x1 >= spec.width || y1 >= spec.height {
                return Err(SynthError::SpecOutOfBounds(i));
            }
        }
        if let Instance::Gauss { sigma, .. } = *inst {
            if !(sigma > 0.0) {
                return Err(SynthError::Invalid(format!("instance {i} has sigma {sigma}")));
            }
        }
        if !within(&inst.ground_truth(), spec.width, spec.height) {
            return Err(SynthError::SpecOutOfBounds(i));
        }
    }

    let (w, h) = (spec.width as usize, spec.height as usize);
    let mut rng = rng_for(spec.seed ^ 0x6e6f_6973_6521, spec.stream);
    let mut values = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (fx, fy) = (x as f64, y as f64);
            let mut v: f64 = spec.instances.iter().map(|i| i.value(fx, fy)).sum();
            if spec.noise > 0.0 {
                v += uniform(&mut rng, -spec.noise, spec.noise);
            }
            if spec.kind == SynthKind::Mixture {
                v = v.clamp(0.0, 1.0);
            }
            // stored as f32 on disk; keep memory and file identical
            values.push(f64::from(v as f32));
        }
    }
    let map = CamMap::new(w, h, values, spec.class_id, spec.image_id.clone())
        .map_err(|e| SynthError::Invalid(e.to_string()))?;
    let mut stack = CamStack::new(spec.image_id.clone(), spec.width, spec.height);
    stack.push(Augmentation::Identity, map);

    let mut gt = AnnotationSet::default();
    gt.images.push(ImageInfo {
        id: 1,
        file_name: file_name(&spec.image_id),
        width: spec.width,
        height: spec.height,
    });
    gt.ensure_category(spec.class_id);
    for inst in &spec.instances {
        gt.add_box(1, spec.class_id, inst.ground_truth(), None);
    }
    Ok(SynthImage {
        stack,
        ground_truth: gt,
    })
}

/// Image file name recorded for a synthetic image id.
pub fn file_name(image_id: &str) -> String {
    format!("{image_id}.png")
}

pub fn image_id(index: u64) -> String {
    format!("synth_{index:06}")
}

fn random_rect(rng: &mut ChaCha8Rng, size: u32) -> Instance {
    let max = size.saturating_sub(1).clamp(8, 200);
    let w = int_in(rng, 8, max);
    let h = int_in(rng, 8, max);
    let x0 = int_in(rng, 0, size - w);
    let y0 = int_in(rng, 0, size - h);
    Instance::Rect {
        x0,
        y0,
        x1: x0 + w - 1,
        y1: y0 + h - 1,
        amplitude: 1.0,
    }
}

fn random_gauss(rng: &mut ChaCha8Rng, size: u32, sigma: f64, amplitude: f64) -> Instance {
    let lo = 2.0 * sigma - 0.5;
    let hi = f64::from(size) - 0.5 - 2.0 * sigma;
    Instance::Gauss {
        cx: uniform(rng, lo, hi),
        cy: uniform(rng, lo, hi),
        sigma,
        amplitude,
    }
}

fn boxes_apart(a: &CornerBox, b: &CornerBox, gap: f64) -> bool {
    a.x_max() + gap <= b.x_min || b.x_max() + gap <= a.x_min || a.y_max() + gap <= b.y_min || b.y_max() + gap <= a.y_min
}

/// Two flat-topped blobs whose normalized valley sits between 0.2 and 0.5:
/// one component at τ = 0.2, two at τ = 0.5.
pub fn merging_pair(rng: &mut ChaCha8Rng, size: u32) -> Vec<Instance> {
    let sigma = uniform(rng, f64::from(size) / 28.0, f64::from(size) / 20.0);
    let separation = sigma * uniform(rng, 4.65, 4.85);
    let angle = uniform(rng, 0.0, TAU);
    let (dx, dy) = (0.5 * separation * angle.cos(), 0.5 * separation * angle.sin());
    let margin_x = dx.abs() + 2.0 * sigma;
    let margin_y = dy.abs() + 2.0 * sigma;
    let cx = uniform(rng, margin_x - 0.5, f64::from(size) - 0.5 - margin_x);
    let cy = uniform(rng, margin_y - 0.5, f64::from(size) - 0.5 - margin_y);
    [(cx - dx, cy - dy), (cx + dx, cy + dy)]
        .into_iter()
        .map(|(cx, cy)| Instance::Gauss {
            cx,
            cy,
            sigma,
            amplitude: 3.0,
        })
        .collect()
}

/// Draws a random spec of the given kind for corpus position `index`.
pub fn random_spec(kind: SynthKind, size: u32, seed: u64, index: u64, noise: f64) -> SynthSpec {
    let mut rng = rng_for(seed, index);
    let class_id = int_in(&mut rng, 1, 3);
    let instances = match kind {
        SynthKind::Rect => vec![random_rect(&mut rng, size)],
        SynthKind::Gauss => {
            let s = f64::from(size);
            let sigma = uniform(&mut rng, s / 24.0, s / 10.0);
            let first = random_gauss(&mut rng, size, sigma, 1.0);
            let mut out = vec![first];
            if int_in(&mut rng, 0, 1) == 1 {
                for _ in 0..16 {
                    let sigma = uniform(&mut rng, s / 24.0, s / 10.0);
                    let second = random_gauss(&mut rng, size, sigma, 1.0);
                    if boxes_apart(&first.ground_truth(), &second.ground_truth(), 2.0) {
                        out.push(second);
                        break;
                    }
                }
            }
            out
        }
        SynthKind::Mixture => merging_pair(&mut rng, size),
    };
    SynthSpec {
        seed,
        stream: index,
        kind,
        image_id: image_id(index),
        width: size,
        height: size,
        class_id,
        instances,
        noise,
    }
}

/// A generated corpus held in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub stacks: Vec<CamStack>,
    pub manifest: Manifest,
    pub ground_truth: AnnotationSet,
}

/// Generates `n` images; image `i` gets annotation image id `i + 1`,
/// matching the canonical (sorted) order of the manifest.
pub fn generate_corpus(kind: SynthKind, n: u64, size: u32, seed: u64, noise: f64) -> Result<SynthCorpus, SynthError> {
    let mut stacks = Vec::with_capacity(n as usize);
    let mut manifest = Manifest::default();
    let mut gt = AnnotationSet::default();
    for index in 0..n {
        let spec = random_spec(kind, size, seed, index, noise);
        let img = generate(&spec)?;
        let id = index + 1;
        gt.images.push(ImageInfo {
            id,
            file_name: file_name(&spec.image_id),
            width: size,
            height: size,
        });
        gt.ensure_category(spec.class_id);
        for a in &img.ground_truth.annotations {
            gt.add_box(id, a.category_id, a.corner(), None);
        }
        manifest.entries.push(ManifestEntry {
            image_id: spec.image_id.clone(),
            file: file_name(&spec.image_id),
            width: size,
            height: size,
            labels: vec![spec.class_id],
        });
        stacks.push(img.stack);
    }
    gt.sort();
    Ok(SynthCorpus {
        stacks,
        manifest,
        ground_truth: gt,
    })
}
