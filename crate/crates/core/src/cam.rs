//! Dense class activation maps and the preprocessing applied before box
//! mining: augmentation averaging, min-max normalization and thresholding.
//!
//! Coordinates follow the pixel-center convention: the cell at column `x`,
//! row `y` represents the point `(x, y)`, so a map of width `W` spans
//! `[-0.5, W - 0.5]` horizontally.

use thiserror::Error;

/// Category identifier as stored in CAMB files and annotation sets.
pub type ClassId = u32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CamError {
    #[error("map is constant; no salient region")]
    DegenerateMap,
    #[error("threshold {0} is outside (0, 1)")]
    InvalidTau(f64),
    #[error("invalid map size {width}x{height}")]
    InvalidSize { width: usize, height: usize },
    #[error("expected {expected} values for the declared size, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("value {value} at index {index} lies outside [0, 1]; normalize first")]
    NotNormalized { index: usize, value: f64 },
    #[error("class {0} has no entry in the stack")]
    UnknownClass(ClassId),
}

/// One class's activation map for one image, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CamMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
    class_id: ClassId,
    image_id: String,
}

impl CamMap {
    pub fn new(
        width: usize,
        height: usize,
        values: Vec<f64>,
        class_id: ClassId,
        image_id: impl Into<String>,
    ) -> Result<Self, CamError> {
        if width == 0 || height == 0 {
            return Err(CamError::InvalidSize { width, height });
        }
        let expected = width
            .checked_mul(height)
            .ok_or(CamError::InvalidSize { width, height })?;
        if values.len() != expected {
            return Err(CamError::ShapeMismatch {
                expected,
                actual: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(CamError::NonFinite(index));
        }
        Ok(Self {
            width,
            height,
            values,
            class_id,
            image_id: image_id.into(),
        })
    }

    /// Builds a map from nested rows; handy in tests and small fixtures.
    pub fn from_rows(rows: &[Vec<f64>], class_id: ClassId, image_id: &str) -> Result<Self, CamError> {
        let height = rows.len();
        let width = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != width) {
            return Err(CamError::ShapeMismatch {
                expected: width * height,
                actual: rows.iter().map(Vec::len).sum(),
            });
        }
        Self::new(width, height, rows.concat(), class_id, image_id)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn class_id(&self) -> ClassId {
        self.class_id
    }

    pub fn image_id(&self) -> &str {
        &self.image_id
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    /// Returns `(min, max)` over all cells.
    pub fn extrema(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    fn with_values(&self, width: usize, height: usize, values: Vec<f64>) -> Self {
        Self {
            width,
            height,
            values,
            class_id: self.class_id,
            image_id: self.image_id.clone(),
        }
    }
}

/// A normalized map after strict thresholding: every cell is either 0 or
/// strictly above `threshold`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdedMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
    threshold: f64,
}

impl ThresholdedMap {
    /// Wraps raw values, checking the thresholded-map invariants.
    pub fn new(width: usize, height: usize, values: Vec<f64>, threshold: f64) -> Result<Self, CamError> {
        if width == 0 || height == 0 {
            return Err(CamError::InvalidSize { width, height });
        }
        if values.len() != width * height {
            return Err(CamError::ShapeMismatch {
                expected: width * height,
                actual: values.len(),
            });
        }
        for (index, &value) in values.iter().enumerate() {
            if !value.is_finite() {
                return Err(CamError::NonFinite(index));
            }
            if value != 0.0 && !(value > threshold && value <= 1.0) {
                return Err(CamError::NotNormalized { index, value });
            }
        }
        Ok(Self {
            width,
            height,
            values,
            threshold,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn is_set(&self, x: usize, y: usize) -> bool {
        self.get(x, y) != 0.0
    }
}

/// How a CAM entry was produced from the source image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Augmentation {
    Identity,
    HFlip,
    /// Image rescaled so its short side has this many pixels.
    Scaled(u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CamEntry {
    pub class_id: ClassId,
    pub augmentation: Augmentation,
    pub map: CamMap,
}

/// All CAMs computed for one image, across classes and augmentations.
#[derive(Debug, Clone, PartialEq)]
pub struct CamStack {
    pub image_id: String,
    pub image_width: u32,
    pub image_height: u32,
    pub entries: Vec<CamEntry>,
}

impl CamStack {
    pub fn new(image_id: impl Into<String>, image_width: u32, image_height: u32) -> Self {
        Self {
            image_id: image_id.into(),
            image_width,
            image_height,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, augmentation: Augmentation, map: CamMap) {
        self.entries.push(CamEntry {
            class_id: map.class_id(),
            augmentation,
            map,
        });
    }

    /// Distinct class ids in ascending order.
    pub fn class_ids(&self) -> Vec<ClassId> {
        let mut ids: Vec<ClassId> = self.entries.iter().map(|e| e.class_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

/// Affine rescale of the map to `[0, 1]` using its extreme values.
pub fn normalize(map: &CamMap) -> Result<CamMap, CamError> {
    let (lo, hi) = map.extrema();
    if hi <= lo {
        return Err(CamError::DegenerateMap);
    }
    let span = hi - lo;
    let values = map.values.iter().map(|&v| (v - lo) / span).collect();
    Ok(map.with_values(map.width, map.height, values))
}

/// Keeps values strictly greater than `tau` and zeroes everything else.
pub fn threshold(map: &CamMap, tau: f64) -> Result<ThresholdedMap, CamError> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(CamError::InvalidTau(tau));
    }
    let mut values = Vec::with_capacity(map.values.len());
    for (index, &value) in map.values.iter().enumerate() {
        if !(0.0..=1.0).contains(&value) {
            return Err(CamError::NotNormalized { index, value });
        }
        values.push(if value > tau { value } else { 0.0 });
    }
    Ok(ThresholdedMap {
        width: map.width,
        height: map.height,
        values,
        threshold: tau,
    })
}

/// Mirrors the map left to right.
pub fn hflip(map: &CamMap) -> CamMap {
    let mut values = Vec::with_capacity(map.values.len());
    for row in map.values.chunks_exact(map.width) {
        values.extend(row.iter().rev());
    }
    map.with_values(map.width, map.height, values)
}

/// Interpolation taps along one axis: for each output index, the two source
/// indices and the weight of the second.
fn axis_taps(input: usize, output: usize) -> Vec<(usize, usize, f64)> {
    let scale = input as f64 / output as f64;
    let last = (input - 1) as f64;
    (0..output)
        .map(|i| {
            let src = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, last);
            let lo = src.floor() as usize;
            let hi = (lo + 1).min(input - 1);
            (lo, hi, src - lo as f64)
        })
        .collect()
}

/// `a + (b - a) * t`, clamped to the segment so the result never leaves
/// `[min(a, b), max(a, b)]` and equal endpoints are reproduced exactly.
#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    if a == b {
        return a;
    }
    let v = a + (b - a) * t;
    v.clamp(a.min(b), a.max(b))
}

/// Bilinear resampling with pixel-center alignment and border clamping.
pub fn resample_bilinear(map: &CamMap, out_w: usize, out_h: usize) -> Result<CamMap, CamError> {
    if out_w == 0 || out_h == 0 {
        return Err(CamError::InvalidSize {
            width: out_w,
            height: out_h,
        });
    }
    if out_w == map.width && out_h == map.height {
        return Ok(map.clone());
    }
    let xs = axis_taps(map.width, out_w);
    let ys = axis_taps(map.height, out_h);
    let mut values = Vec::with_capacity(out_w * out_h);
    for &(y0, y1, ty) in &ys {
        let row0 = &map.values[y0 * map.width..(y0 + 1) * map.width];
        let row1 = &map.values[y1 * map.width..(y1 + 1) * map.width];
        for &(x0, x1, tx) in &xs {
            let top = lerp(row0[x0], row0[x1], tx);
            let bottom = lerp(row1[x0], row1[x1], tx);
            values.push(lerp(top, bottom, ty));
        }
    }
    Ok(map.with_values(out_w, out_h, values))
}

/// Averages every entry of `class_id` after undoing flips and resampling to
/// the image's own resolution.
pub fn average_stack(stack: &CamStack, class_id: ClassId) -> Result<CamMap, CamError> {
    let width = stack.image_width as usize;
    let height = stack.image_height as usize;
    let mut mean: Option<Vec<f64>> = None;
    let mut count = 0usize;
    for entry in stack.entries.iter().filter(|e| e.class_id == class_id) {
        let unflipped;
        let map = if entry.augmentation == Augmentation::HFlip {
            unflipped = hflip(&entry.map);
            &unflipped
        } else {
            &entry.map
        };
        let resampled = resample_bilinear(map, width, height)?;
        count += 1;
        match mean.as_mut() {
            None => mean = Some(resampled.values),
            Some(acc) => {
                // running mean keeps identical inputs bit-exact
                let k = count as f64;
                for (m, v) in acc.iter_mut().zip(resampled.values) {
                    *m += (v - *m) / k;
                }
            }
        }
    }
    let values = mean.ok_or(CamError::UnknownClass(class_id))?;
    CamMap::new(width, height, values, class_id, stack.image_id.clone())
}
