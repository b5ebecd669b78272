//! Box overlap, per-class non-maximum suppression, and the end-to-end
//! multi-threshold mining of one image's CAM stack.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boxfit::{component_to_box, CornerBox, FitOptions, GeometryError, PseudoBox};
use crate::cam::{self, CamError, CamStack, ClassId};
use crate::region::{filter_by_area, label_components, Connectivity};

pub const DEFAULT_TAUS: [f64; 4] = [0.2, 0.3, 0.4, 0.5];
pub const DEFAULT_NMS_IOU: f64 = 0.8;
pub const DEFAULT_MIN_AREA_RATIO: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("threshold list is empty")]
    NoThresholds,
    #[error("thresholds must be strictly increasing and inside (0, 1): {0:?}")]
    BadThresholds(Vec<f64>),
    #[error("NMS IoU threshold {0} is outside (0, 1]")]
    BadNmsIou(f64),
    #[error("minimum area ratio {0} is outside [0, 1]")]
    BadAreaRatio(f64),
    #[error("connectivity must be 4 or 8, got {0}")]
    BadConnectivity(u8),
    #[error("minimum box size {0} must be positive")]
    BadMinBoxSize(f64),
}

/// Parameters of the mining procedure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MiningConfig {
    pub taus: Vec<f64>,
    pub nms_iou: f64,
    /// 4 or 8.
    pub connectivity: u8,
    pub min_box_size: f64,
    pub moment_correction: bool,
    pub min_area_ratio: f64,
    /// Keep exact duplicate boxes instead of collapsing them during NMS.
    pub keep_duplicates: bool,
}

impl Default for MiningConfig {
    fn default() -> Self {
        Self {
            taus: DEFAULT_TAUS.to_vec(),
            nms_iou: DEFAULT_NMS_IOU,
            connectivity: 8,
            min_box_size: 1.0,
            moment_correction: false,
            min_area_ratio: DEFAULT_MIN_AREA_RATIO,
            keep_duplicates: false,
        }
    }
}

impl MiningConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.taus.is_empty() {
            return Err(ConfigError::NoThresholds);
        }
        let in_range = self.taus.iter().all(|&t| t > 0.0 && t < 1.0);
        let increasing = self.taus.windows(2).all(|p| p[0] < p[1]);
        if !in_range || !increasing {
            return Err(ConfigError::BadThresholds(self.taus.clone()));
        }
        if !(self.nms_iou > 0.0 && self.nms_iou <= 1.0) {
            return Err(ConfigError::BadNmsIou(self.nms_iou));
        }
        if !(0.0..=1.0).contains(&self.min_area_ratio) {
            return Err(ConfigError::BadAreaRatio(self.min_area_ratio));
        }
        if !(self.min_box_size > 0.0) {
            return Err(ConfigError::BadMinBoxSize(self.min_box_size));
        }
        if Connectivity::from_neighbours(self.connectivity).is_none() {
            return Err(ConfigError::BadConnectivity(self.connectivity));
        }
        Ok(())
    }

    pub fn connectivity(&self) -> Connectivity {
        Connectivity::from_neighbours(self.connectivity).unwrap_or_default()
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            moment_correction: self.moment_correction,
            min_box_size: self.min_box_size,
        }
    }
}

/// Intersection over union of two corner boxes.
pub fn iou(a: &CornerBox, b: &CornerBox) -> Result<f64, GeometryError> {
    if !(a.w > 0.0 && a.h > 0.0 && b.w > 0.0 && b.h > 0.0) {
        return Err(GeometryError::ZeroArea);
    }
    Ok(iou_unchecked(a, b))
}

pub(crate) fn iou_unchecked(a: &CornerBox, b: &CornerBox) -> f64 {
    let iw = (a.x_max().min(b.x_max()) - a.x_min.max(b.x_min)).max(0.0);
    let ih = (a.y_max().min(b.y_max()) - a.y_min.max(b.y_min)).max(0.0);
    let inter = iw * ih;
    if inter == 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).min(1.0)
}

/// Ranking used by NMS and evaluation: score descending, then larger area,
/// then lexicographic corner coordinates.
pub fn rank_order(a: &PseudoBox, b: &PseudoBox) -> Ordering {
    let (ca, cb) = (a.corner(), b.corner());
    b.score
        .total_cmp(&a.score)
        .then_with(|| cb.area().total_cmp(&ca.area()))
        .then_with(|| ca.x_min.total_cmp(&cb.x_min))
        .then_with(|| ca.y_min.total_cmp(&cb.y_min))
        .then_with(|| ca.w.total_cmp(&cb.w))
        .then_with(|| ca.h.total_cmp(&cb.h))
}

fn same_corner(a: &CornerBox, b: &CornerBox) -> bool {
    a.x_min == b.x_min && a.y_min == b.y_min && a.w == b.w && a.h == b.h
}

/// Greedy NMS. A box is suppressed when its IoU with an already kept box
/// is strictly greater than `iou_thresh`; exact duplicates of a kept box
/// are dropped too unless `keep_duplicates` is set.
///
/// All boxes are expected to share image and class.
pub fn nms(mut boxes: Vec<PseudoBox>, iou_thresh: f64, keep_duplicates: bool) -> Vec<PseudoBox> {
    boxes.sort_by(rank_order);
    let mut kept: Vec<PseudoBox> = Vec::with_capacity(boxes.len());
    let mut kept_corners: Vec<CornerBox> = Vec::with_capacity(boxes.len());
    for b in boxes {
        let c = b.corner();
        let suppressed = kept_corners.iter().any(|k| {
            iou_unchecked(k, &c) > iou_thresh || (!keep_duplicates && same_corner(k, &c))
        });
        if !suppressed {
            kept_corners.push(c);
            kept.push(b);
        }
    }
    kept
}

/// Boxes mined from one image plus bookkeeping about classes that yielded
/// nothing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MinedImage {
    pub boxes: Vec<PseudoBox>,
    /// Classes whose averaged CAM was constant.
    pub degenerate_classes: Vec<ClassId>,
}

/// Candidate boxes of one class for each threshold, before NMS.
pub fn candidates_per_tau(
    stack: &CamStack,
    class_id: ClassId,
    config: &MiningConfig,
) -> Result<Vec<Vec<PseudoBox>>, CamError> {
    let averaged = cam::average_stack(stack, class_id)?;
    let normalized = cam::normalize(&averaged)?;
    let connectivity = config.connectivity();
    let options = config.fit_options();
    let image = (stack.image_id.as_str(), stack.image_width, stack.image_height);
    config
        .taus
        .iter()
        .map(|&tau| {
            let thresholded = cam::threshold(&normalized, tau)?;
            let components = filter_by_area(
                label_components(&thresholded, connectivity),
                config.min_area_ratio,
            );
            Ok(components
                .iter()
                .filter_map(|c| component_to_box(c, options, image, class_id, tau).ok())
                .collect())
        })
        .collect()
}

/// Mines every class present in the stack.
pub fn mine_boxes(stack: &CamStack, config: &MiningConfig) -> Result<MinedImage, CamError> {
    mine_classes(stack, &stack.class_ids(), config)
}

/// Mines the given classes, which must all have entries in the stack.
pub fn mine_classes(
    stack: &CamStack,
    classes: &[ClassId],
    config: &MiningConfig,
) -> Result<MinedImage, CamError> {
    let mut classes = classes.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let mut out = MinedImage::default();
    for class_id in classes {
        match candidates_per_tau(stack, class_id, config) {
            Ok(per_tau) => {
                let pooled = per_tau.into_iter().flatten().collect();
                out.boxes
                    .extend(nms(pooled, config.nms_iou, config.keep_duplicates));
            }
            Err(CamError::DegenerateMap) => out.degenerate_classes.push(class_id),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}
