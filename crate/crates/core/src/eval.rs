//! Scoring mined boxes against ground truth: greedy matching, precision /
//! recall curves, AP variants, recall, CorLoc, and per-set box statistics.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;
use thiserror::Error;

use crate::boxfit::CornerBox;
use crate::cam::ClassId;
use crate::io::AnnotationSet;
use crate::merge::iou_unchecked;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("prediction image {0:?} does not appear in the ground truth")]
    UnknownImage(String),
    #[error("IoU threshold {0} is outside [0, 1]")]
    BadIou(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub image_id: u64,
    pub category_id: ClassId,
    pub bbox: CornerBox,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruth {
    pub image_id: u64,
    pub category_id: ClassId,
    pub bbox: CornerBox,
}

/// Score descending, then larger area, then corner coordinates, then image.
pub fn detection_order(a: &Detection, b: &Detection) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| b.bbox.area().total_cmp(&a.bbox.area()))
        .then_with(|| a.bbox.x_min.total_cmp(&b.bbox.x_min))
        .then_with(|| a.bbox.y_min.total_cmp(&b.bbox.y_min))
        .then_with(|| a.bbox.w.total_cmp(&b.bbox.w))
        .then_with(|| a.bbox.h.total_cmp(&b.bbox.h))
        .then_with(|| a.image_id.cmp(&b.image_id))
        .then_with(|| a.category_id.cmp(&b.category_id))
}

fn sorted(preds: &[Detection]) -> Vec<Detection> {
    let mut v = preds.to_vec();
    v.sort_by(detection_order);
    v
}

/// Greedy matching. `preds` must already be in [`detection_order`]. Each
/// prediction takes the highest-IoU unmatched ground truth of its image and
/// class with IoU ≥ `iou_thresh`. Returns one TP flag per prediction.
pub fn match_greedy(preds: &[Detection], gts: &[GroundTruth], iou_thresh: f64) -> Vec<bool> {
    let mut by_key: HashMap<(u64, ClassId), Vec<usize>> = HashMap::new();
    for (i, g) in gts.iter().enumerate() {
        by_key.entry((g.image_id, g.category_id)).or_default().push(i);
    }
    let mut used = vec![false; gts.len()];
    preds
        .iter()
        .map(|p| {
            let Some(candidates) = by_key.get(&(p.image_id, p.category_id)) else {
                return false;
            };
            let mut best: Option<(usize, f64)> = None;
            for &g in candidates {
                if used[g] {
                    continue;
                }
                let o = iou_unchecked(&p.bbox, &gts[g].bbox);
                if o >= iou_thresh && best.is_none_or(|(_, b)| o > b) {
                    best = Some((g, o));
                }
            }
            match best {
                Some((g, _)) => {
                    used[g] = true;
                    true
                }
                None => false,
            }
        })
        .collect()
}

/// Precision/recall after each prediction, in descending score order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrCurve {
    /// `(recall, precision)` pairs.
    pub points: Vec<(f64, f64)>,
    pub num_gt: usize,
}

impl PrCurve {
    pub fn from_flags(tp: &[bool], num_gt: usize) -> Self {
        let mut hits = 0usize;
        let points = tp
            .iter()
            .enumerate()
            .map(|(k, &t)| {
                hits += usize::from(t);
                let recall = if num_gt == 0 { 0.0 } else { hits as f64 / num_gt as f64 };
                (recall, hits as f64 / (k + 1) as f64)
            })
            .collect();
        Self { points, num_gt }
    }
}

/// Area under the monotone precision envelope.
pub fn ap_integral(curve: &PrCurve) -> f64 {
    if curve.num_gt == 0 || curve.points.is_empty() {
        return 0.0;
    }
    let mut recall = Vec::with_capacity(curve.points.len() + 2);
    let mut precision = Vec::with_capacity(curve.points.len() + 2);
    recall.push(0.0);
    precision.push(0.0);
    for &(r, p) in &curve.points {
        recall.push(r);
        precision.push(p);
    }
    recall.push(1.0);
    precision.push(0.0);
    for i in (0..precision.len() - 1).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    (0..recall.len() - 1)
        .filter(|&i| recall[i + 1] != recall[i])
        .map(|i| (recall[i + 1] - recall[i]) * precision[i + 1])
        .sum()
}

/// Mean interpolated precision at recall 0, 0.1, ..., 1.0.
pub fn ap_11point(curve: &PrCurve) -> f64 {
    if curve.num_gt == 0 {
        return 0.0;
    }
    let total: f64 = (0..=10)
        .map(|t| {
            let r = f64::from(t) / 10.0;
            curve
                .points
                .iter()
                .filter(|&&(rec, _)| rec >= r)
                .map(|&(_, p)| p)
                .fold(0.0, f64::max)
        })
        .sum();
    total / 11.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApKind {
    Integral,
    ElevenPoint,
}

/// Per-class PR curves at one IoU threshold, for classes with ground truth.
pub fn class_curves(
    preds: &[Detection],
    gts: &[GroundTruth],
    iou_thresh: f64,
) -> BTreeMap<ClassId, PrCurve> {
    let mut num_gt: BTreeMap<ClassId, usize> = BTreeMap::new();
    for g in gts {
        *num_gt.entry(g.category_id).or_default() += 1;
    }
    let order = sorted(preds);
    num_gt
        .into_iter()
        .map(|(class, n)| {
            let class_preds: Vec<Detection> =
                order.iter().copied().filter(|p| p.category_id == class).collect();
            let class_gts: Vec<GroundTruth> =
                gts.iter().copied().filter(|g| g.category_id == class).collect();
            let flags = match_greedy(&class_preds, &class_gts, iou_thresh);
            (class, PrCurve::from_flags(&flags, n))
        })
        .collect()
}

/// Mean AP over classes that have at least one ground-truth box.
pub fn mean_ap(preds: &[Detection], gts: &[GroundTruth], iou_thresh: f64, kind: ApKind) -> f64 {
    let curves = class_curves(preds, gts, iou_thresh);
    if curves.is_empty() {
        return 0.0;
    }
    let sum: f64 = curves
        .values()
        .map(|c| match kind {
            ApKind::Integral => ap_integral(c),
            ApKind::ElevenPoint => ap_11point(c),
        })
        .sum();
    sum / curves.len() as f64
}

/// IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn coco_iou_grid() -> Vec<f64> {
    (0..10).map(|i| f64::from(50 + 5 * i) / 100.0).collect()
}

/// Mean of integral AP over an IoU grid.
pub fn ap_averaged(preds: &[Detection], gts: &[GroundTruth], grid: &[f64]) -> f64 {
    if grid.is_empty() {
        return 0.0;
    }
    grid.iter()
        .map(|&t| mean_ap(preds, gts, t, ApKind::Integral))
        .sum::<f64>()
        / grid.len() as f64
}

/// Fraction of ground-truth boxes matched at `iou_thresh`.
pub fn recall_at(preds: &[Detection], gts: &[GroundTruth], iou_thresh: f64) -> f64 {
    if gts.is_empty() {
        return 0.0;
    }
    let order = sorted(preds);
    let mut by_key: HashMap<(u64, ClassId), Vec<GroundTruth>> = HashMap::new();
    for g in gts {
        by_key.entry((g.image_id, g.category_id)).or_default().push(*g);
    }
    let mut matched = 0usize;
    for ((image, class), group) in &by_key {
        let ps: Vec<Detection> = order
            .iter()
            .copied()
            .filter(|p| p.image_id == *image && p.category_id == *class)
            .collect();
        matched += match_greedy(&ps, group, iou_thresh).iter().filter(|&&t| t).count();
    }
    matched as f64 / gts.len() as f64
}

/// Fraction of (image, class-with-ground-truth) pairs where some prediction
/// of that class overlaps some ground truth of that class at `iou_thresh`.
pub fn corloc(preds: &[Detection], gts: &[GroundTruth], iou_thresh: f64) -> f64 {
    let pairs: BTreeSet<(u64, ClassId)> = gts.iter().map(|g| (g.image_id, g.category_id)).collect();
    if pairs.is_empty() {
        return 0.0;
    }
    let hits = pairs
        .iter()
        .filter(|&&(image, class)| {
            preds
                .iter()
                .filter(|p| p.image_id == image && p.category_id == class)
                .any(|p| {
                    gts.iter()
                        .filter(|g| g.image_id == image && g.category_id == class)
                        .any(|g| iou_unchecked(&p.bbox, &g.bbox) >= iou_thresh)
                })
        })
        .count();
    hits as f64 / pairs.len() as f64
}

/// Joins a prediction set to a ground-truth set by image file name and
/// returns both in ground-truth image ids. Predictions without a score
/// get score 1.
pub fn align_sets(
    pred: &AnnotationSet,
    gt: &AnnotationSet,
) -> Result<(Vec<Detection>, Vec<GroundTruth>), EvalError> {
    let gt_ids: HashMap<&str, u64> =
        gt.images.iter().map(|i| (i.file_name.as_str(), i.id)).collect();
    let mut remap = HashMap::new();
    for img in &pred.images {
        let id = gt_ids
            .get(img.file_name.as_str())
            .ok_or_else(|| EvalError::UnknownImage(img.file_name.clone()))?;
        remap.insert(img.id, *id);
    }
    let preds = pred
        .annotations
        .iter()
        .map(|a| Detection {
            image_id: remap[&a.image_id],
            category_id: a.category_id,
            bbox: a.corner(),
            score: a.score.unwrap_or(1.0),
        })
        .collect();
    let gts = gt
        .annotations
        .iter()
        .map(|a| GroundTruth {
            image_id: a.image_id,
            category_id: a.category_id,
            bbox: a.corner(),
        })
        .collect();
    Ok((preds, gts))
}

/// Averages over all boxes and images of an annotation set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct BoxStats {
    pub avg_boxes_per_image: f64,
    pub avg_width: f64,
    pub avg_height: f64,
    pub avg_area: f64,
    pub count: usize,
}

pub fn box_stats(set: &AnnotationSet) -> BoxStats {
    let count = set.annotations.len();
    if count == 0 {
        return BoxStats::default();
    }
    let n = count as f64;
    let mean = |f: &dyn Fn(&[f64; 4]) -> f64| set.annotations.iter().map(|a| f(&a.bbox)).sum::<f64>() / n;
    BoxStats {
        avg_boxes_per_image: if set.images.is_empty() {
            0.0
        } else {
            n / set.images.len() as f64
        },
        avg_width: mean(&|b| b[2]),
        avg_height: mean(&|b| b[3]),
        avg_area: mean(&|b| b[2] * b[3]),
        count,
    }
}

/// Every metric the CLI can report, computed in one pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalSummary {
    pub iou: f64,
    pub ap: f64,
    pub ap11: f64,
    pub ap_avg: f64,
    pub recall: f64,
    pub corloc: f64,
}

pub fn summarize(preds: &[Detection], gts: &[GroundTruth], iou_thresh: f64) -> EvalSummary {
    EvalSummary {
        iou: iou_thresh,
        ap: mean_ap(preds, gts, iou_thresh, ApKind::Integral),
        ap11: mean_ap(preds, gts, iou_thresh, ApKind::ElevenPoint),
        ap_avg: ap_averaged(preds, gts, &coco_iou_grid()),
        recall: recall_at(preds, gts, iou_thresh),
        corloc: corloc(preds, gts, iou_thresh),
    }
}
