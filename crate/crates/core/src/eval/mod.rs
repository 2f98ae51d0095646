//! Metrics harness: per-class classification reports and mean average
//! precision over IoU thresholds.
//!
//! AP uses all-point interpolation (the precision envelope), matching the
//! evaluation code the published numbers were produced with. Detections are
//! matched greedily in score order against per-image pools of unmatched
//! ground truths.

pub mod interchange;
mod render;

pub use render::{render_ap_table, render_classification_report};

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::GarmentClass;
use crate::geometry::{box_iou, mask_iou, mask_to_bbox, BBox, BinaryMask, GeometryError};
use crate::models::{ClassMode, Detection, ImageClassLabel};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cannot build a report from zero prediction pairs")]
    EmptyInput,
    #[error("label {0} does not belong to the configured class mode")]
    MixedModes(ImageClassLabel),
    #[error("bad IoU threshold: {0}")]
    BadThreshold(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("interchange file error: {0}")]
    Interchange(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

// ---------------------------------------------------------------------------
// Classification report
// ---------------------------------------------------------------------------

/// Precision/recall/F1/support for one class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

/// Per-class metrics plus overall accuracy, in the mode's class order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub mode: ClassMode,
    pub per_class: Vec<(ImageClassLabel, PerClassMetrics)>,
    pub accuracy: f64,
    pub total_support: usize,
    /// Classes that were predicted but have zero ground-truth support; their
    /// precision is 0 by the zero-denominator convention.
    pub zero_support_predicted: Vec<ImageClassLabel>,
}

impl ClassificationReport {
    pub fn metrics_for(&self, label: ImageClassLabel) -> Option<&PerClassMetrics> {
        self.per_class
            .iter()
            .find(|(l, _)| *l == label)
            .map(|(_, m)| m)
    }
}

fn safe_div(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Build a classification report from (true, predicted) label pairs.
///
/// Precision is TP/(TP+FP) and recall TP/(TP+FN), both 0 when their
/// denominator is 0; F1 is their harmonic mean, 0 when precision + recall
/// is 0. Every class of the mode appears in the report even with zero
/// support.
pub fn classification_report(
    pairs: &[(ImageClassLabel, ImageClassLabel)],
    mode: ClassMode,
) -> Result<ClassificationReport, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    for &(t, p) in pairs {
        if !mode.contains(t) {
            return Err(EvalError::MixedModes(t));
        }
        if !mode.contains(p) {
            return Err(EvalError::MixedModes(p));
        }
    }

    let classes = mode.classes();
    let n = classes.len();
    // confusion[t][p]: count of true class t predicted as p.
    let mut confusion = vec![vec![0usize; n]; n];
    for &(t, p) in pairs {
        let ti = mode.index_of(t).expect("validated above");
        let pi = mode.index_of(p).expect("validated above");
        confusion[ti][pi] += 1;
    }

    let mut per_class = Vec::with_capacity(n);
    let mut zero_support_predicted = Vec::new();
    let mut correct = 0usize;
    for (i, &label) in classes.iter().enumerate() {
        let tp = confusion[i][i];
        let support: usize = confusion[i].iter().sum();
        let predicted: usize = (0..n).map(|t| confusion[t][i]).sum();
        let precision = safe_div(tp as f64, predicted as f64);
        let recall = safe_div(tp as f64, support as f64);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        if support == 0 && predicted > 0 {
            zero_support_predicted.push(label);
        }
        correct += tp;
        per_class.push((
            label,
            PerClassMetrics {
                precision,
                recall,
                f1,
                support,
            },
        ));
    }

    Ok(ClassificationReport {
        mode,
        per_class,
        accuracy: correct as f64 / pairs.len() as f64,
        total_support: pairs.len(),
        zero_support_predicted,
    })
}

// ---------------------------------------------------------------------------
// Average precision
// ---------------------------------------------------------------------------

/// Which overlap measure drives detection matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IouKind {
    Mask,
    Box,
}

impl IouKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            IouKind::Mask => "mask",
            IouKind::Box => "box",
        }
    }
}

/// Ground-truth region: a mask, or just a box when no mask is available.
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    Mask(BinaryMask),
    Box(BBox),
}

/// One ground-truth garment on one image.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub image_id: String,
    pub cls: GarmentClass,
    pub region: Region,
}

impl GroundTruth {
    pub fn from_mask(
        image_id: impl Into<String>,
        cls: GarmentClass,
        mask: BinaryMask,
    ) -> Result<Self, EvalError> {
        if mask.is_blank() {
            return Err(EvalError::Interchange("empty ground-truth mask".into()));
        }
        Ok(GroundTruth {
            image_id: image_id.into(),
            cls,
            region: Region::Mask(mask),
        })
    }

    pub fn from_box(image_id: impl Into<String>, cls: GarmentClass, bbox: BBox) -> Self {
        GroundTruth {
            image_id: image_id.into(),
            cls,
            region: Region::Box(bbox),
        }
    }

    pub fn bbox(&self) -> Result<BBox, EvalError> {
        match &self.region {
            Region::Mask(m) => Ok(mask_to_bbox(m)?),
            Region::Box(b) => Ok(*b),
        }
    }
}

/// One detection on one image.
#[derive(Debug, Clone, PartialEq)]
pub struct DetRecord {
    pub image_id: String,
    pub det: Detection,
}

/// Rasterize manifest polygons into mask ground truths.
pub fn ground_truth_from_annotations(
    images: &[crate::annotation::AnnotatedImage],
) -> Result<Vec<GroundTruth>, EvalError> {
    let mut out = Vec::new();
    for img in images {
        for ann in img.annotations() {
            let mask = crate::geometry::rasterize(ann, img.width(), img.height())?;
            if mask.is_blank() {
                // A polygon thinner than a pixel can rasterize to nothing;
                // such a ground truth is unusable for IoU matching.
                return Err(EvalError::Interchange(format!(
                    "annotation on image {} rasterizes to an empty mask",
                    img.image_id()
                )));
            }
            out.push(GroundTruth {
                image_id: img.image_id().to_string(),
                cls: ann.label(),
                region: Region::Mask(mask),
            });
        }
    }
    Ok(out)
}

fn pair_iou(det: &Detection, gt: &GroundTruth, kind: IouKind) -> Result<f64, EvalError> {
    match kind {
        IouKind::Mask => {
            let det_mask = det.mask();
            match &gt.region {
                Region::Mask(m) => Ok(mask_iou(det_mask, m)?),
                // Box-only ground truth: compare against its filled
                // rectangle on the detection's grid.
                Region::Box(b) => {
                    let filled =
                        BinaryMask::filled_rect(det_mask.width(), det_mask.height(), b);
                    Ok(mask_iou(det_mask, &filled)?)
                }
            }
        }
        IouKind::Box => Ok(box_iou(&det.bbox(), &gt.bbox()?)),
    }
}

fn check_threshold(t: f64) -> Result<(), EvalError> {
    if !(t > 0.0 && t < 1.0) {
        return Err(EvalError::BadThreshold(format!("{t} outside (0, 1)")));
    }
    Ok(())
}

/// Average precision for one class at one IoU threshold.
///
/// Detections are taken in descending score order; each matches the
/// unmatched ground truth of its image with the highest IoU when that IoU
/// meets the threshold (TP), otherwise it is a false positive. AP is the
/// area under the precision-recall curve with the precision envelope made
/// monotone (all-point interpolation).
///
/// Returns `None` when the class has neither ground truths nor detections
/// (undefined, excluded from any mean); zero ground truths with detections
/// yield `Some(0.0)`.
pub fn average_precision(
    gts: &[GroundTruth],
    dets: &[DetRecord],
    cls: GarmentClass,
    iou_threshold: f64,
    kind: IouKind,
) -> Result<Option<f64>, EvalError> {
    check_threshold(iou_threshold)?;

    // Per-image ground-truth pools for the class.
    let mut gt_pool: HashMap<&str, Vec<&GroundTruth>> = HashMap::new();
    let mut n_gt = 0usize;
    for gt in gts.iter().filter(|g| g.cls == cls) {
        gt_pool.entry(gt.image_id.as_str()).or_default().push(gt);
        n_gt += 1;
    }

    let mut class_dets: Vec<&DetRecord> = dets.iter().filter(|d| d.det.cls() == cls).collect();
    if n_gt == 0 {
        return Ok(if class_dets.is_empty() {
            None
        } else {
            Some(0.0)
        });
    }
    if class_dets.is_empty() {
        return Ok(Some(0.0));
    }
    class_dets.sort_by(|a, b| b.det.score().partial_cmp(&a.det.score()).unwrap());

    let mut matched: HashMap<&str, Vec<bool>> = gt_pool
        .iter()
        .map(|(&id, pool)| (id, vec![false; pool.len()]))
        .collect();
    let mut tp_flags = Vec::with_capacity(class_dets.len());
    for rec in &class_dets {
        let mut best: Option<(usize, f64)> = None;
        if let Some(pool) = gt_pool.get(rec.image_id.as_str()) {
            let taken = &matched[rec.image_id.as_str()];
            for (gi, gt) in pool.iter().enumerate() {
                if taken[gi] {
                    continue;
                }
                let iou = pair_iou(&rec.det, gt, kind)?;
                if best.is_none() || iou > best.unwrap().1 {
                    best = Some((gi, iou));
                }
            }
        }
        match best {
            Some((gi, iou)) if iou >= iou_threshold => {
                matched.get_mut(rec.image_id.as_str()).unwrap()[gi] = true;
                tp_flags.push(true);
            }
            _ => tp_flags.push(false),
        }
    }

    // Precision-recall points over detection prefixes.
    let mut precisions = Vec::with_capacity(tp_flags.len());
    let mut recalls = Vec::with_capacity(tp_flags.len());
    let mut tp = 0usize;
    for (k, &is_tp) in tp_flags.iter().enumerate() {
        if is_tp {
            tp += 1;
        }
        precisions.push(tp as f64 / (k + 1) as f64);
        recalls.push(tp as f64 / n_gt as f64);
    }
    // Monotone precision envelope from the right.
    for k in (0..precisions.len().saturating_sub(1)).rev() {
        precisions[k] = precisions[k].max(precisions[k + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for k in 0..recalls.len() {
        ap += (recalls[k] - prev_recall) * precisions[k];
        prev_recall = recalls[k];
    }
    Ok(Some(ap))
}

/// Per-class AP and mAP across a threshold sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct APResult {
    pub iou_kind: IouKind,
    pub thresholds: Vec<f64>,
    /// mAP per threshold; `None` when no class had a defined AP.
    pub map_per_threshold: Vec<Option<f64>>,
    /// AP per (class, threshold), aligned with `thresholds`.
    pub per_class: Vec<(GarmentClass, Vec<Option<f64>>)>,
}

impl APResult {
    pub fn map_at(&self, threshold: f64) -> Option<f64> {
        self.thresholds
            .iter()
            .position(|&t| (t - threshold).abs() < 1e-12)
            .and_then(|i| self.map_per_threshold[i])
    }
}

/// Evaluate AP over {Top, Bottom} at each threshold; mAP is the mean over
/// classes with a defined AP.
pub fn map_over_thresholds(
    gts: &[GroundTruth],
    dets: &[DetRecord],
    thresholds: &[f64],
    kind: IouKind,
) -> Result<APResult, EvalError> {
    if thresholds.is_empty() {
        return Err(EvalError::BadThreshold("empty threshold list".into()));
    }
    for w in thresholds.windows(2) {
        if w[0] >= w[1] {
            return Err(EvalError::BadThreshold(format!(
                "thresholds must be strictly ascending, got {} before {}",
                w[0], w[1]
            )));
        }
    }
    for &t in thresholds {
        check_threshold(t)?;
    }

    let mut per_class = Vec::new();
    for cls in GarmentClass::ALL {
        let mut aps = Vec::with_capacity(thresholds.len());
        for &t in thresholds {
            aps.push(average_precision(gts, dets, cls, t, kind)?);
        }
        per_class.push((cls, aps));
    }
    let map_per_threshold = (0..thresholds.len())
        .map(|i| {
            let defined: Vec<f64> = per_class
                .iter()
                .filter_map(|(_, aps)| aps[i])
                .collect();
            if defined.is_empty() {
                None
            } else {
                Some(defined.iter().sum::<f64>() / defined.len() as f64)
            }
        })
        .collect();

    Ok(APResult {
        iou_kind: kind,
        thresholds: thresholds.to_vec(),
        map_per_threshold,
        per_class,
    })
}
