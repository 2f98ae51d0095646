//! The two learned stages as backend contracts, their training
//! configurations, deterministic mocks, and small trainable native
//! implementations.
//!
//! Backends are contracts on purpose: the published pipelines bind to
//! specific frameworks and pretrained weight files that are availability
//! hazards, so everything downstream of [`ClassifierBackend`] and
//! [`SegmenterBackend`] runs identically against mocks, the built-in native
//! models, or anything else that implements the traits.

mod artifact;
mod mock;
mod native;

pub use artifact::{load_classifier, load_segmenter, save_classifier, save_segmenter};
pub use mock::{MockClassifier, MockSegmenter};
pub use native::{train_classifier, train_segmenter, NativeClassifier, NativeSegmenter};

use std::path::{Path, PathBuf};

use image::RgbImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::GarmentClass;
use crate::geometry::{mask_to_bbox, BBox, BinaryMask, GeometryError};

/// Tolerance on the classifier score-vector sum.
pub const SCORE_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("no training samples for class {0}")]
    EmptyClass(ImageClassLabel),
    #[error("dataset has no usable annotations: {0}")]
    EmptyDataset(String),
    #[error("label {0} is outside the configured class mode")]
    LabelOutsideMode(ImageClassLabel),
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("failed to decode image: {0}")]
    DecodeFailure(String),
    #[error("invalid detection: {0}")]
    InvalidDetection(String),
    #[error("invalid score vector: {0}")]
    InvalidScores(String),
    #[error("model artifact error: {0}")]
    Artifact(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Routing decision classes for the first stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageClassLabel {
    Top,
    Bottom,
    FullBody,
    HalfBody,
    Accessories,
}

impl ImageClassLabel {
    /// Row label used in reports, matching the published table style.
    pub fn display_name(&self) -> &'static str {
        match self {
            ImageClassLabel::Top => "Tops",
            ImageClassLabel::Bottom => "Bottoms",
            ImageClassLabel::FullBody => "Full Bodies",
            ImageClassLabel::HalfBody => "Half Bodies",
            ImageClassLabel::Accessories => "Accessories",
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ImageClassLabel::Top => "top",
            ImageClassLabel::Bottom => "bottom",
            ImageClassLabel::FullBody => "full_body",
            ImageClassLabel::HalfBody => "half_body",
            ImageClassLabel::Accessories => "accessories",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "top" => Some(ImageClassLabel::Top),
            "bottom" => Some(ImageClassLabel::Bottom),
            "full_body" => Some(ImageClassLabel::FullBody),
            "half_body" => Some(ImageClassLabel::HalfBody),
            "accessories" => Some(ImageClassLabel::Accessories),
            _ => None,
        }
    }

    /// The garment class this route passes through directly, if any.
    pub fn garment(&self) -> Option<GarmentClass> {
        match self {
            ImageClassLabel::Top => Some(GarmentClass::Top),
            ImageClassLabel::Bottom => Some(GarmentClass::Bottom),
            _ => None,
        }
    }
}

impl std::fmt::Display for ImageClassLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Whether a classifier runs with or without the Accessories class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassMode {
    FourClass,
    FiveClass,
}

impl ClassMode {
    pub fn classes(&self) -> &'static [ImageClassLabel] {
        const FIVE: [ImageClassLabel; 5] = [
            ImageClassLabel::Top,
            ImageClassLabel::Bottom,
            ImageClassLabel::FullBody,
            ImageClassLabel::HalfBody,
            ImageClassLabel::Accessories,
        ];
        match self {
            ClassMode::FourClass => &FIVE[..4],
            ClassMode::FiveClass => &FIVE,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.classes().len()
    }

    pub fn contains(&self, label: ImageClassLabel) -> bool {
        self.classes().contains(&label)
    }

    pub fn index_of(&self, label: ImageClassLabel) -> Option<usize> {
        self.classes().iter().position(|&l| l == label)
    }

    pub fn from_num_classes(n: usize) -> Option<Self> {
        match n {
            4 => Some(ClassMode::FourClass),
            5 => Some(ClassMode::FiveClass),
            _ => None,
        }
    }
}

/// Pretrained feature extractors selectable for the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClassifierBackbone {
    ResNet50,
    VGG16,
    InceptionV3,
}

impl ClassifierBackbone {
    /// Published input resolution convention for each backbone.
    pub fn input_size(&self) -> u32 {
        match self {
            ClassifierBackbone::ResNet50 | ClassifierBackbone::VGG16 => 224,
            ClassifierBackbone::InceptionV3 => 299,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SegmenterBackbone {
    ResNet101,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    CategoricalCrossEntropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OptimizerKind {
    Adam,
}

/// Source of the segmenter's pretrained initialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightsInit {
    ImageNet,
    Coco,
    ModaNet,
}

/// Image-classifier training parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub loss: LossKind,
    pub optimizer: OptimizerKind,
    pub epochs: usize,
    pub backbone: ClassifierBackbone,
    pub mode: ClassMode,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            learning_rate: 1e-4,
            batch_size: 32,
            loss: LossKind::CategoricalCrossEntropy,
            optimizer: OptimizerKind::Adam,
            epochs: 500,
            backbone: ClassifierBackbone::InceptionV3,
            mode: ClassMode::FiveClass,
        }
    }
}

/// Instance-segmenter training parameters: head-only epochs first, then all
/// layers at a lower rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmenterConfig {
    pub lr_heads: f64,
    pub lr_all: f64,
    pub epochs_heads: usize,
    pub epochs_all: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub backbone: SegmenterBackbone,
    pub init_weights: WeightsInit,
    /// Optional path to a pretrained weights file; never downloaded
    /// implicitly. When absent the backbone initializes deterministically.
    pub weights_path: Option<PathBuf>,
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        SegmenterConfig {
            lr_heads: 1e-3,
            lr_all: 1e-4,
            epochs_heads: 5,
            epochs_all: 35,
            momentum: 0.9,
            weight_decay: 1e-4,
            backbone: SegmenterBackbone::ResNet101,
            init_weights: WeightsInit::ModaNet,
            weights_path: None,
        }
    }
}

/// One garment hypothesis: mask, box, class, and confidence.
///
/// The box is always derived from the mask, so the two can never disagree.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    mask: BinaryMask,
    bbox: BBox,
    cls: GarmentClass,
    score: f64,
}

impl Detection {
    pub fn new(mask: BinaryMask, cls: GarmentClass, score: f64) -> Result<Self, ModelError> {
        if !(0.0..=1.0).contains(&score) {
            return Err(ModelError::InvalidDetection(format!(
                "score {score} outside [0, 1]"
            )));
        }
        let bbox = mask_to_bbox(&mask)
            .map_err(|_| ModelError::InvalidDetection("empty mask".into()))?;
        Ok(Detection {
            mask,
            bbox,
            cls,
            score,
        })
    }

    pub fn mask(&self) -> &BinaryMask {
        &self.mask
    }

    pub fn bbox(&self) -> BBox {
        self.bbox
    }

    pub fn cls(&self) -> GarmentClass {
        self.cls
    }

    pub fn score(&self) -> f64 {
        self.score
    }

    pub fn into_mask(self) -> BinaryMask {
        self.mask
    }
}

/// Classifier output: the argmax label, its score, and the full vector
/// aligned with the mode's class order.
#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub label: ImageClassLabel,
    pub score: f64,
    pub scores: Vec<f64>,
    pub mode: ClassMode,
}

impl Classification {
    /// Build from a raw score vector, enforcing the contract: the vector
    /// length matches the mode, it sums to one within tolerance, the label
    /// is the argmax, and the score is the maximum.
    pub fn from_scores(mode: ClassMode, scores: Vec<f64>) -> Result<Self, ModelError> {
        if scores.len() != mode.num_classes() {
            return Err(ModelError::InvalidScores(format!(
                "{} scores for a {}-class mode",
                scores.len(),
                mode.num_classes()
            )));
        }
        let sum: f64 = scores.iter().sum();
        if (sum - 1.0).abs() > SCORE_SUM_TOLERANCE {
            return Err(ModelError::InvalidScores(format!(
                "scores sum to {sum}, expected 1"
            )));
        }
        if scores.iter().any(|s| !(0.0..=1.0 + SCORE_SUM_TOLERANCE).contains(s)) {
            return Err(ModelError::InvalidScores("score outside [0, 1]".into()));
        }
        let (best, &score) = scores
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .expect("mode has at least four classes");
        Ok(Classification {
            label: mode.classes()[best],
            score,
            scores,
            mode,
        })
    }
}

/// First-stage contract: route an image by body-completeness class.
pub trait ClassifierBackend: Send + Sync {
    fn mode(&self) -> ClassMode;

    fn classify(&self, img: &RgbImage) -> Result<Classification, ModelError>;

    /// Whether classify may be called concurrently; the pipeline serializes
    /// calls to backends that say no.
    fn concurrent_safe(&self) -> bool {
        false
    }
}

/// Second-stage contract: detect garments with masks, boxes, and scores,
/// sorted by descending score.
pub trait SegmenterBackend: Send + Sync {
    fn detect(&self, img: &RgbImage) -> Result<Vec<Detection>, ModelError>;

    fn concurrent_safe(&self) -> bool {
        false
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub phase: String,
    pub lr: f64,
    pub loss: f64,
    pub metric: f64,
}

/// Per-epoch training log plus the configuration it ran under.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingLog {
    pub config: serde_json::Value,
    pub records: Vec<EpochRecord>,
}

impl TrainingLog {
    pub fn new(config: serde_json::Value) -> Self {
        TrainingLog {
            config,
            records: Vec::new(),
        }
    }

    /// Serialize as JSON-lines, one record per epoch.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for rec in &self.records {
            out.push_str(&serde_json::to_string(rec).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_jsonl())?;
        Ok(())
    }
}

/// A segmenter training sample: an image plus its per-class ground-truth
/// masks (rasterized ahead of time).
#[derive(Debug, Clone)]
pub struct SegmentSample {
    pub image: RgbImage,
    pub masks: Vec<(GarmentClass, BinaryMask)>,
}

/// Resolve a classifier from a spec string: either a model artifact
/// directory or `mock:<label>[:<score>]`.
pub fn classifier_from_spec(spec: &str) -> Result<Box<dyn ClassifierBackend>, ModelError> {
    if let Some(rest) = spec.strip_prefix("mock:") {
        let mut parts = rest.split(':');
        let label = parts
            .next()
            .and_then(ImageClassLabel::parse)
            .ok_or_else(|| ModelError::Artifact(format!("bad mock classifier spec {spec:?}")))?;
        let score = match parts.next() {
            Some(s) => s
                .parse::<f64>()
                .map_err(|_| ModelError::Artifact(format!("bad mock score in {spec:?}")))?,
            None => 0.9,
        };
        return Ok(Box::new(MockClassifier::pinned(
            ClassMode::FiveClass,
            label,
            score,
        )?));
    }
    Ok(Box::new(load_classifier(Path::new(spec))?))
}

/// Resolve a segmenter from a spec string: a model artifact directory,
/// `mock:empty`, or `mock:halves[:<top_score>[:<bottom_score>]]`.
pub fn segmenter_from_spec(spec: &str) -> Result<Box<dyn SegmenterBackend>, ModelError> {
    if spec == "mock:empty" {
        return Ok(Box::new(MockSegmenter::empty()));
    }
    if let Some(rest) = spec.strip_prefix("mock:halves") {
        let mut scores = rest.trim_start_matches(':').split(':').filter(|s| !s.is_empty());
        let parse = |s: Option<&str>, default: f64| -> Result<f64, ModelError> {
            match s {
                Some(v) => v
                    .parse()
                    .map_err(|_| ModelError::Artifact(format!("bad mock score in {spec:?}"))),
                None => Ok(default),
            }
        };
        let top = parse(scores.next(), 0.95)?;
        let bottom = parse(scores.next(), 0.9)?;
        return Ok(Box::new(MockSegmenter::halves(top, bottom)));
    }
    if spec.starts_with("mock:") {
        return Err(ModelError::Artifact(format!(
            "bad mock segmenter spec {spec:?}"
        )));
    }
    Ok(Box::new(load_segmenter(Path::new(spec))?))
}
