//! The orchestrated data flow: preprocess, classify, route, segment, and
//! emit the four outputs per garment.
//!
//! Routing follows the two-stage design: full-body and half-body images go
//! through the segmenter, single-garment images pass their foreground mask
//! straight through, accessories and destroyed images are skipped.

mod overlay;

pub use overlay::render_overlay;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::AnnotatedImage;
use crate::eval::{interchange, DetRecord};
use crate::models::{
    ClassifierBackend, Detection, ImageClassLabel, ModelError, SegmenterBackend,
};
use crate::preprocess::{preprocess, ForegroundBackend, PreprocessError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{stage} stage failed: {message}")]
    Backend {
        stage: &'static str,
        message: String,
    },
    #[error("failed to decode {path}: {message}")]
    Decode { path: String, message: String },
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error("invalid pipeline config: {0}")]
    InvalidConfig(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl PipelineError {
    /// True for failures of the environment (backends, io) rather than of
    /// the input data.
    pub fn is_environment(&self) -> bool {
        matches!(
            self,
            PipelineError::Backend { .. } | PipelineError::Io(_)
        )
    }
}

fn stage_err(stage: &'static str) -> impl Fn(PreprocessError) -> PipelineError {
    move |e| PipelineError::Backend {
        stage,
        message: e.to_string(),
    }
}

fn model_stage_err(stage: &'static str) -> impl Fn(ModelError) -> PipelineError {
    move |e| PipelineError::Backend {
        stage,
        message: e.to_string(),
    }
}

/// Knobs of the orchestrated flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Foreground-fraction floor below which an image counts as destroyed.
    pub destroyed_threshold: f64,
    /// Detections scored below this are dropped on segmenter routes.
    pub score_floor: f64,
    /// Fill painted over background pixels.
    pub fill: [u8; 3],
    /// Classify the raw image instead of the background-removed one.
    pub classify_on_raw: bool,
    /// Batch worker count; backends that are not concurrent-safe are
    /// serialized behind a lock.
    pub workers: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            destroyed_threshold: 0.02,
            score_floor: 0.5,
            fill: [255, 255, 255],
            classify_on_raw: false,
            workers: 1,
        }
    }
}

/// Why an image was skipped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SkipReason {
    Destroyed,
    Accessories,
}

/// The pipeline's verdict on one image.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub image_id: String,
    /// Routing class; absent when the image was destroyed before
    /// classification ever ran.
    pub route: Option<ImageClassLabel>,
    pub route_score: Option<f64>,
    pub garments: Vec<Detection>,
    pub skipped: bool,
    pub skip_reason: Option<SkipReason>,
}

/// Run the full flow on one image.
pub fn run_pipeline(
    img: &RgbImage,
    image_id: &str,
    classifier: &dyn ClassifierBackend,
    segmenter: &dyn SegmenterBackend,
    fg: &dyn ForegroundBackend,
    cfg: &PipelineConfig,
) -> Result<PipelineOutput, PipelineError> {
    let pre = preprocess(img, fg, cfg.destroyed_threshold, Rgb(cfg.fill))
        .map_err(stage_err("preprocess"))?;
    if pre.destroyed {
        return Ok(PipelineOutput {
            image_id: image_id.to_string(),
            route: None,
            route_score: None,
            garments: Vec::new(),
            skipped: true,
            skip_reason: Some(SkipReason::Destroyed),
        });
    }

    let cls_input: &RgbImage = if cfg.classify_on_raw {
        img
    } else {
        &pre.cleaned_image
    };
    let classification = classifier
        .classify(cls_input)
        .map_err(model_stage_err("classify"))?;
    let route = classification.label;
    let route_score = classification.score;

    let garments = match route {
        ImageClassLabel::Accessories => {
            return Ok(PipelineOutput {
                image_id: image_id.to_string(),
                route: Some(route),
                route_score: Some(route_score),
                garments: Vec::new(),
                skipped: true,
                skip_reason: Some(SkipReason::Accessories),
            });
        }
        ImageClassLabel::FullBody | ImageClassLabel::HalfBody => {
            let dets = segmenter
                .detect(&pre.cleaned_image)
                .map_err(model_stage_err("segment"))?;
            // Keep the best detection per garment class at or above the
            // score floor; the dataset guarantees at most one of each.
            let mut best: BTreeMap<crate::annotation::GarmentClass, Detection> = BTreeMap::new();
            for det in dets {
                if det.score() < cfg.score_floor {
                    continue;
                }
                match best.get(&det.cls()) {
                    Some(kept) if kept.score() >= det.score() => {}
                    _ => {
                        best.insert(det.cls(), det);
                    }
                }
            }
            let mut garments: Vec<Detection> = best.into_values().collect();
            garments.sort_by(|a, b| b.score().partial_cmp(&a.score()).unwrap());
            garments
        }
        ImageClassLabel::Top | ImageClassLabel::Bottom => {
            // Passthrough: the preprocessing foreground mask becomes the
            // single garment, scored by the routing confidence.
            let cls = route.garment().expect("top/bottom routes carry a garment");
            let det = Detection::new(pre.foreground_mask.clone(), cls, route_score)
                .map_err(model_stage_err("passthrough"))?;
            vec![det]
        }
    };

    Ok(PipelineOutput {
        image_id: image_id.to_string(),
        route: Some(route),
        route_score: Some(route_score),
        garments,
        skipped: false,
        skip_reason: None,
    })
}

// ---------------------------------------------------------------------------
// Batch running
// ---------------------------------------------------------------------------

/// Per-image output as serialized into the batch output directory.
#[derive(Serialize, Deserialize)]
struct OutputRecord {
    image_id: String,
    route: Option<ImageClassLabel>,
    route_score: Option<f64>,
    skipped: bool,
    skip_reason: Option<SkipReason>,
    garments: Vec<GarmentRecord>,
}

#[derive(Serialize, Deserialize)]
struct GarmentRecord {
    class: crate::annotation::GarmentClass,
    score: f64,
    bbox: [u32; 4],
    mask_png: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchFailure {
    pub image_id: String,
    pub error: String,
}

/// Counts and failures for one batch run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub total: usize,
    /// Outputs per route label; destroyed images count under "destroyed".
    pub route_counts: BTreeMap<String, usize>,
    pub skipped: usize,
    pub failures: Vec<BatchFailure>,
}

/// Load an image file as RGB.
pub fn load_rgb_image(path: &Path) -> Result<RgbImage, PipelineError> {
    let img = image::open(path).map_err(|e| PipelineError::Decode {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    Ok(img.to_rgb8())
}

struct LockedClassifier<'a> {
    inner: &'a dyn ClassifierBackend,
    lock: Mutex<()>,
}

impl crate::models::ClassifierBackend for LockedClassifier<'_> {
    fn mode(&self) -> crate::models::ClassMode {
        self.inner.mode()
    }

    fn classify(&self, img: &RgbImage) -> Result<crate::models::Classification, ModelError> {
        let _guard = self.lock.lock().expect("classifier lock poisoned");
        self.inner.classify(img)
    }

    fn concurrent_safe(&self) -> bool {
        true
    }
}

struct LockedSegmenter<'a> {
    inner: &'a dyn SegmenterBackend,
    lock: Mutex<()>,
}

impl crate::models::SegmenterBackend for LockedSegmenter<'_> {
    fn detect(&self, img: &RgbImage) -> Result<Vec<Detection>, ModelError> {
        let _guard = self.lock.lock().expect("segmenter lock poisoned");
        self.inner.detect(img)
    }

    fn concurrent_safe(&self) -> bool {
        true
    }
}

struct LockedForeground<'a> {
    inner: &'a dyn ForegroundBackend,
    lock: Mutex<()>,
}

impl ForegroundBackend for LockedForeground<'_> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn segment(
        &self,
        img: &RgbImage,
    ) -> Result<crate::geometry::BinaryMask, crate::preprocess::SegmentError> {
        let _guard = self.lock.lock().expect("foreground lock poisoned");
        self.inner.segment(img)
    }

    fn concurrent_safe(&self) -> bool {
        true
    }
}

/// Write one pipeline output as `<id>.json` plus its garment masks under
/// `masks/` in `out_dir`.
pub fn write_output_record(
    out_dir: &Path,
    output: &PipelineOutput,
) -> Result<(), PipelineError> {
    let masks_dir = out_dir.join("masks");
    fs::create_dir_all(&masks_dir)?;
    let garments = output
        .garments
        .iter()
        .enumerate()
        .map(|(k, det)| {
            let mask_png = format!("masks/{}_{k}.png", output.image_id);
            det.mask()
                .save_png(&out_dir.join(&mask_png))
                .map_err(|e| PipelineError::Manifest(e.to_string()))?;
            Ok(GarmentRecord {
                class: det.cls(),
                score: det.score(),
                bbox: det.bbox().as_array(),
                mask_png,
            })
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;
    let record = OutputRecord {
        image_id: output.image_id.clone(),
        route: output.route,
        route_score: output.route_score,
        skipped: output.skipped,
        skip_reason: output.skip_reason,
        garments,
    };
    let text = serde_json::to_string_pretty(&record)
        .map_err(|e| PipelineError::Manifest(e.to_string()))?;
    fs::write(out_dir.join(format!("{}.json", output.image_id)), text)?;
    Ok(())
}

/// Run the pipeline over every manifest image, writing one output JSON per
/// image plus `detections.json` and `summary.json` into `out_dir`. With
/// `write_overlays`, rendered overlay PNGs go to `out_dir/overlays`.
///
/// Per-image failures are recorded in the summary and never abort the
/// batch. Image paths resolve relative to `images_root`.
#[allow(clippy::too_many_arguments)]
pub fn run_batch(
    images: &[AnnotatedImage],
    images_root: &Path,
    classifier: &dyn ClassifierBackend,
    segmenter: &dyn SegmenterBackend,
    fg: &dyn ForegroundBackend,
    cfg: &PipelineConfig,
    out_dir: &Path,
    write_overlays: bool,
) -> Result<BatchSummary, PipelineError> {
    if cfg.workers == 0 {
        return Err(PipelineError::InvalidConfig("workers must be >= 1".into()));
    }
    fs::create_dir_all(out_dir)?;

    // Serialize calls to backends that are not concurrent-safe.
    let locked_classifier;
    let classifier: &dyn ClassifierBackend =
        if cfg.workers > 1 && !classifier.concurrent_safe() {
            locked_classifier = LockedClassifier {
                inner: classifier,
                lock: Mutex::new(()),
            };
            &locked_classifier
        } else {
            classifier
        };
    let locked_segmenter;
    let segmenter: &dyn SegmenterBackend = if cfg.workers > 1 && !segmenter.concurrent_safe() {
        locked_segmenter = LockedSegmenter {
            inner: segmenter,
            lock: Mutex::new(()),
        };
        &locked_segmenter
    } else {
        segmenter
    };
    let locked_fg;
    let fg: &dyn ForegroundBackend = if cfg.workers > 1 && !fg.concurrent_safe() {
        locked_fg = LockedForeground {
            inner: fg,
            lock: Mutex::new(()),
        };
        &locked_fg
    } else {
        fg
    };

    let overlays_dir = out_dir.join("overlays");
    if write_overlays {
        fs::create_dir_all(&overlays_dir)?;
    }
    let results: Mutex<Vec<Option<Result<PipelineOutput, PipelineError>>>> =
        Mutex::new((0..images.len()).map(|_| None).collect());
    let next: AtomicUsize = AtomicUsize::new(0);
    let worker = || {
        loop {
            let i = next.fetch_add(1, Ordering::Relaxed);
            if i >= images.len() {
                break;
            }
            let meta = &images[i];
            let result = load_rgb_image(&images_root.join(meta.image_path())).and_then(|img| {
                let output =
                    run_pipeline(&img, meta.image_id(), classifier, segmenter, fg, cfg)?;
                if write_overlays {
                    let rendered = render_overlay(&img, &output);
                    rendered
                        .save(overlays_dir.join(format!("{}.png", meta.image_id())))
                        .map_err(|e| PipelineError::Decode {
                            path: meta.image_id().to_string(),
                            message: e.to_string(),
                        })?;
                }
                Ok(output)
            });
            results.lock().expect("results lock poisoned")[i] = Some(result);
        }
    };
    if cfg.workers > 1 {
        std::thread::scope(|scope| {
            for _ in 0..cfg.workers.min(images.len().max(1)) {
                scope.spawn(worker);
            }
        });
    } else {
        worker();
    }

    let mut summary = BatchSummary {
        total: images.len(),
        route_counts: BTreeMap::new(),
        skipped: 0,
        failures: Vec::new(),
    };
    let mut det_records: Vec<DetRecord> = Vec::new();
    let results = results.into_inner().expect("results lock poisoned");
    for (meta, slot) in images.iter().zip(results) {
        match slot.expect("every image processed") {
            Ok(output) => {
                let key = match output.route {
                    Some(route) => route.as_str().to_string(),
                    None => "destroyed".to_string(),
                };
                *summary.route_counts.entry(key).or_insert(0) += 1;
                if output.skipped {
                    summary.skipped += 1;
                }
                for det in &output.garments {
                    det_records.push(DetRecord {
                        image_id: output.image_id.clone(),
                        det: det.clone(),
                    });
                }
                write_output_record(out_dir, &output)?;
            }
            Err(e) => summary.failures.push(BatchFailure {
                image_id: meta.image_id().to_string(),
                error: e.to_string(),
            }),
        }
    }

    interchange::write_detections(&out_dir.join("detections.json"), &det_records)
        .map_err(|e| PipelineError::Manifest(e.to_string()))?;
    let text = serde_json::to_string_pretty(&summary)
        .map_err(|e| PipelineError::Manifest(e.to_string()))?;
    fs::write(out_dir.join("summary.json"), text)?;
    Ok(summary)
}

/// Resolve a manifest image path against the manifest's own directory.
pub fn manifest_root(manifest_path: &Path) -> PathBuf {
    manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}
