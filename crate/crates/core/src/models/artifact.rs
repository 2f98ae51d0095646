//! On-disk model artifacts.
//!
//! An artifact is a directory holding `model.json` (metadata: kind, class
//! list, backbone, the config used, and the preprocessing convention),
//! `weights.json` (parameters), and `training_log.jsonl` (one record per
//! epoch).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::native::{
    classifier_feature_dim, segmenter_head_dim, NativeClassifier, NativeSegmenter,
    PIXEL_FEATURES,
};
use super::{ClassMode, ClassifierBackbone, ModelError, TrainingLog};

const MODEL_FILE: &str = "model.json";
const WEIGHTS_FILE: &str = "weights.json";
const LOG_FILE: &str = "training_log.jsonl";

#[derive(Serialize, Deserialize)]
struct ClassifierMeta {
    kind: String,
    mode: ClassMode,
    classes: Vec<String>,
    backbone: ClassifierBackbone,
    pooled_grid: u32,
    preprocessing: PreprocessingMeta,
    config: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct PreprocessingMeta {
    resize: u32,
    normalize: String,
}

#[derive(Serialize, Deserialize)]
struct ClassifierWeights {
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct SegmenterMeta {
    kind: String,
    classes: Vec<String>,
    backbone: String,
    hidden: usize,
    features: String,
    config: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct SegmenterWeights {
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ModelError> {
    let text = fs::read_to_string(path)
        .map_err(|e| ModelError::Artifact(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| ModelError::Artifact(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ModelError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| ModelError::Artifact(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

/// Serialize a trained classifier and its log into `dir`.
pub fn save_classifier(
    dir: &Path,
    model: &NativeClassifier,
    log: &TrainingLog,
) -> Result<(), ModelError> {
    fs::create_dir_all(dir)?;
    let meta = ClassifierMeta {
        kind: "classifier".into(),
        mode: model.mode,
        classes: model
            .mode
            .classes()
            .iter()
            .map(|c| c.as_str().to_string())
            .collect(),
        backbone: model.backbone,
        pooled_grid: model.pooled_grid,
        preprocessing: PreprocessingMeta {
            resize: model.backbone.input_size(),
            normalize: "rgb/255".into(),
        },
        config: log.config.clone(),
    };
    write_json(&dir.join(MODEL_FILE), &meta)?;
    write_json(
        &dir.join(WEIGHTS_FILE),
        &ClassifierWeights {
            weights: model.weights.clone(),
            bias: model.bias.clone(),
        },
    )?;
    log.write_jsonl(&dir.join(LOG_FILE))?;
    Ok(())
}

/// Load a classifier artifact saved by [`save_classifier`].
pub fn load_classifier(dir: &Path) -> Result<NativeClassifier, ModelError> {
    let meta: ClassifierMeta = read_json(&dir.join(MODEL_FILE))?;
    if meta.kind != "classifier" {
        return Err(ModelError::Artifact(format!(
            "{} holds a {:?} model, expected a classifier",
            dir.display(),
            meta.kind
        )));
    }
    let weights: ClassifierWeights = read_json(&dir.join(WEIGHTS_FILE))?;
    let f_dim = classifier_feature_dim(meta.pooled_grid);
    let expected = meta.mode.num_classes() * f_dim;
    if weights.weights.len() != expected || weights.bias.len() != meta.mode.num_classes() {
        return Err(ModelError::Artifact(format!(
            "weight shapes do not match metadata in {}",
            dir.display()
        )));
    }
    Ok(NativeClassifier {
        mode: meta.mode,
        backbone: meta.backbone,
        pooled_grid: meta.pooled_grid,
        weights: weights.weights,
        bias: weights.bias,
    })
}

/// Serialize a trained segmenter and its log into `dir`.
pub fn save_segmenter(
    dir: &Path,
    model: &NativeSegmenter,
    log: &TrainingLog,
) -> Result<(), ModelError> {
    fs::create_dir_all(dir)?;
    let meta = SegmenterMeta {
        kind: "segmenter".into(),
        classes: vec!["top".into(), "bottom".into()],
        backbone: "ResNet101".into(),
        hidden: model.hidden,
        features: "rgb/255+xy".into(),
        config: log.config.clone(),
    };
    write_json(&dir.join(MODEL_FILE), &meta)?;
    write_json(
        &dir.join(WEIGHTS_FILE),
        &SegmenterWeights {
            w1: model.w1.clone(),
            b1: model.b1.clone(),
            w2: model.w2.clone(),
            b2: model.b2.clone(),
        },
    )?;
    log.write_jsonl(&dir.join(LOG_FILE))?;
    Ok(())
}

/// Load a segmenter artifact saved by [`save_segmenter`].
pub fn load_segmenter(dir: &Path) -> Result<NativeSegmenter, ModelError> {
    let meta: SegmenterMeta = read_json(&dir.join(MODEL_FILE))?;
    if meta.kind != "segmenter" {
        return Err(ModelError::Artifact(format!(
            "{} holds a {:?} model, expected a segmenter",
            dir.display(),
            meta.kind
        )));
    }
    let weights: SegmenterWeights = read_json(&dir.join(WEIGHTS_FILE))?;
    if weights.w1.len() != meta.hidden * PIXEL_FEATURES
        || weights.b1.len() != meta.hidden
        || weights.w2.len() != 3 * segmenter_head_dim(meta.hidden)
        || weights.b2.len() != 3
    {
        return Err(ModelError::Artifact(format!(
            "weight shapes do not match metadata in {}",
            dir.display()
        )));
    }
    Ok(NativeSegmenter {
        hidden: meta.hidden,
        w1: weights.w1,
        b1: weights.b1,
        w2: weights.w2,
        b2: weights.b2,
    })
}

/// Load backbone-layer weights used as a pretrained starting point for
/// segmenter fine-tuning. Accepts either a full weights file or one holding
/// just `w1`/`b1`.
pub fn load_backbone_weights(path: &Path) -> Result<NativeSegmenter, ModelError> {
    #[derive(Deserialize)]
    struct BackboneOnly {
        w1: Vec<f64>,
        b1: Vec<f64>,
        #[serde(default)]
        w2: Option<Vec<f64>>,
        #[serde(default)]
        b2: Option<Vec<f64>>,
    }
    let raw: BackboneOnly = read_json(path)?;
    if raw.b1.is_empty() || raw.w1.len() != raw.b1.len() * PIXEL_FEATURES {
        return Err(ModelError::Artifact(format!(
            "backbone weight shapes are inconsistent in {}",
            path.display()
        )));
    }
    let hidden = raw.b1.len();
    Ok(NativeSegmenter {
        hidden,
        w1: raw.w1,
        b1: raw.b1,
        w2: raw
            .w2
            .unwrap_or_else(|| vec![0.0; 3 * segmenter_head_dim(hidden)]),
        b2: raw.b2.unwrap_or_else(|| vec![0.0; 3]),
    })
}

#[cfg(test)]
mod tests {
    use super::super::{
        train_classifier, train_segmenter, ClassifierBackend, ClassifierConfig, SegmentSample,
        SegmenterBackend, SegmenterConfig,
    };
    use super::*;
    use crate::annotation::GarmentClass;
    use crate::geometry::{BBox, BinaryMask};
    use image::{Rgb, RgbImage};

    fn tiny_classifier_dataset() -> Vec<(RgbImage, super::super::ImageClassLabel)> {
        use super::super::ImageClassLabel::*;
        [Top, Bottom, FullBody, HalfBody, Accessories]
            .into_iter()
            .enumerate()
            .flat_map(|(i, label)| {
                let shade = (40 * (i + 1)) as u8;
                (0..2).map(move |j| {
                    (
                        RgbImage::from_pixel(16, 16, Rgb([shade, 255 - shade, 60 + j * 5])),
                        label,
                    )
                })
            })
            .collect()
    }

    #[test]
    fn classifier_round_trips_through_disk() {
        let cfg = ClassifierConfig {
            epochs: 3,
            ..ClassifierConfig::default()
        };
        let (model, log) = train_classifier(&tiny_classifier_dataset(), &cfg, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_classifier(dir.path(), &model, &log).unwrap();
        let back = load_classifier(dir.path()).unwrap();

        // Identical predictions on a probe batch.
        for (img, _) in tiny_classifier_dataset() {
            assert_eq!(back.classify(&img).unwrap(), model.classify(&img).unwrap());
        }
        // Log file is one JSON record per epoch.
        let text = std::fs::read_to_string(dir.path().join("training_log.jsonl")).unwrap();
        assert_eq!(text.lines().count(), 3);
        for line in text.lines() {
            let rec: serde_json::Value = serde_json::from_str(line).unwrap();
            assert!(rec["epoch"].is_number());
            assert!(rec["phase"].is_string());
        }
    }

    fn tiny_segment_dataset() -> Vec<SegmentSample> {
        (0..2)
            .map(|i| {
                let mut img = RgbImage::from_pixel(20, 20, Rgb([250, 250, 250]));
                let rect = BBox::new(4 + i, 4, 12 + i, 10).unwrap();
                let mask = BinaryMask::filled_rect(20, 20, &rect);
                for (x, y) in mask.iter_set() {
                    img.put_pixel(x, y, Rgb([200, 30, 30]));
                }
                SegmentSample {
                    image: img,
                    masks: vec![(GarmentClass::Top, mask)],
                }
            })
            .collect()
    }

    #[test]
    fn segmenter_round_trips_through_disk() {
        let cfg = SegmenterConfig {
            epochs_heads: 2,
            epochs_all: 2,
            ..SegmenterConfig::default()
        };
        let (model, log) = train_segmenter(&tiny_segment_dataset(), &cfg, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_segmenter(dir.path(), &model, &log).unwrap();
        let back = load_segmenter(dir.path()).unwrap();

        let probe = &tiny_segment_dataset()[0].image;
        let a = model.detect(probe).unwrap();
        let b = back.detect(probe).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn loading_the_wrong_kind_fails() {
        let cfg = ClassifierConfig {
            epochs: 1,
            ..ClassifierConfig::default()
        };
        let (model, log) = train_classifier(&tiny_classifier_dataset(), &cfg, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_classifier(dir.path(), &model, &log).unwrap();
        assert!(matches!(
            load_segmenter(dir.path()).unwrap_err(),
            ModelError::Artifact(_)
        ));
    }

    #[test]
    fn pretrained_backbone_file_feeds_fine_tuning() {
        let cfg = SegmenterConfig {
            epochs_heads: 1,
            epochs_all: 1,
            ..SegmenterConfig::default()
        };
        let (model, log) = train_segmenter(&tiny_segment_dataset(), &cfg, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_segmenter(dir.path(), &model, &log).unwrap();

        let cfg2 = SegmenterConfig {
            epochs_heads: 1,
            epochs_all: 0,
            weights_path: Some(dir.path().join("weights.json")),
            ..SegmenterConfig::default()
        };
        let (warm, _) = train_segmenter(&tiny_segment_dataset(), &cfg2, 6).unwrap();
        // Backbone starts from the saved weights and stays frozen.
        assert_eq!(warm.w1, model.w1);
    }
}
