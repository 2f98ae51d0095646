//! Subcommand implementations.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use garb_core::annotation::{
    self, AnnotatedImage, DatasetSplit, GarmentClass, SplitKind,
};
use garb_core::augment::{augment_sample, AugmentPlan};
use garb_core::eval::{
    self, classification_report, ground_truth_from_annotations, interchange,
    map_over_thresholds, render_ap_table, render_classification_report, IouKind,
};
use garb_core::geometry::rasterize;
use garb_core::models::{
    classifier_from_spec, save_classifier, save_segmenter, segmenter_from_spec,
    train_classifier, train_segmenter, ClassMode, ClassifierBackbone, ClassifierConfig,
    ImageClassLabel, SegmentSample, SegmenterConfig,
};
use garb_core::pipeline::{
    load_rgb_image, manifest_root, render_overlay, run_batch, run_pipeline, write_output_record,
    PipelineConfig,
};
use garb_core::preprocess::{filter_destroyed, foreground_backend_from_spec, preprocess};

use crate::{data_err, env_err, CliError};

/// Config-file sections; every field has a default so partial files work.
#[derive(Debug, Default, Deserialize)]
#[serde(default)]
pub struct AppConfig {
    pub pipeline: PipelineConfig,
    pub classifier: ClassifierConfig,
    pub segmenter: SegmenterConfig,
    pub fg_backend: Option<String>,
}

pub fn load_app_config(path: Option<&Path>) -> Result<AppConfig, CliError> {
    let Some(path) = path else {
        return Ok(AppConfig::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("config {}: {e}", path.display())))
}

fn default_fg_spec(cfg: &AppConfig) -> &str {
    cfg.fg_backend.as_deref().unwrap_or("mock:all-ones")
}

// ---------------------------------------------------------------------------
// convert
// ---------------------------------------------------------------------------

/// Express `target` relative to `base` when possible.
fn relative_to(target: &Path, base: &Path) -> String {
    let canon_target = fs::canonicalize(target).unwrap_or_else(|_| target.to_path_buf());
    let canon_base = fs::canonicalize(base).unwrap_or_else(|_| base.to_path_buf());
    match canon_target.strip_prefix(&canon_base) {
        Ok(rel) => rel.to_string_lossy().into_owned(),
        Err(_) => canon_target.to_string_lossy().into_owned(),
    }
}

pub fn convert(input_dir: &Path, out: &Path) -> Result<(), CliError> {
    let mut json_files: Vec<PathBuf> = fs::read_dir(input_dir)
        .map_err(|e| CliError::Data(format!("{}: {e}", input_dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
        .collect();
    json_files.sort();
    if json_files.is_empty() {
        return Err(CliError::Data(format!(
            "no LabelMe .json files in {}",
            input_dir.display()
        )));
    }

    let out_parent = out.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(out_parent).map_err(env_err)?;
    let mut images = Vec::with_capacity(json_files.len());
    for json_path in &json_files {
        let text = fs::read_to_string(json_path)
            .map_err(|e| CliError::Data(format!("{}: {e}", json_path.display())))?;
        let (image_path, dims) = annotation::labelme_image_info(&text)
            .map_err(|e| CliError::Data(format!("{}: {e}", json_path.display())))?;
        let image_file = image_path
            .as_deref()
            .map(|rel| {
                json_path
                    .parent()
                    .unwrap_or_else(|| Path::new("."))
                    .join(rel)
            })
            .ok_or_else(|| {
                CliError::Data(format!("{}: no imagePath field", json_path.display()))
            })?;
        let dims = match dims {
            Some(d) => d,
            None => {
                let img = load_rgb_image(&image_file)
                    .map_err(|e| CliError::Data(e.to_string()))?;
                (img.width(), img.height())
            }
        };
        let stem = json_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let parsed = annotation::parse_labelme_file(&text, dims)
            .map_err(|e| CliError::Data(format!("{}: {e}", json_path.display())))?
            .with_id(stem)
            .with_path(relative_to(&image_file, out_parent));
        images.push(parsed);
    }

    let text = annotation::manifest_to_string(&images, &DatasetSplit::default())
        .map_err(data_err)?;
    fs::write(out, text).map_err(env_err)?;
    println!("wrote {} with {} images", out.display(), images.len());
    Ok(())
}

// ---------------------------------------------------------------------------
// split
// ---------------------------------------------------------------------------

fn parse_triple(raw: &str) -> Result<(f64, f64, f64), CliError> {
    let parts: Vec<f64> = raw
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Data(format!("bad fractions {raw:?}: {e}")))?;
    if parts.len() != 3 {
        return Err(CliError::Data(format!(
            "expected three comma-separated fractions, got {raw:?}"
        )));
    }
    Ok((parts[0], parts[1], parts[2]))
}

pub fn split(
    manifest: &Path,
    fractions: &str,
    seed: u64,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let (images, _) = annotation::load_manifest(manifest).map_err(data_err)?;
    let ids: Vec<String> = images.iter().map(|i| i.image_id().to_string()).collect();
    let fractions = parse_triple(fractions)?;
    let split = annotation::make_split(&ids, fractions, seed).map_err(data_err)?;
    let text = annotation::manifest_to_string(&images, &split).map_err(data_err)?;
    let target = out.unwrap_or(manifest);
    fs::write(target, text).map_err(env_err)?;
    println!(
        "split {} images: {} train, {} validation, {} test",
        ids.len(),
        split.train.len(),
        split.validation.len(),
        split.test.len()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// preprocess
// ---------------------------------------------------------------------------

fn parse_rgb(raw: &str) -> Result<[u8; 3], CliError> {
    let parts: Vec<u8> = raw
        .split(',')
        .map(|p| p.trim().parse::<u8>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Data(format!("bad fill {raw:?}: {e}")))?;
    if parts.len() != 3 {
        return Err(CliError::Data(format!("fill needs r,g,b, got {raw:?}")));
    }
    Ok([parts[0], parts[1], parts[2]])
}

pub fn preprocess_cmd(
    manifest: &Path,
    backend_spec: Option<&str>,
    tau: Option<f64>,
    fill: Option<&str>,
    out_dir: &Path,
    cfg: &AppConfig,
) -> Result<(), CliError> {
    let (images, _) = annotation::load_manifest(manifest).map_err(data_err)?;
    let backend = foreground_backend_from_spec(
        backend_spec.unwrap_or_else(|| default_fg_spec(cfg)),
    )
    .map_err(env_err)?;
    let tau = tau.unwrap_or(cfg.pipeline.destroyed_threshold);
    let fill = match fill {
        Some(raw) => parse_rgb(raw)?,
        None => cfg.pipeline.fill,
    };
    let root = manifest_root(manifest);

    fs::create_dir_all(out_dir.join("cleaned")).map_err(env_err)?;
    fs::create_dir_all(out_dir.join("masks")).map_err(env_err)?;
    let mut results = Vec::new();
    for meta in &images {
        let img = load_rgb_image(&root.join(meta.image_path()))
            .map_err(|e| CliError::Data(e.to_string()))?;
        let result = preprocess(&img, backend.as_ref(), tau, image::Rgb(fill))
            .map_err(env_err)?;
        result
            .cleaned_image
            .save(out_dir.join(format!("cleaned/{}.png", meta.image_id())))
            .map_err(env_err)?;
        result
            .foreground_mask
            .save_png(&out_dir.join(format!("masks/{}.png", meta.image_id())))
            .map_err(env_err)?;
        results.push((meta.image_id().to_string(), result));
    }

    let report: Vec<serde_json::Value> = results
        .iter()
        .map(|(id, r)| {
            serde_json::json!({
                "id": id,
                "destroyed": r.destroyed,
                "foreground_fraction": r.foreground_fraction,
            })
        })
        .collect();
    fs::write(
        out_dir.join("preprocess_report.json"),
        serde_json::to_string_pretty(&report).map_err(env_err)?,
    )
    .map_err(env_err)?;

    let (kept, discarded) = filter_destroyed(results);
    println!(
        "preprocessed {} images: {} kept, {} destroyed",
        kept.len() + discarded.len(),
        kept.len(),
        discarded.len()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// augment
// ---------------------------------------------------------------------------

pub fn augment_cmd(
    manifest: &Path,
    plan_path: &Path,
    out_dir: &Path,
    suffix: &str,
) -> Result<(), CliError> {
    let (images, _) = annotation::load_manifest(manifest).map_err(data_err)?;
    let plan_text = fs::read_to_string(plan_path)
        .map_err(|e| CliError::Data(format!("{}: {e}", plan_path.display())))?;
    let plan = AugmentPlan::from_json(&plan_text).map_err(data_err)?;
    let root = manifest_root(manifest);

    fs::create_dir_all(out_dir.join("images")).map_err(env_err)?;
    let mut augmented = Vec::with_capacity(images.len());
    for meta in &images {
        let img = load_rgb_image(&root.join(meta.image_path()))
            .map_err(|e| CliError::Data(e.to_string()))?;
        let (out_img, out_meta) = augment_sample(&plan.ops, &img, meta).map_err(data_err)?;
        let new_id = format!("{}_{suffix}", meta.image_id());
        let rel = format!("images/{new_id}.png");
        out_img.save(out_dir.join(&rel)).map_err(env_err)?;
        augmented.push(out_meta.with_id(new_id).with_path(rel));
    }
    let text = annotation::manifest_to_string(&augmented, &DatasetSplit::default())
        .map_err(data_err)?;
    fs::write(out_dir.join("manifest.json"), text).map_err(env_err)?;
    println!(
        "augmented {} images into {}",
        augmented.len(),
        out_dir.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

pub struct ClassifierOverrides {
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub num_classes: Option<usize>,
    pub backbone: Option<String>,
}

fn load_labeled_dir(
    data_dir: &Path,
    mode: ClassMode,
) -> Result<Vec<(image::RgbImage, ImageClassLabel)>, CliError> {
    let mut dataset = Vec::new();
    for &label in mode.classes() {
        let dir = data_dir.join(label.as_str());
        if !dir.is_dir() {
            continue; // absence surfaces as EmptyClass during training
        }
        let mut files: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| matches!(e, "png" | "jpg" | "jpeg"))
            })
            .collect();
        files.sort();
        for file in files {
            let img = load_rgb_image(&file).map_err(|e| CliError::Data(e.to_string()))?;
            dataset.push((img, label));
        }
    }
    if dataset.is_empty() {
        return Err(CliError::Data(format!(
            "no labeled images under {} (expected per-class subdirectories)",
            data_dir.display()
        )));
    }
    Ok(dataset)
}

pub fn train_classifier_cmd(
    data_dir: &Path,
    out: &Path,
    app: &AppConfig,
    overrides: ClassifierOverrides,
    seed: u64,
) -> Result<(), CliError> {
    let mut cfg = app.classifier.clone();
    if let Some(v) = overrides.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = overrides.learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = overrides.batch_size {
        cfg.batch_size = v;
    }
    if let Some(n) = overrides.num_classes {
        cfg.mode = ClassMode::from_num_classes(n)
            .ok_or_else(|| CliError::Data(format!("num_classes must be 4 or 5, got {n}")))?;
    }
    if let Some(name) = &overrides.backbone {
        cfg.backbone = match name.as_str() {
            "ResNet50" => ClassifierBackbone::ResNet50,
            "VGG16" => ClassifierBackbone::VGG16,
            "InceptionV3" => ClassifierBackbone::InceptionV3,
            other => {
                return Err(CliError::Data(format!("unknown backbone {other:?}")));
            }
        };
    }

    let dataset = load_labeled_dir(data_dir, cfg.mode)?;
    let (model, log) = train_classifier(&dataset, &cfg, seed).map_err(env_err)?;
    save_classifier(out, &model, &log).map_err(env_err)?;
    if let Some(last) = log.records.last() {
        println!(
            "trained classifier: {} epochs, final loss {:.4}, accuracy {:.3}; saved to {}",
            last.epoch,
            last.loss,
            last.metric,
            out.display()
        );
    }
    Ok(())
}

pub struct SegmenterOverrides {
    pub epochs_heads: Option<usize>,
    pub epochs_all: Option<usize>,
    pub lr_heads: Option<f64>,
    pub lr_all: Option<f64>,
}

fn split_filter<'a>(
    images: &'a [AnnotatedImage],
    split: &DatasetSplit,
    which: &str,
) -> Result<Vec<&'a AnnotatedImage>, CliError> {
    let wanted = match which {
        "train" => Some(SplitKind::Train),
        "validation" => Some(SplitKind::Validation),
        "test" => Some(SplitKind::Test),
        "all" => None,
        other => {
            return Err(CliError::Data(format!(
                "unknown split {other:?}; use train, validation, test, or all"
            )))
        }
    };
    Ok(images
        .iter()
        .filter(|img| match wanted {
            None => true,
            Some(kind) => split.split_of(img.image_id()) == Some(kind),
        })
        .collect())
}

pub fn train_segmenter_cmd(
    manifest: &Path,
    out: &Path,
    which_split: &str,
    app: &AppConfig,
    overrides: SegmenterOverrides,
    seed: u64,
) -> Result<(), CliError> {
    let mut cfg = app.segmenter.clone();
    if let Some(v) = overrides.epochs_heads {
        cfg.epochs_heads = v;
    }
    if let Some(v) = overrides.epochs_all {
        cfg.epochs_all = v;
    }
    if let Some(v) = overrides.lr_heads {
        cfg.lr_heads = v;
    }
    if let Some(v) = overrides.lr_all {
        cfg.lr_all = v;
    }

    let (images, split) = annotation::load_manifest(manifest).map_err(data_err)?;
    let chosen = split_filter(&images, &split, which_split)?;
    let root = manifest_root(manifest);
    let mut dataset = Vec::with_capacity(chosen.len());
    for meta in chosen {
        let img = load_rgb_image(&root.join(meta.image_path()))
            .map_err(|e| CliError::Data(e.to_string()))?;
        if (img.width(), img.height()) != meta.dims() {
            return Err(CliError::Data(format!(
                "image {} is {}x{} but the manifest says {}x{}",
                meta.image_id(),
                img.width(),
                img.height(),
                meta.width(),
                meta.height()
            )));
        }
        let masks = meta
            .annotations()
            .iter()
            .map(|ann| {
                rasterize(ann, meta.width(), meta.height()).map(|m| (ann.label(), m))
            })
            .collect::<Result<Vec<(GarmentClass, _)>, _>>()
            .map_err(data_err)?;
        dataset.push(SegmentSample { image: img, masks });
    }

    let (model, log) = train_segmenter(&dataset, &cfg, seed).map_err(env_err)?;
    save_segmenter(out, &model, &log).map_err(env_err)?;
    if let Some(last) = log.records.last() {
        println!(
            "trained segmenter: {} epochs, final loss {:.4}, pixel accuracy {:.3}; saved to {}",
            last.epoch,
            last.loss,
            last.metric,
            out.display()
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// evaluation
// ---------------------------------------------------------------------------

pub fn classify_eval(
    model_spec: &str,
    data_dir: &Path,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let backend = classifier_from_spec(model_spec).map_err(env_err)?;
    let dataset = load_labeled_dir(data_dir, backend.mode())?;
    let mut pairs = Vec::with_capacity(dataset.len());
    for (img, truth) in &dataset {
        let c = backend.classify(img).map_err(env_err)?;
        pairs.push((*truth, c.label));
    }
    let report = classification_report(&pairs, backend.mode()).map_err(data_err)?;
    print!("{}", render_classification_report(&report));
    if let Some(path) = out {
        fs::write(
            path,
            serde_json::to_string_pretty(&report).map_err(env_err)?,
        )
        .map_err(env_err)?;
    }
    Ok(())
}

fn parse_thresholds(raw: &str) -> Result<Vec<f64>, CliError> {
    raw.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|e| CliError::Data(format!("bad threshold {p:?}: {e}")))
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
pub fn segment_eval(
    manifest: &Path,
    model: Option<&str>,
    dets_file: Option<&Path>,
    which_split: &str,
    iou_kind: &str,
    thresholds: &str,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let (images, split) = annotation::load_manifest(manifest).map_err(data_err)?;
    let chosen: Vec<AnnotatedImage> = split_filter(&images, &split, which_split)?
        .into_iter()
        .cloned()
        .collect();
    if chosen.is_empty() {
        return Err(CliError::Data(format!(
            "no images in split {which_split:?}"
        )));
    }
    let gts = ground_truth_from_annotations(&chosen).map_err(data_err)?;
    let root = manifest_root(manifest);

    let dets = match (model, dets_file) {
        (Some(spec), None) => {
            let backend = segmenter_from_spec(spec).map_err(env_err)?;
            let mut dets = Vec::new();
            for meta in &chosen {
                let img = load_rgb_image(&root.join(meta.image_path()))
                    .map_err(|e| CliError::Data(e.to_string()))?;
                for det in backend.detect(&img).map_err(env_err)? {
                    dets.push(eval::DetRecord {
                        image_id: meta.image_id().to_string(),
                        det,
                    });
                }
            }
            dets
        }
        (None, Some(path)) => {
            let dims: HashMap<String, (u32, u32)> = chosen
                .iter()
                .map(|m| (m.image_id().to_string(), m.dims()))
                .collect();
            let all = interchange::read_detections(path, &dims).map_err(data_err)?;
            // Evaluate only detections for images in the chosen split.
            all.into_iter()
                .filter(|d| dims.contains_key(&d.image_id))
                .collect()
        }
        _ => {
            return Err(CliError::Data(
                "provide exactly one of --model or --dets".into(),
            ))
        }
    };

    let kind = match iou_kind {
        "mask" => IouKind::Mask,
        "box" => IouKind::Box,
        other => return Err(CliError::Data(format!("unknown IoU kind {other:?}"))),
    };
    let thresholds = parse_thresholds(thresholds)?;
    let result = map_over_thresholds(&gts, &dets, &thresholds, kind).map_err(data_err)?;
    print!(
        "{}",
        render_ap_table(&result, &format!("{} IoU", kind.as_str()))
    );

    if let Some(path) = out {
        let json = serde_json::json!({
            "iou_kind": kind.as_str(),
            "thresholds": result.thresholds,
            "map": result.map_per_threshold,
            "per_class": result
                .per_class
                .iter()
                .map(|(cls, aps)| serde_json::json!({"class": cls.as_str(), "ap": aps}))
                .collect::<Vec<_>>(),
        });
        fs::write(path, serde_json::to_string_pretty(&json).map_err(env_err)?)
            .map_err(env_err)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

#[allow(clippy::too_many_arguments)]
pub fn run_cmd(
    image: Option<&Path>,
    manifest: Option<&Path>,
    classifier_spec: &str,
    segmenter_spec: &str,
    fg_spec: Option<&str>,
    overlay: bool,
    out_dir: &Path,
    app: &AppConfig,
) -> Result<(), CliError> {
    let classifier = classifier_from_spec(classifier_spec).map_err(env_err)?;
    let segmenter = segmenter_from_spec(segmenter_spec).map_err(env_err)?;
    let fg = foreground_backend_from_spec(fg_spec.unwrap_or_else(|| default_fg_spec(app)))
        .map_err(env_err)?;

    match (image, manifest) {
        (Some(path), None) => {
            let img = load_rgb_image(path).map_err(|e| CliError::Data(e.to_string()))?;
            let id = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "image".to_string());
            let output = run_pipeline(
                &img,
                &id,
                classifier.as_ref(),
                segmenter.as_ref(),
                fg.as_ref(),
                &app.pipeline,
            )
            .map_err(env_err)?;
            fs::create_dir_all(out_dir).map_err(env_err)?;
            write_output_record(out_dir, &output).map_err(env_err)?;
            if overlay {
                render_overlay(&img, &output)
                    .save(out_dir.join(format!("{id}_overlay.png")))
                    .map_err(env_err)?;
            }
            let route = output
                .route
                .map(|r| r.to_string())
                .unwrap_or_else(|| "destroyed".to_string());
            println!(
                "{id}: route {route}, {} garment(s){}",
                output.garments.len(),
                if output.skipped { ", skipped" } else { "" }
            );
        }
        (None, Some(manifest_path)) => {
            let (images, _) = annotation::load_manifest(manifest_path).map_err(data_err)?;
            let root = manifest_root(manifest_path);
            let summary = run_batch(
                &images,
                &root,
                classifier.as_ref(),
                segmenter.as_ref(),
                fg.as_ref(),
                &app.pipeline,
                out_dir,
                overlay,
            )
            .map_err(env_err)?;
            println!(
                "processed {} images ({} skipped, {} failures) into {}",
                summary.total,
                summary.skipped,
                summary.failures.len(),
                out_dir.display()
            );
            for failure in &summary.failures {
                eprintln!("  {}: {}", failure.image_id, failure.error);
            }
        }
        _ => {
            return Err(CliError::Data(
                "provide exactly one of --image or --manifest".into(),
            ))
        }
    }
    Ok(())
}
