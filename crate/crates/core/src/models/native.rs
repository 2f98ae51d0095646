//! Small trainable native backends.
//!
//! Both models follow the frozen-backbone / trainable-head shape of the
//! published setup at desk scale. The classifier pools a resized image into
//! a coarse RGB grid (the fixed feature extractor) and trains a softmax
//! head with Adam under [`ClassifierConfig`]. The segmenter classifies every
//! pixel from color and position features through a small tanh layer (the
//! backbone) and a softmax head, trained with SGD momentum in the two-phase
//! heads-then-all schedule of [`SegmenterConfig`].

use image::{imageops, RgbImage};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::annotation::GarmentClass;
use crate::geometry::{largest_component, BinaryMask};

use super::{
    Classification, ClassMode, ClassifierBackend, ClassifierBackbone, ClassifierConfig,
    Detection, EpochRecord, ImageClassLabel, ModelError, SegmentSample, SegmenterBackend,
    SegmenterConfig, TrainingLog, WeightsInit,
};

/// Side length of the pooled classifier feature grid.
pub(crate) const POOLED_GRID: u32 = 8;
/// Color-prototype features per pooling region.
pub(crate) const RBF_ANCHORS: usize = 32;
/// Pooling regions for prototype features: whole image plus four quadrants.
pub(crate) const RBF_REGIONS: usize = 5;
/// Bandwidth of the color-prototype activations.
const RBF_SIGMA: f64 = 0.35;
/// Per-pixel feature count for the segmenter: r, g, b, x, y.
pub(crate) const PIXEL_FEATURES: usize = 5;
/// Pixels sampled per class per image per training epoch.
const PIXELS_PER_CLASS: usize = 300;
/// Pixel mini-batch size for one SGD step.
const PIXEL_BATCH: usize = 64;

pub(crate) fn classifier_feature_dim(grid: u32) -> usize {
    (grid * grid * 3) as usize + RBF_REGIONS * RBF_ANCHORS
}

// ---------------------------------------------------------------------------
// Shared math
// ---------------------------------------------------------------------------

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap_or(0)
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - Self::BETA1.powi(self.t);
        let bc2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grads[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grads[i] * grads[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + Self::EPS);
        }
    }
}

struct Momentum {
    velocity: Vec<f64>,
}

impl Momentum {
    fn new(n: usize) -> Self {
        Momentum {
            velocity: vec![0.0; n],
        }
    }

    fn step(
        &mut self,
        params: &mut [f64],
        grads: &[f64],
        lr: f64,
        momentum: f64,
        weight_decay: f64,
    ) {
        for i in 0..params.len() {
            let g = grads[i] + weight_decay * params[i];
            self.velocity[i] = momentum * self.velocity[i] - lr * g;
            params[i] += self.velocity[i];
        }
    }
}

// ---------------------------------------------------------------------------
// Native classifier
// ---------------------------------------------------------------------------

/// Softmax head over a pooled-RGB feature grid.
#[derive(Debug, Clone)]
pub struct NativeClassifier {
    pub(crate) mode: ClassMode,
    pub(crate) backbone: ClassifierBackbone,
    pub(crate) pooled_grid: u32,
    /// Head weights, `num_classes x feature_dim` row-major.
    pub(crate) weights: Vec<f64>,
    pub(crate) bias: Vec<f64>,
}

/// Deterministic color prototypes shared by every model instance; part of
/// the fixed feature extractor, not of the trainable head.
fn rbf_anchors() -> &'static [[f64; 3]] {
    use std::sync::OnceLock;
    static ANCHORS: OnceLock<Vec<[f64; 3]>> = OnceLock::new();
    ANCHORS.get_or_init(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(0x00ac_0ffe);
        (0..RBF_ANCHORS)
            .map(|_| [rng.gen(), rng.gen(), rng.gen()])
            .collect()
    })
}

/// The fixed feature extractor standing in for a pretrained backbone:
/// resize to the backbone's published input size, average-pool into a
/// `grid x grid` RGB grid normalized to [0, 1], then append color-prototype
/// activations for the whole image and each quadrant.
pub(crate) fn classifier_features(
    img: &RgbImage,
    backbone: ClassifierBackbone,
    grid: u32,
) -> Vec<f64> {
    let size = backbone.input_size();
    let resized = if img.dimensions() == (size, size) {
        img.clone()
    } else {
        imageops::resize(img, size, size, imageops::FilterType::Triangle)
    };
    let mut feats = vec![0.0f64; (grid * grid * 3) as usize];
    for gy in 0..grid {
        for gx in 0..grid {
            let x0 = gx * size / grid;
            let x1 = (gx + 1) * size / grid;
            let y0 = gy * size / grid;
            let y1 = (gy + 1) * size / grid;
            let mut sums = [0.0f64; 3];
            for y in y0..y1 {
                for x in x0..x1 {
                    let px = resized.get_pixel(x, y);
                    for c in 0..3 {
                        sums[c] += f64::from(px[c]);
                    }
                }
            }
            let count = f64::from((x1 - x0) * (y1 - y0)) * 255.0;
            let base = ((gy * grid + gx) * 3) as usize;
            for c in 0..3 {
                feats[base + c] = sums[c] / count;
            }
        }
    }

    // Region mean colors: whole image, then the four quadrants.
    let cell_mean = |gx0: u32, gx1: u32, gy0: u32, gy1: u32| -> [f64; 3] {
        let mut sums = [0.0f64; 3];
        let mut n = 0.0;
        for gy in gy0..gy1 {
            for gx in gx0..gx1 {
                let base = ((gy * grid + gx) * 3) as usize;
                for c in 0..3 {
                    sums[c] += feats[base + c];
                }
                n += 1.0;
            }
        }
        [sums[0] / n, sums[1] / n, sums[2] / n]
    };
    let half = grid / 2;
    let regions = [
        cell_mean(0, grid, 0, grid),
        cell_mean(0, half, 0, half),
        cell_mean(half, grid, 0, half),
        cell_mean(0, half, half, grid),
        cell_mean(half, grid, half, grid),
    ];
    for mean in regions {
        for anchor in rbf_anchors() {
            let d2 = (0..3).map(|c| (mean[c] - anchor[c]).powi(2)).sum::<f64>();
            feats.push((-d2 / (2.0 * RBF_SIGMA * RBF_SIGMA)).exp());
        }
    }
    feats
}

impl NativeClassifier {
    fn feature_dim(&self) -> usize {
        classifier_feature_dim(self.pooled_grid)
    }

    fn logits(&self, feats: &[f64]) -> Vec<f64> {
        let f = self.feature_dim();
        (0..self.mode.num_classes())
            .map(|c| {
                self.bias[c]
                    + feats
                        .iter()
                        .enumerate()
                        .map(|(k, &x)| self.weights[c * f + k] * x)
                        .sum::<f64>()
            })
            .collect()
    }

    /// Raw probability vector in the mode's class order.
    pub fn scores(&self, img: &RgbImage) -> Vec<f64> {
        softmax(&self.logits(&classifier_features(img, self.backbone, self.pooled_grid)))
    }
}

impl ClassifierBackend for NativeClassifier {
    fn mode(&self) -> ClassMode {
        self.mode
    }

    fn classify(&self, img: &RgbImage) -> Result<Classification, ModelError> {
        Classification::from_scores(self.mode, self.scores(img))
    }

    fn concurrent_safe(&self) -> bool {
        true
    }
}

/// Fine-tune a classification head under `cfg`, returning the trained model
/// and its per-epoch log.
pub fn train_classifier(
    dataset: &[(RgbImage, ImageClassLabel)],
    cfg: &ClassifierConfig,
    seed: u64,
) -> Result<(NativeClassifier, TrainingLog), ModelError> {
    let mode = cfg.mode;
    if cfg.batch_size == 0 {
        return Err(ModelError::Artifact("batch_size must be positive".into()));
    }
    let mut counts = vec![0usize; mode.num_classes()];
    let mut labels = Vec::with_capacity(dataset.len());
    for (_, label) in dataset {
        let idx = mode
            .index_of(*label)
            .ok_or(ModelError::LabelOutsideMode(*label))?;
        counts[idx] += 1;
        labels.push(idx);
    }
    for (i, &c) in counts.iter().enumerate() {
        if c == 0 {
            return Err(ModelError::EmptyClass(mode.classes()[i]));
        }
    }

    let feats: Vec<Vec<f64>> = dataset
        .iter()
        .map(|(img, _)| classifier_features(img, cfg.backbone, POOLED_GRID))
        .collect();
    let f_dim = feats[0].len();
    let c_dim = mode.num_classes();

    let mut model = NativeClassifier {
        mode,
        backbone: cfg.backbone,
        pooled_grid: POOLED_GRID,
        weights: vec![0.0; c_dim * f_dim],
        bias: vec![0.0; c_dim],
    };
    let mut adam_w = Adam::new(c_dim * f_dim);
    let mut adam_b = Adam::new(c_dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut log = TrainingLog::new(serde_json::to_value(cfg).expect("config serializes"));

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let mut gw = vec![0.0f64; c_dim * f_dim];
            let mut gb = vec![0.0f64; c_dim];
            for &i in chunk {
                let probs = softmax(&model.logits(&feats[i]));
                epoch_loss += -probs[labels[i]].max(1e-300).ln();
                for c in 0..c_dim {
                    let delta = probs[c] - if c == labels[i] { 1.0 } else { 0.0 };
                    gb[c] += delta;
                    let row = c * f_dim;
                    for (k, &x) in feats[i].iter().enumerate() {
                        gw[row + k] += delta * x;
                    }
                }
            }
            let scale = 1.0 / chunk.len() as f64;
            gw.iter_mut().for_each(|g| *g *= scale);
            gb.iter_mut().for_each(|g| *g *= scale);
            adam_w.step(&mut model.weights, &gw, cfg.learning_rate);
            adam_b.step(&mut model.bias, &gb, cfg.learning_rate);
        }
        let correct = feats
            .iter()
            .zip(&labels)
            .filter(|(x, &l)| argmax(&model.logits(x)) == l)
            .count();
        log.records.push(EpochRecord {
            epoch,
            phase: "head".to_string(),
            lr: cfg.learning_rate,
            loss: epoch_loss / dataset.len() as f64,
            metric: correct as f64 / dataset.len() as f64,
        });
    }
    Ok((model, log))
}

// ---------------------------------------------------------------------------
// Native segmenter
// ---------------------------------------------------------------------------

/// Per-pixel classifier: a tanh feature layer (the backbone) under a
/// three-way softmax head (background / top / bottom). The head also sees
/// the raw pixel features directly.
#[derive(Debug, Clone)]
pub struct NativeSegmenter {
    pub(crate) hidden: usize,
    /// Backbone weights, `hidden x PIXEL_FEATURES` row-major.
    pub(crate) w1: Vec<f64>,
    pub(crate) b1: Vec<f64>,
    /// Head weights, `3 x (hidden + PIXEL_FEATURES)` row-major.
    pub(crate) w2: Vec<f64>,
    pub(crate) b2: Vec<f64>,
}

const SEG_HIDDEN: usize = 8;
const SEG_CLASSES: usize = 3;

pub(crate) fn segmenter_head_dim(hidden: usize) -> usize {
    hidden + PIXEL_FEATURES
}

fn pixel_features(img: &RgbImage, x: u32, y: u32) -> [f64; PIXEL_FEATURES] {
    let px = img.get_pixel(x, y);
    let w = img.width().max(2) - 1;
    let h = img.height().max(2) - 1;
    [
        f64::from(px[0]) / 255.0,
        f64::from(px[1]) / 255.0,
        f64::from(px[2]) / 255.0,
        f64::from(x) / f64::from(w),
        f64::from(y) / f64::from(h),
    ]
}

fn garment_channel(cls: GarmentClass) -> usize {
    match cls {
        GarmentClass::Top => 1,
        GarmentClass::Bottom => 2,
    }
}

impl NativeSegmenter {
    /// Deterministic backbone initialization. Each weight preset selects a
    /// fixed seed, so results are reproducible per preset with no weight
    /// file present.
    pub(crate) fn init(preset: WeightsInit) -> Self {
        let seed = match preset {
            WeightsInit::ImageNet => 0x1111_2222,
            WeightsInit::Coco => 0x3333_4444,
            WeightsInit::ModaNet => 0x5555_6666,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w1 = (0..SEG_HIDDEN * PIXEL_FEATURES)
            .map(|_| rng.gen_range(-0.7..0.7))
            .collect();
        NativeSegmenter {
            hidden: SEG_HIDDEN,
            w1,
            b1: vec![0.0; SEG_HIDDEN],
            w2: vec![0.0; SEG_CLASSES * segmenter_head_dim(SEG_HIDDEN)],
            b2: vec![0.0; SEG_CLASSES],
        }
    }

    /// Head input: tanh backbone activations followed by the raw features.
    fn head_input(&self, feats: &[f64; PIXEL_FEATURES]) -> Vec<f64> {
        let mut input = Vec::with_capacity(segmenter_head_dim(self.hidden));
        for j in 0..self.hidden {
            let row = j * PIXEL_FEATURES;
            let z: f64 = feats
                .iter()
                .enumerate()
                .map(|(k, &f)| self.w1[row + k] * f)
                .sum::<f64>()
                + self.b1[j];
            input.push(z.tanh());
        }
        input.extend_from_slice(feats);
        input
    }

    fn logits_from_input(&self, input: &[f64]) -> Vec<f64> {
        let dim = segmenter_head_dim(self.hidden);
        (0..SEG_CLASSES)
            .map(|c| {
                let row = c * dim;
                input
                    .iter()
                    .enumerate()
                    .map(|(j, &v)| self.w2[row + j] * v)
                    .sum::<f64>()
                    + self.b2[c]
            })
            .collect()
    }

    fn class_probs(&self, feats: &[f64; PIXEL_FEATURES]) -> Vec<f64> {
        softmax(&self.logits_from_input(&self.head_input(feats)))
    }
}

impl SegmenterBackend for NativeSegmenter {
    fn detect(&self, img: &RgbImage) -> Result<Vec<Detection>, ModelError> {
        let (w, h) = (img.width(), img.height());
        if w == 0 || h == 0 {
            return Err(ModelError::DecodeFailure("empty image".into()));
        }
        let mut prob_maps = vec![vec![0.0f64; (w * h) as usize]; SEG_CLASSES];
        let mut argmax_map = vec![0u8; (w * h) as usize];
        for y in 0..h {
            for x in 0..w {
                let probs = self.class_probs(&pixel_features(img, x, y));
                let i = (y * w + x) as usize;
                for c in 0..SEG_CLASSES {
                    prob_maps[c][i] = probs[c];
                }
                argmax_map[i] = argmax(&probs) as u8;
            }
        }

        let mut dets = Vec::new();
        for cls in GarmentClass::ALL {
            let channel = garment_channel(cls) as u8;
            let raw = BinaryMask::from_fn(w, h, |x, y| argmax_map[(y * w + x) as usize] == channel);
            let mask = largest_component(&raw);
            if mask.is_blank() {
                continue;
            }
            let total: f64 = mask
                .iter_set()
                .map(|(x, y)| prob_maps[channel as usize][(y * w + x) as usize])
                .sum();
            let score = (total / mask.count_ones() as f64).clamp(0.0, 1.0);
            dets.push(Detection::new(mask, cls, score)?);
        }
        dets.sort_by(|a, b| b.score().partial_cmp(&a.score()).unwrap());
        Ok(dets)
    }

    fn concurrent_safe(&self) -> bool {
        true
    }
}

/// Per-image pixel labels: 0 background, 1 top, 2 bottom.
fn label_map(sample: &SegmentSample) -> Result<Vec<u8>, ModelError> {
    let (w, h) = (sample.image.width(), sample.image.height());
    let mut labels = vec![0u8; (w * h) as usize];
    for (cls, mask) in &sample.masks {
        if mask.dims() != (w, h) {
            return Err(ModelError::InvalidDetection(format!(
                "ground-truth mask is {}x{} for a {}x{} image",
                mask.width(),
                mask.height(),
                w,
                h
            )));
        }
        let channel = garment_channel(*cls) as u8;
        for (x, y) in mask.iter_set() {
            labels[(y * w + x) as usize] = channel;
        }
    }
    Ok(labels)
}

/// Fine-tune the per-pixel segmenter: heads only for `epochs_heads` at
/// `lr_heads`, then all layers for `epochs_all` at `lr_all`. The log marks
/// the phase of every epoch.
pub fn train_segmenter(
    dataset: &[SegmentSample],
    cfg: &SegmenterConfig,
    seed: u64,
) -> Result<(NativeSegmenter, TrainingLog), ModelError> {
    if dataset.is_empty() {
        return Err(ModelError::EmptyDataset("no samples".into()));
    }
    for (i, sample) in dataset.iter().enumerate() {
        if sample.masks.is_empty() {
            return Err(ModelError::EmptyDataset(format!(
                "sample {i} has no annotations"
            )));
        }
    }
    if let Some(path) = &cfg.weights_path {
        if !path.exists() {
            return Err(ModelError::BackendUnavailable(format!(
                "pretrained weights file {} not found",
                path.display()
            )));
        }
    }

    let mut model = match &cfg.weights_path {
        Some(path) => super::artifact::load_backbone_weights(path)?,
        None => NativeSegmenter::init(cfg.init_weights),
    };

    // Precompute features and labels; group pixel indices by class.
    struct Prepared {
        feats: Vec<[f64; PIXEL_FEATURES]>,
        labels: Vec<u8>,
        by_class: [Vec<usize>; SEG_CLASSES],
    }
    let prepared: Vec<Prepared> = dataset
        .iter()
        .map(|sample| {
            let (w, h) = (sample.image.width(), sample.image.height());
            let labels = label_map(sample)?;
            let mut feats = Vec::with_capacity((w * h) as usize);
            for y in 0..h {
                for x in 0..w {
                    feats.push(pixel_features(&sample.image, x, y));
                }
            }
            let mut by_class: [Vec<usize>; SEG_CLASSES] = Default::default();
            for (i, &l) in labels.iter().enumerate() {
                by_class[l as usize].push(i);
            }
            Ok(Prepared {
                feats,
                labels,
                by_class,
            })
        })
        .collect::<Result<_, ModelError>>()?;

    let n_w1 = model.w1.len();
    let n_b1 = model.b1.len();
    let n_w2 = model.w2.len();
    let n_b2 = model.b2.len();
    let mut mom_w1 = Momentum::new(n_w1);
    let mut mom_b1 = Momentum::new(n_b1);
    let mut mom_w2 = Momentum::new(n_w2);
    let mut mom_b2 = Momentum::new(n_b2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut log = TrainingLog::new(serde_json::to_value(cfg).expect("config serializes"));

    let total_epochs = cfg.epochs_heads + cfg.epochs_all;
    for epoch in 1..=total_epochs {
        let heads_only = epoch <= cfg.epochs_heads;
        let lr = if heads_only { cfg.lr_heads } else { cfg.lr_all };
        let mut epoch_loss = 0.0;
        let mut epoch_correct = 0usize;
        let mut epoch_pixels = 0usize;

        for prep in &prepared {
            // Stratified pixel sample for this image, shuffled and consumed
            // in mini-batches of PIXEL_BATCH, one SGD step each.
            let mut sampled: Vec<usize> = Vec::new();
            for class_pixels in &prep.by_class {
                if class_pixels.is_empty() {
                    continue;
                }
                let take = PIXELS_PER_CLASS.min(class_pixels.len());
                sampled.extend(
                    rand::seq::index::sample(&mut rng, class_pixels.len(), take)
                        .into_iter()
                        .map(|k| class_pixels[k]),
                );
            }
            sampled.shuffle(&mut rng);

            let head_dim = segmenter_head_dim(model.hidden);
            for batch in sampled.chunks(PIXEL_BATCH) {
                let mut gw1 = vec![0.0f64; n_w1];
                let mut gb1 = vec![0.0f64; n_b1];
                let mut gw2 = vec![0.0f64; n_w2];
                let mut gb2 = vec![0.0f64; n_b2];
                for &i in batch {
                    let feats = &prep.feats[i];
                    let target = prep.labels[i] as usize;
                    let input = model.head_input(feats);
                    let probs = softmax(&model.logits_from_input(&input));
                    epoch_loss += -probs[target].max(1e-300).ln();
                    if argmax(&probs) == target {
                        epoch_correct += 1;
                    }
                    epoch_pixels += 1;

                    // Head gradients; dh covers the tanh units only, the
                    // skip inputs have no backbone parameters behind them.
                    let mut dh = vec![0.0f64; model.hidden];
                    for c in 0..SEG_CLASSES {
                        let delta = probs[c] - if c == target { 1.0 } else { 0.0 };
                        gb2[c] += delta;
                        let row = c * head_dim;
                        for (j, &v) in input.iter().enumerate() {
                            gw2[row + j] += delta * v;
                            if j < model.hidden {
                                dh[j] += delta * model.w2[row + j];
                            }
                        }
                    }
                    if !heads_only {
                        for j in 0..model.hidden {
                            let dz = dh[j] * (1.0 - input[j] * input[j]);
                            gb1[j] += dz;
                            let row = j * PIXEL_FEATURES;
                            for (k, &f) in feats.iter().enumerate() {
                                gw1[row + k] += dz * f;
                            }
                        }
                    }
                }
                let scale = 1.0 / batch.len() as f64;
                gw2.iter_mut().for_each(|g| *g *= scale);
                gb2.iter_mut().for_each(|g| *g *= scale);
                mom_w2.step(&mut model.w2, &gw2, lr, cfg.momentum, cfg.weight_decay);
                mom_b2.step(&mut model.b2, &gb2, lr, cfg.momentum, 0.0);
                if !heads_only {
                    gw1.iter_mut().for_each(|g| *g *= scale);
                    gb1.iter_mut().for_each(|g| *g *= scale);
                    mom_w1.step(&mut model.w1, &gw1, lr, cfg.momentum, cfg.weight_decay);
                    mom_b1.step(&mut model.b1, &gb1, lr, cfg.momentum, 0.0);
                }
            }
        }

        log.records.push(EpochRecord {
            epoch,
            phase: if heads_only { "heads" } else { "all" }.to_string(),
            lr,
            loss: epoch_loss / epoch_pixels.max(1) as f64,
            metric: epoch_correct as f64 / epoch_pixels.max(1) as f64,
        });
    }
    Ok((model, log))
}
