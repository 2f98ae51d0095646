//! Shared helpers for the acceptance suite: an independent brute-force AP
//! oracle, random instance generators, and synthetic datasets.

use garb_core::annotation::{GarmentClass, PolygonAnnotation};
use garb_core::eval::{DetRecord, GroundTruth, IouKind, Region};
use garb_core::geometry::{BBox, BinaryMask};
use garb_core::models::{Detection, SegmentSample};
use image::{Rgb, RgbImage};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------------------
// Brute-force AP oracle
// ---------------------------------------------------------------------------

/// Pixel-set IoU computed by direct counting, independent of the library's
/// implementation.
fn naive_mask_iou(a: &BinaryMask, b: &BinaryMask) -> f64 {
    assert_eq!(a.dims(), b.dims(), "oracle inputs must share dimensions");
    let mut inter = 0u64;
    let mut union = 0u64;
    for y in 0..a.height() {
        for x in 0..a.width() {
            let (pa, pb) = (a.get(x, y), b.get(x, y));
            if pa && pb {
                inter += 1;
            }
            if pa || pb {
                union += 1;
            }
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Box bounds of a mask by scanning set pixels.
fn naive_bounds(mask: &BinaryMask) -> (u32, u32, u32, u32) {
    let mut bounds = (u32::MAX, u32::MAX, 0u32, 0u32);
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if mask.get(x, y) {
                bounds.0 = bounds.0.min(x);
                bounds.1 = bounds.1.min(y);
                bounds.2 = bounds.2.max(x);
                bounds.3 = bounds.3.max(y);
            }
        }
    }
    bounds
}

/// Box IoU by membership counting over the pixel grid rather than by the
/// closed-form area formula.
fn naive_box_iou(a: (u32, u32, u32, u32), b: (u32, u32, u32, u32)) -> f64 {
    let x_hi = a.2.max(b.2);
    let y_hi = a.3.max(b.3);
    let mut inter = 0u64;
    let mut union = 0u64;
    for y in 0..=y_hi {
        for x in 0..=x_hi {
            let in_a = x >= a.0 && x <= a.2 && y >= a.1 && y <= a.3;
            let in_b = x >= b.0 && x <= b.2 && y >= b.1 && y <= b.3;
            if in_a && in_b {
                inter += 1;
            }
            if in_a || in_b {
                union += 1;
            }
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

fn oracle_pair_iou(det: &Detection, gt: &GroundTruth, kind: IouKind) -> f64 {
    match kind {
        IouKind::Mask => match &gt.region {
            Region::Mask(m) => naive_mask_iou(det.mask(), m),
            Region::Box(b) => {
                let filled =
                    BinaryMask::filled_rect(det.mask().width(), det.mask().height(), b);
                naive_mask_iou(det.mask(), &filled)
            }
        },
        IouKind::Box => {
            let d = naive_bounds(det.mask());
            let g = match &gt.region {
                Region::Mask(m) => naive_bounds(m),
                Region::Box(b) => (b.x_min, b.y_min, b.x_max, b.y_max),
            };
            naive_box_iou(d, g)
        }
    }
}

/// Brute-force PR-curve AP: re-matches every detection prefix from scratch
/// and integrates the envelope by explicit suffix maxima.
pub fn oracle_ap(
    gts: &[GroundTruth],
    dets: &[DetRecord],
    cls: GarmentClass,
    threshold: f64,
    kind: IouKind,
) -> Option<f64> {
    let class_gts: Vec<&GroundTruth> = gts.iter().filter(|g| g.cls == cls).collect();
    let mut class_dets: Vec<&DetRecord> = dets.iter().filter(|d| d.det.cls() == cls).collect();
    if class_gts.is_empty() {
        return if class_dets.is_empty() {
            None
        } else {
            Some(0.0)
        };
    }
    if class_dets.is_empty() {
        return Some(0.0);
    }
    class_dets.sort_by(|a, b| b.det.score().partial_cmp(&a.det.score()).unwrap());

    let n = class_dets.len();
    let n_gt = class_gts.len();
    let mut precisions = Vec::with_capacity(n);
    let mut recalls = Vec::with_capacity(n);
    for prefix in 1..=n {
        // Fresh greedy matching over this prefix only.
        let mut taken = vec![false; n_gt];
        let mut tp = 0usize;
        for det in &class_dets[..prefix] {
            let mut best: Option<(usize, f64)> = None;
            for (gi, gt) in class_gts.iter().enumerate() {
                if taken[gi] || gt.image_id != det.image_id {
                    continue;
                }
                let iou = oracle_pair_iou(&det.det, gt, kind);
                if best.is_none() || iou > best.unwrap().1 {
                    best = Some((gi, iou));
                }
            }
            if let Some((gi, iou)) = best {
                if iou >= threshold {
                    taken[gi] = true;
                    tp += 1;
                }
            }
        }
        precisions.push(tp as f64 / prefix as f64);
        recalls.push(tp as f64 / n_gt as f64);
    }

    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for k in 0..n {
        if recalls[k] > prev_recall {
            let envelope = precisions[k..]
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max);
            ap += (recalls[k] - prev_recall) * envelope;
            prev_recall = recalls[k];
        }
    }
    Some(ap)
}

// ---------------------------------------------------------------------------
// Random instances
// ---------------------------------------------------------------------------

pub const INSTANCE_DIMS: (u32, u32) = (20, 20);

pub struct ApInstance {
    pub gts: Vec<GroundTruth>,
    pub dets: Vec<DetRecord>,
}

fn random_rect(rng: &mut ChaCha8Rng) -> BBox {
    let (w, h) = INSTANCE_DIMS;
    let x0 = rng.gen_range(0..w - 2);
    let y0 = rng.gen_range(0..h - 2);
    let x1 = rng.gen_range(x0..(x0 + 8).min(w - 1)).max(x0 + 1).min(w - 1);
    let y1 = rng.gen_range(y0..(y0 + 8).min(h - 1)).max(y0 + 1).min(h - 1);
    BBox::new(x0, y0, x1, y1).unwrap()
}

fn jittered_rect(rng: &mut ChaCha8Rng, base: &BBox) -> BBox {
    let (w, h) = INSTANCE_DIMS;
    let jitter = |v: u32, lo: i64, hi: i64, max: u32, rng: &mut ChaCha8Rng| -> u32 {
        (i64::from(v) + rng.gen_range(lo..=hi)).clamp(0, i64::from(max)) as u32
    };
    let x0 = jitter(base.x_min, -2, 2, w - 1, rng);
    let y0 = jitter(base.y_min, -2, 2, h - 1, rng);
    let x1 = jitter(base.x_max, -2, 2, w - 1, rng).max(x0);
    let y1 = jitter(base.y_max, -2, 2, h - 1, rng).max(y0);
    BBox::new(x0, y0, x1, y1).unwrap()
}

fn random_class(rng: &mut ChaCha8Rng) -> GarmentClass {
    if rng.gen_bool(0.5) {
        GarmentClass::Top
    } else {
        GarmentClass::Bottom
    }
}

/// A small instance: up to 5 images, 4 ground truths, and 6 detections.
/// Some detections are jittered copies of ground truths so every overlap
/// regime shows up.
pub fn random_instance(rng: &mut ChaCha8Rng) -> ApInstance {
    let (w, h) = INSTANCE_DIMS;
    let n_images = rng.gen_range(1..=5usize);
    let image_ids: Vec<String> = (0..n_images).map(|i| format!("img{i}")).collect();

    let n_gt = rng.gen_range(0..=4usize);
    let mut gts = Vec::with_capacity(n_gt);
    for _ in 0..n_gt {
        let id = &image_ids[rng.gen_range(0..n_images)];
        let rect = random_rect(rng);
        gts.push(
            GroundTruth::from_mask(
                id.clone(),
                random_class(rng),
                BinaryMask::filled_rect(w, h, &rect),
            )
            .unwrap(),
        );
    }

    let n_det = rng.gen_range(0..=6usize);
    let mut dets = Vec::with_capacity(n_det);
    for _ in 0..n_det {
        let (id, rect, cls) = if !gts.is_empty() && rng.gen_bool(0.6) {
            // Perturb a ground truth; usually keep its class.
            let gt = &gts[rng.gen_range(0..gts.len())];
            let base = gt.bbox().unwrap();
            let cls = if rng.gen_bool(0.8) {
                gt.cls
            } else {
                random_class(rng)
            };
            (gt.image_id.clone(), jittered_rect(rng, &base), cls)
        } else {
            (
                image_ids[rng.gen_range(0..n_images)].clone(),
                random_rect(rng),
                random_class(rng),
            )
        };
        let mask = BinaryMask::filled_rect(w, h, &rect);
        let score = rng.gen_range(0.01..1.0);
        dets.push(DetRecord {
            image_id: id,
            det: Detection::new(mask, cls, score).unwrap(),
        });
    }
    ApInstance { gts, dets }
}

// ---------------------------------------------------------------------------
// Random geometry
// ---------------------------------------------------------------------------

/// Random mask with roughly the given fill density.
pub fn random_mask(rng: &mut ChaCha8Rng, w: u32, h: u32, density: f64) -> BinaryMask {
    BinaryMask::from_fn(w, h, |_, _| rng.gen_bool(density))
}

/// Random convex polygon: jittered-angle vertices on a random ellipse, so
/// the vertex order is convex by construction.
pub fn random_convex_polygon(rng: &mut ChaCha8Rng, w: u32, h: u32) -> PolygonAnnotation {
    let k = rng.gen_range(5..=12usize);
    let a = rng.gen_range(15.0..0.42 * f64::from(w));
    let b = rng.gen_range(15.0..0.42 * f64::from(h));
    let cx = rng.gen_range(a + 1.0..f64::from(w) - a - 1.0);
    let cy = rng.gen_range(b + 1.0..f64::from(h) - b - 1.0);
    let step = std::f64::consts::TAU / k as f64;
    let vertices: Vec<(f64, f64)> = (0..k)
        .map(|i| {
            let theta = i as f64 * step + rng.gen_range(0.0..0.9 * step);
            (cx + a * theta.cos(), cy + b * theta.sin())
        })
        .collect();
    PolygonAnnotation::new(random_class(rng), vertices).unwrap()
}

// ---------------------------------------------------------------------------
// Synthetic training data
// ---------------------------------------------------------------------------

/// Solid-color image per class with per-image jitter; trivially separable.
pub fn color_classifier_dataset(
    per_class: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<(RgbImage, garb_core::models::ImageClassLabel)> {
    use garb_core::models::ImageClassLabel::*;
    let palette = [
        (Top, [220u8, 40, 40]),
        (Bottom, [40, 40, 220]),
        (FullBody, [40, 220, 40]),
        (HalfBody, [220, 220, 40]),
        (Accessories, [128, 128, 128]),
    ];
    let mut out = Vec::new();
    for &(label, base) in &palette {
        for _ in 0..per_class {
            let mut jitter =
                |v: u8| (i16::from(v) + rng.gen_range(-12..=12)).clamp(0, 255) as u8;
            let color = [jitter(base[0]), jitter(base[1]), jitter(base[2])];
            out.push((RgbImage::from_pixel(24, 24, Rgb(color)), label));
        }
    }
    out
}

/// One synthetic two-garment image: a red-ish top rectangle above a
/// blue-ish bottom rectangle on a noisy near-white background.
pub fn two_rect_sample(rng: &mut ChaCha8Rng) -> SegmentSample {
    let (w, h) = (48u32, 64u32);
    let mut img = RgbImage::from_pixel(w, h, Rgb([245, 245, 245]));
    for px in img.pixels_mut() {
        for c in 0..3 {
            px[c] = (i16::from(px[c]) + rng.gen_range(-6..=6)).clamp(0, 255) as u8;
        }
    }
    let jitter = |base: u8, rng: &mut ChaCha8Rng| {
        (i16::from(base) + rng.gen_range(-10..=10)).clamp(0, 255) as u8
    };
    let top_rect = BBox::new(
        rng.gen_range(4..10),
        rng.gen_range(4..8),
        rng.gen_range(36..44),
        rng.gen_range(24..30),
    )
    .unwrap();
    let bottom_rect = BBox::new(
        rng.gen_range(6..12),
        rng.gen_range(34..38),
        rng.gen_range(34..42),
        rng.gen_range(54..60),
    )
    .unwrap();
    let top_mask = BinaryMask::filled_rect(w, h, &top_rect);
    let bottom_mask = BinaryMask::filled_rect(w, h, &bottom_rect);
    for (x, y) in top_mask.iter_set() {
        img.put_pixel(
            x,
            y,
            Rgb([jitter(200, rng), jitter(40, rng), jitter(50, rng)]),
        );
    }
    for (x, y) in bottom_mask.iter_set() {
        img.put_pixel(
            x,
            y,
            Rgb([jitter(40, rng), jitter(60, rng), jitter(200, rng)]),
        );
    }
    SegmentSample {
        image: img,
        masks: vec![
            (GarmentClass::Top, top_mask),
            (GarmentClass::Bottom, bottom_mask),
        ],
    }
}
