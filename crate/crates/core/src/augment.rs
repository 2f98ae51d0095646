//! Geometric and photometric augmentation applied consistently to images
//! and their polygon/mask annotations.
//!
//! The one property that matters here is path consistency: rasterizing a
//! transformed polygon must agree with transforming the rasterized mask,
//! exactly for flips and within a small IoU margin for rotations. To get it,
//! every geometric op is defined once as a point map, and images, polygons,
//! and masks all go through that same map.

use image::{imageops, Rgb, RgbImage};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::{AnnotatedImage, AnnotationError, PolygonAnnotation};
use crate::geometry::BinaryMask;

/// Fill used for canvas revealed by rotation.
const ROTATE_FILL: Rgb<u8> = Rgb([255, 255, 255]);

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("invalid augmentation op: {0}")]
    InvalidOp(String),
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
}

/// One augmentation step. Geometric ops (rotate, flip) move annotations
/// with the image; photometric ops (blur, noise) leave them untouched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum AugmentOp {
    /// Rotation about the image center. With `expand` the canvas grows to
    /// cover the rotated rectangle; positive angles turn the content
    /// clockwise on screen (y grows downward).
    Rotate {
        angle_deg: f64,
        #[serde(default = "default_expand")]
        expand: bool,
    },
    FlipHorizontal,
    /// Gaussian low-pass; `radius` is the standard deviation in pixels.
    Blur { radius: f64 },
    /// Additive Gaussian noise, clipped to the valid intensity range and
    /// bit-reproducible for a fixed seed.
    AddNoise { sigma: f64, seed: u64 },
}

fn default_expand() -> bool {
    true
}

impl AugmentOp {
    pub fn validate(&self) -> Result<(), AugmentError> {
        match *self {
            AugmentOp::Rotate { angle_deg, .. } => {
                if !(angle_deg > -360.0 && angle_deg < 360.0) {
                    return Err(AugmentError::InvalidOp(format!(
                        "rotation angle {angle_deg} outside (-360, 360)"
                    )));
                }
            }
            AugmentOp::Blur { radius } => {
                if !(radius >= 0.0) {
                    return Err(AugmentError::InvalidOp(format!(
                        "blur radius {radius} must be >= 0"
                    )));
                }
            }
            AugmentOp::AddNoise { sigma, .. } => {
                if !(sigma >= 0.0) {
                    return Err(AugmentError::InvalidOp(format!(
                        "noise sigma {sigma} must be >= 0"
                    )));
                }
            }
            AugmentOp::FlipHorizontal => {}
        }
        Ok(())
    }

    /// Canvas dimensions after applying this op to a `dims` image.
    pub fn output_dims(&self, dims: (u32, u32)) -> (u32, u32) {
        match *self {
            AugmentOp::Rotate { angle_deg, expand } if expand => {
                rotation_map(dims, angle_deg, true).new_dims
            }
            _ => dims,
        }
    }
}

/// An ordered augmentation plan, the on-disk config format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentPlan {
    pub ops: Vec<AugmentOp>,
}

impl AugmentPlan {
    pub fn validate(&self) -> Result<(), AugmentError> {
        self.ops.iter().try_for_each(AugmentOp::validate)
    }

    pub fn from_json(text: &str) -> Result<Self, AugmentError> {
        let plan: AugmentPlan = serde_json::from_str(text)
            .map_err(|e| AugmentError::InvalidOp(format!("bad plan file: {e}")))?;
        plan.validate()?;
        Ok(plan)
    }
}

// ---------------------------------------------------------------------------
// Rotation as a shared point map
// ---------------------------------------------------------------------------

struct RotationMap {
    cos: f64,
    sin: f64,
    center: (f64, f64),
    new_center: (f64, f64),
    new_dims: (u32, u32),
}

impl RotationMap {
    fn forward(&self, p: (f64, f64)) -> (f64, f64) {
        let (dx, dy) = (p.0 - self.center.0, p.1 - self.center.1);
        (
            self.cos * dx - self.sin * dy + self.new_center.0,
            self.sin * dx + self.cos * dy + self.new_center.1,
        )
    }

    fn inverse(&self, q: (f64, f64)) -> (f64, f64) {
        let (dx, dy) = (q.0 - self.new_center.0, q.1 - self.new_center.1);
        (
            self.cos * dx + self.sin * dy + self.center.0,
            -self.sin * dx + self.cos * dy + self.center.1,
        )
    }
}

fn rotation_map(dims: (u32, u32), angle_deg: f64, expand: bool) -> RotationMap {
    let (w, h) = (f64::from(dims.0), f64::from(dims.1));
    let rad = angle_deg.to_radians();
    let (sin, cos) = rad.sin_cos();
    let new_dims = if expand {
        // Tiny slack so axis-aligned angles keep exact dimensions despite
        // sin/cos representation error.
        let nw = (w * cos.abs() + h * sin.abs() - 1e-7).ceil().max(1.0) as u32;
        let nh = (w * sin.abs() + h * cos.abs() - 1e-7).ceil().max(1.0) as u32;
        (nw, nh)
    } else {
        dims
    };
    RotationMap {
        cos,
        sin,
        center: (w / 2.0, h / 2.0),
        new_center: (f64::from(new_dims.0) / 2.0, f64::from(new_dims.1) / 2.0),
        new_dims,
    }
}

fn bilinear_sample(img: &RgbImage, x: f64, y: f64) -> Option<Rgb<u8>> {
    let (w, h) = (img.width(), img.height());
    if x < 0.0 || y < 0.0 || x > f64::from(w) || y > f64::from(h) {
        return None;
    }
    // Shift into pixel-center grid coordinates.
    let px = x - 0.5;
    let py = y - 0.5;
    let x0 = px.floor();
    let y0 = py.floor();
    let fx = px - x0;
    let fy = py - y0;
    let clamp_x = |v: f64| (v.max(0.0) as u32).min(w - 1);
    let clamp_y = |v: f64| (v.max(0.0) as u32).min(h - 1);
    let (x0i, x1i) = (clamp_x(x0), clamp_x(x0 + 1.0));
    let (y0i, y1i) = (clamp_y(y0), clamp_y(y0 + 1.0));
    let mut out = [0u8; 3];
    for c in 0..3 {
        let p00 = f64::from(img.get_pixel(x0i, y0i)[c]);
        let p10 = f64::from(img.get_pixel(x1i, y0i)[c]);
        let p01 = f64::from(img.get_pixel(x0i, y1i)[c]);
        let p11 = f64::from(img.get_pixel(x1i, y1i)[c]);
        let top = p00 * (1.0 - fx) + p10 * fx;
        let bot = p01 * (1.0 - fx) + p11 * fx;
        out[c] = (top * (1.0 - fy) + bot * fy).round().clamp(0.0, 255.0) as u8;
    }
    Some(Rgb(out))
}

fn rotate_image(img: &RgbImage, angle_deg: f64, expand: bool) -> RgbImage {
    let map = rotation_map((img.width(), img.height()), angle_deg, expand);
    let (nw, nh) = map.new_dims;
    RgbImage::from_fn(nw, nh, |x, y| {
        let src = map.inverse((f64::from(x) + 0.5, f64::from(y) + 0.5));
        bilinear_sample(img, src.0, src.1).unwrap_or(ROTATE_FILL)
    })
}

fn rotate_mask(mask: &BinaryMask, angle_deg: f64, expand: bool) -> BinaryMask {
    let map = rotation_map(mask.dims(), angle_deg, expand);
    let (nw, nh) = map.new_dims;
    let (w, h) = mask.dims();
    BinaryMask::from_fn(nw, nh, |x, y| {
        let (sx, sy) = map.inverse((f64::from(x) + 0.5, f64::from(y) + 0.5));
        if sx < 0.0 || sy < 0.0 {
            return false;
        }
        let (ix, iy) = (sx.floor() as u32, sy.floor() as u32);
        ix < w && iy < h && mask.get(ix, iy)
    })
}

fn add_noise(img: &RgbImage, sigma: f64, seed: u64) -> RgbImage {
    if sigma == 0.0 {
        return img.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("sigma validated non-negative");
    let mut out = img.clone();
    for px in out.pixels_mut() {
        for c in 0..3 {
            let noisy = f64::from(px[c]) + normal.sample(&mut rng);
            px[c] = noisy.round().clamp(0.0, 255.0) as u8;
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Public application functions
// ---------------------------------------------------------------------------

pub fn apply_to_image(op: &AugmentOp, img: &RgbImage) -> RgbImage {
    match *op {
        AugmentOp::Rotate { angle_deg, expand } => rotate_image(img, angle_deg, expand),
        AugmentOp::FlipHorizontal => imageops::flip_horizontal(img),
        AugmentOp::Blur { radius } => {
            if radius <= 0.0 {
                img.clone()
            } else {
                imageops::blur(img, radius as f32)
            }
        }
        AugmentOp::AddNoise { sigma, seed } => add_noise(img, sigma, seed),
    }
}

/// Transform a polygon with the same convention as [`apply_to_image`].
/// Photometric ops are the identity on polygons.
pub fn apply_to_polygon(
    op: &AugmentOp,
    poly: &PolygonAnnotation,
    dims: (u32, u32),
) -> PolygonAnnotation {
    let vertices: Vec<(f64, f64)> = match *op {
        AugmentOp::Rotate { angle_deg, expand } => {
            let map = rotation_map(dims, angle_deg, expand);
            poly.vertices().iter().map(|&p| map.forward(p)).collect()
        }
        AugmentOp::FlipHorizontal => {
            let w = f64::from(dims.0);
            poly.vertices().iter().map(|&(x, y)| (w - x, y)).collect()
        }
        AugmentOp::Blur { .. } | AugmentOp::AddNoise { .. } => return poly.clone(),
    };
    PolygonAnnotation::new(poly.label(), vertices)
        .expect("rigid transforms preserve vertex count and area")
}

/// Transform a binary mask with the same convention as [`apply_to_image`].
/// Photometric ops are the identity on masks.
pub fn apply_to_mask(op: &AugmentOp, mask: &BinaryMask) -> BinaryMask {
    match *op {
        AugmentOp::Rotate { angle_deg, expand } => rotate_mask(mask, angle_deg, expand),
        AugmentOp::FlipHorizontal => {
            let (w, h) = mask.dims();
            BinaryMask::from_fn(w, h, |x, y| mask.get(w - 1 - x, y))
        }
        AugmentOp::Blur { .. } | AugmentOp::AddNoise { .. } => mask.clone(),
    }
}

/// Apply an op sequence to an image and its annotations together.
pub fn augment_sample(
    ops: &[AugmentOp],
    img: &RgbImage,
    meta: &AnnotatedImage,
) -> Result<(RgbImage, AnnotatedImage), AugmentError> {
    let mut image = img.clone();
    let mut polys: Vec<PolygonAnnotation> = meta.annotations().to_vec();
    let mut dims = (image.width(), image.height());
    for op in ops {
        op.validate()?;
        polys = polys
            .iter()
            .map(|p| apply_to_polygon(op, p, dims))
            .collect();
        image = apply_to_image(op, &image);
        dims = (image.width(), image.height());
    }
    let meta = AnnotatedImage::new(
        meta.image_id(),
        meta.image_path(),
        dims.0,
        dims.1,
        polys,
    )?;
    Ok((image, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::GarmentClass;
    use crate::geometry::{mask_iou, rasterize};
    use rand::Rng;

    fn checker(w: u32, h: u32) -> RgbImage {
        RgbImage::from_fn(w, h, |x, y| {
            Rgb([((x * 37 + y * 11) % 256) as u8, (x % 256) as u8, (y % 256) as u8])
        })
    }

    // General-position vertices: rational-slope edges through pixel centers
    // would create boundary ties that legitimately differ under mirroring.
    fn tri() -> PolygonAnnotation {
        PolygonAnnotation::new(
            GarmentClass::Top,
            vec![(10.31, 20.73), (60.17, 25.29), (35.83, 70.41)],
        )
        .unwrap()
    }

    #[test]
    fn flip_is_an_involution() {
        let img = checker(17, 9);
        let flip = AugmentOp::FlipHorizontal;
        assert_eq!(apply_to_image(&flip, &apply_to_image(&flip, &img)), img);

        let poly = tri();
        let back = apply_to_polygon(&flip, &apply_to_polygon(&flip, &poly, (17, 9)), (17, 9));
        for (a, b) in poly.vertices().iter().zip(back.vertices()) {
            assert!((a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12);
        }

        let mask = rasterize(&tri(), 80, 80).unwrap();
        assert_eq!(apply_to_mask(&flip, &apply_to_mask(&flip, &mask)), mask);
    }

    #[test]
    fn flip_vertex_formula() {
        let poly = PolygonAnnotation::new(
            GarmentClass::Top,
            vec![(10.0, 20.0), (50.0, 20.0), (30.0, 60.0)],
        )
        .unwrap();
        let flipped = apply_to_polygon(&AugmentOp::FlipHorizontal, &poly, (100, 100));
        assert_eq!(flipped.vertices()[0], (90.0, 20.0));
    }

    #[test]
    fn rotate_zero_is_identity() {
        let img = checker(13, 7);
        let op = AugmentOp::Rotate {
            angle_deg: 0.0,
            expand: true,
        };
        let out = apply_to_image(&op, &img);
        assert_eq!(out.dimensions(), img.dimensions());
        assert_eq!(out, img);
    }

    #[test]
    fn rotate_center_is_a_fixed_point() {
        let op = AugmentOp::Rotate {
            angle_deg: 45.0,
            expand: true,
        };
        let dims = (100u32, 60u32);
        let center_tri = PolygonAnnotation::new(
            GarmentClass::Top,
            vec![(50.0, 30.0), (51.0, 30.0), (50.0, 31.0)],
        )
        .unwrap();
        let out = apply_to_polygon(&op, &center_tri, dims);
        let (nw, nh) = op.output_dims(dims);
        let c = out.vertices()[0];
        assert!((c.0 - f64::from(nw) / 2.0).abs() < 1e-9);
        assert!((c.1 - f64::from(nh) / 2.0).abs() < 1e-9);
    }

    #[test]
    fn rotate_round_trip_recovers_vertices() {
        // No canvas expansion, so composing +45 and -45 is the identity map.
        let dims = (100u32, 80u32);
        let fwd = AugmentOp::Rotate {
            angle_deg: 45.0,
            expand: false,
        };
        let back = AugmentOp::Rotate {
            angle_deg: -45.0,
            expand: false,
        };
        let poly = tri();
        let out = apply_to_polygon(&back, &apply_to_polygon(&fwd, &poly, dims), dims);
        for (a, b) in poly.vertices().iter().zip(out.vertices()) {
            assert!((a.0 - b.0).abs() < 1e-6, "{a:?} vs {b:?}");
            assert!((a.1 - b.1).abs() < 1e-6, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn rotation_preserves_polygon_area() {
        let poly = tri();
        for &angle in &[45.0, 315.0, -30.0, 123.456] {
            let op = AugmentOp::Rotate {
                angle_deg: angle,
                expand: true,
            };
            let out = apply_to_polygon(&op, &poly, (100, 100));
            assert!(
                (out.shoelace_area() - poly.shoelace_area()).abs() < 1e-6,
                "angle {angle}"
            );
        }
    }

    #[test]
    fn blur_preserves_interior_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let img = RgbImage::from_fn(64, 64, |_, _| {
            Rgb([rng.gen(), rng.gen(), rng.gen()])
        });
        let out = apply_to_image(&AugmentOp::Blur { radius: 2.0 }, &img);
        let interior_mean = |im: &RgbImage| {
            let mut sum = 0.0;
            let mut n = 0.0;
            for y in 8..56 {
                for x in 8..56 {
                    let px = im.get_pixel(x, y);
                    sum += f64::from(px[0]) + f64::from(px[1]) + f64::from(px[2]);
                    n += 3.0;
                }
            }
            sum / n
        };
        let before = interior_mean(&img);
        let after = interior_mean(&out);
        assert!(
            (after - before).abs() / before < 0.01,
            "mean drifted {before} -> {after}"
        );
    }

    #[test]
    fn noise_is_seed_deterministic() {
        let img = checker(16, 16);
        let op = AugmentOp::AddNoise { sigma: 6.0, seed: 99 };
        assert_eq!(apply_to_image(&op, &img), apply_to_image(&op, &img));
        let other = AugmentOp::AddNoise { sigma: 6.0, seed: 100 };
        assert_ne!(apply_to_image(&op, &img), apply_to_image(&other, &img));
        let zero = AugmentOp::AddNoise { sigma: 0.0, seed: 1 };
        assert_eq!(apply_to_image(&zero, &img), img);
    }

    #[test]
    fn photometric_ops_leave_polygons_alone() {
        let poly = tri();
        for op in [
            AugmentOp::Blur { radius: 3.0 },
            AugmentOp::AddNoise { sigma: 4.0, seed: 0 },
        ] {
            assert_eq!(apply_to_polygon(&op, &poly, (80, 80)), poly);
        }
    }

    #[test]
    fn flip_paths_agree_exactly() {
        let (w, h) = (80u32, 80u32);
        let poly = tri();
        let flip = AugmentOp::FlipHorizontal;
        let path_a = rasterize(&apply_to_polygon(&flip, &poly, (w, h)), w, h).unwrap();
        let path_b = apply_to_mask(&flip, &rasterize(&poly, w, h).unwrap());
        assert_eq!(path_a, path_b);
    }

    #[test]
    fn rotate_paths_agree_within_margin() {
        let (w, h) = (100u32, 100u32);
        let poly = PolygonAnnotation::new(
            GarmentClass::Bottom,
            vec![(20.2, 20.6), (80.4, 25.1), (75.7, 70.3), (25.9, 75.8)],
        )
        .unwrap();
        for &angle in &[45.0, 315.0] {
            let op = AugmentOp::Rotate {
                angle_deg: angle,
                expand: true,
            };
            let (nw, nh) = op.output_dims((w, h));
            let transformed = rasterize(&apply_to_polygon(&op, &poly, (w, h)), nw, nh).unwrap();
            let resampled = apply_to_mask(&op, &rasterize(&poly, w, h).unwrap());
            let iou = mask_iou(&transformed, &resampled).unwrap();
            assert!(iou >= 0.9, "angle {angle}: IoU {iou}");
        }
    }

    #[test]
    fn augment_sample_empty_plan_is_identity() {
        let img = checker(32, 32);
        let meta = AnnotatedImage::new("x", "x.png", 32, 32, vec![tri()]).unwrap();
        let (out_img, out_meta) = augment_sample(&[], &img, &meta).unwrap();
        assert_eq!(out_img, img);
        assert_eq!(out_meta, meta);
    }

    #[test]
    fn augment_sample_tracks_dims_through_sequence() {
        let img = checker(60, 40);
        let poly = PolygonAnnotation::new(
            GarmentClass::Top,
            vec![(10.0, 10.0), (50.0, 10.0), (50.0, 30.0), (10.0, 30.0)],
        )
        .unwrap();
        let meta = AnnotatedImage::new("x", "x.png", 60, 40, vec![poly]).unwrap();
        let ops = vec![
            AugmentOp::Rotate {
                angle_deg: 45.0,
                expand: true,
            },
            AugmentOp::FlipHorizontal,
            AugmentOp::Blur { radius: 1.0 },
        ];
        let (out_img, out_meta) = augment_sample(&ops, &img, &meta).unwrap();
        assert_eq!((out_img.width(), out_img.height()), out_meta.dims());
        assert!(out_meta.dims().0 > 60);
        assert_eq!(out_meta.annotations().len(), 1);
    }

    #[test]
    fn plan_round_trips_and_validates() {
        let plan = AugmentPlan {
            ops: vec![
                AugmentOp::Rotate {
                    angle_deg: 45.0,
                    expand: true,
                },
                AugmentOp::FlipHorizontal,
                AugmentOp::Blur { radius: 2.0 },
                AugmentOp::AddNoise { sigma: 5.0, seed: 7 },
            ],
        };
        let text = serde_json::to_string(&plan).unwrap();
        assert_eq!(AugmentPlan::from_json(&text).unwrap(), plan);

        let bad = r#"{"ops":[{"op":"rotate","angle_deg":500.0}]}"#;
        assert!(AugmentPlan::from_json(bad).is_err());
        let unknown = r#"{"ops":[{"op":"sharpen"}]}"#;
        assert!(AugmentPlan::from_json(unknown).is_err());
    }
}
