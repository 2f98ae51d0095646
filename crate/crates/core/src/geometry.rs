//! Pure raster geometry: binary masks, polygon rasterization, IoU,
//! bounding boxes, and connected components.
//!
//! These are the primitives everything else trades in. A [`BinaryMask`] is a
//! row-major boolean grid; pixel `(x, y)` has its center at continuous
//! coordinates `(x + 0.5, y + 0.5)`.

use std::collections::VecDeque;
use std::path::Path;

use image::GrayImage;
use thiserror::Error;

use crate::annotation::PolygonAnnotation;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("mask dimension mismatch: {a_w}x{a_h} vs {b_w}x{b_h}")]
    DimensionMismatch {
        a_w: u32,
        a_h: u32,
        b_w: u32,
        b_h: u32,
    },
    #[error("mask has no set pixels")]
    EmptyMask,
    #[error("degenerate polygon: {0}")]
    DegeneratePolygon(String),
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// A width x height boolean grid stored row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl std::fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "BinaryMask({}x{}, {} set)",
            self.width,
            self.height,
            self.count_ones()
        )
    }
}

impl BinaryMask {
    /// All-false mask of the given dimensions.
    pub fn new(width: u32, height: u32) -> Self {
        BinaryMask {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    /// Build a mask by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut mask = BinaryMask::new(width, height);
        for y in 0..height {
            for x in 0..width {
                let v = f(x, y);
                mask.set(x, y, v);
            }
        }
        mask
    }

    /// Filled axis-aligned rectangle; coordinates are clamped to the mask.
    pub fn filled_rect(width: u32, height: u32, rect: &BBox) -> Self {
        BinaryMask::from_fn(width, height, |x, y| {
            x >= rect.x_min && x <= rect.x_max && y >= rect.y_min && y <= rect.y_max
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    #[inline]
    fn idx(&self, x: u32, y: u32) -> usize {
        debug_assert!(x < self.width && y < self.height);
        y as usize * self.width as usize + x as usize
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[self.idx(x, y)]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        let i = self.idx(x, y);
        self.bits[i] = value;
    }

    /// Number of set pixels.
    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// True when no pixel is set.
    pub fn is_blank(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Fraction of set pixels over the whole grid.
    pub fn coverage(&self) -> f64 {
        if self.bits.is_empty() {
            return 0.0;
        }
        self.count_ones() as f64 / self.bits.len() as f64
    }

    /// Iterate over the coordinates of set pixels in row-major order.
    pub fn iter_set(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width;
        self.bits.iter().enumerate().filter_map(move |(i, &b)| {
            b.then(|| ((i as u32) % w, (i as u32) / w))
        })
    }

    /// True when `other` is set everywhere this mask is set.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.dims() == other.dims()
            && self
                .bits
                .iter()
                .zip(&other.bits)
                .all(|(&a, &b)| !a || b)
    }

    /// Render to an 8-bit grayscale image, 255 for set pixels.
    pub fn to_gray_image(&self) -> GrayImage {
        GrayImage::from_fn(self.width.max(1), self.height.max(1), |x, y| {
            let on = x < self.width && y < self.height && self.get(x, y);
            image::Luma([if on { 255u8 } else { 0u8 }])
        })
    }

    /// Threshold an 8-bit grayscale image back into a mask (>= 128 is set).
    pub fn from_gray_image(img: &GrayImage) -> Self {
        BinaryMask::from_fn(img.width(), img.height(), |x, y| img.get_pixel(x, y)[0] >= 128)
    }

    /// Write the mask as a single-channel 0/255 PNG.
    pub fn save_png(&self, path: &Path) -> Result<(), GeometryError> {
        self.to_gray_image().save(path)?;
        Ok(())
    }

    /// Load a mask previously written by [`BinaryMask::save_png`].
    pub fn load_png(path: &Path) -> Result<Self, GeometryError> {
        let img = image::open(path)?.to_luma8();
        Ok(BinaryMask::from_gray_image(&img))
    }
}

/// Inclusive pixel-index bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BBox {
    pub x_min: u32,
    pub y_min: u32,
    pub x_max: u32,
    pub y_max: u32,
}

impl BBox {
    pub fn new(x_min: u32, y_min: u32, x_max: u32, y_max: u32) -> Result<Self, GeometryError> {
        if x_min > x_max || y_min > y_max {
            return Err(GeometryError::InvalidBox(format!(
                "({x_min},{y_min})..({x_max},{y_max}) is not ordered"
            )));
        }
        Ok(BBox {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    /// Width in pixels (inclusive bounds).
    pub fn width(&self) -> u32 {
        self.x_max - self.x_min + 1
    }

    /// Height in pixels (inclusive bounds).
    pub fn height(&self) -> u32 {
        self.y_max - self.y_min + 1
    }

    /// Pixel area under inclusive bounds.
    pub fn area(&self) -> u64 {
        u64::from(self.width()) * u64::from(self.height())
    }

    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        let x_min = self.x_min.max(other.x_min);
        let y_min = self.y_min.max(other.y_min);
        let x_max = self.x_max.min(other.x_max);
        let y_max = self.y_max.min(other.y_max);
        (x_min <= x_max && y_min <= y_max).then_some(BBox {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn as_array(&self) -> [u32; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }
}

/// Rasterize a polygon onto a pixel grid.
///
/// A pixel is set iff its center lies inside the polygon under the even-odd
/// rule. Boundary ties resolve through the half-open crossing test: an edge
/// crosses a scanline when exactly one endpoint satisfies `y > cy`, and a
/// crossing counts only when it is strictly right of the pixel center.
pub fn rasterize(
    poly: &PolygonAnnotation,
    width: u32,
    height: u32,
) -> Result<BinaryMask, GeometryError> {
    let verts = poly.vertices();
    if verts.len() < 3 {
        return Err(GeometryError::DegeneratePolygon(format!(
            "{} vertices",
            verts.len()
        )));
    }
    if poly.shoelace_area() <= 0.0 {
        return Err(GeometryError::DegeneratePolygon("zero area".into()));
    }

    let mut mask = BinaryMask::new(width, height);
    let n = verts.len();
    let mut crossings: Vec<f64> = Vec::with_capacity(n);
    for y in 0..height {
        let cy = f64::from(y) + 0.5;
        crossings.clear();
        for k in 0..n {
            let (x1, y1) = verts[k];
            let (x2, y2) = verts[(k + 1) % n];
            if (y1 > cy) != (y2 > cy) {
                crossings.push(x1 + (cy - y1) * (x2 - x1) / (y2 - y1));
            }
        }
        if crossings.is_empty() {
            continue;
        }
        crossings.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut ptr = 0;
        for x in 0..width {
            let cx = f64::from(x) + 0.5;
            while ptr < crossings.len() && crossings[ptr] <= cx {
                ptr += 1;
            }
            if (crossings.len() - ptr) % 2 == 1 {
                mask.set(x, y, true);
            }
        }
    }
    Ok(mask)
}

/// IoU of two same-sized masks. Both empty yields 0 by convention.
pub fn mask_iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64, GeometryError> {
    if a.dims() != b.dims() {
        return Err(GeometryError::DimensionMismatch {
            a_w: a.width,
            a_h: a.height,
            b_w: b.width,
            b_h: b.height,
        });
    }
    let mut inter: u64 = 0;
    let mut union: u64 = 0;
    for (&x, &y) in a.bits.iter().zip(&b.bits) {
        if x & y {
            inter += 1;
        }
        if x | y {
            union += 1;
        }
    }
    if union == 0 {
        return Ok(0.0);
    }
    Ok(inter as f64 / union as f64)
}

/// IoU of two boxes over inclusive pixel areas. Disjoint boxes yield 0.
pub fn box_iou(a: &BBox, b: &BBox) -> f64 {
    let inter = match a.intersection(b) {
        Some(i) => i.area(),
        None => return 0.0,
    };
    let union = a.area() + b.area() - inter;
    inter as f64 / union as f64
}

/// Tightest inclusive box around the set pixels of a mask.
pub fn mask_to_bbox(mask: &BinaryMask) -> Result<BBox, GeometryError> {
    let mut bounds: Option<(u32, u32, u32, u32)> = None;
    for (x, y) in mask.iter_set() {
        bounds = Some(match bounds {
            None => (x, y, x, y),
            Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
        });
    }
    let (x_min, y_min, x_max, y_max) = bounds.ok_or(GeometryError::EmptyMask)?;
    Ok(BBox {
        x_min,
        y_min,
        x_max,
        y_max,
    })
}

/// Keep only the largest 4-connected foreground component.
///
/// Ties between equally large components break toward the one with the
/// smallest bounding (y_min, then x_min). An empty mask passes through.
pub fn largest_component(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = mask.dims();
    let mut labels: Vec<u32> = vec![0; w as usize * h as usize];
    let mut next_label: u32 = 0;
    // (size, y_min, x_min) per component, indexed by label - 1.
    let mut stats: Vec<(usize, u32, u32)> = Vec::new();
    let mut queue = VecDeque::new();

    for y in 0..h {
        for x in 0..w {
            let start = y as usize * w as usize + x as usize;
            if !mask.bits[start] || labels[start] != 0 {
                continue;
            }
            next_label += 1;
            let label = next_label;
            let mut size = 0usize;
            let mut y_min = y;
            let mut x_min = x;
            labels[start] = label;
            queue.push_back((x, y));
            while let Some((cx, cy)) = queue.pop_front() {
                size += 1;
                y_min = y_min.min(cy);
                x_min = x_min.min(cx);
                let mut visit = |nx: u32, ny: u32| {
                    let i = ny as usize * w as usize + nx as usize;
                    if mask.bits[i] && labels[i] == 0 {
                        labels[i] = label;
                        queue.push_back((nx, ny));
                    }
                };
                if cx > 0 {
                    visit(cx - 1, cy);
                }
                if cx + 1 < w {
                    visit(cx + 1, cy);
                }
                if cy > 0 {
                    visit(cx, cy - 1);
                }
                if cy + 1 < h {
                    visit(cx, cy + 1);
                }
            }
            stats.push((size, y_min, x_min));
        }
    }

    let mut out = BinaryMask::new(w, h);
    let Some(best) = stats
        .iter()
        .enumerate()
        .min_by_key(|(_, &(size, y_min, x_min))| (std::cmp::Reverse(size), y_min, x_min))
        .map(|(i, _)| (i + 1) as u32)
    else {
        return out;
    };
    for (i, &label) in labels.iter().enumerate() {
        if label == best {
            out.bits[i] = true;
        }
    }
    out
}
