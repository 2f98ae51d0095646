//! Background removal behind a pluggable foreground-segmentation backend,
//! small-component cleanup, and destroyed-image detection.
//!
//! The actual person/garment segmentation network is a service dependency,
//! so it lives behind [`ForegroundBackend`]. Deterministic `mock:*` backends
//! are built in, which keeps the whole pipeline testable offline.

use std::path::Path;

use image::{Rgb, RgbImage};
use thiserror::Error;

use crate::geometry::{largest_component, BinaryMask};

/// Default foreground-area floor below which an image counts as destroyed.
pub const DEFAULT_DESTROYED_THRESHOLD: f64 = 0.02;
/// Default fill painted over background pixels.
pub const DEFAULT_FILL: Rgb<u8> = Rgb([255, 255, 255]);

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("backend {backend:?} failed: {reason}")]
    BackendFailure { backend: String, reason: String },
    #[error("backend {backend:?} returned a {got_w}x{got_h} mask for a {want_w}x{want_h} image")]
    DimensionMismatch {
        backend: String,
        want_w: u32,
        want_h: u32,
        got_w: u32,
        got_h: u32,
    },
    #[error("destroyed threshold must be in (0, 1), got {0}")]
    InvalidThreshold(f64),
    #[error("unknown foreground backend {0:?}")]
    UnknownBackend(String),
    #[error("failed to load mask file: {0}")]
    MaskFile(#[from] crate::geometry::GeometryError),
}

/// Error a backend reports from its own segmentation call.
#[derive(Debug, Error)]
#[error("{0}")]
pub struct SegmentError(pub String);

/// Contract for foreground (person/garment) segmentation.
pub trait ForegroundBackend: Send + Sync {
    fn name(&self) -> &str;

    /// Segment the foreground; the returned mask must match the image size.
    fn segment(&self, img: &RgbImage) -> Result<BinaryMask, SegmentError>;

    /// Whether `segment` may be called from multiple threads at once. The
    /// pipeline serializes calls to backends that say no.
    fn concurrent_safe(&self) -> bool {
        false
    }
}

/// Outcome of preprocessing one image.
#[derive(Debug, Clone)]
pub struct PreprocessResult {
    /// Original pixels under the foreground mask, fill value elsewhere.
    pub cleaned_image: RgbImage,
    /// Foreground after largest-component cleanup (one component or empty).
    pub foreground_mask: BinaryMask,
    /// True when the foreground fraction fell below the threshold.
    pub destroyed: bool,
    /// Set-pixel fraction of the cleaned foreground mask.
    pub foreground_fraction: f64,
}

/// Segment, keep the largest foreground component, flag destroyed images,
/// and paint the background with `fill`.
pub fn preprocess(
    img: &RgbImage,
    backend: &dyn ForegroundBackend,
    threshold: f64,
    fill: Rgb<u8>,
) -> Result<PreprocessResult, PreprocessError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(PreprocessError::InvalidThreshold(threshold));
    }
    let raw = backend
        .segment(img)
        .map_err(|e| PreprocessError::BackendFailure {
            backend: backend.name().to_string(),
            reason: e.0,
        })?;
    if raw.dims() != (img.width(), img.height()) {
        return Err(PreprocessError::DimensionMismatch {
            backend: backend.name().to_string(),
            want_w: img.width(),
            want_h: img.height(),
            got_w: raw.width(),
            got_h: raw.height(),
        });
    }

    let mask = largest_component(&raw);
    let fraction = mask.coverage();
    let mut cleaned = img.clone();
    for (x, y, px) in cleaned.enumerate_pixels_mut() {
        if !mask.get(x, y) {
            *px = fill;
        }
    }
    Ok(PreprocessResult {
        cleaned_image: cleaned,
        foreground_mask: mask,
        destroyed: fraction < threshold,
        foreground_fraction: fraction,
    })
}

/// Partition preprocessed images by the destroyed flag, preserving order.
pub fn filter_destroyed<T>(
    results: Vec<(T, PreprocessResult)>,
) -> (Vec<(T, PreprocessResult)>, Vec<(T, PreprocessResult)>) {
    results.into_iter().partition(|(_, r)| !r.destroyed)
}

// ---------------------------------------------------------------------------
// Built-in mock backends
// ---------------------------------------------------------------------------

/// Everything is foreground.
pub struct AllOnesBackend;

impl ForegroundBackend for AllOnesBackend {
    fn name(&self) -> &str {
        "mock:all-ones"
    }

    fn segment(&self, img: &RgbImage) -> Result<BinaryMask, SegmentError> {
        Ok(BinaryMask::from_fn(img.width(), img.height(), |_, _| true))
    }

    fn concurrent_safe(&self) -> bool {
        true
    }
}

/// Nothing is foreground; every image comes out destroyed.
pub struct AllZerosBackend;

impl ForegroundBackend for AllZerosBackend {
    fn name(&self) -> &str {
        "mock:all-zeros"
    }

    fn segment(&self, img: &RgbImage) -> Result<BinaryMask, SegmentError> {
        Ok(BinaryMask::new(img.width(), img.height()))
    }

    fn concurrent_safe(&self) -> bool {
        true
    }
}

/// A centered rectangle covering `frac` of each dimension.
pub struct CenteredRectBackend {
    frac: f64,
    name: String,
}

impl CenteredRectBackend {
    pub fn new(frac: f64) -> Self {
        CenteredRectBackend {
            frac: frac.clamp(0.01, 1.0),
            name: format!("mock:centered-rect:{frac}"),
        }
    }
}

impl ForegroundBackend for CenteredRectBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn segment(&self, img: &RgbImage) -> Result<BinaryMask, SegmentError> {
        let (w, h) = (img.width(), img.height());
        let rw = ((f64::from(w) * self.frac).round() as u32).clamp(1, w);
        let rh = ((f64::from(h) * self.frac).round() as u32).clamp(1, h);
        let x0 = (w - rw) / 2;
        let y0 = (h - rh) / 2;
        Ok(BinaryMask::from_fn(w, h, |x, y| {
            x >= x0 && x < x0 + rw && y >= y0 && y < y0 + rh
        }))
    }

    fn concurrent_safe(&self) -> bool {
        true
    }
}

/// A fixed mask loaded from a PNG, applied to every image of matching size.
pub struct FixedMaskBackend {
    mask: BinaryMask,
    name: String,
}

impl FixedMaskBackend {
    pub fn new(mask: BinaryMask, name: impl Into<String>) -> Self {
        FixedMaskBackend {
            mask,
            name: name.into(),
        }
    }

    pub fn from_png(path: &Path) -> Result<Self, PreprocessError> {
        let mask = BinaryMask::load_png(path)?;
        Ok(FixedMaskBackend::new(
            mask,
            format!("mock:from-file:{}", path.display()),
        ))
    }
}

impl ForegroundBackend for FixedMaskBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn segment(&self, img: &RgbImage) -> Result<BinaryMask, SegmentError> {
        if self.mask.dims() != (img.width(), img.height()) {
            return Err(SegmentError(format!(
                "fixed mask is {}x{} but image is {}x{}",
                self.mask.width(),
                self.mask.height(),
                img.width(),
                img.height()
            )));
        }
        Ok(self.mask.clone())
    }

    fn concurrent_safe(&self) -> bool {
        true
    }
}

/// Backend that always fails; used to exercise error paths.
pub struct FailingBackend;

impl ForegroundBackend for FailingBackend {
    fn name(&self) -> &str {
        "mock:failing"
    }

    fn segment(&self, _img: &RgbImage) -> Result<BinaryMask, SegmentError> {
        Err(SegmentError("synthetic failure".into()))
    }

    fn concurrent_safe(&self) -> bool {
        true
    }
}

/// Resolve a backend from its config-file name.
///
/// Recognized specs: `mock:all-ones`, `mock:all-zeros`, `mock:centered-rect`
/// (optionally `mock:centered-rect:<frac>`), `mock:from-file:<path>`, and
/// `mock:failing`.
pub fn foreground_backend_from_spec(
    spec: &str,
) -> Result<Box<dyn ForegroundBackend>, PreprocessError> {
    match spec {
        "mock:all-ones" => return Ok(Box::new(AllOnesBackend)),
        "mock:all-zeros" => return Ok(Box::new(AllZerosBackend)),
        "mock:centered-rect" => return Ok(Box::new(CenteredRectBackend::new(0.5))),
        "mock:failing" => return Ok(Box::new(FailingBackend)),
        _ => {}
    }
    if let Some(frac) = spec.strip_prefix("mock:centered-rect:") {
        let frac: f64 = frac
            .parse()
            .map_err(|_| PreprocessError::UnknownBackend(spec.to_string()))?;
        return Ok(Box::new(CenteredRectBackend::new(frac)));
    }
    if let Some(path) = spec.strip_prefix("mock:from-file:") {
        return Ok(Box::new(FixedMaskBackend::from_png(Path::new(path))?));
    }
    Err(PreprocessError::UnknownBackend(spec.to_string()))
}
