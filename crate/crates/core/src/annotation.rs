//! Polygon-annotated fashion images, LabelMe parsing, dataset manifests,
//! and deterministic dataset splits.
//!
//! Every image carries at most two polygon annotations, one per garment
//! class. Annotations come in through LabelMe-style JSON documents and go
//! out through a single manifest file that also records split membership.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used when checking that split fractions sum to one.
const FRACTION_SUM_TOLERANCE: f64 = 1e-9;
/// Polygons with absolute shoelace area at or below this are rejected.
const MIN_POLYGON_AREA: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("malformed document: {0}")]
    MalformedDocument(String),
    #[error("unknown label {0:?}: expected a top/bottom alias")]
    UnknownLabel(String),
    #[error("degenerate polygon: {0}")]
    DegeneratePolygon(String),
    #[error("duplicate {0:?} annotation on one image")]
    DuplicateClass(GarmentClass),
    #[error("bad split fractions ({0}, {1}, {2}): must be non-negative and sum to 1")]
    BadFractions(f64, f64, f64),
    #[error("duplicate image id {0:?}")]
    DuplicateIds(String),
    #[error("cannot split an empty id list")]
    EmptyIdList,
    #[error("split references unknown image id {0:?}")]
    UnknownId(String),
    #[error("invalid image record: {0}")]
    InvalidImage(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// The two garment classes carried by polygon annotations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GarmentClass {
    Top,
    Bottom,
}

impl GarmentClass {
    pub const ALL: [GarmentClass; 2] = [GarmentClass::Top, GarmentClass::Bottom];

    pub fn as_str(&self) -> &'static str {
        match self {
            GarmentClass::Top => "top",
            GarmentClass::Bottom => "bottom",
        }
    }
}

impl std::fmt::Display for GarmentClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A labeled closed polygon in continuous pixel coordinates.
///
/// The origin is the image's top-left corner, x grows rightward and y grows
/// downward. The polygon is implicitly closed: the last vertex connects back
/// to the first.
#[derive(Debug, Clone, PartialEq)]
pub struct PolygonAnnotation {
    label: GarmentClass,
    vertices: Vec<(f64, f64)>,
}

impl PolygonAnnotation {
    /// Build a polygon, rejecting fewer than three vertices or zero area.
    pub fn new(label: GarmentClass, vertices: Vec<(f64, f64)>) -> Result<Self, AnnotationError> {
        if vertices.len() < 3 {
            return Err(AnnotationError::DegeneratePolygon(format!(
                "{} vertices, need at least 3",
                vertices.len()
            )));
        }
        let poly = PolygonAnnotation { label, vertices };
        if poly.shoelace_area() <= MIN_POLYGON_AREA {
            return Err(AnnotationError::DegeneratePolygon(
                "zero shoelace area".into(),
            ));
        }
        Ok(poly)
    }

    pub fn label(&self) -> GarmentClass {
        self.label
    }

    pub fn vertices(&self) -> &[(f64, f64)] {
        &self.vertices
    }

    /// Absolute polygon area by the shoelace formula.
    pub fn shoelace_area(&self) -> f64 {
        let v = &self.vertices;
        let n = v.len();
        let mut twice = 0.0;
        for i in 0..n {
            let (x1, y1) = v[i];
            let (x2, y2) = v[(i + 1) % n];
            twice += x1 * y2 - x2 * y1;
        }
        twice.abs() / 2.0
    }

    /// Axis-aligned bounds of the vertex list as (x_min, y_min, x_max, y_max).
    pub fn vertex_bounds(&self) -> (f64, f64, f64, f64) {
        let mut b = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for &(x, y) in &self.vertices {
            b.0 = b.0.min(x);
            b.1 = b.1.min(y);
            b.2 = b.2.max(x);
            b.3 = b.3.max(y);
        }
        b
    }
}

/// One image with its dimensions and at most one polygon per garment class.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedImage {
    image_id: String,
    image_path: String,
    width: u32,
    height: u32,
    annotations: Vec<PolygonAnnotation>,
}

impl AnnotatedImage {
    pub fn new(
        image_id: impl Into<String>,
        image_path: impl Into<String>,
        width: u32,
        height: u32,
        annotations: Vec<PolygonAnnotation>,
    ) -> Result<Self, AnnotationError> {
        if width == 0 || height == 0 {
            return Err(AnnotationError::InvalidImage(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if annotations.len() > 2 {
            return Err(AnnotationError::InvalidImage(format!(
                "{} annotations, at most 2 allowed",
                annotations.len()
            )));
        }
        let mut seen: HashSet<GarmentClass> = HashSet::new();
        for ann in &annotations {
            if !seen.insert(ann.label()) {
                return Err(AnnotationError::DuplicateClass(ann.label()));
            }
        }
        Ok(AnnotatedImage {
            image_id: image_id.into(),
            image_path: image_path.into(),
            width,
            height,
            annotations,
        })
    }

    pub fn image_id(&self) -> &str {
        &self.image_id
    }

    pub fn image_path(&self) -> &str {
        &self.image_path
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

    pub fn annotations(&self) -> &[PolygonAnnotation] {
        &self.annotations
    }

    pub fn annotation_for(&self, cls: GarmentClass) -> Option<&PolygonAnnotation> {
        self.annotations.iter().find(|a| a.label() == cls)
    }

    /// Same record under a different id (used when the id comes from a
    /// filename rather than the document).
    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.image_id = id.into();
        self
    }

    pub fn with_path(mut self, path: impl Into<String>) -> Self {
        self.image_path = path.into();
        self
    }
}

/// Which split an image belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitKind {
    Train,
    Validation,
    Test,
}

impl SplitKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SplitKind::Train => "train",
            SplitKind::Validation => "validation",
            SplitKind::Test => "test",
        }
    }
}

/// Disjoint train/validation/test id sets.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: BTreeSet<String>,
    pub validation: BTreeSet<String>,
    pub test: BTreeSet<String>,
}

impl DatasetSplit {
    pub fn split_of(&self, id: &str) -> Option<SplitKind> {
        if self.train.contains(id) {
            Some(SplitKind::Train)
        } else if self.validation.contains(id) {
            Some(SplitKind::Validation)
        } else if self.test.contains(id) {
            Some(SplitKind::Test)
        } else {
            None
        }
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn insert(&mut self, kind: SplitKind, id: String) {
        match kind {
            SplitKind::Train => self.train.insert(id),
            SplitKind::Validation => self.validation.insert(id),
            SplitKind::Test => self.test.insert(id),
        };
    }
}

// ---------------------------------------------------------------------------
// LabelMe parsing
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
struct LabelMeDoc {
    shapes: Vec<LabelMeShape>,
    #[serde(rename = "imagePath")]
    image_path: Option<String>,
    #[serde(rename = "imageWidth")]
    image_width: Option<u32>,
    #[serde(rename = "imageHeight")]
    image_height: Option<u32>,
}

#[derive(Deserialize)]
struct LabelMeShape {
    label: String,
    points: Vec<(f64, f64)>,
    shape_type: String,
}

/// Case-insensitive aliases accepted for the two garment classes. Annotation
/// tools do not agree on singular vs plural, so both are mapped.
fn label_from_alias(raw: &str) -> Option<GarmentClass> {
    match raw.to_ascii_lowercase().as_str() {
        "top" | "tops" => Some(GarmentClass::Top),
        "bottom" | "bottoms" => Some(GarmentClass::Bottom),
        _ => None,
    }
}

/// Pull the optional image path and dimensions out of a LabelMe document
/// without validating its shapes.
pub fn labelme_image_info(
    json_text: &str,
) -> Result<(Option<String>, Option<(u32, u32)>), AnnotationError> {
    let doc: LabelMeDoc = serde_json::from_str(json_text)
        .map_err(|e| AnnotationError::MalformedDocument(e.to_string()))?;
    let dims = match (doc.image_width, doc.image_height) {
        (Some(w), Some(h)) => Some((w, h)),
        _ => None,
    };
    Ok((doc.image_path, dims))
}

/// Parse a LabelMe-style polygon document into an [`AnnotatedImage`].
///
/// Labels are mapped case-insensitively through an alias table, vertices are
/// clamped into the image bounds, and the per-image invariants (at most one
/// polygon per class) are enforced. The image id defaults to the stem of the
/// document's `imagePath` when present.
pub fn parse_labelme_file(
    json_text: &str,
    image_dims: (u32, u32),
) -> Result<AnnotatedImage, AnnotationError> {
    let (width, height) = image_dims;
    let doc: LabelMeDoc = serde_json::from_str(json_text)
        .map_err(|e| AnnotationError::MalformedDocument(e.to_string()))?;

    let mut annotations = Vec::new();
    for shape in &doc.shapes {
        if shape.shape_type != "polygon" {
            return Err(AnnotationError::MalformedDocument(format!(
                "shape_type {:?} is not supported, only \"polygon\"",
                shape.shape_type
            )));
        }
        let label = label_from_alias(&shape.label)
            .ok_or_else(|| AnnotationError::UnknownLabel(shape.label.clone()))?;
        if shape.points.len() < 3 {
            return Err(AnnotationError::DegeneratePolygon(format!(
                "shape {:?} has {} points, need at least 3",
                shape.label,
                shape.points.len()
            )));
        }
        let clamped: Vec<(f64, f64)> = shape
            .points
            .iter()
            .map(|&(x, y)| (x.clamp(0.0, f64::from(width)), y.clamp(0.0, f64::from(height))))
            .collect();
        annotations.push(PolygonAnnotation::new(label, clamped)?);
    }

    let path = doc.image_path.unwrap_or_default();
    let id = Path::new(&path)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    AnnotatedImage::new(id, path, width, height, annotations)
}

// ---------------------------------------------------------------------------
// Dataset splitting
// ---------------------------------------------------------------------------

/// Floor with a small guard against binary representation error, so that
/// e.g. 320 * 0.15 allocates 48 and not 47.
fn robust_floor(x: f64) -> usize {
    (x + 1e-9).floor() as usize
}

/// Deterministically partition image ids into train/validation/test.
///
/// Sizes are floor-allocated per fraction with the remainder going to train.
/// Ids are sorted then shuffled with a seeded generator, so the result
/// depends only on the id set, the fractions, and the seed.
pub fn make_split(
    image_ids: &[String],
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<DatasetSplit, AnnotationError> {
    if image_ids.is_empty() {
        return Err(AnnotationError::EmptyIdList);
    }
    let (ft, fv, fs) = fractions;
    let sum = ft + fv + fs;
    if ft < 0.0 || fv < 0.0 || fs < 0.0 || (sum - 1.0).abs() > FRACTION_SUM_TOLERANCE {
        return Err(AnnotationError::BadFractions(ft, fv, fs));
    }
    let mut seen = HashSet::new();
    for id in image_ids {
        if !seen.insert(id.as_str()) {
            return Err(AnnotationError::DuplicateIds(id.clone()));
        }
    }

    let n = image_ids.len();
    let mut n_train = robust_floor(n as f64 * ft);
    let n_val = robust_floor(n as f64 * fv);
    let n_test = robust_floor(n as f64 * fs);
    n_train += n - (n_train + n_val + n_test);

    let mut ids: Vec<String> = image_ids.to_vec();
    ids.sort_unstable();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);

    let mut split = DatasetSplit::default();
    for (i, id) in ids.into_iter().enumerate() {
        let kind = if i < n_train {
            SplitKind::Train
        } else if i < n_train + n_val {
            SplitKind::Validation
        } else {
            SplitKind::Test
        };
        split.insert(kind, id);
    }
    Ok(split)
}

// ---------------------------------------------------------------------------
// Manifest export / import
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct Manifest {
    images: Vec<ManifestImage>,
}

#[derive(Serialize, Deserialize)]
struct ManifestImage {
    id: String,
    path: String,
    width: u32,
    height: u32,
    split: String,
    annotations: Vec<ManifestAnnotation>,
}

#[derive(Serialize, Deserialize)]
struct ManifestAnnotation {
    class: GarmentClass,
    vertices: Vec<(f64, f64)>,
}

/// Serialize images plus split membership to the manifest JSON schema.
///
/// Images outside every split are tagged `"none"`. Fails with `UnknownId`
/// when the split references an id that is not among the images.
pub fn manifest_to_string(
    images: &[AnnotatedImage],
    split: &DatasetSplit,
) -> Result<String, AnnotationError> {
    let known: HashSet<&str> = images.iter().map(|img| img.image_id()).collect();
    for id in split
        .train
        .iter()
        .chain(split.validation.iter())
        .chain(split.test.iter())
    {
        if !known.contains(id.as_str()) {
            return Err(AnnotationError::UnknownId(id.clone()));
        }
    }

    let manifest = Manifest {
        images: images
            .iter()
            .map(|img| ManifestImage {
                id: img.image_id().to_string(),
                path: img.image_path().to_string(),
                width: img.width(),
                height: img.height(),
                split: split
                    .split_of(img.image_id())
                    .map(|k| k.as_str().to_string())
                    .unwrap_or_else(|| "none".to_string()),
                annotations: img
                    .annotations()
                    .iter()
                    .map(|a| ManifestAnnotation {
                        class: a.label(),
                        vertices: a.vertices().to_vec(),
                    })
                    .collect(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&manifest)
        .map_err(|e| AnnotationError::InvalidImage(e.to_string()))
}

/// Write the dataset manifest into `out_dir/manifest.json`.
pub fn export_dataset(
    images: &[AnnotatedImage],
    split: &DatasetSplit,
    out_dir: &Path,
) -> Result<PathBuf, AnnotationError> {
    let text = manifest_to_string(images, split)?;
    fs::create_dir_all(out_dir)?;
    let path = out_dir.join("manifest.json");
    fs::write(&path, text)?;
    Ok(path)
}

/// Parse a manifest produced by [`manifest_to_string`] back into images and
/// split membership, re-validating every per-image invariant.
pub fn parse_manifest(
    json_text: &str,
) -> Result<(Vec<AnnotatedImage>, DatasetSplit), AnnotationError> {
    let manifest: Manifest = serde_json::from_str(json_text)
        .map_err(|e| AnnotationError::MalformedDocument(e.to_string()))?;

    let mut images = Vec::with_capacity(manifest.images.len());
    let mut split = DatasetSplit::default();
    let mut seen = HashSet::new();
    for entry in manifest.images {
        if !seen.insert(entry.id.clone()) {
            return Err(AnnotationError::DuplicateIds(entry.id));
        }
        let annotations = entry
            .annotations
            .into_iter()
            .map(|a| PolygonAnnotation::new(a.class, a.vertices))
            .collect::<Result<Vec<_>, _>>()?;
        match entry.split.as_str() {
            "train" => split.insert(SplitKind::Train, entry.id.clone()),
            "validation" => split.insert(SplitKind::Validation, entry.id.clone()),
            "test" => split.insert(SplitKind::Test, entry.id.clone()),
            "none" => {}
            other => {
                return Err(AnnotationError::MalformedDocument(format!(
                    "unknown split tag {other:?}"
                )))
            }
        }
        images.push(AnnotatedImage::new(
            entry.id,
            entry.path,
            entry.width,
            entry.height,
            annotations,
        )?);
    }
    Ok((images, split))
}

/// Read and parse a manifest file.
pub fn load_manifest(path: &Path) -> Result<(Vec<AnnotatedImage>, DatasetSplit), AnnotationError> {
    let text = fs::read_to_string(path)?;
    parse_manifest(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(label: &str) -> String {
        format!(
            r#"{{"shapes":[{{"label":"{label}","points":[[0,0],[10,0],[10,10],[0,10]],"shape_type":"polygon"}}],"imagePath":"img_001.jpg"}}"#
        )
    }

    #[test]
    fn parse_minimal_document() {
        let img = parse_labelme_file(&square("top"), (20, 20)).unwrap();
        assert_eq!(img.annotations().len(), 1);
        assert_eq!(img.annotations()[0].label(), GarmentClass::Top);
        assert_eq!(img.annotations()[0].vertices().len(), 4);
        assert_eq!(img.image_id(), "img_001");
        assert_eq!(img.dims(), (20, 20));
    }

    #[test]
    fn parse_empty_shapes() {
        let img = parse_labelme_file(r#"{"shapes":[]}"#, (20, 20)).unwrap();
        assert!(img.annotations().is_empty());
    }

    #[test]
    fn parse_rejects_two_point_shape() {
        let doc = r#"{"shapes":[{"label":"top","points":[[0,0],[5,5]],"shape_type":"polygon"}]}"#;
        let err = parse_labelme_file(doc, (20, 20)).unwrap_err();
        assert!(matches!(err, AnnotationError::DegeneratePolygon(_)), "{err}");
    }

    #[test]
    fn parse_rejects_zero_area_shape() {
        let doc =
            r#"{"shapes":[{"label":"top","points":[[0,0],[5,5],[10,10]],"shape_type":"polygon"}]}"#;
        let err = parse_labelme_file(doc, (20, 20)).unwrap_err();
        assert!(matches!(err, AnnotationError::DegeneratePolygon(_)), "{err}");
    }

    #[test]
    fn parse_rejects_duplicate_class() {
        // Constructed by hand: two valid "bottom" polygons in one document.
        // The per-class uniqueness invariant is what must reject it.
        let doc = r#"{"shapes":[
            {"label":"bottom","points":[[0,0],[4,0],[4,4]],"shape_type":"polygon"},
            {"label":"Bottom","points":[[5,5],[9,5],[9,9]],"shape_type":"polygon"}
        ]}"#;
        let err = parse_labelme_file(doc, (20, 20)).unwrap_err();
        assert!(
            matches!(err, AnnotationError::DuplicateClass(GarmentClass::Bottom)),
            "{err}"
        );
    }

    #[test]
    fn parse_rejects_unknown_label() {
        let doc =
            r#"{"shapes":[{"label":"shoe","points":[[0,0],[4,0],[4,4]],"shape_type":"polygon"}]}"#;
        let err = parse_labelme_file(doc, (20, 20)).unwrap_err();
        assert!(matches!(err, AnnotationError::UnknownLabel(ref l) if l == "shoe"), "{err}");
    }

    #[test]
    fn parse_rejects_garbage_and_non_polygon() {
        assert!(matches!(
            parse_labelme_file("not json", (4, 4)).unwrap_err(),
            AnnotationError::MalformedDocument(_)
        ));
        let doc =
            r#"{"shapes":[{"label":"top","points":[[0,0],[4,4]],"shape_type":"rectangle"}]}"#;
        assert!(matches!(
            parse_labelme_file(doc, (4, 4)).unwrap_err(),
            AnnotationError::MalformedDocument(_)
        ));
    }

    #[test]
    fn parse_clamps_out_of_bounds_vertices() {
        let doc = r#"{"shapes":[{"label":"top","points":[[-5,-5],[30,0],[30,30],[0,30]],"shape_type":"polygon"}]}"#;
        let img = parse_labelme_file(doc, (20, 20)).unwrap();
        for &(x, y) in img.annotations()[0].vertices() {
            assert!((0.0..=20.0).contains(&x));
            assert!((0.0..=20.0).contains(&y));
        }
    }

    #[test]
    fn parse_labels_are_case_insensitive() {
        let img = parse_labelme_file(&square("TOPS"), (20, 20)).unwrap();
        assert_eq!(img.annotations()[0].label(), GarmentClass::Top);
    }

    #[test]
    fn labelme_info_reads_dims_and_path() {
        let doc = r#"{"shapes":[],"imagePath":"a.png","imageWidth":64,"imageHeight":48}"#;
        let (path, dims) = labelme_image_info(doc).unwrap();
        assert_eq!(path.as_deref(), Some("a.png"));
        assert_eq!(dims, Some((64, 48)));
    }

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("img{i:03}")).collect()
    }

    #[test]
    fn split_exact_division() {
        let split = make_split(&ids(10), (0.8, 0.1, 0.1), 7).unwrap();
        assert_eq!(split.train.len(), 8);
        assert_eq!(split.validation.len(), 1);
        assert_eq!(split.test.len(), 1);
        assert!(split.train.is_disjoint(&split.validation));
        assert!(split.train.is_disjoint(&split.test));
        assert!(split.validation.is_disjoint(&split.test));
    }

    #[test]
    fn split_320_floor_allocation() {
        // Hand-recomputed floor rule: floor(320*0.75)=240, floor(320*0.10)=32,
        // floor(320*0.15)=48, remainder 0, so sizes are (240, 32, 48).
        let split = make_split(&ids(320), (0.75, 0.10, 0.15), 1).unwrap();
        assert_eq!(split.train.len(), 240);
        assert_eq!(split.validation.len(), 32);
        assert_eq!(split.test.len(), 48);
        assert_eq!(split.len(), 320);
    }

    #[test]
    fn split_remainder_goes_to_train() {
        // floor(7*0.6)=4, floor(7*0.2)=1, floor(7*0.2)=1, remainder 1 -> train.
        let split = make_split(&ids(7), (0.6, 0.2, 0.2), 3).unwrap();
        assert_eq!(split.train.len(), 5);
        assert_eq!(split.validation.len(), 1);
        assert_eq!(split.test.len(), 1);
    }

    #[test]
    fn split_is_deterministic_and_seed_sensitive() {
        let a = make_split(&ids(50), (0.7, 0.2, 0.1), 42).unwrap();
        let b = make_split(&ids(50), (0.7, 0.2, 0.1), 42).unwrap();
        assert_eq!(a, b);
        let c = make_split(&ids(50), (0.7, 0.2, 0.1), 43).unwrap();
        // Different seed keeps the sizes but (almost surely) moves members.
        assert_eq!(c.train.len(), a.train.len());
        assert_eq!(c.validation.len(), a.validation.len());
        assert_eq!(c.test.len(), a.test.len());
        assert_ne!(a, c);
    }

    #[test]
    fn split_rejects_bad_inputs() {
        assert!(matches!(
            make_split(&ids(4), (0.5, 0.2, 0.2), 0).unwrap_err(),
            AnnotationError::BadFractions(..)
        ));
        let mut dup = ids(3);
        dup.push("img001".to_string());
        assert!(matches!(
            make_split(&dup, (0.8, 0.1, 0.1), 0).unwrap_err(),
            AnnotationError::DuplicateIds(_)
        ));
        assert!(matches!(
            make_split(&[], (0.8, 0.1, 0.1), 0).unwrap_err(),
            AnnotationError::EmptyIdList
        ));
    }

    fn sample_image(id: &str, cls: GarmentClass) -> AnnotatedImage {
        let poly = PolygonAnnotation::new(
            cls,
            vec![(1.25, 1.5), (8.0, 1.5), (8.0, 9.75), (1.25, 9.75)],
        )
        .unwrap();
        AnnotatedImage::new(id, format!("{id}.png"), 16, 16, vec![poly]).unwrap()
    }

    #[test]
    fn manifest_records_split_tags() {
        let images = vec![
            sample_image("a", GarmentClass::Top),
            sample_image("b", GarmentClass::Bottom),
        ];
        let mut split = DatasetSplit::default();
        split.train.insert("a".to_string());
        split.test.insert("b".to_string());
        let text = manifest_to_string(&images, &split).unwrap();
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        let records = value["images"].as_array().unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(records[0]["split"], "train");
        assert_eq!(records[1]["split"], "test");
        assert_eq!(records[0]["annotations"][0]["class"], "top");
    }

    #[test]
    fn manifest_empty_inputs() {
        let text = manifest_to_string(&[], &DatasetSplit::default()).unwrap();
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(value["images"].as_array().unwrap().len(), 0);
    }

    #[test]
    fn manifest_rejects_unknown_split_id() {
        let mut split = DatasetSplit::default();
        split.train.insert("ghost".to_string());
        let err = manifest_to_string(&[], &split).unwrap_err();
        assert!(matches!(err, AnnotationError::UnknownId(ref id) if id == "ghost"));
    }

    #[test]
    fn manifest_round_trip_preserves_everything() {
        // Structural equality oracle: export then re-parse must reproduce the
        // exact image records and split membership.
        let images = vec![
            sample_image("a", GarmentClass::Top),
            sample_image("b", GarmentClass::Bottom),
        ];
        let mut split = DatasetSplit::default();
        split.train.insert("a".to_string());
        split.validation.insert("b".to_string());

        let text = manifest_to_string(&images, &split).unwrap();
        let (back_images, back_split) = parse_manifest(&text).unwrap();
        assert_eq!(back_images, images);
        assert_eq!(back_split, split);

        // And the serialization itself is stable (idempotent export).
        let text2 = manifest_to_string(&back_images, &back_split).unwrap();
        assert_eq!(text, text2);
    }

    #[test]
    fn annotated_image_rejects_invariant_violations() {
        let poly = |cls| {
            PolygonAnnotation::new(cls, vec![(0.0, 0.0), (4.0, 0.0), (4.0, 4.0)]).unwrap()
        };
        assert!(matches!(
            AnnotatedImage::new("x", "x.png", 0, 10, vec![]).unwrap_err(),
            AnnotationError::InvalidImage(_)
        ));
        assert!(matches!(
            AnnotatedImage::new(
                "x",
                "x.png",
                10,
                10,
                vec![poly(GarmentClass::Top), poly(GarmentClass::Top)]
            )
            .unwrap_err(),
            AnnotationError::DuplicateClass(GarmentClass::Top)
        ));
    }
}
