//! garb-core: detect top and bottom garments in fashion imagery.
//!
//! The library is organized around a two-stage flow: images are routed by a
//! body-completeness classifier, and routed images are segmented into top and
//! bottom garments, each reported as a mask, a bounding box, a class, and a
//! confidence score. Around that flow sit the pieces needed to build and
//! measure such a system at desk scale:
//!
//! - [`annotation`]: polygon-annotated images, LabelMe parsing, dataset
//!   manifests, and deterministic train/validation/test splits.
//! - [`geometry`]: binary masks, polygon rasterization, IoU, bounding boxes,
//!   and connected components.
//! - [`preprocess`]: background removal behind a pluggable foreground
//!   backend, largest-component cleanup, and destroyed-image detection.
//! - [`augment`]: geometric and photometric augmentation applied
//!   consistently to images, polygons, and masks.
//! - [`models`]: classifier/segmenter backend contracts, training
//!   configurations, deterministic mocks, and small trainable native
//!   implementations.
//! - [`eval`]: classification reports and mAP over IoU thresholds.
//! - [`pipeline`]: the orchestrated preprocess -> classify -> route ->
//!   segment flow, batch running, and overlay rendering.

pub mod annotation;
pub mod augment;
pub mod eval;
pub mod geometry;
pub mod models;
pub mod pipeline;
pub mod preprocess;

pub use annotation::{AnnotatedImage, DatasetSplit, GarmentClass, PolygonAnnotation, SplitKind};
pub use geometry::{BBox, BinaryMask};
pub use models::{Classification, ClassMode, Detection, ImageClassLabel};
