//! Detections / ground-truth interchange files.
//!
//! One JSON document per detection set:
//! `{"images":[{"id","detections":[{"class","score","bbox":[x0,y0,x1,y1],
//! "mask_png": path}]}]}`. Masks are single-channel 0/255 PNGs stored next
//! to the document; `mask_png` paths are relative to the document's
//! directory. Records without a mask fall back to their box (filled as a
//! rectangle when a mask is required).

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::annotation::GarmentClass;
use crate::geometry::{BBox, BinaryMask};
use crate::models::Detection;

use super::{DetRecord, EvalError, GroundTruth, Region};

#[derive(Serialize, Deserialize)]
struct InterchangeFile {
    images: Vec<InterchangeImage>,
}

#[derive(Serialize, Deserialize)]
struct InterchangeImage {
    id: String,
    detections: Vec<InterchangeDetection>,
}

#[derive(Serialize, Deserialize)]
struct InterchangeDetection {
    class: GarmentClass,
    #[serde(default = "default_score")]
    score: f64,
    bbox: [u32; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mask_png: Option<String>,
}

fn default_score() -> f64 {
    1.0
}

/// Write detections (with masks) to `path`, putting mask PNGs in a sibling
/// `<stem>_masks` directory. Images are ordered by id for determinism.
pub fn write_detections(path: &Path, dets: &[DetRecord]) -> Result<(), EvalError> {
    let parent = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(parent)?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "detections".to_string());
    let masks_rel = format!("{stem}_masks");
    let masks_dir = parent.join(&masks_rel);
    fs::create_dir_all(&masks_dir)?;

    let mut by_image: BTreeMap<&str, Vec<&DetRecord>> = BTreeMap::new();
    for rec in dets {
        by_image.entry(rec.image_id.as_str()).or_default().push(rec);
    }

    let mut images = Vec::with_capacity(by_image.len());
    for (id, recs) in by_image {
        let mut detections = Vec::with_capacity(recs.len());
        for (k, rec) in recs.iter().enumerate() {
            let mask_name = format!("{masks_rel}/{id}_{k}.png");
            rec.det.mask().save_png(&parent.join(&mask_name))?;
            detections.push(InterchangeDetection {
                class: rec.det.cls(),
                score: rec.det.score(),
                bbox: rec.det.bbox().as_array(),
                mask_png: Some(mask_name),
            });
        }
        images.push(InterchangeImage {
            id: id.to_string(),
            detections,
        });
    }
    let text = serde_json::to_string_pretty(&InterchangeFile { images })
        .map_err(|e| EvalError::Interchange(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

fn load_file(path: &Path) -> Result<InterchangeFile, EvalError> {
    let text = fs::read_to_string(path)
        .map_err(|e| EvalError::Interchange(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| EvalError::Interchange(format!("{}: {e}", path.display())))
}

fn load_mask(parent: &Path, rel: &str) -> Result<BinaryMask, EvalError> {
    BinaryMask::load_png(&parent.join(rel)).map_err(EvalError::Geometry)
}

fn bbox_from_array(raw: [u32; 4]) -> Result<BBox, EvalError> {
    BBox::new(raw[0], raw[1], raw[2], raw[3]).map_err(EvalError::Geometry)
}

/// Read a detections file. Mask-less records need the image dimensions to
/// materialize their box as a rectangle mask, looked up in `dims`.
pub fn read_detections(
    path: &Path,
    dims: &HashMap<String, (u32, u32)>,
) -> Result<Vec<DetRecord>, EvalError> {
    let parent = path.parent().unwrap_or_else(|| Path::new("."));
    let file = load_file(path)?;
    let mut out = Vec::new();
    for image in file.images {
        for det in image.detections {
            let bbox = bbox_from_array(det.bbox)?;
            let mask = match &det.mask_png {
                Some(rel) => {
                    let mask = load_mask(parent, rel)?;
                    let computed = crate::geometry::mask_to_bbox(&mask)?;
                    if computed != bbox {
                        return Err(EvalError::Interchange(format!(
                            "stored bbox {:?} disagrees with mask bounds {:?} for image {}",
                            det.bbox,
                            computed.as_array(),
                            image.id
                        )));
                    }
                    mask
                }
                None => {
                    let &(w, h) = dims.get(&image.id).ok_or_else(|| {
                        EvalError::Interchange(format!(
                            "no dimensions known for mask-less detection on image {}",
                            image.id
                        ))
                    })?;
                    if bbox.x_max >= w || bbox.y_max >= h {
                        return Err(EvalError::Interchange(format!(
                            "bbox {:?} exceeds {w}x{h} image {}",
                            det.bbox, image.id
                        )));
                    }
                    BinaryMask::filled_rect(w, h, &bbox)
                }
            };
            let score = det.score.clamp(0.0, 1.0);
            out.push(DetRecord {
                image_id: image.id.clone(),
                det: Detection::new(mask, det.class, score)
                    .map_err(|e| EvalError::Interchange(e.to_string()))?,
            });
        }
    }
    Ok(out)
}

/// Read a ground-truth file in the same schema. Records keep their mask
/// when present and fall back to a box region otherwise.
pub fn read_ground_truth(path: &Path) -> Result<Vec<GroundTruth>, EvalError> {
    let parent = path.parent().unwrap_or_else(|| Path::new("."));
    let file = load_file(path)?;
    let mut out = Vec::new();
    for image in file.images {
        for det in image.detections {
            let region = match &det.mask_png {
                Some(rel) => Region::Mask(load_mask(parent, rel)?),
                None => Region::Box(bbox_from_array(det.bbox)?),
            };
            if let Region::Mask(m) = &region {
                if m.is_blank() {
                    return Err(EvalError::Interchange(format!(
                        "empty ground-truth mask on image {}",
                        image.id
                    )));
                }
            }
            out.push(GroundTruth {
                image_id: image.id.clone(),
                cls: det.class,
                region,
            });
        }
    }
    Ok(out)
}
