//! Deterministic, runtime-free mock backends.
//!
//! Mocks return pinned outputs regardless of pixel content, which makes the
//! routing and evaluation layers testable with no trained model anywhere.

use image::RgbImage;

use crate::annotation::GarmentClass;
use crate::geometry::{BBox, BinaryMask};

use super::{
    Classification, ClassMode, ClassifierBackend, Detection, ImageClassLabel, ModelError,
    SegmenterBackend,
};

/// Classifier that returns the same score vector for every image.
pub struct MockClassifier {
    mode: ClassMode,
    scores: Vec<f64>,
}

impl MockClassifier {
    /// Pin one label at `score`, spreading the remainder uniformly over the
    /// other classes.
    pub fn pinned(
        mode: ClassMode,
        label: ImageClassLabel,
        score: f64,
    ) -> Result<Self, ModelError> {
        let idx = mode
            .index_of(label)
            .ok_or(ModelError::LabelOutsideMode(label))?;
        if !(0.0..=1.0).contains(&score) {
            return Err(ModelError::InvalidScores(format!(
                "pinned score {score} outside [0, 1]"
            )));
        }
        let n = mode.num_classes();
        let rest = (1.0 - score) / (n - 1) as f64;
        let mut scores = vec![rest; n];
        scores[idx] = score;
        // Pinned score must stay the argmax.
        if scores.iter().any(|&s| s > score) {
            return Err(ModelError::InvalidScores(format!(
                "pinned score {score} is not the maximum of its vector"
            )));
        }
        Ok(MockClassifier { mode, scores })
    }

    /// Use an explicit score vector (validated against the mode).
    pub fn from_scores(mode: ClassMode, scores: Vec<f64>) -> Result<Self, ModelError> {
        Classification::from_scores(mode, scores.clone())?;
        Ok(MockClassifier { mode, scores })
    }
}

impl ClassifierBackend for MockClassifier {
    fn mode(&self) -> ClassMode {
        self.mode
    }

    fn classify(&self, _img: &RgbImage) -> Result<Classification, ModelError> {
        Classification::from_scores(self.mode, self.scores.clone())
    }

    fn concurrent_safe(&self) -> bool {
        true
    }
}

/// One pinned detection template: a rectangle in absolute pixel
/// coordinates, clamped to each image it is instantiated on.
#[derive(Debug, Clone)]
pub struct MockDetectionSpec {
    pub cls: GarmentClass,
    pub score: f64,
    pub rect: (u32, u32, u32, u32),
}

/// Segmenter that materializes a fixed list of rectangle detections on
/// every image.
pub struct MockSegmenter {
    specs: Vec<MockDetectionSpec>,
}

impl MockSegmenter {
    pub fn new(specs: Vec<MockDetectionSpec>) -> Self {
        MockSegmenter { specs }
    }

    /// No detections, ever.
    pub fn empty() -> Self {
        MockSegmenter { specs: Vec::new() }
    }

    /// Builder for one rectangle detection.
    pub fn rect(cls: GarmentClass, score: f64, rect: (u32, u32, u32, u32)) -> MockDetectionSpec {
        MockDetectionSpec { cls, score, rect }
    }

    /// A top rectangle over the upper image half and a bottom rectangle
    /// over the lower half, both centered horizontally.
    pub fn halves(top_score: f64, bottom_score: f64) -> Self {
        MockSegmenter {
            specs: vec![
                MockDetectionSpec {
                    cls: GarmentClass::Top,
                    score: top_score,
                    rect: (u32::MAX, 0, 0, 0), // placeholder; resolved per image
                },
                MockDetectionSpec {
                    cls: GarmentClass::Bottom,
                    score: bottom_score,
                    rect: (u32::MAX, 1, 0, 0),
                },
            ],
        }
    }

    fn resolve_rect(spec: &MockDetectionSpec, w: u32, h: u32) -> Option<BBox> {
        // The halves placeholders carry u32::MAX in x0 and the half index in y0.
        if spec.rect.0 == u32::MAX {
            let (x0, x1) = (w / 4, (3 * w / 4).saturating_sub(1).max(w / 4));
            let (y0, y1) = if spec.rect.1 == 0 {
                (h / 8, (h / 2).saturating_sub(1).max(h / 8))
            } else {
                (h / 2, (7 * h / 8).saturating_sub(1).max(h / 2))
            };
            return BBox::new(x0, y0, x1.min(w - 1), y1.min(h - 1)).ok();
        }
        let (x0, y0, x1, y1) = spec.rect;
        if x0 >= w || y0 >= h {
            return None;
        }
        BBox::new(x0, y0, x1.min(w - 1), y1.min(h - 1)).ok()
    }
}

impl SegmenterBackend for MockSegmenter {
    fn detect(&self, img: &RgbImage) -> Result<Vec<Detection>, ModelError> {
        let (w, h) = (img.width(), img.height());
        if w == 0 || h == 0 {
            return Ok(Vec::new());
        }
        let mut dets = Vec::new();
        for spec in &self.specs {
            let Some(rect) = Self::resolve_rect(spec, w, h) else {
                continue;
            };
            let mask = BinaryMask::filled_rect(w, h, &rect);
            dets.push(Detection::new(mask, spec.cls, spec.score)?);
        }
        dets.sort_by(|a, b| b.score().partial_cmp(&a.score()).unwrap());
        Ok(dets)
    }

    fn concurrent_safe(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::mask_to_bbox;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pinned_classifier_contract() {
        let c = MockClassifier::pinned(ClassMode::FiveClass, ImageClassLabel::FullBody, 0.9)
            .unwrap();
        let out = c.classify(&RgbImage::new(4, 4)).unwrap();
        assert_eq!(out.label, ImageClassLabel::FullBody);
        assert!((out.score - 0.9).abs() < 1e-12);
        assert_eq!(out.scores.len(), 5);
        let idx = ClassMode::FiveClass.index_of(ImageClassLabel::FullBody).unwrap();
        assert!((out.scores[idx] - 0.9).abs() < 1e-12);
    }

    #[test]
    fn argmax_matches_label_for_random_vectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let mode = if rng.gen_bool(0.5) {
                ClassMode::FourClass
            } else {
                ClassMode::FiveClass
            };
            let mut raw: Vec<f64> = (0..mode.num_classes())
                .map(|_| rng.gen_range(0.01..1.0))
                .collect();
            let sum: f64 = raw.iter().sum();
            raw.iter_mut().for_each(|v| *v /= sum);
            let backend = MockClassifier::from_scores(mode, raw.clone()).unwrap();
            let out = backend.classify(&RgbImage::new(2, 2)).unwrap();
            let argmax = raw
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            assert_eq!(out.label, mode.classes()[argmax]);
            let total: f64 = out.scores.iter().sum();
            assert!((total - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn mock_segmenter_returns_sorted_detections() {
        let seg = MockSegmenter::new(vec![
            MockSegmenter::rect(GarmentClass::Bottom, 0.90, (2, 10, 8, 18)),
            MockSegmenter::rect(GarmentClass::Top, 0.95, (2, 0, 8, 9)),
        ]);
        let dets = seg.detect(&RgbImage::new(20, 20)).unwrap();
        assert_eq!(dets.len(), 2);
        assert_eq!(dets[0].score(), 0.95);
        assert_eq!(dets[0].cls(), GarmentClass::Top);
        assert_eq!(dets[1].score(), 0.90);
    }

    #[test]
    fn mock_segmenter_empty_is_valid() {
        let dets = MockSegmenter::empty().detect(&RgbImage::new(8, 8)).unwrap();
        assert!(dets.is_empty());
    }

    #[test]
    fn detection_boxes_recompute_from_masks() {
        let seg = MockSegmenter::new(vec![
            MockSegmenter::rect(GarmentClass::Top, 0.8, (1, 2, 5, 6)),
            MockSegmenter::rect(GarmentClass::Bottom, 0.6, (0, 7, 9, 9)),
        ]);
        for det in seg.detect(&RgbImage::new(10, 10)).unwrap() {
            assert_eq!(det.bbox(), mask_to_bbox(det.mask()).unwrap());
        }
    }
}
