//! Overlay rendering: mask tints, box outlines, and captions.
//!
//! Tops render green and bottoms red, matching the dataset's polygon color
//! convention. Text uses a built-in 3x5 pixel font so the renderer stays a
//! pure function with no font-file dependency.

use image::{Rgb, RgbImage};

use crate::annotation::GarmentClass;
use crate::geometry::BBox;

use super::{PipelineOutput, SkipReason};

const TOP_COLOR: Rgb<u8> = Rgb([0, 170, 0]);
const BOTTOM_COLOR: Rgb<u8> = Rgb([210, 0, 0]);
const TINT_ALPHA: f64 = 0.45;
const TEXT_SCALE: u32 = 2;

/// 3x5 glyphs, one row per byte, three low bits per row (MSB left).
fn glyph(c: char) -> [u8; 5] {
    match c {
        '0' => [7, 5, 5, 5, 7],
        '1' => [2, 6, 2, 2, 7],
        '2' => [7, 1, 7, 4, 7],
        '3' => [7, 1, 7, 1, 7],
        '4' => [5, 5, 7, 1, 1],
        '5' => [7, 4, 7, 1, 7],
        '6' => [7, 4, 7, 5, 7],
        '7' => [7, 1, 1, 2, 2],
        '8' => [7, 5, 7, 5, 7],
        '9' => [7, 5, 7, 1, 7],
        'a' => [2, 5, 7, 5, 5],
        'b' => [6, 5, 6, 5, 6],
        'c' => [3, 4, 4, 4, 3],
        'd' => [6, 5, 5, 5, 6],
        'e' => [7, 4, 6, 4, 7],
        'f' => [7, 4, 6, 4, 4],
        'g' => [3, 4, 5, 5, 3],
        'h' => [5, 5, 7, 5, 5],
        'i' => [7, 2, 2, 2, 7],
        'j' => [1, 1, 1, 5, 2],
        'k' => [5, 6, 4, 6, 5],
        'l' => [4, 4, 4, 4, 7],
        'm' => [5, 7, 7, 5, 5],
        'n' => [6, 5, 5, 5, 5],
        'o' => [2, 5, 5, 5, 2],
        'p' => [6, 5, 6, 4, 4],
        'q' => [3, 5, 5, 3, 1],
        'r' => [6, 5, 6, 6, 5],
        's' => [3, 4, 2, 1, 6],
        't' => [7, 2, 2, 2, 2],
        'u' => [5, 5, 5, 5, 7],
        'v' => [5, 5, 5, 5, 2],
        'w' => [5, 5, 7, 7, 5],
        'x' => [5, 5, 2, 5, 5],
        'y' => [5, 5, 2, 2, 2],
        'z' => [7, 1, 2, 4, 7],
        '.' => [0, 0, 0, 0, 2],
        ':' => [0, 2, 0, 2, 0],
        '_' => [0, 0, 0, 0, 7],
        '-' => [0, 0, 7, 0, 0],
        _ => [0, 0, 0, 0, 0],
    }
}

/// Pixel extent of a rendered string, including the background padding.
pub fn text_extent(text: &str) -> (u32, u32) {
    let chars = text.chars().count() as u32;
    (chars * 4 * TEXT_SCALE + 2, 5 * TEXT_SCALE + 2)
}

/// Draw `text` with its background box; clipped at the image edges.
fn draw_text(img: &mut RgbImage, x0: u32, y0: u32, text: &str, fg: Rgb<u8>, bg: Rgb<u8>) {
    let (bw, bh) = text_extent(text);
    for y in y0..(y0 + bh).min(img.height()) {
        for x in x0..(x0 + bw).min(img.width()) {
            img.put_pixel(x, y, bg);
        }
    }
    for (ci, c) in text.chars().enumerate() {
        let rows = glyph(c);
        let cx0 = x0 + 1 + ci as u32 * 4 * TEXT_SCALE;
        for (ry, row) in rows.iter().enumerate() {
            for rx in 0..3u32 {
                if row & (4 >> rx) == 0 {
                    continue;
                }
                for sy in 0..TEXT_SCALE {
                    for sx in 0..TEXT_SCALE {
                        let px = cx0 + rx * TEXT_SCALE + sx;
                        let py = y0 + 1 + ry as u32 * TEXT_SCALE + sy;
                        if px < img.width() && py < img.height() {
                            img.put_pixel(px, py, fg);
                        }
                    }
                }
            }
        }
    }
}

fn class_color(cls: GarmentClass) -> Rgb<u8> {
    match cls {
        GarmentClass::Top => TOP_COLOR,
        GarmentClass::Bottom => BOTTOM_COLOR,
    }
}

/// Alpha-blend `tint` over one pixel.
pub fn blend(px: Rgb<u8>, tint: Rgb<u8>) -> Rgb<u8> {
    let mix = |a: u8, b: u8| {
        (f64::from(a) * (1.0 - TINT_ALPHA) + f64::from(b) * TINT_ALPHA).round() as u8
    };
    Rgb([mix(px[0], tint[0]), mix(px[1], tint[1]), mix(px[2], tint[2])])
}

fn draw_box(img: &mut RgbImage, bbox: &BBox, color: Rgb<u8>) {
    for x in bbox.x_min..=bbox.x_max.min(img.width() - 1) {
        img.put_pixel(x, bbox.y_min, color);
        img.put_pixel(x, bbox.y_max.min(img.height() - 1), color);
    }
    for y in bbox.y_min..=bbox.y_max.min(img.height() - 1) {
        img.put_pixel(bbox.x_min, y, color);
        img.put_pixel(bbox.x_max.min(img.width() - 1), y, color);
    }
}

/// Render the pipeline verdict onto a copy of the input image: tinted mask,
/// box outline, and a "class score" caption per garment, plus a route
/// watermark in the top-left corner.
pub fn render_overlay(img: &RgbImage, output: &PipelineOutput) -> RgbImage {
    let mut canvas = img.clone();
    for det in &output.garments {
        let color = class_color(det.cls());
        for (x, y) in det.mask().iter_set() {
            if x < canvas.width() && y < canvas.height() {
                let px = *canvas.get_pixel(x, y);
                canvas.put_pixel(x, y, blend(px, color));
            }
        }
        let bbox = det.bbox();
        draw_box(&mut canvas, &bbox, color);
        let caption = format!("{} {:.2}", det.cls(), det.score());
        draw_text(
            &mut canvas,
            bbox.x_min + 2,
            bbox.y_min + 2,
            &caption,
            Rgb([0, 0, 0]),
            Rgb([255, 255, 255]),
        );
    }

    let watermark = match (output.route, output.skip_reason) {
        (_, Some(SkipReason::Destroyed)) => "destroyed".to_string(),
        (Some(route), Some(SkipReason::Accessories)) => format!("{route} skipped"),
        (Some(route), None) => route.to_string(),
        (None, _) => "unrouted".to_string(),
    };
    draw_text(
        &mut canvas,
        2,
        2,
        &watermark,
        Rgb([0, 0, 0]),
        Rgb([255, 255, 255]),
    );
    canvas
}

#[cfg(test)]
mod tests {
    use super::super::{run_pipeline, PipelineConfig};
    use super::*;
    use crate::models::{ClassMode, ImageClassLabel, MockClassifier, MockSegmenter};
    use crate::preprocess::AllOnesBackend;

    fn img() -> RgbImage {
        RgbImage::from_fn(64, 64, |x, y| Rgb([(x * 3) as u8, (y * 2) as u8, 99]))
    }

    fn output_with(segments: Vec<(GarmentClass, f64, (u32, u32, u32, u32))>) -> PipelineOutput {
        let seg = MockSegmenter::new(
            segments
                .into_iter()
                .map(|(c, s, r)| MockSegmenter::rect(c, s, r))
                .collect(),
        );
        let classifier =
            MockClassifier::pinned(ClassMode::FiveClass, ImageClassLabel::FullBody, 0.9).unwrap();
        run_pipeline(
            &img(),
            "x",
            &classifier,
            &seg,
            &AllOnesBackend,
            &PipelineConfig::default(),
        )
        .unwrap()
    }

    #[test]
    fn zero_garments_changes_only_the_watermark() {
        let out = output_with(vec![]);
        let rendered = render_overlay(&img(), &out);
        let (ww, wh) = text_extent("full_body");
        let base = img();
        let mut diffs = 0;
        for (x, y, px) in rendered.enumerate_pixels() {
            if x < 2 + ww && y < 2 + wh {
                continue; // watermark region
            }
            assert_eq!(px, base.get_pixel(x, y), "pixel ({x},{y}) changed");
        }
        // The watermark itself did change something.
        for x in 2..(2 + ww).min(base.width()) {
            for y in 2..(2 + wh).min(base.height()) {
                if rendered.get_pixel(x, y) != base.get_pixel(x, y) {
                    diffs += 1;
                }
            }
        }
        assert!(diffs > 0);
    }

    #[test]
    fn single_garment_tints_exactly_the_mask() {
        // Garment placed away from the top-left watermark area.
        let rect = (20u32, 28u32, 55u32, 58u32);
        let out = output_with(vec![(GarmentClass::Top, 0.95, rect)]);
        let rendered = render_overlay(&img(), &out);
        let base = img();
        let det = &out.garments[0];
        let bbox = det.bbox();
        let caption = format!("{} {:.2}", det.cls(), det.score());
        let (cw, ch) = text_extent(&caption);
        let (wmw, wmh) = text_extent("full_body");

        for (x, y, px) in rendered.enumerate_pixels() {
            let in_watermark = x < 2 + wmw && y < 2 + wmh;
            let in_caption = x >= bbox.x_min + 2
                && x < bbox.x_min + 2 + cw
                && y >= bbox.y_min + 2
                && y < bbox.y_min + 2 + ch;
            let on_outline = (x >= bbox.x_min && x <= bbox.x_max
                && (y == bbox.y_min || y == bbox.y_max))
                || (y >= bbox.y_min && y <= bbox.y_max
                    && (x == bbox.x_min || x == bbox.x_max));
            if in_watermark || in_caption || on_outline {
                continue;
            }
            let expected = if det.mask().get(x, y) {
                blend(*base.get_pixel(x, y), Rgb([0, 170, 0]))
            } else {
                *base.get_pixel(x, y)
            };
            assert_eq!(*px, expected, "pixel ({x},{y})");
        }
    }

    #[test]
    fn two_garments_use_class_colors() {
        let out = output_with(vec![
            (GarmentClass::Top, 0.95, (8, 18, 56, 36)),
            (GarmentClass::Bottom, 0.90, (8, 40, 56, 60)),
        ]);
        let rendered = render_overlay(&img(), &out);
        let base = img();
        // Interior points of each garment, clear of outlines and of the
        // caption boxes (which span 12 rows from y_min + 2).
        let top_probe = (25u32, 34u32);
        let bottom_probe = (25u32, 57u32);
        assert_eq!(
            *rendered.get_pixel(top_probe.0, top_probe.1),
            blend(*base.get_pixel(top_probe.0, top_probe.1), Rgb([0, 170, 0]))
        );
        assert_eq!(
            *rendered.get_pixel(bottom_probe.0, bottom_probe.1),
            blend(
                *base.get_pixel(bottom_probe.0, bottom_probe.1),
                Rgb([210, 0, 0])
            )
        );
    }
}
