use image::{Rgb, RgbImage};

use super::draw;
use super::font::draw_text;
use crate::cephalometrics::MeasurementDefinition;
use crate::image_io::{BitDepth, RadiographImage};
use crate::landmarks::{LandmarkSet, Provenance};

pub const MARKER_RADIUS: i32 = 4;
pub const AUTO_MARKER: Rgb<u8> = Rgb([255, 48, 48]);
pub const MANUAL_MARKER: Rgb<u8> = Rgb([48, 220, 96]);
const ANALYSIS_LINE: Rgb<u8> = Rgb([0, 190, 255]);
const LABEL: Rgb<u8> = Rgb([255, 225, 0]);
const LABEL_SCALE: u32 = 2;

/// 8-bit display copy of the radiograph; 16-bit data is min-max stretched.
fn base_image(image: &RadiographImage) -> RgbImage {
    let px = image.pixels();
    let gray: Vec<u8> = match image.bit_depth() {
        BitDepth::Eight => px.iter().map(|&p| p as u8).collect(),
        BitDepth::Sixteen => {
            let min = px.iter().copied().min().unwrap_or(0);
            let max = px.iter().copied().max().unwrap_or(0);
            let range = u32::from(max - min);
            px.iter()
                .map(|&p| {
                    if range == 0 {
                        0
                    } else {
                        ((u32::from(p - min) * 255 + range / 2) / range) as u8
                    }
                })
                .collect()
        }
    };
    RgbImage::from_fn(image.width(), image.height(), |x, y| {
        let g = gray[y as usize * image.width() as usize + x as usize];
        Rgb([g, g, g])
    })
}

/// Draws analysis lines, landmark markers and id labels over the radiograph.
///
/// Lines are drawn for every measurement segment whose endpoints are both
/// present; markers are filled discs colored by provenance.
pub fn render_overlay(
    image: &RadiographImage,
    landmarks: &LandmarkSet,
    measurements: &[MeasurementDefinition],
) -> RgbImage {
    let mut canvas = base_image(image);

    for def in measurements {
        for (a, b) in def.segments() {
            if let (Some(p), Some(q)) = (landmarks.point(a), landmarks.point(b)) {
                draw::line(&mut canvas, (p.x, p.y), (q.x, q.y), ANALYSIS_LINE);
            }
        }
    }

    for lm in &landmarks.points {
        let color = match lm.provenance {
            Provenance::Auto => AUTO_MARKER,
            Provenance::Manual => MANUAL_MARKER,
        };
        let center = (lm.x.round() as i64, lm.y.round() as i64);
        draw::filled_circle(&mut canvas, center, i64::from(MARKER_RADIUS), color);
    }

    for lm in &landmarks.points {
        let x = lm.x.round() as i64 + i64::from(MARKER_RADIUS) + 3;
        let y = lm.y.round() as i64 - 5;
        draw_text(&mut canvas, x, y, &lm.id, LABEL_SCALE, LABEL);
    }
    canvas
}
