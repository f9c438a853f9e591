//! Per-landmark confidence bar chart.

use image::{Rgb, RgbImage};

use super::draw;
use super::font::{draw_text, text_width};
use super::CephReport;

const LEFT: u32 = 36;
const RIGHT: u32 = 10;
const TOP: u32 = 12;
const PLOT_HEIGHT: u32 = 170;
const BOTTOM: u32 = 24;
const SLOT: u32 = 28;
const BAR: u32 = 18;
const HATCH_HEIGHT: u32 = 12;

pub(crate) const BACKGROUND: Rgb<u8> = Rgb([255, 255, 255]);
pub(crate) const AXIS: Rgb<u8> = Rgb([0, 0, 0]);
pub(crate) const BAR_FILL: Rgb<u8> = Rgb([70, 130, 180]);
pub(crate) const HATCH: Rgb<u8> = Rgb([128, 128, 128]);
pub(crate) const MANUAL_OUTLINE: Rgb<u8> = Rgb([40, 160, 80]);

/// y coordinate of the x axis.
pub(crate) fn baseline() -> u32 {
    TOP + PLOT_HEIGHT
}

/// Left edge of the bar in slot `i`.
pub(crate) fn bar_left(i: usize) -> u32 {
    LEFT + 4 + i as u32 * SLOT + (SLOT - BAR) / 2
}

/// One bar per landmark, height proportional to confidence. Missing
/// landmarks get a hatched stub at zero; manually placed ones, which carry
/// no model confidence, are drawn as a full-height outline.
pub fn plot_confidences(report: &CephReport) -> RgbImage {
    let landmarks = &report.landmarks;
    let n = landmarks.points.len() + landmarks.missing.len();
    let width = (LEFT + 4 + n as u32 * SLOT + RIGHT).max(120);
    let height = TOP + PLOT_HEIGHT + BOTTOM;
    let mut img = RgbImage::from_pixel(width, height, BACKGROUND);
    let base = f64::from(baseline());

    // axes, with ticks at 0, 0.5 and 1
    draw::line(&mut img, (f64::from(LEFT), f64::from(TOP)), (f64::from(LEFT), base), AXIS);
    draw::line(&mut img, (f64::from(LEFT), base), (f64::from(width - RIGHT), base), AXIS);
    for (frac, label) in [(0.0, "0"), (0.5, ".5"), (1.0, "1")] {
        let y = base - frac * f64::from(PLOT_HEIGHT);
        draw::line(&mut img, (f64::from(LEFT) - 4.0, y), (f64::from(LEFT), y), AXIS);
        let lx = LEFT as i64 - 8 - i64::from(text_width(label, 2));
        draw_text(&mut img, lx, y as i64 - 5, label, 2, AXIS);
    }

    let label_y = i64::from(baseline()) + 6;
    let mut slot = 0;
    for p in &landmarks.points {
        let left = i64::from(bar_left(slot));
        match p.confidence {
            Some(c) => {
                let h = (c.clamp(0.0, 1.0) * f64::from(PLOT_HEIGHT)).round() as u32;
                if h > 0 {
                    draw::filled_rect(&mut img, left, i64::from(baseline() - h), BAR, h, BAR_FILL);
                }
            }
            None => {
                draw::hollow_rect(&mut img, left, i64::from(TOP), BAR, PLOT_HEIGHT, MANUAL_OUTLINE);
            }
        }
        draw_slot_label(&mut img, slot, &p.id, label_y);
        slot += 1;
    }
    for id in &landmarks.missing {
        draw_hatched(&mut img, bar_left(slot), baseline() - HATCH_HEIGHT);
        draw_slot_label(&mut img, slot, id, label_y);
        slot += 1;
    }
    img
}

fn draw_slot_label(img: &mut RgbImage, slot: usize, id: &str, y: i64) {
    let center = i64::from(bar_left(slot)) + i64::from(BAR) / 2;
    let x = center - i64::from(text_width(id, 1)) / 2;
    draw_text(img, x, y, id, 1, AXIS);
}

/// Outlined stub with diagonal hatching every 4 px.
fn draw_hatched(img: &mut RgbImage, left: u32, top: u32) {
    for y in top..top + HATCH_HEIGHT {
        for x in left..left + BAR {
            if (x + y) % 4 == 0 {
                img.put_pixel(x, y, HATCH);
            }
        }
    }
    draw::hollow_rect(img, i64::from(left), i64::from(top), BAR, HATCH_HEIGHT, HATCH);
}
