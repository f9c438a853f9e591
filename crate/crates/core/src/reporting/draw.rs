//! Clipped raster primitives for the overlay and chart.

use image::{Rgb, RgbImage};

fn plot(img: &mut RgbImage, x: i64, y: i64, color: Rgb<u8>) {
    if x >= 0 && y >= 0 && x < i64::from(img.width()) && y < i64::from(img.height()) {
        img.put_pixel(x as u32, y as u32, color);
    }
}

/// Disc of all pixels within `radius` of `center` (inclusive).
pub fn filled_circle(img: &mut RgbImage, center: (i64, i64), radius: i64, color: Rgb<u8>) {
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            if dx * dx + dy * dy <= radius * radius {
                plot(img, center.0 + dx, center.1 + dy, color);
            }
        }
    }
}

/// Bresenham segment between pixel-rounded endpoints.
pub fn line(img: &mut RgbImage, from: (f64, f64), to: (f64, f64), color: Rgb<u8>) {
    if !(from.0.is_finite() && from.1.is_finite() && to.0.is_finite() && to.1.is_finite()) {
        return;
    }
    let (mut x0, mut y0) = (from.0.round() as i64, from.1.round() as i64);
    let (x1, y1) = (to.0.round() as i64, to.1.round() as i64);
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        plot(img, x0, y0, color);
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}

pub fn filled_rect(img: &mut RgbImage, left: i64, top: i64, width: u32, height: u32, color: Rgb<u8>) {
    for y in top..top + i64::from(height) {
        for x in left..left + i64::from(width) {
            plot(img, x, y, color);
        }
    }
}

pub fn hollow_rect(img: &mut RgbImage, left: i64, top: i64, width: u32, height: u32, color: Rgb<u8>) {
    if width == 0 || height == 0 {
        return;
    }
    let right = left + i64::from(width) - 1;
    let bottom = top + i64::from(height) - 1;
    for x in left..=right {
        plot(img, x, top, color);
        plot(img, x, bottom, color);
    }
    for y in top..=bottom {
        plot(img, left, y, color);
        plot(img, right, y, color);
    }
}
