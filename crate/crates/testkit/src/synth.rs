//! Deterministic synthetic radiographs.

use std::io::Cursor;

use image::{GrayImage, ImageBuffer, ImageFormat, Luma};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// A skull-like bright ellipse over a vertical gradient with mild noise.
pub fn radiograph8(width: u32, height: u32, seed: u64) -> GrayImage {
    let mut rng = StdRng::seed_from_u64(seed);
    let (cx, cy) = (width as f64 * 0.5, height as f64 * 0.45);
    let (rx, ry) = (width as f64 * 0.38, height as f64 * 0.36);
    GrayImage::from_fn(width, height, |x, y| {
        let fx = (x as f64 - cx) / rx;
        let fy = (y as f64 - cy) / ry;
        let r = fx * fx + fy * fy;
        let bone = if r < 1.0 { 110.0 * (1.0 - r).sqrt() } else { 0.0 };
        let base = 20.0 + 60.0 * y as f64 / height as f64;
        let noise: f64 = rng.gen_range(-6.0..6.0);
        Luma([(base + bone + noise).clamp(0.0, 255.0).round() as u8])
    })
}

/// 16-bit variant occupying roughly a 12-bit detector range.
pub fn radiograph16(width: u32, height: u32, seed: u64) -> ImageBuffer<Luma<u16>, Vec<u16>> {
    let base = radiograph8(width, height, seed);
    ImageBuffer::from_fn(width, height, |x, y| {
        Luma([u16::from(base.get_pixel(x, y).0[0]) * 16 + (x % 16) as u16])
    })
}

pub fn encode_gray8(img: &GrayImage, format: ImageFormat) -> Vec<u8> {
    let mut bytes = Vec::new();
    img.write_to(&mut Cursor::new(&mut bytes), format)
        .expect("in-memory encode");
    bytes
}

pub fn encode_gray16(img: &ImageBuffer<Luma<u16>, Vec<u16>>, format: ImageFormat) -> Vec<u8> {
    let mut bytes = Vec::new();
    img.write_to(&mut Cursor::new(&mut bytes), format)
        .expect("in-memory encode");
    bytes
}

/// Random non-constant pixel data of the given bit depth.
pub fn random_pixels(rng: &mut impl Rng, len: usize, bits: u32) -> Vec<u16> {
    let max = ((1u32 << bits) - 1) as u16;
    let lo = rng.gen_range(0..max / 2);
    let hi = rng.gen_range(lo + 1..=max);
    let mut px: Vec<u16> = (0..len).map(|_| rng.gen_range(lo..=hi)).collect();
    // pin both extremes so the range is exactly [lo, hi]
    px[0] = lo;
    px[len - 1] = hi;
    px
}
