//! Heatmap peak decoding: integer argmax plus per-axis parabolic refinement.

use thiserror::Error;

use super::mapping::InputMapping;
use crate::image_io::RadiographImage;
use crate::landmarks::{DecodedLandmark, LandmarkSet, Provenance};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("heatmap has no positive response")]
pub struct EmptyHeatmap;

/// Per-landmark confidence maps in model-input space, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapStack {
    landmark_ids: Vec<String>,
    width: u32,
    height: u32,
    maps: Vec<f64>,
}

impl HeatmapStack {
    /// Panics when `maps` does not hold `ids.len() * width * height` values.
    pub fn new(landmark_ids: Vec<String>, width: u32, height: u32, maps: Vec<f64>) -> Self {
        assert_eq!(
            maps.len(),
            landmark_ids.len() * width as usize * height as usize,
            "heatmap buffer does not match {} channels of {width}x{height}",
            landmark_ids.len()
        );
        Self {
            landmark_ids,
            width,
            height,
            maps,
        }
    }

    pub fn landmark_ids(&self) -> &[String] {
        &self.landmark_ids
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn len(&self) -> usize {
        self.landmark_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.landmark_ids.is_empty()
    }

    pub fn channel(&self, index: usize) -> Heatmap<'_> {
        let n = self.width as usize * self.height as usize;
        Heatmap {
            width: self.width,
            height: self.height,
            values: &self.maps[index * n..(index + 1) * n],
        }
    }

    /// A channel with no positive value carries no detection.
    pub fn is_channel_empty(&self, index: usize) -> bool {
        !self.channel(index).values.iter().any(|&v| v > 0.0)
    }
}

/// Borrowed single-channel heatmap.
#[derive(Debug, Clone, Copy)]
pub struct Heatmap<'a> {
    pub width: u32,
    pub height: u32,
    pub values: &'a [f64],
}

impl Heatmap<'_> {
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width as usize + x]
    }
}

/// Decoded peak in original-image coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

/// First-occurrence (row-major) argmax over positive finite values.
fn argmax(map: &Heatmap<'_>) -> Option<(usize, usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in map.values.iter().enumerate() {
        if v.is_finite() && v > 0.0 && best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, v)| (i % map.width as usize, i / map.width as usize, v))
}

/// Subpixel offset of a three-sample peak. Strictly positive samples are fit
/// in the log domain, where a Gaussian is exactly a parabola; otherwise the
/// raw values are used. Non-concave triples give no offset.
fn refine_axis(before: f64, center: f64, after: f64) -> f64 {
    let (a, b, c) = if before > 0.0 && after > 0.0 {
        (before.ln(), center.ln(), after.ln())
    } else {
        (before, center, after)
    };
    let curvature = a - 2.0 * b + c;
    if !(curvature < 0.0) {
        return 0.0;
    }
    (0.5 * (a - c) / curvature).clamp(-0.5, 0.5)
}

/// Half-width of the window whose share of the channel mass enters the
/// confidence: 1/32 of the shorter heatmap side, at least 2 px.
fn mass_window_radius(width: u32, height: u32) -> usize {
    (width.min(height) as usize / 32).max(2)
}

/// Share of the positive heatmap mass lying within the window around the
/// argmax. A single clean blob scores near 1; competing blobs dilute it.
fn mass_fraction(map: &Heatmap<'_>, px: usize, py: usize) -> f64 {
    let r = mass_window_radius(map.width, map.height);
    let (w, h) = (map.width as usize, map.height as usize);
    let positive = |v: f64| if v.is_finite() && v > 0.0 { v } else { 0.0 };
    let total: f64 = map.values.iter().map(|&v| positive(v)).sum();
    let mut local = 0.0;
    for y in py.saturating_sub(r)..(py + r + 1).min(h) {
        for x in px.saturating_sub(r)..(px + r + 1).min(w) {
            local += positive(map.at(x, y));
        }
    }
    (local / total).min(1.0)
}

/// Locates the peak of one channel and maps it back to original space.
///
/// Confidence is the peak height (capped at 1) times the fraction of the
/// channel mass concentrated around the peak.
pub fn decode_heatmap(map: Heatmap<'_>, mapping: &InputMapping) -> Result<Peak, EmptyHeatmap> {
    let (px, py, peak) = argmax(&map).ok_or(EmptyHeatmap)?;
    let (w, h) = (map.width as usize, map.height as usize);

    let dx = if px > 0 && px + 1 < w {
        refine_axis(map.at(px - 1, py), peak, map.at(px + 1, py))
    } else {
        0.0
    };
    let dy = if py > 0 && py + 1 < h {
        refine_axis(map.at(px, py - 1), peak, map.at(px, py + 1))
    } else {
        0.0
    };

    let confidence = peak.min(1.0) * mass_fraction(&map, px, py);

    let (x, y) = mapping.to_original(px as f64 + dx, py as f64 + dy);
    Ok(Peak { x, y, confidence })
}

/// Decodes every channel. Points are clamped into the image; empty channels
/// are listed as missing.
pub fn decode_all(
    stack: &HeatmapStack,
    mapping: &InputMapping,
    image: &RadiographImage,
) -> LandmarkSet {
    let max_x = f64::from(image.width() - 1);
    let max_y = f64::from(image.height() - 1);
    let mut set = LandmarkSet::default();
    for (i, id) in stack.landmark_ids().iter().enumerate() {
        match decode_heatmap(stack.channel(i), mapping) {
            Ok(peak) => set.points.push(DecodedLandmark {
                id: id.clone(),
                x: peak.x.clamp(0.0, max_x),
                y: peak.y.clamp(0.0, max_y),
                confidence: Some(peak.confidence),
                provenance: Provenance::Auto,
            }),
            Err(EmptyHeatmap) => set.missing.push(id.clone()),
        }
    }
    set
}
