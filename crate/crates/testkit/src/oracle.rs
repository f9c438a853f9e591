//! Reference computations for geometry and peak localization.

use crate::dd::{self, Dd};

fn diff(a: f64, b: f64) -> Dd {
    Dd::from_f64(a) - Dd::from_f64(b)
}

fn cos_between(u: (Dd, Dd), w: (Dd, Dd)) -> Dd {
    let dot = u.0 * w.0 + u.1 * w.1;
    let nu = u.0 * u.0 + u.1 * u.1;
    let nw = w.0 * w.0 + w.1 * w.1;
    dot / (nu * nw).sqrt()
}

/// Angle a-v-c in degrees via arccos of the normalized dot product,
/// evaluated in double-double.
pub fn angle_3pt_deg(a: (f64, f64), v: (f64, f64), c: (f64, f64)) -> f64 {
    let u = (diff(a.0, v.0), diff(a.1, v.1));
    let w = (diff(c.0, v.0), diff(c.1, v.1));
    dd::acos(cos_between(u, w)).to_degrees()
}

/// Acute angle between lines p1p2 and q1q2 in degrees (arccos of |cos|).
pub fn line_angle_deg(p1: (f64, f64), p2: (f64, f64), q1: (f64, f64), q2: (f64, f64)) -> f64 {
    let u = (diff(p2.0, p1.0), diff(p2.1, p1.1));
    let w = (diff(q2.0, q1.0), diff(q2.1, q1.1));
    dd::acos(cos_between(u, w).abs()).to_degrees()
}

/// Euclidean length times spacing, in double-double.
pub fn distance_mm(p: (f64, f64), q: (f64, f64), spacing: f64) -> f64 {
    let dx = diff(q.0, p.0);
    let dy = diff(q.1, p.1);
    ((dx * dx + dy * dy).sqrt() * Dd::from_f64(spacing)).to_f64()
}

fn gaussian(d: f64, sigma: f64) -> f64 {
    (-(d * d) / (2.0 * sigma * sigma)).exp()
}

/// Center along one axis maximizing the normalized correlation between
/// `profile` (samples at integer positions `first..`) and a continuous
/// Gaussian, by exhaustive search on a 0.001-px lattice over
/// `[guess - 1, guess + 1]`.
pub fn grid_search_axis(profile: &[f64], first: i64, guess: f64, sigma: f64) -> f64 {
    let mut best = (f64::MIN, guess);
    for k in -1000..=1000 {
        let c = guess + k as f64 * 0.001;
        let (mut dot, mut norm) = (0.0, 0.0);
        for (i, &h) in profile.iter().enumerate() {
            let g = gaussian((first + i as i64) as f64 - c, sigma);
            dot += h * g;
            norm += g * g;
        }
        let score = dot / norm.sqrt();
        if score > best.0 {
            best = (score, c);
        }
    }
    best.1
}

/// Locates a Gaussian blob of known `sigma` in a row-major heatmap: integer
/// argmax, then a dense 0.001-px correlation search along the row and the
/// column through it (the model is separable).
pub fn gaussian_peak(map: &[f64], width: usize, height: usize, sigma: f64) -> (f64, f64) {
    let (idx, _) = map
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    let (px, py) = (idx % width, idx / width);
    let r = (3.0 * sigma).ceil() as usize + 2;
    let x0 = px.saturating_sub(r);
    let x1 = (px + r + 1).min(width);
    let y0 = py.saturating_sub(r);
    let y1 = (py + r + 1).min(height);
    let row: Vec<f64> = (x0..x1).map(|x| map[py * width + x]).collect();
    let col: Vec<f64> = (y0..y1).map(|y| map[y * width + px]).collect();
    (
        grid_search_axis(&row, x0 as i64, px as f64, sigma),
        grid_search_axis(&col, y0 as i64, py as f64, sigma),
    )
}

/// Samples `exp(-r^2 / 2 sigma^2)` at integer pixel positions.
pub fn sample_gaussian(width: usize, height: usize, cx: f64, cy: f64, sigma: f64) -> Vec<f64> {
    let mut out = vec![0.0; width * height];
    for y in 0..height {
        for x in 0..width {
            out[y * width + x] = gaussian(x as f64 - cx, sigma) * gaussian(y as f64 - cy, sigma);
        }
    }
    out
}
