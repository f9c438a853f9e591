use serde::{Deserialize, Serialize};

use crate::image_io::NormalizedImage;

/// Letterbox geometry between original-image and model-input space:
/// `model = original * scale + pad`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputMapping {
    pub scale: f64,
    pub pad_x: u32,
    pub pad_y: u32,
}

impl InputMapping {
    pub const IDENTITY: InputMapping = InputMapping {
        scale: 1.0,
        pad_x: 0,
        pad_y: 0,
    };

    /// Aspect-preserving fit of a `width`x`height` source into the model
    /// input, centered with the padding rounded down.
    pub fn letterbox(width: u32, height: u32, input_width: u32, input_height: u32) -> Self {
        let scale = (f64::from(input_width) / f64::from(width))
            .min(f64::from(input_height) / f64::from(height));
        let pad = |input: u32, source: u32| {
            ((f64::from(input) - f64::from(source) * scale) / 2.0)
                .floor()
                .max(0.0) as u32
        };
        Self {
            scale,
            pad_x: pad(input_width, width),
            pad_y: pad(input_height, height),
        }
    }

    pub fn to_model(&self, x: f64, y: f64) -> (f64, f64) {
        (
            x * self.scale + f64::from(self.pad_x),
            y * self.scale + f64::from(self.pad_y),
        )
    }

    pub fn to_original(&self, x: f64, y: f64) -> (f64, f64) {
        (
            (x - f64::from(self.pad_x)) / self.scale,
            (y - f64::from(self.pad_y)) / self.scale,
        )
    }
}

/// Single-channel model input, row-major, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f32>,
}

impl ModelInput {
    pub fn value(&self, x: u32, y: u32) -> f32 {
        self.data[y as usize * self.width as usize + x as usize]
    }
}

/// Bilinear letterbox resize of `image` into an `input_width`x`input_height`
/// zero-padded canvas.
pub fn prepare_input(
    image: &NormalizedImage,
    input_width: u32,
    input_height: u32,
) -> (ModelInput, InputMapping) {
    let mapping = InputMapping::letterbox(image.width(), image.height(), input_width, input_height);
    let (w, h) = (image.width() as usize, image.height() as usize);
    let values = image.values();
    let max_x = (w - 1) as f64;
    let max_y = (h - 1) as f64;
    let mut data = vec![0f32; input_width as usize * input_height as usize];

    for v in 0..input_height {
        let (_, sy) = mapping.to_original(0.0, f64::from(v));
        if !(-0.5..=max_y + 0.5).contains(&sy) {
            continue;
        }
        let sy = sy.clamp(0.0, max_y);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let fy = sy - y0 as f64;
        let row = &mut data[v as usize * input_width as usize..][..input_width as usize];
        for (u, out) in row.iter_mut().enumerate() {
            let (sx, _) = mapping.to_original(u as f64, 0.0);
            if !(-0.5..=max_x + 0.5).contains(&sx) {
                continue;
            }
            let sx = sx.clamp(0.0, max_x);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let fx = sx - x0 as f64;
            let top = values[y0 * w + x0] * (1.0 - fx) + values[y0 * w + x1] * fx;
            let bottom = values[y1 * w + x0] * (1.0 - fx) + values[y1 * w + x1] * fx;
            *out = (top * (1.0 - fy) + bottom * fy) as f32;
        }
    }

    (
        ModelInput {
            width: input_width,
            height: input_height,
            data,
        },
        mapping,
    )
}
