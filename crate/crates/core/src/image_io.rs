//! Radiograph loading, grayscale reduction and min-max normalization.

use std::fmt;
use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageFormat, ImageReader};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Smallest accepted edge length; anything below is not a radiograph.
pub const MIN_DIMENSION: u32 = 64;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt image: {0}")]
    CorruptImage(String),
    #[error("image too small: {width}x{height} (minimum {min}x{min})", min = MIN_DIMENSION)]
    TooSmall { width: u32, height: u32 },
    #[error("invalid calibration: {0}")]
    InvalidCalibration(String),
    #[error("invalid image: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ImageError {
    /// Stable machine-readable name of the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            ImageError::UnsupportedFormat(_) => "UnsupportedFormat",
            ImageError::CorruptImage(_) => "CorruptImage",
            ImageError::TooSmall { .. } => "TooSmall",
            ImageError::InvalidCalibration(_) => "InvalidCalibration",
            ImageError::Invalid(_) => "InvalidImage",
            ImageError::Io(_) => "IoError",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceFormat {
    Jpeg,
    Png,
    Tiff,
}

impl SourceFormat {
    pub fn from_extension(ext: &str) -> Option<Self> {
        match ext.to_ascii_lowercase().as_str() {
            "jpg" | "jpeg" => Some(SourceFormat::Jpeg),
            "png" => Some(SourceFormat::Png),
            "tif" | "tiff" => Some(SourceFormat::Tiff),
            _ => None,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            SourceFormat::Jpeg => "jpg",
            SourceFormat::Png => "png",
            SourceFormat::Tiff => "tiff",
        }
    }

    fn from_image_format(format: ImageFormat) -> Option<Self> {
        match format {
            ImageFormat::Jpeg => Some(SourceFormat::Jpeg),
            ImageFormat::Png => Some(SourceFormat::Png),
            ImageFormat::Tiff => Some(SourceFormat::Tiff),
            _ => None,
        }
    }

    fn image_format(self) -> ImageFormat {
        match self {
            SourceFormat::Jpeg => ImageFormat::Jpeg,
            SourceFormat::Png => ImageFormat::Png,
            SourceFormat::Tiff => ImageFormat::Tiff,
        }
    }
}

impl fmt::Display for SourceFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SourceFormat::Jpeg => "JPEG",
            SourceFormat::Png => "PNG",
            SourceFormat::Tiff => "TIFF",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    pub fn max_value(self) -> u16 {
        match self {
            BitDepth::Eight => u8::MAX as u16,
            BitDepth::Sixteen => u16::MAX,
        }
    }

    pub fn bits(self) -> u32 {
        match self {
            BitDepth::Eight => 8,
            BitDepth::Sixteen => 16,
        }
    }
}

/// Raw grayscale radiograph in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct RadiographImage {
    width: u32,
    height: u32,
    bit_depth: BitDepth,
    pixels: Vec<u16>,
    pixel_spacing: Option<f64>,
    source_format: SourceFormat,
}

impl RadiographImage {
    pub fn new(
        width: u32,
        height: u32,
        bit_depth: BitDepth,
        pixels: Vec<u16>,
        source_format: SourceFormat,
    ) -> Result<Self, ImageError> {
        if width < MIN_DIMENSION || height < MIN_DIMENSION {
            return Err(ImageError::TooSmall { width, height });
        }
        if pixels.len() != width as usize * height as usize {
            return Err(ImageError::Invalid(format!(
                "expected {} pixels for {width}x{height}, got {}",
                width as usize * height as usize,
                pixels.len()
            )));
        }
        let max = bit_depth.max_value();
        if let Some(p) = pixels.iter().find(|&&p| p > max) {
            return Err(ImageError::Invalid(format!(
                "intensity {p} exceeds {}-bit range",
                bit_depth.bits()
            )));
        }
        Ok(Self {
            width,
            height,
            bit_depth,
            pixels,
            pixel_spacing: None,
            source_format,
        })
    }

    pub fn with_pixel_spacing(mut self, spacing: Option<f64>) -> Result<Self, ImageError> {
        if let Some(s) = spacing {
            validate_spacing(s)?;
        }
        self.pixel_spacing = spacing;
        Ok(self)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn bit_depth(&self) -> BitDepth {
        self.bit_depth
    }

    pub fn pixels(&self) -> &[u16] {
        &self.pixels
    }

    pub fn pixel(&self, x: u32, y: u32) -> u16 {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    /// Millimeters per pixel, when calibrated.
    pub fn pixel_spacing(&self) -> Option<f64> {
        self.pixel_spacing
    }

    pub fn source_format(&self) -> SourceFormat {
        self.source_format
    }
}

fn validate_spacing(s: f64) -> Result<(), ImageError> {
    if s.is_finite() && s > 0.0 {
        Ok(())
    } else {
        Err(ImageError::InvalidCalibration(format!(
            "pixel spacing must be finite and positive, got {s}"
        )))
    }
}

/// Sidecar calibration body, stored next to the image as `<stem>.calib.json`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub pixel_spacing_mm: f64,
}

pub fn sidecar_path(image_path: &Path) -> std::path::PathBuf {
    let stem = image_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    image_path.with_file_name(format!("{stem}.calib.json"))
}

/// Reads the calibration sidecar for `image_path`; `Ok(None)` when absent.
pub fn read_calibration(image_path: &Path) -> Result<Option<f64>, ImageError> {
    let path = sidecar_path(image_path);
    let text = match std::fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let calib: Calibration = serde_json::from_str(&text)
        .map_err(|e| ImageError::InvalidCalibration(format!("{}: {e}", path.display())))?;
    validate_spacing(calib.pixel_spacing_mm)?;
    Ok(Some(calib.pixel_spacing_mm))
}

/// Loads a radiograph and its optional calibration sidecar.
pub fn load_image(path: &Path) -> Result<RadiographImage, ImageError> {
    let ext = path
        .extension()
        .map(|e| e.to_string_lossy().into_owned())
        .unwrap_or_default();
    let declared = SourceFormat::from_extension(&ext).ok_or_else(|| {
        ImageError::UnsupportedFormat(format!("{}: extension '{ext}'", path.display()))
    })?;
    let bytes = std::fs::read(path)?;
    let image = decode_bytes(&bytes, Some(declared))?;
    let spacing = read_calibration(path)?;
    image.with_pixel_spacing(spacing)
}

/// Sniffs the container format from magic bytes.
pub fn detect_format(bytes: &[u8]) -> Result<SourceFormat, ImageError> {
    let format = image::guess_format(bytes)
        .map_err(|_| ImageError::UnsupportedFormat("unrecognized magic bytes".into()))?;
    SourceFormat::from_image_format(format)
        .ok_or_else(|| ImageError::UnsupportedFormat(format!("{format:?}")))
}

/// Decodes an in-memory JPEG/PNG/TIFF. The magic bytes decide the decoder; a
/// `declared` format (e.g. from the file extension) must agree with them.
pub fn decode_bytes(
    bytes: &[u8],
    declared: Option<SourceFormat>,
) -> Result<RadiographImage, ImageError> {
    let format = detect_format(bytes)?;
    if let Some(d) = declared {
        if d != format {
            return Err(ImageError::UnsupportedFormat(format!(
                "declared {d} but content is {format}"
            )));
        }
    }
    if format == SourceFormat::Jpeg && !jpeg_has_end_marker(bytes) {
        return Err(ImageError::CorruptImage("JPEG data ends before the end-of-image marker".into()));
    }
    let mut reader = ImageReader::with_format(Cursor::new(bytes), format.image_format());
    reader.no_limits();
    let decoded = reader
        .decode()
        .map_err(|e| ImageError::CorruptImage(e.to_string()))?;
    let (bit_depth, pixels) = to_grayscale(&decoded);
    RadiographImage::new(
        decoded.width(),
        decoded.height(),
        bit_depth,
        pixels,
        format,
    )
}

/// The JPEG decoder pads a truncated scan with gray instead of failing, so
/// truncation is detected here: an EOI marker must follow the last SOS.
/// Entropy-coded data byte-stuffs 0xFF, so neither marker occurs by chance.
fn jpeg_has_end_marker(bytes: &[u8]) -> bool {
    let last_sos = bytes.windows(2).rposition(|w| w == [0xFF, 0xDA]);
    let scan = &bytes[last_sos.unwrap_or(0)..];
    scan.windows(2).any(|w| w == [0xFF, 0xD9])
}

/// Rec. 601 luma with round-half-up, in exact integer arithmetic.
fn luma(r: u32, g: u32, b: u32) -> u32 {
    (299 * r + 587 * g + 114 * b + 500) / 1000
}

/// Reduces a decoded buffer to grayscale at its own bit depth. Alpha is
/// dropped; color uses Rec. 601 weights.
pub fn to_grayscale(image: &DynamicImage) -> (BitDepth, Vec<u16>) {
    match image {
        DynamicImage::ImageLuma8(buf) => (
            BitDepth::Eight,
            buf.as_raw().iter().map(|&v| v as u16).collect(),
        ),
        DynamicImage::ImageLumaA8(buf) => (
            BitDepth::Eight,
            buf.pixels().map(|p| p.0[0] as u16).collect(),
        ),
        DynamicImage::ImageRgb8(buf) => (
            BitDepth::Eight,
            buf.pixels()
                .map(|p| luma(p.0[0] as u32, p.0[1] as u32, p.0[2] as u32) as u16)
                .collect(),
        ),
        DynamicImage::ImageRgba8(buf) => (
            BitDepth::Eight,
            buf.pixels()
                .map(|p| luma(p.0[0] as u32, p.0[1] as u32, p.0[2] as u32) as u16)
                .collect(),
        ),
        DynamicImage::ImageLuma16(buf) => (BitDepth::Sixteen, buf.as_raw().clone()),
        DynamicImage::ImageLumaA16(buf) => {
            (BitDepth::Sixteen, buf.pixels().map(|p| p.0[0]).collect())
        }
        DynamicImage::ImageRgb16(buf) => (
            BitDepth::Sixteen,
            buf.pixels()
                .map(|p| luma(p.0[0] as u32, p.0[1] as u32, p.0[2] as u32) as u16)
                .collect(),
        ),
        DynamicImage::ImageRgba16(buf) => (
            BitDepth::Sixteen,
            buf.pixels()
                .map(|p| luma(p.0[0] as u32, p.0[1] as u32, p.0[2] as u32) as u16)
                .collect(),
        ),
        // Float buffers never come out of the three accepted decoders.
        other => {
            let rgb = other.to_rgb16();
            (
                BitDepth::Sixteen,
                rgb.pixels()
                    .map(|p| luma(p.0[0] as u32, p.0[1] as u32, p.0[2] as u32) as u16)
                    .collect(),
            )
        }
    }
}

/// Unit-interval image produced by [`normalize`].
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedImage {
    width: u32,
    height: u32,
    values: Vec<f64>,
    source_min: u16,
    source_max: u16,
}

impl NormalizedImage {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, x: u32, y: u32) -> f64 {
        self.values[y as usize * self.width as usize + x as usize]
    }

    pub fn source_min(&self) -> u16 {
        self.source_min
    }

    pub fn source_max(&self) -> u16 {
        self.source_max
    }

    /// True when the source was constant and every output value is zero.
    pub fn degenerate(&self) -> bool {
        self.source_min == self.source_max
    }
}

/// Global min-max normalization: `(p - min) / (max - min)`.
///
/// A constant image maps to all zeros and is flagged degenerate.
pub fn normalize(image: &RadiographImage) -> NormalizedImage {
    let pixels = image.pixels();
    let (min, max) = pixels
        .iter()
        .fold((u16::MAX, u16::MIN), |(lo, hi), &p| (lo.min(p), hi.max(p)));
    let values = if min == max {
        vec![0.0; pixels.len()]
    } else {
        // One division per distinct level; each entry is the exact quotient.
        let range = f64::from(max - min);
        let table: Vec<f64> = (0..=(max - min))
            .map(|d| f64::from(d) / range)
            .collect();
        pixels.iter().map(|&p| table[(p - min) as usize]).collect()
    };
    NormalizedImage {
        width: image.width(),
        height: image.height(),
        values,
        source_min: min,
        source_max: max,
    }
}
