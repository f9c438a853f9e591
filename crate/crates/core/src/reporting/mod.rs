//! CSV/JSON reports, annotated overlays and confidence charts.

mod chart;
mod csv;
mod draw;
mod font;
mod overlay;

use std::io::Cursor;

use chrono::{DateTime, SecondsFormat, Utc};
use image::{ImageFormat, RgbImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cephalometrics::MeasurementResult;
use crate::landmarks::LandmarkSet;
use crate::pipeline::StageTimings;

pub use self::chart::plot_confidences;
pub use self::csv::{
    format_2dp, parse_csv, round_2dp, to_csv_string, write_csv, MeasurementRow, ParsedReport,
    CSV_HEADER,
};
pub use self::overlay::{render_overlay, MANUAL_MARKER, AUTO_MARKER, MARKER_RADIUS};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("invalid report: {0}")]
    Invalid(String),
    #[error("malformed CSV at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Csv(#[from] ::csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("PNG encoding failed: {0}")]
    Encode(#[from] image::ImageError),
}

/// Everything known about one decoded case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CephReport {
    pub case_id: String,
    #[serde(with = "iso8601")]
    pub created_at: DateTime<Utc>,
    pub pixel_spacing_mm: Option<f64>,
    pub landmarks: LandmarkSet,
    pub measurements: Vec<MeasurementResult>,
    pub timings_ms: StageTimings,
}

impl CephReport {
    pub fn validate(&self) -> Result<(), ReportError> {
        if self.case_id.is_empty() {
            return Err(ReportError::Invalid("empty case id".into()));
        }
        if !self.timings_ms.is_valid() {
            return Err(ReportError::Invalid("negative or non-finite timing".into()));
        }
        if !self.landmarks.is_consistent() {
            return Err(ReportError::Invalid("duplicate landmark ids".into()));
        }
        Ok(())
    }

    pub fn created_at_iso(&self) -> String {
        format_timestamp(&self.created_at)
    }
}

pub fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

mod iso8601 {
    use chrono::{DateTime, Utc};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::format_timestamp(t))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let text = String::deserialize(d)?;
        DateTime::parse_from_rfc3339(&text)
            .map(|t| t.with_timezone(&Utc))
            .map_err(serde::de::Error::custom)
    }
}

/// Encodes an RGB image as PNG.
pub fn encode_png(image: &RgbImage) -> Result<Vec<u8>, ReportError> {
    let mut bytes = Vec::new();
    image.write_to(&mut Cursor::new(&mut bytes), ImageFormat::Png)?;
    Ok(bytes)
}
