//! Cephalometric analysis core.
//!
//! The pipeline runs in five stages:
//!
//! 1. [`image_io`] loads a JPEG/PNG/TIFF radiograph, reduces it to grayscale
//!    and min-max normalizes it into the unit interval.
//! 2. [`inference`] letterboxes the normalized image into the model input,
//!    runs a heatmap backend (ONNX graph or deterministic fixture) and decodes
//!    one subpixel peak per landmark channel.
//! 3. [`cephalometrics`] turns the landmark set into angles and calibrated
//!    lengths flagged against normative ranges.
//! 4. [`reporting`] serializes everything to CSV/JSON and renders overlays
//!    and confidence charts.
//! 5. [`pipeline`] strings the stages together with per-stage timings.

pub mod cephalometrics;
pub mod config;
pub mod image_io;
pub mod inference;
pub mod landmarks;
pub mod pipeline;
pub mod reporting;

pub use cephalometrics::{MeasurementDefinition, MeasurementResult, MeasurementStatus};
pub use image_io::{NormalizedImage, RadiographImage};
pub use landmarks::{DecodedLandmark, LandmarkCatalog, LandmarkSet, Point, Provenance};
pub use pipeline::{Pipeline, PipelineOutput, StageTimings};
pub use reporting::CephReport;
