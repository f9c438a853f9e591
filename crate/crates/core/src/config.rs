//! Built-in landmark catalog and measurement battery.
//!
//! Both ship as JSON (`config/landmarks.json`, `config/measurements.json`)
//! and can be replaced at runtime with files of the same schema.

use std::path::Path;

use thiserror::Error;

use crate::cephalometrics::{load_definitions, parse_definitions, DefinitionError, MeasurementDefinition};
use crate::inference::{InferenceError, ModelBackend};
use crate::landmarks::{CatalogError, LandmarkCatalog};
use crate::pipeline::{Pipeline, PipelineError};

pub const DEFAULT_LANDMARKS_JSON: &str = include_str!("../config/landmarks.json");
pub const DEFAULT_MEASUREMENTS_JSON: &str = include_str!("../config/measurements.json");

/// The 19-point lateral cephalogram catalog.
pub fn default_catalog() -> LandmarkCatalog {
    LandmarkCatalog::from_json(DEFAULT_LANDMARKS_JSON).expect("built-in catalog is valid")
}

/// SNA, SNB, ANB, SN-GoMe, GoMe, CoGn and U1-SN.
///
/// Panics if `catalog` lacks any landmark the battery references.
pub fn default_measurements(catalog: &LandmarkCatalog) -> Vec<MeasurementDefinition> {
    parse_definitions(DEFAULT_MEASUREMENTS_JSON, catalog)
        .expect("built-in measurements match the catalog")
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("landmark catalog: {0}")]
    Catalog(#[from] CatalogError),
    #[error("measurement definitions: {0}")]
    Definitions(#[from] DefinitionError),
    #[error("model descriptor: {0}")]
    Model(#[from] InferenceError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

/// Session pool size when none is configured: one per core.
pub fn default_pool_size() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Builds a pipeline from a model descriptor plus optional catalog and
/// measurement files (built-ins when absent).
pub fn load_pipeline(
    model: &Path,
    landmarks: Option<&Path>,
    measurements: Option<&Path>,
    pool_size: usize,
) -> Result<Pipeline, ConfigError> {
    let backend = ModelBackend::load(model)?;
    let catalog = match landmarks {
        Some(p) => LandmarkCatalog::load(p)?,
        None => default_catalog(),
    };
    let definitions = match measurements {
        Some(p) => load_definitions(p, &catalog)?,
        None => parse_definitions(DEFAULT_MEASUREMENTS_JSON, &catalog)?,
    };
    Ok(Pipeline::new(backend, catalog, definitions, pool_size.max(1))?)
}
