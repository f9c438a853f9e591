//! End-to-end decode: load, normalize, infer, decode, measure.

use std::path::Path;
use std::time::Instant;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cephalometrics::{evaluate, DefinitionError, MeasurementDefinition, MeasurementResult};
use crate::image_io::{self, ImageError, RadiographImage};
use crate::inference::{decode_all, prepare_input, InferenceError, ModelBackend, SessionPool};
use crate::landmarks::{LandmarkCatalog, LandmarkSet};
use crate::reporting::CephReport;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Definition(#[from] DefinitionError),
    #[error("model landmark '{0}' is not in the catalog")]
    UnknownLandmark(String),
}

/// Wall-clock milliseconds per stage. Model-input preparation counts
/// toward `infer`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub load: f64,
    pub normalize: f64,
    pub infer: f64,
    pub decode: f64,
    pub measure: f64,
}

impl StageTimings {
    pub fn total(&self) -> f64 {
        self.load + self.normalize + self.infer + self.decode + self.measure
    }

    pub fn is_valid(&self) -> bool {
        [self.load, self.normalize, self.infer, self.decode, self.measure]
            .iter()
            .all(|t| t.is_finite() && *t >= 0.0)
    }
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1000.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub landmarks: LandmarkSet,
    pub measurements: Vec<MeasurementResult>,
    pub pixel_spacing_mm: Option<f64>,
    pub timings: StageTimings,
}

/// A loaded model plus the catalog and measurement battery it reports
/// against. Safe to share across threads; inference draws from a pool.
#[derive(Debug)]
pub struct Pipeline {
    pool: SessionPool,
    catalog: LandmarkCatalog,
    definitions: Vec<MeasurementDefinition>,
}

impl Pipeline {
    pub fn new(
        backend: ModelBackend,
        catalog: LandmarkCatalog,
        definitions: Vec<MeasurementDefinition>,
        pool_size: usize,
    ) -> Result<Self, PipelineError> {
        if let Some(id) = backend.landmarks.iter().find(|id| !catalog.contains(id)) {
            return Err(PipelineError::UnknownLandmark(id.clone()));
        }
        for d in &definitions {
            d.validate(&catalog)?;
        }
        let pool = SessionPool::new(backend, pool_size)?;
        Ok(Self {
            pool,
            catalog,
            definitions,
        })
    }

    pub fn backend(&self) -> &ModelBackend {
        self.pool.backend()
    }

    pub fn catalog(&self) -> &LandmarkCatalog {
        &self.catalog
    }

    pub fn definitions(&self) -> &[MeasurementDefinition] {
        &self.definitions
    }

    pub fn pool_size(&self) -> usize {
        self.pool.size()
    }

    /// Loads `path` (with its calibration sidecar) and decodes it.
    pub fn run_path(&self, path: &Path, image_ref: &str) -> Result<PipelineOutput, PipelineError> {
        let start = Instant::now();
        let image = image_io::load_image(path)?;
        let load_ms = elapsed_ms(start);
        self.run_image(&image, image_ref, load_ms)
    }

    /// Decodes an already loaded image; `load_ms` is recorded as the load
    /// stage.
    pub fn run_image(
        &self,
        image: &RadiographImage,
        image_ref: &str,
        load_ms: f64,
    ) -> Result<PipelineOutput, PipelineError> {
        let mut timings = StageTimings {
            load: load_ms,
            ..StageTimings::default()
        };

        let start = Instant::now();
        let normalized = image_io::normalize(image);
        timings.normalize = elapsed_ms(start);

        let start = Instant::now();
        let backend = self.pool.backend();
        let (input, mapping) =
            prepare_input(&normalized, backend.input_width, backend.input_height);
        drop(normalized);
        let stack = self.pool.checkout().infer(&input)?;
        timings.infer = elapsed_ms(start);

        let start = Instant::now();
        let mut landmarks = decode_all(&stack, &mapping, image);
        landmarks.image_ref = image_ref.to_string();
        landmarks.complete_with(&self.catalog);
        timings.decode = elapsed_ms(start);

        let start = Instant::now();
        let measurements = self.measure(&landmarks, image.pixel_spacing());
        timings.measure = elapsed_ms(start);

        Ok(PipelineOutput {
            landmarks,
            measurements,
            pixel_spacing_mm: image.pixel_spacing(),
            timings,
        })
    }

    pub fn measure(
        &self,
        landmarks: &LandmarkSet,
        pixel_spacing: Option<f64>,
    ) -> Vec<MeasurementResult> {
        evaluate(landmarks, &self.definitions, pixel_spacing)
    }

    pub fn report(
        &self,
        output: &PipelineOutput,
        case_id: &str,
        created_at: DateTime<Utc>,
    ) -> CephReport {
        CephReport {
            case_id: case_id.to_string(),
            created_at,
            pixel_spacing_mm: output.pixel_spacing_mm,
            landmarks: output.landmarks.clone(),
            measurements: output.measurements.clone(),
            timings_ms: output.timings,
        }
    }
}
