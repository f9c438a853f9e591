//! Heatmap backends: an ONNX graph executed on the CPU, or a deterministic
//! fixture that plants Gaussians at configured coordinates.

use std::collections::HashSet;
use std::ops::{Deref, DerefMut};
use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tract_onnx::prelude::*;

use super::decode::HeatmapStack;
use super::mapping::ModelInput;

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("cannot load model: {0}")]
    ModelLoad(String),
    #[error("invalid model descriptor: {0}")]
    InvalidDescriptor(String),
    #[error("model output has shape {actual:?}, expected {expected:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("input is {actual_width}x{actual_height}, model expects {width}x{height}")]
    InputShape {
        width: u32,
        height: u32,
        actual_width: u32,
        actual_height: u32,
    },
    #[error("inference failed: {0}")]
    Runtime(String),
}

/// One planted landmark of the fixture backend, in model-input pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendSource {
    PortableGraph { model_path: PathBuf },
    Fixture { fixture_spec: Vec<FixtureEntry> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    PortableGraph,
    Fixture,
}

/// Backend descriptor, the `model.json` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBackend {
    pub input_width: u32,
    pub input_height: u32,
    /// Channel order of the model output.
    pub landmarks: Vec<String>,
    #[serde(flatten)]
    pub source: BackendSource,
}

impl ModelBackend {
    pub fn fixture(
        input_width: u32,
        input_height: u32,
        landmarks: Vec<String>,
        fixture_spec: Vec<FixtureEntry>,
    ) -> Result<Self, InferenceError> {
        let backend = Self {
            input_width,
            input_height,
            landmarks,
            source: BackendSource::Fixture { fixture_spec },
        };
        backend.validate()?;
        Ok(backend)
    }

    pub fn from_json(text: &str) -> Result<Self, InferenceError> {
        let backend: Self = serde_json::from_str(text)
            .map_err(|e| InferenceError::InvalidDescriptor(e.to_string()))?;
        backend.validate()?;
        Ok(backend)
    }

    /// Reads a descriptor; a relative `model_path` is resolved against the
    /// descriptor's directory.
    pub fn load(path: &Path) -> Result<Self, InferenceError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| InferenceError::InvalidDescriptor(format!("{}: {e}", path.display())))?;
        let mut backend = Self::from_json(&text)?;
        if let BackendSource::PortableGraph { model_path } = &mut backend.source {
            if model_path.is_relative() {
                if let Some(dir) = path.parent() {
                    *model_path = dir.join(&*model_path);
                }
            }
        }
        Ok(backend)
    }

    pub fn kind(&self) -> BackendKind {
        match self.source {
            BackendSource::PortableGraph { .. } => BackendKind::PortableGraph,
            BackendSource::Fixture { .. } => BackendKind::Fixture,
        }
    }

    pub fn landmark_count(&self) -> usize {
        self.landmarks.len()
    }

    pub fn validate(&self) -> Result<(), InferenceError> {
        let invalid = |msg: String| Err(InferenceError::InvalidDescriptor(msg));
        if self.input_width == 0 || self.input_height == 0 {
            return invalid("input dimensions must be positive".into());
        }
        if self.landmarks.is_empty() {
            return invalid("no landmarks declared".into());
        }
        let mut ids = HashSet::new();
        for id in &self.landmarks {
            if !ids.insert(id.as_str()) {
                return invalid(format!("duplicate landmark '{id}'"));
            }
        }
        if let BackendSource::Fixture { fixture_spec } = &self.source {
            let mut planted = HashSet::new();
            for e in fixture_spec {
                if !ids.contains(e.id.as_str()) {
                    return invalid(format!("fixture entry '{}' is not a declared landmark", e.id));
                }
                if !planted.insert(e.id.as_str()) {
                    return invalid(format!("landmark '{}' planted twice", e.id));
                }
                if !(e.sigma.is_finite() && e.sigma > 0.0 && e.x.is_finite() && e.y.is_finite()) {
                    return invalid(format!("fixture entry '{}' has invalid geometry", e.id));
                }
            }
        }
        Ok(())
    }

    /// Loads the model and returns a ready-to-run session.
    pub fn open_session(&self) -> Result<Box<dyn InferenceSession>, InferenceError> {
        match &self.source {
            BackendSource::Fixture { fixture_spec } => Ok(Box::new(FixtureSession {
                width: self.input_width,
                height: self.input_height,
                landmarks: self.landmarks.clone(),
                spec: fixture_spec.clone(),
            })),
            BackendSource::PortableGraph { model_path } => {
                Ok(Box::new(OnnxSession::load(model_path, self)?))
            }
        }
    }
}

pub trait InferenceSession: Send {
    fn infer(&mut self, input: &ModelInput) -> Result<HeatmapStack, InferenceError>;
}

/// Opens a one-off session and runs it once.
pub fn infer(input: &ModelInput, backend: &ModelBackend) -> Result<HeatmapStack, InferenceError> {
    backend.open_session()?.infer(input)
}

fn check_input(input: &ModelInput, width: u32, height: u32) -> Result<(), InferenceError> {
    if input.width != width || input.height != height {
        return Err(InferenceError::InputShape {
            width,
            height,
            actual_width: input.width,
            actual_height: input.height,
        });
    }
    Ok(())
}

/// Emits `exp(-((x-x0)^2 + (y-y0)^2) / (2 sigma^2))` sampled at pixel
/// centers for each planted landmark; unplanted channels are all zero.
struct FixtureSession {
    width: u32,
    height: u32,
    landmarks: Vec<String>,
    spec: Vec<FixtureEntry>,
}

impl InferenceSession for FixtureSession {
    fn infer(&mut self, input: &ModelInput) -> Result<HeatmapStack, InferenceError> {
        check_input(input, self.width, self.height)?;
        let (w, h) = (self.width as usize, self.height as usize);
        let mut maps = vec![0.0; self.landmarks.len() * w * h];
        for (channel, id) in self.landmarks.iter().enumerate() {
            let Some(entry) = self.spec.iter().find(|e| &e.id == id) else {
                continue;
            };
            let denom = 2.0 * entry.sigma * entry.sigma;
            let out = &mut maps[channel * w * h..(channel + 1) * w * h];
            for y in 0..h {
                let dy = y as f64 - entry.y;
                for x in 0..w {
                    let dx = x as f64 - entry.x;
                    out[y * w + x] = (-(dx * dx + dy * dy) / denom).exp();
                }
            }
        }
        Ok(HeatmapStack::new(
            self.landmarks.clone(),
            self.width,
            self.height,
            maps,
        ))
    }
}

/// ONNX graph with input `[1, 1, H, W]` and output `[1, C, H, W]`.
struct OnnxSession {
    plan: TypedRunnableModel<TypedModel>,
    width: u32,
    height: u32,
    landmarks: Vec<String>,
}

impl OnnxSession {
    fn load(path: &Path, backend: &ModelBackend) -> Result<Self, InferenceError> {
        let load_err = |e: TractError| InferenceError::ModelLoad(format!("{}: {e}", path.display()));
        let (w, h) = (backend.input_width as usize, backend.input_height as usize);
        let model = tract_onnx::onnx()
            .model_for_path(path)
            .map_err(load_err)?
            .with_input_fact(0, f32::fact([1, 1, h, w]).into())
            .map_err(load_err)?
            .into_optimized()
            .map_err(load_err)?;

        let expected = vec![1, backend.landmark_count(), h, w];
        let fact = model.output_fact(0).map_err(load_err)?;
        if let Some(shape) = fact.shape.as_concrete() {
            if shape != expected.as_slice() {
                return Err(InferenceError::ShapeMismatch {
                    expected,
                    actual: shape.to_vec(),
                });
            }
        }
        let plan = model.into_runnable().map_err(load_err)?;
        Ok(Self {
            plan,
            width: backend.input_width,
            height: backend.input_height,
            landmarks: backend.landmarks.clone(),
        })
    }
}

impl InferenceSession for OnnxSession {
    fn infer(&mut self, input: &ModelInput) -> Result<HeatmapStack, InferenceError> {
        check_input(input, self.width, self.height)?;
        let (w, h) = (self.width as usize, self.height as usize);
        let tensor = Tensor::from_shape(&[1, 1, h, w], &input.data)
            .map_err(|e| InferenceError::Runtime(e.to_string()))?;
        let outputs = self
            .plan
            .run(tvec!(tensor.into()))
            .map_err(|e| InferenceError::Runtime(e.to_string()))?;
        let output = outputs
            .first()
            .ok_or_else(|| InferenceError::Runtime("model produced no output".into()))?;
        let expected = vec![1, self.landmarks.len(), h, w];
        if output.shape() != expected.as_slice() {
            return Err(InferenceError::ShapeMismatch {
                expected,
                actual: output.shape().to_vec(),
            });
        }
        let view = output
            .to_array_view::<f32>()
            .map_err(|e| InferenceError::Runtime(e.to_string()))?;
        let maps = view.iter().map(|&v| f64::from(v)).collect();
        Ok(HeatmapStack::new(
            self.landmarks.clone(),
            self.width,
            self.height,
            maps,
        ))
    }
}

/// Fixed set of sessions; a session is used by one caller at a time.
pub struct SessionPool {
    backend: ModelBackend,
    idle: Mutex<Vec<Box<dyn InferenceSession>>>,
    returned: Condvar,
    size: usize,
}

impl SessionPool {
    /// Opens `size` sessions (at least one) up front.
    pub fn new(backend: ModelBackend, size: usize) -> Result<Self, InferenceError> {
        let size = size.max(1);
        let sessions = (0..size)
            .map(|_| backend.open_session())
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            backend,
            idle: Mutex::new(sessions),
            returned: Condvar::new(),
            size,
        })
    }

    pub fn backend(&self) -> &ModelBackend {
        &self.backend
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Blocks until a session is free.
    pub fn checkout(&self) -> PooledSession<'_> {
        let mut idle = self.idle.lock().unwrap_or_else(|e| e.into_inner());
        loop {
            if let Some(session) = idle.pop() {
                return PooledSession {
                    pool: self,
                    session: Some(session),
                };
            }
            idle = self
                .returned
                .wait(idle)
                .unwrap_or_else(|e| e.into_inner());
        }
    }
}

impl std::fmt::Debug for SessionPool {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SessionPool")
            .field("kind", &self.backend.kind())
            .field("size", &self.size)
            .finish()
    }
}

pub struct PooledSession<'a> {
    pool: &'a SessionPool,
    session: Option<Box<dyn InferenceSession>>,
}

impl Deref for PooledSession<'_> {
    type Target = dyn InferenceSession;

    fn deref(&self) -> &Self::Target {
        self.session.as_deref().expect("session present until drop")
    }
}

impl DerefMut for PooledSession<'_> {
    fn deref_mut(&mut self) -> &mut Self::Target {
        self.session.as_deref_mut().expect("session present until drop")
    }
}

impl Drop for PooledSession<'_> {
    fn drop(&mut self) {
        if let Some(session) = self.session.take() {
            self.pool
                .idle
                .lock()
                .unwrap_or_else(|e| e.into_inner())
                .push(session);
            self.pool.returned.notify_one();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("L{i}")).collect()
    }

    fn blank(w: u32, h: u32) -> ModelInput {
        ModelInput {
            width: w,
            height: h,
            data: vec![0.0; (w * h) as usize],
        }
    }

    #[test]
    fn fixture_gaussian_values() {
        let backend = ModelBackend::fixture(
            64,
            64,
            vec!["S".into()],
            vec![FixtureEntry {
                id: "S".into(),
                x: 30.0,
                y: 40.0,
                sigma: 2.0,
            }],
        )
        .unwrap();
        let stack = infer(&blank(64, 64), &backend).unwrap();
        let ch = stack.channel(0);
        assert_eq!(ch.at(30, 40), 1.0);
        let max = ch.values.iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(max, 1.0);
        assert!((ch.at(32, 40) - 0.60653).abs() < 1e-5);
        assert_eq!(ch.at(32, 40), (-0.5f64).exp());
    }

    #[test]
    fn unplanted_channel_is_empty() {
        let backend = ModelBackend::fixture(
            64,
            64,
            vec!["S".into(), "N".into()],
            vec![FixtureEntry {
                id: "S".into(),
                x: 10.0,
                y: 10.0,
                sigma: 2.0,
            }],
        )
        .unwrap();
        let stack = infer(&blank(64, 64), &backend).unwrap();
        assert!(!stack.is_channel_empty(0));
        assert!(stack.is_channel_empty(1));
    }

    #[test]
    fn descriptor_parsing_and_validation() {
        let text = r#"{"kind":"fixture","input_width":128,"input_height":96,
            "landmarks":["S","N"],
            "fixture_spec":[{"id":"S","x":1.5,"y":2,"sigma":2}]}"#;
        let b = ModelBackend::from_json(text).unwrap();
        assert_eq!(b.kind(), BackendKind::Fixture);
        assert_eq!(b.landmark_count(), 2);

        let bad = r#"{"kind":"fixture","input_width":128,"input_height":96,
            "landmarks":["S"], "fixture_spec":[{"id":"Q","x":1,"y":2,"sigma":2}]}"#;
        assert!(matches!(
            ModelBackend::from_json(bad),
            Err(InferenceError::InvalidDescriptor(_))
        ));

        let graph = r#"{"kind":"portable_graph","input_width":128,"input_height":96,
            "landmarks":["S"], "model_path":"m.onnx"}"#;
        let b = ModelBackend::from_json(graph).unwrap();
        assert_eq!(b.kind(), BackendKind::PortableGraph);
    }

    #[test]
    fn missing_model_file_is_load_error() {
        let backend = ModelBackend {
            input_width: 32,
            input_height: 32,
            landmarks: ids(2),
            source: BackendSource::PortableGraph {
                model_path: "/nonexistent/model.onnx".into(),
            },
        };
        assert!(matches!(
            backend.open_session(),
            Err(InferenceError::ModelLoad(_))
        ));
    }

    #[test]
    fn wrong_input_size_rejected() {
        let backend = ModelBackend::fixture(64, 64, ids(1), vec![]).unwrap();
        assert!(matches!(
            infer(&blank(32, 64), &backend),
            Err(InferenceError::InputShape { .. })
        ));
    }

    #[test]
    fn pool_never_shares_a_session() {
        let backend = ModelBackend::fixture(64, 64, ids(1), vec![]).unwrap();
        let pool = Arc::new(SessionPool::new(backend, 2).unwrap());
        let active = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        let handles: Vec<_> = (0..8)
            .map(|_| {
                let (pool, active, peak) = (pool.clone(), active.clone(), peak.clone());
                std::thread::spawn(move || {
                    let mut s = pool.checkout();
                    let now = active.fetch_add(1, Ordering::SeqCst) + 1;
                    peak.fetch_max(now, Ordering::SeqCst);
                    s.infer(&blank(64, 64)).unwrap();
                    std::thread::sleep(std::time::Duration::from_millis(5));
                    active.fetch_sub(1, Ordering::SeqCst);
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert!(peak.load(Ordering::SeqCst) <= 2);
        assert_eq!(pool.idle.lock().unwrap().len(), 2);
    }
}
