//! Model-input preparation, heatmap inference and peak decoding.

mod backend;
mod decode;
mod mapping;

pub use backend::{
    infer, BackendKind, BackendSource, FixtureEntry, InferenceError, InferenceSession,
    ModelBackend, PooledSession, SessionPool,
};
pub use decode::{decode_all, decode_heatmap, EmptyHeatmap, Heatmap, HeatmapStack, Peak};
pub use mapping::{prepare_input, InputMapping, ModelInput};
