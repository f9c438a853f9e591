pub mod bench;
pub mod decode;
pub mod eval;
pub mod serve;

use std::path::{Path, PathBuf};

use ceph_core::config::{self, ConfigError};
use ceph_core::Pipeline;

use crate::Cli;

/// Reports a usage problem and returns the usage exit code.
pub fn usage(message: impl std::fmt::Display) -> u8 {
    eprintln!("error: {message}");
    crate::EXIT_USAGE
}

pub fn model_path(cli: &Cli) -> Result<&Path, u8> {
    cli.model
        .as_deref()
        .ok_or_else(|| usage("--model <model.json> is required (or set CEPH_MODEL_JSON)"))
}

pub fn load_pipeline(cli: &Cli, pool_size: usize) -> Result<Pipeline, u8> {
    let model = model_path(cli)?;
    config::load_pipeline(
        model,
        cli.landmarks.as_deref(),
        cli.measurements.as_deref(),
        pool_size,
    )
    .map_err(|e: ConfigError| usage(e))
}

/// Expands glob patterns in order, de-duplicating. A pattern without glob
/// matches is kept verbatim if it names an existing file.
pub fn expand_inputs(patterns: &[String]) -> Result<Vec<PathBuf>, String> {
    let mut out: Vec<PathBuf> = Vec::new();
    for pattern in patterns {
        let mut matched: Vec<PathBuf> = glob::glob(pattern)
            .map_err(|e| format!("bad pattern '{pattern}': {e}"))?
            .filter_map(Result::ok)
            .filter(|p| p.is_file())
            .collect();
        if matched.is_empty() && Path::new(pattern).is_file() {
            matched.push(PathBuf::from(pattern));
        }
        matched.sort();
        for p in matched {
            if !out.contains(&p) {
                out.push(p);
            }
        }
    }
    Ok(out)
}

pub fn file_stem(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("image")
        .to_string()
}
