//! HTTP case service over the decode pipeline.
//!
//! Cases are uploaded, decoded, corrected landmark by landmark and exported
//! as CSV/JSON reports or overlay images. State lives on disk under the
//! data directory and survives restarts.

pub mod api;
pub mod error;
pub mod store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context;
use ceph_core::config;

pub use api::{router, AppState, MAX_UPLOAD_BYTES};
pub use store::{CaseStatus, Store};

pub const DEFAULT_BIND_ADDR: &str = "127.0.0.1:8080";

/// Runtime settings; every field has an environment variable.
#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// `CEPH_DATA_DIR`
    pub data_dir: PathBuf,
    /// `CEPH_MODEL_JSON`
    pub model_json: PathBuf,
    /// `CEPH_BIND_ADDR`
    pub bind_addr: String,
    /// `CEPH_SESSION_POOL`
    pub session_pool: usize,
    pub landmarks_json: Option<PathBuf>,
    pub measurements_json: Option<PathBuf>,
}

impl ServiceConfig {
    pub fn from_env() -> anyhow::Result<Self> {
        let model_json = std::env::var_os("CEPH_MODEL_JSON")
            .map(PathBuf::from)
            .context("CEPH_MODEL_JSON is not set")?;
        let data_dir = std::env::var_os("CEPH_DATA_DIR")
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("ceph-data"));
        let bind_addr =
            std::env::var("CEPH_BIND_ADDR").unwrap_or_else(|_| DEFAULT_BIND_ADDR.to_string());
        let session_pool = match std::env::var("CEPH_SESSION_POOL") {
            Ok(v) => v
                .parse::<usize>()
                .ok()
                .filter(|n| *n >= 1)
                .with_context(|| format!("CEPH_SESSION_POOL must be a positive integer, got '{v}'"))?,
            Err(_) => config::default_pool_size(),
        };
        Ok(Self {
            data_dir,
            model_json,
            bind_addr,
            session_pool,
            landmarks_json: None,
            measurements_json: None,
        })
    }

    pub fn build_state(&self) -> anyhow::Result<Arc<AppState>> {
        let pipeline = config::load_pipeline(
            &self.model_json,
            self.landmarks_json.as_deref(),
            self.measurements_json.as_deref(),
            self.session_pool,
        )?;
        let store = Store::open(&self.data_dir)
            .with_context(|| format!("opening data dir {}", self.data_dir.display()))?;
        Ok(Arc::new(AppState { pipeline, store }))
    }
}

/// Binds, prints `listening on <addr>` to stdout and serves until
/// SIGINT/SIGTERM.
pub fn run(config: ServiceConfig) -> anyhow::Result<()> {
    let state = config.build_state()?;
    log::info!(
        "loaded {} case(s) from {}",
        state.store.len(),
        config.data_dir.display()
    );
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&config.bind_addr)
            .await
            .with_context(|| format!("binding {}", config.bind_addr))?;
        let addr: SocketAddr = listener.local_addr()?;
        println!("listening on {addr}");
        axum::serve(listener, router(state))
            .with_graceful_shutdown(shutdown_signal())
            .await?;
        Ok(())
    })
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        if let Ok(mut s) = tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            s.recv().await;
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
}
