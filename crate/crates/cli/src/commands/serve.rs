use std::path::PathBuf;

use ceph_service::ServiceConfig;
use clap::Args;

use super::{model_path, usage};
use crate::Cli;

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "CEPH_DATA_DIR", default_value = "ceph-data")]
    pub data_dir: PathBuf,
    #[arg(long, env = "CEPH_BIND_ADDR", default_value = ceph_service::DEFAULT_BIND_ADDR)]
    pub bind: String,
    /// Inference session pool size; defaults to one per core.
    #[arg(long, env = "CEPH_SESSION_POOL")]
    pub session_pool: Option<usize>,
}

pub fn run(cli: &Cli, args: &ServeArgs) -> u8 {
    let model_json = match model_path(cli) {
        Ok(p) => p.to_path_buf(),
        Err(code) => return code,
    };
    if args.session_pool == Some(0) {
        return usage("--session-pool must be at least 1");
    }
    let config = ServiceConfig {
        data_dir: args.data_dir.clone(),
        model_json,
        bind_addr: args.bind.clone(),
        session_pool: args
            .session_pool
            .unwrap_or_else(ceph_core::config::default_pool_size),
        landmarks_json: cli.landmarks.clone(),
        measurements_json: cli.measurements.clone(),
    };
    match ceph_service::run(config) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}
