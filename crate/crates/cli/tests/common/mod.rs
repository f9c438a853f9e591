#![allow(dead_code)]

use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

pub fn ceph() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ceph"));
    cmd.env_remove("CEPH_MODEL_JSON")
        .env_remove("CEPH_DATA_DIR")
        .env_remove("CEPH_BIND_ADDR")
        .env_remove("CEPH_SESSION_POOL")
        .env("RUST_LOG", "warn");
    cmd
}

pub fn run(args: &[&str]) -> Output {
    ceph().args(args).output().expect("spawn ceph")
}

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn fixture_model() -> PathBuf {
    fixtures().join("model.json")
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Drops the META rows that legitimately differ between runs.
pub fn without_volatile_meta(csv: &str) -> String {
    csv.split_inclusive("\r\n")
        .filter(|l| !l.starts_with("META,case_id,") && !l.starts_with("META,created_at,"))
        .collect()
}

/// Writes a synthetic radiograph plus a calibration sidecar.
pub fn write_case(dir: &Path, name: &str, w: u32, h: u32, seed: u64, spacing: f64) -> PathBuf {
    let img = ceph_testkit::synth::radiograph8(w, h, seed);
    let path = dir.join(format!("{name}.png"));
    img.save(&path).unwrap();
    std::fs::write(
        dir.join(format!("{name}.calib.json")),
        format!("{{\"pixel_spacing_mm\": {spacing}}}"),
    )
    .unwrap();
    path
}

/// A running `ceph serve` child and its bound address.
pub struct Server {
    pub child: Child,
    pub addr: String,
}

impl Server {
    pub fn start(model: &Path, data_dir: &Path) -> Server {
        let mut child = ceph()
            .args(["serve", "--model", s(model), "--data-dir", s(data_dir)])
            .args(["--bind", "127.0.0.1:0", "--session-pool", "2"])
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .expect("spawn ceph serve");
        let stdout = child.stdout.take().unwrap();
        let mut line = String::new();
        BufReader::new(stdout).read_line(&mut line).unwrap();
        let addr = line
            .trim()
            .strip_prefix("listening on ")
            .unwrap_or_else(|| panic!("unexpected banner '{line}'"))
            .to_string();
        Server { child, addr }
    }

    /// SIGKILL, no graceful shutdown.
    pub fn kill(mut self) {
        self.child.kill().unwrap();
        self.child.wait().unwrap();
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
