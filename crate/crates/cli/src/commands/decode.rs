use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use ceph_core::image_io;
use ceph_core::reporting::{encode_png, plot_confidences, render_overlay, to_csv_string};
use ceph_core::{CephReport, Pipeline};
use chrono::Utc;
use clap::Args;
use rayon::prelude::*;
use serde::Serialize;

use super::{expand_inputs, file_stem, load_pipeline, usage};
use crate::Cli;

#[derive(Debug, Args)]
pub struct DecodeArgs {
    /// Image files or glob patterns.
    #[arg(required = true)]
    pub inputs: Vec<String>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Write `<stem>.report.csv` (the default when no artifact is chosen).
    #[arg(long)]
    pub csv: bool,
    /// Write `<stem>.report.json`.
    #[arg(long)]
    pub json: bool,
    /// Write `<stem>.overlay.png`.
    #[arg(long)]
    pub overlay: bool,
    /// Write `<stem>.confidence.png`.
    #[arg(long)]
    pub chart: bool,
    /// Pixel spacing in mm, overriding calibration sidecars.
    #[arg(long)]
    pub pixel_spacing: Option<f64>,
    /// Worker threads; defaults to one per core.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Print the batch summary as JSON on stdout.
    #[arg(long)]
    pub summary_json: bool,
}

#[derive(Debug, Clone, Copy)]
struct Artifacts {
    csv: bool,
    json: bool,
    overlay: bool,
    chart: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ImageOutcome {
    pub input: PathBuf,
    pub ok: bool,
    pub elapsed_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BatchSummary {
    pub total: usize,
    pub succeeded: usize,
    pub failed: usize,
    pub timings_ms: Vec<f64>,
    pub wall_ms: f64,
    pub images: Vec<ImageOutcome>,
}

pub fn run(cli: &Cli, args: &DecodeArgs) -> u8 {
    if let Some(s) = args.pixel_spacing {
        if !(s.is_finite() && s > 0.0) {
            return usage("--pixel-spacing must be a positive number");
        }
    }
    if args.jobs == Some(0) {
        return usage("--jobs must be at least 1");
    }
    let inputs = match expand_inputs(&args.inputs) {
        Ok(v) => v,
        Err(e) => return usage(e),
    };
    if inputs.is_empty() {
        return usage("no inputs");
    }
    let jobs = args.jobs.unwrap_or_else(ceph_core::config::default_pool_size);
    let pipeline = match load_pipeline(cli, jobs.min(inputs.len())) {
        Ok(p) => p,
        Err(code) => return code,
    };
    if let Err(e) = fs::create_dir_all(&args.out_dir) {
        return usage(format!("cannot create {}: {e}", args.out_dir.display()));
    }
    let artifacts = Artifacts {
        csv: args.csv || !(args.json || args.overlay || args.chart),
        json: args.json,
        overlay: args.overlay,
        chart: args.chart,
    };

    let wall = Instant::now();
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(p) => p,
        Err(e) => return usage(e),
    };
    let images: Vec<ImageOutcome> = pool.install(|| {
        inputs
            .par_iter()
            .map(|input| {
                let start = Instant::now();
                let result = decode_one(&pipeline, input, args, artifacts);
                let elapsed_ms = start.elapsed().as_secs_f64() * 1000.0;
                match &result {
                    Ok(()) => log::info!("{}: ok ({elapsed_ms:.0} ms)", input.display()),
                    Err(e) => log::error!("{}: {e:#}", input.display()),
                }
                ImageOutcome {
                    input: input.clone(),
                    ok: result.is_ok(),
                    elapsed_ms,
                    error: result.err().map(|e| format!("{e:#}")),
                }
            })
            .collect()
    });
    let succeeded = images.iter().filter(|o| o.ok).count();
    let summary = BatchSummary {
        total: images.len(),
        succeeded,
        failed: images.len() - succeeded,
        timings_ms: images.iter().map(|o| o.elapsed_ms).collect(),
        wall_ms: wall.elapsed().as_secs_f64() * 1000.0,
        images,
    };
    if args.summary_json {
        println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
    } else if !cli.quiet {
        println!(
            "total {} succeeded {} failed {} wall {:.0} ms",
            summary.total, summary.succeeded, summary.failed, summary.wall_ms
        );
    }
    u8::from(summary.failed > 0)
}

/// Builds the report for one decoded image. Shared with the bench command.
pub fn report_for(pipeline: &Pipeline, output: &ceph_core::PipelineOutput, case_id: &str) -> CephReport {
    pipeline.report(output, case_id, Utc::now())
}

fn decode_one(
    pipeline: &Pipeline,
    input: &Path,
    args: &DecodeArgs,
    artifacts: Artifacts,
) -> anyhow::Result<()> {
    let stem = file_stem(input);
    let start = Instant::now();
    let mut image = image_io::load_image(input)?;
    if args.pixel_spacing.is_some() {
        image = image.with_pixel_spacing(args.pixel_spacing)?;
    }
    let load_ms = start.elapsed().as_secs_f64() * 1000.0;
    let output = pipeline.run_image(&image, &stem, load_ms)?;
    let report = report_for(pipeline, &output, &stem);

    let out = |suffix: &str| args.out_dir.join(format!("{stem}.{suffix}"));
    if artifacts.csv {
        let path = out("report.csv");
        fs::write(&path, to_csv_string(&report)?).with_context(|| path.display().to_string())?;
    }
    if artifacts.json {
        let path = out("report.json");
        let text = serde_json::to_string_pretty(&report)?;
        fs::write(&path, text).with_context(|| path.display().to_string())?;
    }
    if artifacts.overlay {
        let path = out("overlay.png");
        let png = encode_png(&render_overlay(&image, &report.landmarks, pipeline.definitions()))?;
        fs::write(&path, png).with_context(|| path.display().to_string())?;
    }
    if artifacts.chart {
        let path = out("confidence.png");
        fs::write(&path, encode_png(&plot_confidences(&report))?)
            .with_context(|| path.display().to_string())?;
    }
    Ok(())
}
