use std::path::PathBuf;
use std::time::Instant;

use ceph_core::image_io;
use ceph_core::reporting::to_csv_string;
use clap::Args;
use serde::Serialize;

use super::{file_stem, load_pipeline, usage};
use crate::Cli;

#[derive(Debug, Args)]
pub struct BenchArgs {
    pub input: PathBuf,
    /// Timed runs after one untimed warm-up.
    #[arg(long, default_value_t = 5)]
    pub repeat: usize,
    /// Print statistics as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageStats {
    pub stage: String,
    pub min_ms: f64,
    pub median_ms: f64,
    pub max_ms: f64,
}

pub const STAGES: [&str; 7] = [
    "load", "normalize", "infer", "decode", "measure", "report", "total",
];

/// Min, median (mean of the middle pair for even counts) and max.
pub fn stats(stage: &str, samples: &[f64]) -> StageStats {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    let median = if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    };
    StageStats {
        stage: stage.to_string(),
        min_ms: s[0],
        median_ms: median,
        max_ms: s[n - 1],
    }
}

pub fn run(cli: &Cli, args: &BenchArgs) -> u8 {
    if args.repeat == 0 {
        return usage("--repeat must be at least 1");
    }
    if !args.input.is_file() {
        return usage(format!("no such input {}", args.input.display()));
    }
    let pipeline = match load_pipeline(cli, 1) {
        Ok(p) => p,
        Err(code) => return code,
    };
    let stem = file_stem(&args.input);
    let mut samples: Vec<[f64; 7]> = Vec::with_capacity(args.repeat);
    for i in 0..=args.repeat {
        let start = Instant::now();
        let result = image_io::load_image(&args.input)
            .map_err(anyhow::Error::from)
            .and_then(|image| {
                let load_ms = start.elapsed().as_secs_f64() * 1000.0;
                Ok(pipeline.run_image(&image, &stem, load_ms)?)
            });
        let output = match result {
            Ok(o) => o,
            Err(e) => {
                eprintln!("error: {}: {e:#}", args.input.display());
                return 1;
            }
        };
        let report_start = Instant::now();
        let report = super::decode::report_for(&pipeline, &output, &stem);
        let csv = to_csv_string(&report);
        let report_ms = report_start.elapsed().as_secs_f64() * 1000.0;
        if let Err(e) = csv {
            eprintln!("error: {e}");
            return 1;
        }
        let total = start.elapsed().as_secs_f64() * 1000.0;
        if i == 0 {
            // warm-up: first-touch allocations, lazy session state
            continue;
        }
        let t = output.timings;
        samples.push([t.load, t.normalize, t.infer, t.decode, t.measure, report_ms, total]);
    }
    let table: Vec<StageStats> = STAGES
        .iter()
        .enumerate()
        .map(|(k, stage)| stats(stage, &samples.iter().map(|s| s[k]).collect::<Vec<_>>()))
        .collect();
    if args.json {
        println!("{}", serde_json::to_string_pretty(&table).expect("stats serialize"));
    } else {
        println!("{:<10} {:>10} {:>10} {:>10}", "stage", "min_ms", "median_ms", "max_ms");
        for s in &table {
            println!(
                "{:<10} {:>10.2} {:>10.2} {:>10.2}",
                s.stage, s.min_ms, s.median_ms, s.max_ms
            );
        }
        if !cli.quiet {
            eprintln!("{} timed run(s), 1 warm-up excluded", args.repeat);
        }
    }
    0
}
