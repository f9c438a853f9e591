use std::collections::BTreeMap;
use std::path::Path;

use ceph_core::reporting::{parse_csv, ParsedReport};
use clap::Args;
use serde::Serialize;

use super::{expand_inputs, file_stem, usage};
use crate::Cli;

pub const SDR_THRESHOLDS_MM: [f64; 4] = [2.0, 2.5, 3.0, 4.0];

/// Slack for float noise when comparing an error to a threshold, so that
/// an error of exactly t counts as a success.
const THRESHOLD_EPS: f64 = 1e-9;

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Predicted report CSVs (files or globs).
    #[arg(long, required = true, num_args = 1..)]
    pub predictions: Vec<String>,
    /// Ground-truth CSVs in the same layout.
    #[arg(long, required = true, num_args = 1..)]
    pub ground_truth: Vec<String>,
    /// Pixel spacing in mm; falls back to each ground-truth file's META row.
    #[arg(long)]
    pub pixel_spacing: Option<f64>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Metrics {
    /// Landmarks compared (present in ground truth).
    pub count: usize,
    /// Ground-truth landmarks the prediction lacks; they count as misses.
    pub missing: usize,
    pub mre_mm: Option<f64>,
    /// Success rates in percent, one per threshold.
    pub sdr: Vec<f64>,
}

#[derive(Debug, Default)]
struct Accumulator {
    errors: Vec<f64>,
    missing: usize,
}

impl Accumulator {
    fn finish(&self) -> Metrics {
        let count = self.errors.len() + self.missing;
        let mre_mm = if self.errors.is_empty() {
            None
        } else {
            Some(self.errors.iter().sum::<f64>() / self.errors.len() as f64)
        };
        let sdr = SDR_THRESHOLDS_MM
            .iter()
            .map(|t| {
                let hits = self.errors.iter().filter(|e| **e <= t + THRESHOLD_EPS).count();
                if count == 0 {
                    0.0
                } else {
                    100.0 * hits as f64 / count as f64
                }
            })
            .collect();
        Metrics {
            count,
            missing: self.missing,
            mre_mm,
            sdr,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub cases: usize,
    pub per_landmark: BTreeMap<String, Metrics>,
    pub overall: Metrics,
}

fn load_set(patterns: &[String]) -> Result<BTreeMap<String, ParsedReport>, String> {
    let paths = expand_inputs(patterns)?;
    if paths.is_empty() {
        return Err("no inputs".into());
    }
    let mut out = BTreeMap::new();
    for path in paths {
        let report = read_report(&path)?;
        let id = if report.case_id.is_empty() {
            case_id_from_path(&path)
        } else {
            report.case_id.clone()
        };
        if out.insert(id.clone(), report).is_some() {
            return Err(format!("duplicate case id '{id}'"));
        }
    }
    Ok(out)
}

fn read_report(path: &Path) -> Result<ParsedReport, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_csv(&text).map_err(|e| format!("{}: {e}", path.display()))
}

/// `foo.report.csv` and `foo.csv` both name case `foo`.
fn case_id_from_path(path: &Path) -> String {
    let stem = file_stem(path);
    stem.strip_suffix(".report").unwrap_or(&stem).to_string()
}

pub fn evaluate(
    predictions: &BTreeMap<String, ParsedReport>,
    truth: &BTreeMap<String, ParsedReport>,
    spacing: Option<f64>,
) -> Result<EvalReport, String> {
    let pred_ids: Vec<&String> = predictions.keys().collect();
    let truth_ids: Vec<&String> = truth.keys().collect();
    if pred_ids != truth_ids {
        return Err(format!(
            "case ids differ: predictions {pred_ids:?}, ground truth {truth_ids:?}"
        ));
    }
    let mut per: BTreeMap<String, Accumulator> = BTreeMap::new();
    let mut all = Accumulator::default();
    for (id, gt) in truth {
        let pred = &predictions[id];
        let mm = spacing
            .or(gt.pixel_spacing_mm)
            .ok_or_else(|| format!("case '{id}': no pixel spacing (use --pixel-spacing)"))?;
        for g in &gt.landmarks.points {
            let acc = per.entry(g.id.clone()).or_default();
            match pred.landmarks.point(&g.id) {
                Some(p) => {
                    let err = (p.x - g.x).hypot(p.y - g.y) * mm;
                    acc.errors.push(err);
                    all.errors.push(err);
                }
                None => {
                    acc.missing += 1;
                    all.missing += 1;
                }
            }
        }
    }
    Ok(EvalReport {
        cases: truth.len(),
        per_landmark: per.iter().map(|(k, a)| (k.clone(), a.finish())).collect(),
        overall: all.finish(),
    })
}

pub fn run(cli: &Cli, args: &EvalArgs) -> u8 {
    if let Some(s) = args.pixel_spacing {
        if !(s.is_finite() && s > 0.0) {
            return usage("--pixel-spacing must be a positive number");
        }
    }
    let predictions = match load_set(&args.predictions) {
        Ok(p) => p,
        Err(e) => return usage(format!("predictions: {e}")),
    };
    let truth = match load_set(&args.ground_truth) {
        Ok(p) => p,
        Err(e) => return usage(format!("ground truth: {e}")),
    };
    let report = match evaluate(&predictions, &truth, args.pixel_spacing) {
        Ok(r) => r,
        Err(e) => return usage(e),
    };
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
        return 0;
    }
    let header: Vec<String> = SDR_THRESHOLDS_MM
        .iter()
        .map(|t| format!("SDR@{t}mm"))
        .collect();
    println!("{:<10} {:>4} {:>8} {}", "landmark", "n", "MRE_mm", header.join(" "));
    let row = |name: &str, m: &Metrics| {
        let mre = m.mre_mm.map_or("-".to_string(), |v| format!("{v:.3}"));
        let sdr: Vec<String> = m.sdr.iter().map(|v| format!("{v:>9.1}")).collect();
        println!("{:<10} {:>4} {:>8} {}", name, m.count, mre, sdr.join(" "));
    };
    for (id, m) in &report.per_landmark {
        row(id, m);
    }
    row("overall", &report.overall);
    if !cli.quiet {
        eprintln!("{} case(s)", report.cases);
    }
    0
}
