//! Single-file CSV export. Layout (CRLF line endings, RFC 4180 quoting):
//!
//! ```text
//! record,id,x_or_value,y_or_units,confidence_or_status,provenance
//! META,case_id,<id>,,,
//! META,created_at,<ISO-8601>,,,
//! META,pixel_spacing_mm,<number or empty>,,,
//! LANDMARK,<id>,<x 2dp>,<y 2dp>,<conf 2dp>,<auto|manual>
//! MEASUREMENT,<id>,<value 2dp or empty>,<deg|mm|px>,<status>,
//! ```
//!
//! Landmarks the decoder could not find follow the located ones as
//! `LANDMARK,<id>,,,,`. An uncalibrated distance is written with units `px`
//! and its pixel length in the last column.

use std::path::Path;

use super::{CephReport, ReportError};
use crate::cephalometrics::{MeasurementStatus, Units};
use crate::landmarks::{DecodedLandmark, LandmarkSet, Provenance};

pub const CSV_HEADER: [&str; 6] = [
    "record",
    "id",
    "x_or_value",
    "y_or_units",
    "confidence_or_status",
    "provenance",
];

/// Rounds half-up to two decimals.
pub fn round_2dp(v: f64) -> f64 {
    (v * 100.0 + 0.5).floor() / 100.0
}

/// Two-decimal text, rounded half-up.
pub fn format_2dp(v: f64) -> String {
    let hundredths = (v * 100.0 + 0.5).floor() as i64;
    let sign = if hundredths < 0 { "-" } else { "" };
    let abs = hundredths.unsigned_abs();
    format!("{sign}{}.{:02}", abs / 100, abs % 100)
}

fn writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .quote_style(csv::QuoteStyle::Necessary)
        .from_writer(Vec::new())
}

/// Serializes a report to the CSV layout above.
pub fn to_csv_string(report: &CephReport) -> Result<String, ReportError> {
    report.validate()?;
    let mut w = writer();
    w.write_record(CSV_HEADER)?;
    let spacing = report
        .pixel_spacing_mm
        .map(|s| s.to_string())
        .unwrap_or_default();
    for (key, value) in [
        ("case_id", report.case_id.clone()),
        ("created_at", report.created_at_iso()),
        ("pixel_spacing_mm", spacing),
    ] {
        w.write_record(["META", key, &value, "", "", ""])?;
    }
    for p in &report.landmarks.points {
        let conf = p.confidence.map(format_2dp).unwrap_or_default();
        w.write_record([
            "LANDMARK",
            &p.id,
            &format_2dp(p.x),
            &format_2dp(p.y),
            &conf,
            p.provenance.as_str(),
        ])?;
    }
    for id in &report.landmarks.missing {
        w.write_record(["LANDMARK", id, "", "", "", ""])?;
    }
    for m in &report.measurements {
        let value = m.value.map(format_2dp).unwrap_or_default();
        let aux = m.pixel_value.map(format_2dp).unwrap_or_default();
        w.write_record([
            "MEASUREMENT",
            &m.definition_id,
            &value,
            m.units.as_str(),
            m.status.as_str(),
            &aux,
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| ReportError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv writer emits UTF-8 for UTF-8 input"))
}

pub fn write_csv(report: &CephReport, path: &Path) -> Result<(), ReportError> {
    let text = to_csv_string(report)?;
    std::fs::write(path, text)?;
    Ok(())
}

/// A MEASUREMENT row as it appears in the file.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRow {
    pub id: String,
    pub value: Option<f64>,
    pub units: Units,
    pub status: MeasurementStatus,
    pub pixel_value: Option<f64>,
}

/// Report content recovered from CSV (no timings; values at 2dp).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParsedReport {
    pub case_id: String,
    pub created_at: Option<String>,
    pub pixel_spacing_mm: Option<f64>,
    pub landmarks: LandmarkSet,
    pub measurements: Vec<MeasurementRow>,
}

fn parse_opt_f64(field: &str, line: usize) -> Result<Option<f64>, ReportError> {
    if field.is_empty() {
        return Ok(None);
    }
    field
        .parse::<f64>()
        .map(Some)
        .map_err(|_| ReportError::Parse {
            line,
            message: format!("'{field}' is not a number"),
        })
}

/// Parses the CSV layout written by [`to_csv_string`].
pub fn parse_csv(text: &str) -> Result<ParsedReport, ReportError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    if headers.iter().ne(CSV_HEADER) {
        return Err(ReportError::Parse {
            line: 1,
            message: "unexpected header".into(),
        });
    }
    let mut report = ParsedReport::default();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record?;
        let err = |message: String| ReportError::Parse { line, message };
        if record.len() != 6 {
            return Err(err(format!("expected 6 fields, got {}", record.len())));
        }
        let f = |k: usize| record.get(k).unwrap_or("");
        match f(0) {
            "META" => match f(1) {
                "case_id" => report.case_id = f(2).to_string(),
                "created_at" => report.created_at = Some(f(2).to_string()),
                "pixel_spacing_mm" => report.pixel_spacing_mm = parse_opt_f64(f(2), line)?,
                _ => {}
            },
            "LANDMARK" => {
                let id = f(1).to_string();
                match (parse_opt_f64(f(2), line)?, parse_opt_f64(f(3), line)?) {
                    (Some(x), Some(y)) => {
                        let provenance = match f(5) {
                            "auto" => Provenance::Auto,
                            "manual" => Provenance::Manual,
                            other => return Err(err(format!("unknown provenance '{other}'"))),
                        };
                        report.landmarks.points.push(DecodedLandmark {
                            id,
                            x,
                            y,
                            confidence: parse_opt_f64(f(4), line)?,
                            provenance,
                        });
                    }
                    (None, None) => report.landmarks.missing.push(id),
                    _ => return Err(err("landmark with only one coordinate".into())),
                }
            }
            "MEASUREMENT" => {
                let units =
                    Units::parse(f(3)).ok_or_else(|| err(format!("unknown units '{}'", f(3))))?;
                let status = MeasurementStatus::parse(f(4))
                    .ok_or_else(|| err(format!("unknown status '{}'", f(4))))?;
                report.measurements.push(MeasurementRow {
                    id: f(1).to_string(),
                    value: parse_opt_f64(f(2), line)?,
                    units,
                    status,
                    pixel_value: parse_opt_f64(f(5), line)?,
                });
            }
            other => return Err(err(format!("unknown record type '{other}'"))),
        }
    }
    report.landmarks.image_ref = report.case_id.clone();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cephalometrics::MeasurementResult;
    use crate::pipeline::StageTimings;
    use chrono::TimeZone;

    fn report() -> CephReport {
        CephReport {
            case_id: "case-1".into(),
            created_at: chrono::Utc.with_ymd_and_hms(2024, 5, 6, 7, 8, 9).unwrap(),
            pixel_spacing_mm: Some(0.1),
            landmarks: LandmarkSet {
                image_ref: "case-1".into(),
                points: vec![DecodedLandmark {
                    id: "S".into(),
                    x: 123.5,
                    y: 456.25,
                    confidence: Some(0.91),
                    provenance: Provenance::Auto,
                }],
                missing: vec!["Go".into()],
            },
            measurements: vec![
                MeasurementResult {
                    definition_id: "SNA".into(),
                    value: Some(85.0),
                    units: Units::Deg,
                    status: MeasurementStatus::Within,
                    inputs_manual: false,
                    pixel_value: None,
                },
                MeasurementResult {
                    definition_id: "GoMe".into(),
                    value: None,
                    units: Units::Mm,
                    status: MeasurementStatus::Unavailable,
                    inputs_manual: false,
                    pixel_value: None,
                },
            ],
            timings_ms: StageTimings::default(),
        }
    }

    #[test]
    fn rows_match_layout() {
        let text = to_csv_string(&report()).unwrap();
        let lines: Vec<&str> = text.split("\r\n").collect();
        assert_eq!(
            lines,
            [
                "record,id,x_or_value,y_or_units,confidence_or_status,provenance",
                "META,case_id,case-1,,,",
                "META,created_at,2024-05-06T07:08:09.000Z,,,",
                "META,pixel_spacing_mm,0.1,,,",
                "LANDMARK,S,123.50,456.25,0.91,auto",
                "LANDMARK,Go,,,,",
                "MEASUREMENT,SNA,85.00,deg,WITHIN,",
                "MEASUREMENT,GoMe,,mm,UNAVAILABLE,",
                "",
            ]
        );
    }

    #[test]
    fn half_up_rounding() {
        assert_eq!(format_2dp(0.125), "0.13");
        assert_eq!(format_2dp(2.675), "2.68"); // 2.675 * 100 rounds to exactly 267.5
        assert_eq!(format_2dp(1.005), "1.00"); // 1.005 * 100 stays below 100.5
        assert_eq!(format_2dp(0.0), "0.00");
        assert_eq!(format_2dp(-0.001), "0.00");
        assert_eq!(format_2dp(1234.5), "1234.50");
        assert_eq!(format_2dp(-1.255), "-1.25");
        assert_eq!(round_2dp(0.125), 0.13);
    }

    #[test]
    fn fields_with_commas_are_quoted() {
        let mut r = report();
        r.case_id = "a,\"b\"".into();
        let text = to_csv_string(&r).unwrap();
        assert!(text.contains("META,case_id,\"a,\"\"b\"\"\",,,\r\n"));
        assert_eq!(parse_csv(&text).unwrap().case_id, "a,\"b\"");
    }

    #[test]
    fn round_trip() {
        let r = report();
        let parsed = parse_csv(&to_csv_string(&r).unwrap()).unwrap();
        assert_eq!(parsed.case_id, "case-1");
        assert_eq!(parsed.pixel_spacing_mm, Some(0.1));
        assert_eq!(parsed.landmarks.points, r.landmarks.points);
        assert_eq!(parsed.landmarks.missing, r.landmarks.missing);
        assert_eq!(parsed.measurements[0].value, Some(85.0));
        assert_eq!(parsed.measurements[1].status, MeasurementStatus::Unavailable);
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_csv("a,b\r\n1,2\r\n").is_err());
        let bad = "record,id,x_or_value,y_or_units,confidence_or_status,provenance\r\nFOO,x,,,,\r\n";
        assert!(matches!(parse_csv(bad), Err(ReportError::Parse { line: 2, .. })));
    }

    #[test]
    fn empty_case_id_rejected() {
        let mut r = report();
        r.case_id.clear();
        assert!(matches!(to_csv_string(&r), Err(ReportError::Invalid(_))));
    }
}
