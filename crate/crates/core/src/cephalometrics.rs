//! Planar angle and distance measurements over landmark sets, flagged
//! against normative ranges.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::landmarks::{LandmarkCatalog, LandmarkSet, Point, Provenance};

/// Points closer than this (in pixels) are treated as coincident.
pub const COINCIDENT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("angle vertex coincides with a ray endpoint")]
    DegenerateAngle,
    #[error("line endpoints coincide")]
    DegenerateLine,
    #[error("pixel spacing unavailable")]
    Uncalibrated,
}

#[derive(Debug, Error)]
pub enum DefinitionError {
    #[error("measurement '{id}': {kind} needs {expected} points, got {actual}")]
    Arity {
        id: String,
        kind: MeasurementKind,
        expected: usize,
        actual: usize,
    },
    #[error("measurement '{id}' references unknown landmark '{landmark}'")]
    UnknownLandmark { id: String, landmark: String },
    #[error("measurement '{id}': units {units} do not fit {kind}")]
    Units {
        id: String,
        kind: MeasurementKind,
        units: Units,
    },
    #[error("measurement '{id}': norm must be finite with sd >= 0")]
    Norm { id: String },
    #[error("duplicate measurement id '{0}'")]
    Duplicate(String),
    #[error("cannot read measurements: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse measurements: {0}")]
    Parse(#[from] serde_json::Error),
}

fn sub(a: Point, b: Point) -> (f64, f64) {
    (a.x - b.x, a.y - b.y)
}

fn is_zero((x, y): (f64, f64)) -> bool {
    x.hypot(y) < COINCIDENT_EPS
}

/// Unsigned angle a-vertex-c in degrees, `[0, 180]`.
pub fn angle_3pt(a: Point, vertex: Point, c: Point) -> Result<f64, GeometryError> {
    let u = sub(a, vertex);
    let w = sub(c, vertex);
    if is_zero(u) || is_zero(w) {
        return Err(GeometryError::DegenerateAngle);
    }
    let cross = u.0 * w.1 - u.1 * w.0;
    let dot = u.0 * w.0 + u.1 * w.1;
    Ok(cross.abs().atan2(dot).to_degrees())
}

/// Acute angle between the undirected lines p1p2 and q1q2, `[0, 90]`.
pub fn angle_lines(p1: Point, p2: Point, q1: Point, q2: Point) -> Result<f64, GeometryError> {
    let u = sub(p2, p1);
    let w = sub(q2, q1);
    if is_zero(u) || is_zero(w) {
        return Err(GeometryError::DegenerateLine);
    }
    let cross = u.0 * w.1 - u.1 * w.0;
    let dot = u.0 * w.0 + u.1 * w.1;
    Ok(cross.abs().atan2(dot.abs()).to_degrees())
}

pub fn pixel_distance(p: Point, q: Point) -> f64 {
    (p.x - q.x).hypot(p.y - q.y)
}

/// Euclidean distance in millimeters.
pub fn distance(p: Point, q: Point, pixel_spacing: Option<f64>) -> Result<f64, GeometryError> {
    match pixel_spacing {
        Some(s) if s.is_finite() && s > 0.0 => Ok(pixel_distance(p, q) * s),
        _ => Err(GeometryError::Uncalibrated),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementKind {
    #[serde(rename = "angle_3pt")]
    Angle3Pt,
    AngleLines,
    Distance,
}

impl MeasurementKind {
    pub fn arity(self) -> usize {
        match self {
            MeasurementKind::Angle3Pt => 3,
            MeasurementKind::AngleLines => 4,
            MeasurementKind::Distance => 2,
        }
    }
}

impl fmt::Display for MeasurementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MeasurementKind::Angle3Pt => "angle_3pt",
            MeasurementKind::AngleLines => "angle_lines",
            MeasurementKind::Distance => "distance",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    Deg,
    Mm,
    Px,
}

impl Units {
    pub fn as_str(self) -> &'static str {
        match self {
            Units::Deg => "deg",
            Units::Mm => "mm",
            Units::Px => "px",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "deg" => Some(Units::Deg),
            "mm" => Some(Units::Mm),
            "px" => Some(Units::Px),
            _ => None,
        }
    }
}

impl fmt::Display for Units {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One entry of `measurements.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementDefinition {
    pub id: String,
    pub kind: MeasurementKind,
    pub points: Vec<String>,
    pub units: Units,
    pub norm_mean: f64,
    pub norm_sd: f64,
}

impl MeasurementDefinition {
    pub fn validate(&self, catalog: &LandmarkCatalog) -> Result<(), DefinitionError> {
        if self.points.len() != self.kind.arity() {
            return Err(DefinitionError::Arity {
                id: self.id.clone(),
                kind: self.kind,
                expected: self.kind.arity(),
                actual: self.points.len(),
            });
        }
        if let Some(unknown) = self.points.iter().find(|p| !catalog.contains(p)) {
            return Err(DefinitionError::UnknownLandmark {
                id: self.id.clone(),
                landmark: unknown.clone(),
            });
        }
        let units_ok = match self.kind {
            MeasurementKind::Distance => self.units == Units::Mm,
            _ => self.units == Units::Deg,
        };
        if !units_ok {
            return Err(DefinitionError::Units {
                id: self.id.clone(),
                kind: self.kind,
                units: self.units,
            });
        }
        if !(self.norm_mean.is_finite() && self.norm_sd.is_finite() && self.norm_sd >= 0.0) {
            return Err(DefinitionError::Norm {
                id: self.id.clone(),
            });
        }
        Ok(())
    }

    pub fn references(&self, landmark: &str) -> bool {
        self.points.iter().any(|p| p == landmark)
    }

    /// Landmark pairs drawn as analysis lines on overlays.
    pub fn segments(&self) -> Vec<(&str, &str)> {
        let p: Vec<&str> = self.points.iter().map(String::as_str).collect();
        match (self.kind, p.as_slice()) {
            (MeasurementKind::Angle3Pt, [a, v, c]) => vec![(a, v), (v, c)],
            (MeasurementKind::AngleLines, [a, b, c, d]) => vec![(a, b), (c, d)],
            (MeasurementKind::Distance, [a, b]) => vec![(a, b)],
            _ => Vec::new(),
        }
    }
}

/// Parses and validates a measurement battery in file order.
pub fn parse_definitions(
    text: &str,
    catalog: &LandmarkCatalog,
) -> Result<Vec<MeasurementDefinition>, DefinitionError> {
    let defs: Vec<MeasurementDefinition> = serde_json::from_str(text)?;
    let mut seen = std::collections::HashSet::new();
    for d in &defs {
        d.validate(catalog)?;
        if !seen.insert(d.id.as_str()) {
            return Err(DefinitionError::Duplicate(d.id.clone()));
        }
    }
    Ok(defs)
}

pub fn load_definitions(
    path: &Path,
    catalog: &LandmarkCatalog,
) -> Result<Vec<MeasurementDefinition>, DefinitionError> {
    parse_definitions(&std::fs::read_to_string(path)?, catalog)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum MeasurementStatus {
    Below,
    Within,
    Above,
    Unavailable,
}

impl MeasurementStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            MeasurementStatus::Below => "BELOW",
            MeasurementStatus::Within => "WITHIN",
            MeasurementStatus::Above => "ABOVE",
            MeasurementStatus::Unavailable => "UNAVAILABLE",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "BELOW" => Some(MeasurementStatus::Below),
            "WITHIN" => Some(MeasurementStatus::Within),
            "ABOVE" => Some(MeasurementStatus::Above),
            "UNAVAILABLE" => Some(MeasurementStatus::Unavailable),
            _ => None,
        }
    }

    /// Boundary-inclusive: WITHIN iff `|value - mean| <= k * sd`.
    pub fn classify(value: f64, mean: f64, sd: f64, k: f64) -> Self {
        if (value - mean).abs() <= sd * k {
            MeasurementStatus::Within
        } else if value < mean {
            MeasurementStatus::Below
        } else {
            MeasurementStatus::Above
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementResult {
    pub definition_id: String,
    /// Absent when the result is UNAVAILABLE.
    pub value: Option<f64>,
    /// `px` marks an uncalibrated distance.
    pub units: Units,
    pub status: MeasurementStatus,
    pub inputs_manual: bool,
    /// Pixel length of an uncalibrated distance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pixel_value: Option<f64>,
}

/// Evaluates every definition with the default one-sd normative band.
pub fn evaluate(
    landmarks: &LandmarkSet,
    definitions: &[MeasurementDefinition],
    pixel_spacing: Option<f64>,
) -> Vec<MeasurementResult> {
    evaluate_with_band(landmarks, definitions, pixel_spacing, 1.0)
}

/// Evaluates with a normative band of `k` standard deviations.
pub fn evaluate_with_band(
    landmarks: &LandmarkSet,
    definitions: &[MeasurementDefinition],
    pixel_spacing: Option<f64>,
    k: f64,
) -> Vec<MeasurementResult> {
    definitions
        .iter()
        .map(|d| evaluate_one(landmarks, d, pixel_spacing, k))
        .collect()
}

fn evaluate_one(
    landmarks: &LandmarkSet,
    def: &MeasurementDefinition,
    pixel_spacing: Option<f64>,
    k: f64,
) -> MeasurementResult {
    let unavailable = |units: Units, pixel_value: Option<f64>, inputs_manual: bool| MeasurementResult {
        definition_id: def.id.clone(),
        value: None,
        units,
        status: MeasurementStatus::Unavailable,
        inputs_manual,
        pixel_value,
    };

    let operands: Option<Vec<_>> = def.points.iter().map(|id| landmarks.get(id)).collect();
    let Some(operands) = operands else {
        return unavailable(def.units, None, false);
    };
    let inputs_manual = operands.iter().any(|l| l.provenance == Provenance::Manual);
    let p: Vec<Point> = operands.iter().map(|l| l.point()).collect();

    let value = match (def.kind, p.as_slice()) {
        (MeasurementKind::Angle3Pt, &[a, v, c]) => angle_3pt(a, v, c),
        (MeasurementKind::AngleLines, &[a, b, c, d]) => angle_lines(a, b, c, d),
        (MeasurementKind::Distance, &[a, b]) => match distance(a, b, pixel_spacing) {
            Err(GeometryError::Uncalibrated) => {
                return unavailable(Units::Px, Some(pixel_distance(a, b)), inputs_manual)
            }
            other => other,
        },
        _ => return unavailable(def.units, None, inputs_manual),
    };
    match value {
        Ok(v) => MeasurementResult {
            definition_id: def.id.clone(),
            value: Some(v),
            units: def.units,
            status: MeasurementStatus::classify(v, def.norm_mean, def.norm_sd, k),
            inputs_manual,
            pixel_value: None,
        },
        Err(_) => unavailable(def.units, None, inputs_manual),
    }
}
