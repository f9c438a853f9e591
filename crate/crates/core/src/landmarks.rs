//! Landmark catalog and decoded landmark sets.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("duplicate landmark id '{0}'")]
    DuplicateId(String),
    #[error("empty landmark id")]
    EmptyId,
    #[error("catalog has no entries")]
    Empty,
    #[error("cannot read catalog: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse catalog: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Auto,
    Manual,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Auto => "auto",
            Provenance::Manual => "manual",
        }
    }
}

/// A located landmark in original-image pixel coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodedLandmark {
    pub id: String,
    pub x: f64,
    pub y: f64,
    /// `None` once a human has moved the point.
    pub confidence: Option<f64>,
    pub provenance: Provenance,
}

impl DecodedLandmark {
    pub fn point(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub id: String,
    pub name: String,
}

/// Ordered landmark definitions; the order is the heatmap channel order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<CatalogEntry>", into = "Vec<CatalogEntry>")]
pub struct LandmarkCatalog {
    entries: Vec<CatalogEntry>,
}

impl LandmarkCatalog {
    pub fn new(entries: Vec<CatalogEntry>) -> Result<Self, CatalogError> {
        if entries.is_empty() {
            return Err(CatalogError::Empty);
        }
        let mut seen = HashSet::new();
        for e in &entries {
            if e.id.is_empty() {
                return Err(CatalogError::EmptyId);
            }
            if !seen.insert(e.id.as_str()) {
                return Err(CatalogError::DuplicateId(e.id.clone()));
            }
        }
        Ok(Self { entries })
    }

    pub fn from_json(text: &str) -> Result<Self, CatalogError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, CatalogError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn entries(&self) -> &[CatalogEntry] {
        &self.entries
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.id.as_str())
    }

    pub fn contains(&self, id: &str) -> bool {
        self.entries.iter().any(|e| e.id == id)
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.id == id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl TryFrom<Vec<CatalogEntry>> for LandmarkCatalog {
    type Error = CatalogError;

    fn try_from(entries: Vec<CatalogEntry>) -> Result<Self, Self::Error> {
        Self::new(entries)
    }
}

impl From<LandmarkCatalog> for Vec<CatalogEntry> {
    fn from(c: LandmarkCatalog) -> Self {
        c.entries
    }
}

/// Landmarks of one image: located points plus ids the decoder could not
/// find. Together they cover the catalog exactly once.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LandmarkSet {
    pub image_ref: String,
    pub points: Vec<DecodedLandmark>,
    pub missing: Vec<String>,
}

impl LandmarkSet {
    pub fn get(&self, id: &str) -> Option<&DecodedLandmark> {
        self.points.iter().find(|p| p.id == id)
    }

    pub fn point(&self, id: &str) -> Option<Point> {
        self.get(id).map(DecodedLandmark::point)
    }

    pub fn is_missing(&self, id: &str) -> bool {
        self.missing.iter().any(|m| m == id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.get(id).is_some() || self.is_missing(id)
    }

    /// Adds catalog ids that appear neither as points nor as missing, keeping
    /// catalog order in the missing list.
    pub fn complete_with(&mut self, catalog: &LandmarkCatalog) {
        for id in catalog.ids() {
            if !self.contains(id) {
                self.missing.push(id.to_string());
            }
        }
    }

    /// Places `id` at a human-chosen position. A previously missing landmark
    /// becomes a point; an existing point keeps its slot in the ordering.
    /// Returns the previous position, if any.
    pub fn set_manual(&mut self, id: &str, x: f64, y: f64) -> Option<Point> {
        if let Some(p) = self.points.iter_mut().find(|p| p.id == id) {
            let old = p.point();
            p.x = x;
            p.y = y;
            p.confidence = None;
            p.provenance = Provenance::Manual;
            return Some(old);
        }
        self.missing.retain(|m| m != id);
        self.points.push(DecodedLandmark {
            id: id.to_string(),
            x,
            y,
            confidence: None,
            provenance: Provenance::Manual,
        });
        None
    }

    /// Checks that points and missing ids are disjoint and duplicate-free.
    pub fn is_consistent(&self) -> bool {
        let mut seen = HashSet::new();
        self.points
            .iter()
            .map(|p| p.id.as_str())
            .chain(self.missing.iter().map(String::as_str))
            .all(|id| seen.insert(id))
    }
}
