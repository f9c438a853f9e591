//! On-disk case persistence.
//!
//! Each case lives in `<root>/<case_id>/` as `image.<ext>`, `case.json` and
//! `history.jsonl`. `case.json` is only ever replaced by atomic rename;
//! history lines are appended and synced before a correction is
//! acknowledged. Every decode bumps a generation counter and history lines
//! carry the generation they belong to, so lines left over from an earlier
//! decode are ignored even if a crash interrupts the history reset.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use ceph_core::image_io::SourceFormat;
use ceph_core::{LandmarkSet, PipelineOutput, Point, StageTimings};
use chrono::{DateTime, Utc};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const CASE_FILE: &str = "case.json";
const HISTORY_FILE: &str = "history.jsonl";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("corrupt case file {path}: {message}")]
    Corrupt { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CaseStatus {
    Uploaded,
    Decoded,
    Reviewed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeRecord {
    pub decoded_at: DateTime<Utc>,
    /// Automatic decode output, before any correction.
    pub landmarks: LandmarkSet,
    pub timings_ms: StageTimings,
}

/// Contents of `case.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub case_id: String,
    pub image_file: String,
    pub source_format: SourceFormat,
    pub width: u32,
    pub height: u32,
    pub pixel_spacing_mm: Option<f64>,
    pub created_at: DateTime<Utc>,
    pub generation: u64,
    /// Set when a reviewed case is re-decoded, so status never moves back.
    #[serde(default)]
    pub reviewed: bool,
    pub decode: Option<DecodeRecord>,
}

/// One line of `history.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub generation: u64,
    pub timestamp: DateTime<Utc>,
    pub landmark_id: String,
    pub old: Option<Point>,
    pub new: Point,
    pub actor: String,
}

/// Immutable committed state of a case.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseState {
    pub record: CaseRecord,
    /// History of the current generation only.
    pub history: Vec<HistoryEntry>,
    pub current: Option<LandmarkSet>,
}

impl CaseState {
    fn new(record: CaseRecord, history: Vec<HistoryEntry>) -> Self {
        let current = record.decode.as_ref().map(|d| replay(&d.landmarks, &history));
        Self {
            record,
            history,
            current,
        }
    }

    pub fn status(&self) -> CaseStatus {
        if self.record.decode.is_none() {
            CaseStatus::Uploaded
        } else if self.record.reviewed || !self.history.is_empty() {
            CaseStatus::Reviewed
        } else {
            CaseStatus::Decoded
        }
    }

    pub fn case_id(&self) -> &str {
        &self.record.case_id
    }
}

/// Applies corrections in order to the automatic decode.
pub fn replay(auto: &LandmarkSet, history: &[HistoryEntry]) -> LandmarkSet {
    let mut set = auto.clone();
    for e in history {
        set.set_manual(&e.landmark_id, e.new.x, e.new.y);
    }
    set
}

/// A case's write lock plus its last committed snapshot. Writers hold
/// `lock()` for the whole read-modify-write; readers clone the snapshot.
#[derive(Debug)]
pub struct CaseSlot {
    dir: PathBuf,
    write: Mutex<()>,
    state: RwLock<Arc<CaseState>>,
}

impl CaseSlot {
    pub fn snapshot(&self) -> Arc<CaseState> {
        self.state.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn lock(&self) -> MutexGuard<'_, ()> {
        self.write.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn image_path(&self) -> PathBuf {
        self.dir.join(&self.snapshot().record.image_file)
    }

    fn publish(&self, state: CaseState) -> Arc<CaseState> {
        let state = Arc::new(state);
        *self.state.write().unwrap_or_else(|e| e.into_inner()) = state.clone();
        state
    }

    /// Commits a fresh automatic decode and starts a new history generation.
    /// Caller must hold `lock()`.
    pub fn commit_decode(
        &self,
        output: &PipelineOutput,
        now: DateTime<Utc>,
    ) -> Result<Arc<CaseState>, StoreError> {
        let prev = self.snapshot();
        let mut record = prev.record.clone();
        record.reviewed = prev.status() == CaseStatus::Reviewed;
        record.generation += 1;
        record.decode = Some(DecodeRecord {
            decoded_at: now,
            landmarks: output.landmarks.clone(),
            timings_ms: output.timings,
        });
        write_json_atomic(&self.dir.join(CASE_FILE), &record)?;
        // stale lines are already ignored by generation; this just reclaims space
        write_atomic(&self.dir.join(HISTORY_FILE), b"")?;
        Ok(self.publish(CaseState::new(record, Vec::new())))
    }

    /// Appends one correction. Caller must hold `lock()` and have checked
    /// that the case is decoded.
    pub fn commit_correction(
        &self,
        landmark_id: &str,
        new: Point,
        actor: &str,
        now: DateTime<Utc>,
    ) -> Result<Arc<CaseState>, StoreError> {
        let prev = self.snapshot();
        let old = prev.current.as_ref().and_then(|c| c.point(landmark_id));
        let entry = HistoryEntry {
            generation: prev.record.generation,
            timestamp: now,
            landmark_id: landmark_id.to_string(),
            old,
            new,
            actor: actor.to_string(),
        };
        let mut line = serde_json::to_vec(&entry).map_err(io::Error::other)?;
        line.push(b'\n');
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.dir.join(HISTORY_FILE))?;
        file.write_all(&line)?;
        file.sync_data()?;
        let mut history = prev.history.clone();
        history.push(entry);
        Ok(self.publish(CaseState::new(prev.record.clone(), history)))
    }
}

#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    cases: RwLock<HashMap<String, Arc<CaseSlot>>>,
}

impl Store {
    /// Opens (creating if needed) `<data_dir>/cases` and loads every case.
    pub fn open(data_dir: &Path) -> Result<Self, StoreError> {
        let root = data_dir.join("cases");
        fs::create_dir_all(&root)?;
        let mut cases = HashMap::new();
        for entry in fs::read_dir(&root)? {
            let dir = entry?.path();
            if !dir.join(CASE_FILE).is_file() {
                // an upload that crashed before its case file landed
                continue;
            }
            let state = load_case(&dir)?;
            cases.insert(
                state.record.case_id.clone(),
                Arc::new(CaseSlot {
                    dir,
                    write: Mutex::new(()),
                    state: RwLock::new(Arc::new(state)),
                }),
            );
        }
        Ok(Self {
            root,
            cases: RwLock::new(cases),
        })
    }

    pub fn get(&self, case_id: &str) -> Option<Arc<CaseSlot>> {
        self.cases
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(case_id)
            .cloned()
    }

    pub fn len(&self) -> usize {
        self.cases.read().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn case_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .cases
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .keys()
            .cloned()
            .collect();
        ids.sort();
        ids
    }

    /// Persists a new case: image bytes verbatim, then `case.json`. The case
    /// exists once `case.json` has been renamed into place.
    pub fn create(
        &self,
        image_bytes: &[u8],
        source_format: SourceFormat,
        width: u32,
        height: u32,
        pixel_spacing_mm: Option<f64>,
        now: DateTime<Utc>,
    ) -> Result<Arc<CaseState>, StoreError> {
        let (case_id, dir) = loop {
            let id = new_case_id();
            let dir = self.root.join(&id);
            match fs::create_dir(&dir) {
                Ok(()) => break (id, dir),
                Err(e) if e.kind() == io::ErrorKind::AlreadyExists => continue,
                Err(e) => return Err(e.into()),
            }
        };
        let image_file = format!("image.{}", source_format.extension());
        write_atomic(&dir.join(&image_file), image_bytes)?;
        let record = CaseRecord {
            case_id: case_id.clone(),
            image_file,
            source_format,
            width,
            height,
            pixel_spacing_mm,
            created_at: now,
            generation: 0,
            reviewed: false,
            decode: None,
        };
        write_json_atomic(&dir.join(CASE_FILE), &record)?;
        let state = Arc::new(CaseState::new(record, Vec::new()));
        let slot = Arc::new(CaseSlot {
            dir,
            write: Mutex::new(()),
            state: RwLock::new(state.clone()),
        });
        self.cases
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(case_id, slot);
        Ok(state)
    }
}

/// 128 random bits as 22 URL-safe base64 characters.
pub fn new_case_id() -> String {
    let mut bytes = [0u8; 16];
    rand::thread_rng().fill_bytes(&mut bytes);
    URL_SAFE_NO_PAD.encode(bytes)
}

fn load_case(dir: &Path) -> Result<CaseState, StoreError> {
    let path = dir.join(CASE_FILE);
    let record: CaseRecord =
        serde_json::from_slice(&fs::read(&path)?).map_err(|e| StoreError::Corrupt {
            path: path.clone(),
            message: e.to_string(),
        })?;
    let history = load_history(&dir.join(HISTORY_FILE), record.generation)?;
    Ok(CaseState::new(record, history))
}

/// Reads the history lines of `generation`. A torn final line (a write
/// that was never acknowledged) is dropped and truncated away so later
/// appends start on a clean line.
fn load_history(path: &Path, generation: u64) -> Result<Vec<HistoryEntry>, StoreError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let lines: Vec<String> = BufReader::new(file).lines().collect::<Result<_, _>>()?;
    let raw = fs::read(path)?;
    let mut entries = Vec::new();
    let mut good_bytes = 0usize;
    for (i, line) in lines.iter().enumerate() {
        match serde_json::from_str::<HistoryEntry>(line) {
            Ok(e) => {
                good_bytes += line.len() + 1;
                if e.generation == generation {
                    entries.push(e);
                }
            }
            Err(_) if i + 1 == lines.len() && !raw.ends_with(b"\n") => {
                write_atomic(path, &raw[..good_bytes])?;
            }
            Err(e) => {
                return Err(StoreError::Corrupt {
                    path: path.to_path_buf(),
                    message: format!("line {}: {e}", i + 1),
                })
            }
        }
    }
    Ok(entries)
}

fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let bytes = serde_json::to_vec_pretty(value).map_err(io::Error::other)?;
    write_atomic(path, &bytes)
}

/// Write to a sibling temp file, sync, rename over `path`, sync the dir.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("file");
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    if let Ok(d) = File::open(dir) {
        let _ = d.sync_all();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ceph_core::{DecodedLandmark, Provenance};

    fn output() -> PipelineOutput {
        PipelineOutput {
            landmarks: LandmarkSet {
                image_ref: "x".into(),
                points: vec![DecodedLandmark {
                    id: "S".into(),
                    x: 10.0,
                    y: 20.0,
                    confidence: Some(0.9),
                    provenance: Provenance::Auto,
                }],
                missing: vec!["N".into()],
            },
            measurements: vec![],
            pixel_spacing_mm: None,
            timings: StageTimings::default(),
        }
    }

    #[test]
    fn case_ids_are_22_url_safe_chars() {
        let id = new_case_id();
        assert_eq!(id.len(), 22);
        assert!(id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_'));
        assert_ne!(id, new_case_id());
    }

    #[test]
    fn lifecycle_survives_reopen() {
        let tmp = tempfile::tempdir().unwrap();
        let store = Store::open(tmp.path()).unwrap();
        let state = store
            .create(b"img", SourceFormat::Png, 64, 64, Some(0.1), Utc::now())
            .unwrap();
        assert_eq!(state.status(), CaseStatus::Uploaded);
        let slot = store.get(state.case_id()).unwrap();
        {
            let _g = slot.lock();
            slot.commit_decode(&output(), Utc::now()).unwrap();
            let s = slot
                .commit_correction("N", Point::new(5.0, 6.0), "test", Utc::now())
                .unwrap();
            assert_eq!(s.status(), CaseStatus::Reviewed);
            assert_eq!(s.current.as_ref().unwrap().point("N"), Some(Point::new(5.0, 6.0)));
        }
        let before = slot.snapshot();
        drop(store);

        let store = Store::open(tmp.path()).unwrap();
        let after = store.get(before.case_id()).unwrap().snapshot();
        assert_eq!(*after, *before);
        assert_eq!(
            fs::read(tmp.path().join("cases").join(before.case_id()).join("image.png")).unwrap(),
            b"img"
        );
    }

    #[test]
    fn redecode_starts_new_generation_and_stays_reviewed() {
        let tmp = tempfile::tempdir().unwrap();
        let store = Store::open(tmp.path()).unwrap();
        let id = store
            .create(b"img", SourceFormat::Png, 64, 64, None, Utc::now())
            .unwrap()
            .case_id()
            .to_string();
        let slot = store.get(&id).unwrap();
        slot.commit_decode(&output(), Utc::now()).unwrap();
        slot.commit_correction("S", Point::new(1.0, 1.0), "t", Utc::now())
            .unwrap();
        let s = slot.commit_decode(&output(), Utc::now()).unwrap();
        assert!(s.history.is_empty());
        assert_eq!(s.status(), CaseStatus::Reviewed);
        assert_eq!(s.current.as_ref().unwrap(), &output().landmarks);
    }

    #[test]
    fn stale_generation_and_torn_line_are_ignored() {
        let tmp = tempfile::tempdir().unwrap();
        let store = Store::open(tmp.path()).unwrap();
        let id = store
            .create(b"img", SourceFormat::Png, 64, 64, None, Utc::now())
            .unwrap()
            .case_id()
            .to_string();
        let slot = store.get(&id).unwrap();
        slot.commit_decode(&output(), Utc::now()).unwrap();
        slot.commit_correction("S", Point::new(1.0, 1.0), "t", Utc::now())
            .unwrap();
        let dir = tmp.path().join("cases").join(&id);
        let good = fs::read(dir.join(HISTORY_FILE)).unwrap();
        // a leftover line from generation 0 plus a torn append
        let mut stale = serde_json::to_vec(&HistoryEntry {
            generation: 0,
            timestamp: Utc::now(),
            landmark_id: "S".into(),
            old: None,
            new: Point::new(9.0, 9.0),
            actor: "t".into(),
        })
        .unwrap();
        stale.push(b'\n');
        let mut contents = stale;
        contents.extend_from_slice(&good);
        contents.extend_from_slice(b"{\"generation\":1,\"times");
        fs::write(dir.join(HISTORY_FILE), &contents).unwrap();
        drop(store);

        let store = Store::open(tmp.path()).unwrap();
        let s = store.get(&id).unwrap().snapshot();
        assert_eq!(s.history.len(), 1);
        assert_eq!(s.current.as_ref().unwrap().point("S"), Some(Point::new(1.0, 1.0)));
        assert!(fs::read(dir.join(HISTORY_FILE)).unwrap().ends_with(b"\n"));
    }
}
