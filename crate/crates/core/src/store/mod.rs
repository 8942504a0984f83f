//! Append-only, day-partitioned record store.
//!
//! Layout under the data directory:
//!
//! ```text
//! days/YYYY-MM-DD.log   framed JSON records, one file per trace date
//! envelopes.idx         `<envelope_id> <YYYY-MM-DD>` per stored record
//! ```
//!
//! A record is committed once its frame is fully on disk. Opening the store
//! truncates torn tails and rebuilds the index from the day files, so an
//! interrupted append leaves either the whole record or nothing.

mod frame;
mod ingest;

use std::collections::HashSet;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use chrono::NaiveDate;
use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trips::Trip;

pub use ingest::{Accepted, IngestError, IngestService};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("corrupt record in {path}: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error("malformed cursor {0:?}")]
    BadCursor(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_owned(), source }
}

/// Source of `received_at` timestamps.
pub trait Clock: Send + Sync {
    fn now(&self) -> i64;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> i64 {
        chrono::Utc::now().timestamp()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FixedClock(pub i64);

impl Clock for FixedClock {
    fn now(&self) -> i64 {
        self.0
    }
}

/// One accepted upload: the sanitized trace and the trips derived from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredRecord {
    pub envelope_id: String,
    pub received_at: i64,
    pub pseudonym: String,
    pub date: NaiveDate,
    /// Sanitized trace in the line format.
    pub trace: String,
    pub trips: Vec<Trip>,
}

impl StoredRecord {
    fn sort_key(&self) -> (NaiveDate, &str, &str) {
        (self.date, &self.pseudonym, &self.envelope_id)
    }

    fn touches_zone(&self, zone: &str) -> bool {
        self.trips
            .iter()
            .any(|t| t.origin_zone() == Some(zone) || t.dest_zone() == Some(zone))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScanFilter {
    pub from: Option<NaiveDate>,
    pub to: Option<NaiveDate>,
    pub pseudonym: Option<String>,
    /// Keeps records with a trip starting or ending in this zone.
    pub zone: Option<String>,
}

impl ScanFilter {
    pub fn matches(&self, r: &StoredRecord) -> bool {
        self.from.is_none_or(|d| r.date >= d)
            && self.to.is_none_or(|d| r.date <= d)
            && self.pseudonym.as_deref().is_none_or(|p| r.pseudonym == p)
            && self.zone.as_deref().is_none_or(|z| r.touches_zone(z))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Page<T> {
    pub items: Vec<T>,
    pub next_cursor: Option<String>,
}

/// Parses a base-10 ordinal cursor.
pub fn parse_cursor(cursor: Option<&str>) -> Result<usize, StoreError> {
    match cursor {
        None => Ok(0),
        Some(c) if !c.is_empty() && c.bytes().all(|b| b.is_ascii_digit()) => {
            c.parse().map_err(|_| StoreError::BadCursor(c.to_owned()))
        }
        Some(c) => Err(StoreError::BadCursor(c.to_owned())),
    }
}

/// Slices `[offset, offset + limit)` out of `items` and computes the cursor
/// of the following page.
pub fn paginate<T: Clone>(items: &[T], cursor: Option<&str>, limit: usize) -> Result<Page<T>, StoreError> {
    let start = parse_cursor(cursor)?;
    if start > items.len() {
        return Err(StoreError::BadCursor(start.to_string()));
    }
    let end = (start + limit.max(1)).min(items.len());
    Ok(Page {
        items: items[start..end].to_vec(),
        next_cursor: (end < items.len()).then(|| end.to_string()),
    })
}

#[derive(Debug, Default)]
struct Snapshot {
    records: Vec<StoredRecord>,
    ids: HashSet<String>,
}

pub struct Store {
    dir: PathBuf,
    clock: Arc<dyn Clock>,
    writer: Mutex<()>,
    snapshot: RwLock<Arc<Snapshot>>,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store").field("dir", &self.dir).finish_non_exhaustive()
    }
}

const INDEX_FILE: &str = "envelopes.idx";
const DAYS_DIR: &str = "days";

fn index_line(r: &StoredRecord) -> String {
    format!("{} {}\n", r.envelope_id, r.date.format("%Y-%m-%d"))
}

impl Store {
    pub fn open(dir: &Path, clock: Arc<dyn Clock>) -> Result<Self, StoreError> {
        let days = dir.join(DAYS_DIR);
        fs::create_dir_all(&days).map_err(io_err(&days))?;
        let mut files: Vec<PathBuf> = fs::read_dir(&days)
            .map_err(io_err(&days))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "log"))
            .collect();
        files.sort();

        let mut snapshot = Snapshot::default();
        let mut index = String::new();
        for path in &files {
            let bytes = fs::read(path).map_err(io_err(path))?;
            let (frames, valid) = frame::decode_all(&bytes);
            for payload in frames {
                let record: StoredRecord = serde_json::from_slice(payload).map_err(|e| {
                    StoreError::Corrupt { path: path.clone(), message: e.to_string() }
                })?;
                if snapshot.ids.insert(record.envelope_id.clone()) {
                    index.push_str(&index_line(&record));
                    snapshot.records.push(record);
                }
            }
            if valid < bytes.len() {
                warn!(
                    "{}: dropping {} bytes of incomplete record",
                    path.display(),
                    bytes.len() - valid
                );
                let f = OpenOptions::new().write(true).open(path).map_err(io_err(path))?;
                f.set_len(valid as u64).map_err(io_err(path))?;
                f.sync_all().map_err(io_err(path))?;
            }
        }
        snapshot.records.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));

        let index_path = dir.join(INDEX_FILE);
        if fs::read_to_string(&index_path).ok().as_deref() != Some(index.as_str()) {
            let tmp = dir.join(format!("{INDEX_FILE}.tmp"));
            fs::write(&tmp, &index).map_err(io_err(&tmp))?;
            File::open(&tmp).and_then(|f| f.sync_all()).map_err(io_err(&tmp))?;
            fs::rename(&tmp, &index_path).map_err(io_err(&index_path))?;
        }

        Ok(Store {
            dir: dir.to_owned(),
            clock,
            writer: Mutex::new(()),
            snapshot: RwLock::new(Arc::new(snapshot)),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn now(&self) -> i64 {
        self.clock.now()
    }

    fn current(&self) -> Arc<Snapshot> {
        self.snapshot.read().expect("snapshot lock").clone()
    }

    pub fn contains(&self, envelope_id: &str) -> bool {
        self.current().ids.contains(envelope_id)
    }

    pub fn len(&self) -> usize {
        self.current().records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Committed records ordered by (date, pseudonym, envelope id).
    pub fn records(&self) -> Vec<StoredRecord> {
        self.current().records.clone()
    }

    /// Appends `record` unless its envelope id is already stored. Returns
    /// whether it was written.
    pub fn append(&self, record: StoredRecord) -> Result<bool, StoreError> {
        let _guard = self.writer.lock().expect("writer lock");
        if self.contains(&record.envelope_id) {
            return Ok(false);
        }
        let payload = serde_json::to_vec(&record).expect("records serialize");
        let day = self
            .dir
            .join(DAYS_DIR)
            .join(format!("{}.log", record.date.format("%Y-%m-%d")));
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&day)
            .map_err(io_err(&day))?;
        f.write_all(&frame::encode(&payload)).map_err(io_err(&day))?;
        f.sync_data().map_err(io_err(&day))?;

        let index_path = self.dir.join(INDEX_FILE);
        let mut idx = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&index_path)
            .map_err(io_err(&index_path))?;
        idx.write_all(index_line(&record).as_bytes()).map_err(io_err(&index_path))?;
        idx.sync_data().map_err(io_err(&index_path))?;

        let old = self.current();
        let mut records = old.records.clone();
        let at = records.partition_point(|r| r.sort_key() < record.sort_key());
        let mut ids = old.ids.clone();
        ids.insert(record.envelope_id.clone());
        records.insert(at, record);
        *self.snapshot.write().expect("snapshot lock") = Arc::new(Snapshot { records, ids });
        Ok(true)
    }

    /// Records matching every predicate of `filter`, paginated.
    pub fn scan(
        &self,
        filter: &ScanFilter,
        cursor: Option<&str>,
        limit: usize,
    ) -> Result<Page<StoredRecord>, StoreError> {
        let snap = self.current();
        let matched: Vec<StoredRecord> = snap
            .records
            .iter()
            .filter(|r| filter.matches(r))
            .cloned()
            .collect();
        paginate(&matched, cursor, limit)
    }
}
