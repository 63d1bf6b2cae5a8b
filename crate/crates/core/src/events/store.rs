//! Append-only event store: a versioned binary file of records plus a JSON
//! index for quick inspection.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CategoryRegistry, DetectionVector, EventRecord};
use crate::binio::{read_file, Reader, Writer};
use crate::error::{Error, Result};
use crate::ingest::FEATURE_COUNT;

const MAGIC: &[u8; 4] = b"GSEV";
pub const VERSION: u32 = 1;
/// Upper bound on a single event's span, as a corruption guard.
const MAX_LEN: usize = 1 << 24;

pub const RECORDS_NAME: &str = "events.gse";
pub const INDEX_NAME: &str = "events.json";
pub const CATEGORIES_NAME: &str = "categories.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub id: u64,
    pub start_ts: i64,
    pub end_ts: i64,
    pub vector: DetectionVector,
    pub category: u32,
}

impl From<&EventRecord> for IndexEntry {
    fn from(e: &EventRecord) -> Self {
        Self {
            id: e.id,
            start_ts: e.start_ts,
            end_ts: e.end_ts,
            vector: e.vector,
            category: e.category,
        }
    }
}

fn header() -> Vec<u8> {
    let mut w = Writer::default();
    w.bytes(MAGIC);
    w.u32(VERSION);
    w.buf
}

fn encode_record(w: &mut Writer, e: &EventRecord) {
    w.u64(e.id);
    w.i64(e.start_ts);
    w.i64(e.end_ts);
    w.u64(e.start as u64);
    w.u64(e.len as u64);
    w.u32(u32::from(e.vector.mask()));
    w.u32(e.category);
    w.u64(e.stream.len() as u64);
    w.bytes(e.stream.as_bytes());
    w.u64(e.windows.len() as u64);
    for &i in &e.windows {
        w.u64(i as u64);
    }
    w.f64s(&e.p);
}

fn decode_record(r: &mut Reader<'_>) -> Result<EventRecord> {
    let id = r.u64()?;
    let start_ts = r.i64()?;
    let end_ts = r.i64()?;
    let start = r.u64()? as usize;
    let len = r.len(MAX_LEN)?;
    let mask = r.u32()?;
    if mask >= 1 << FEATURE_COUNT {
        return Err(Error::Corrupt(format!("detection mask {mask:#x}")));
    }
    let category = r.u32()?;
    let n = r.len(1 << 16)?;
    let stream = String::from_utf8(r.take(n)?.to_vec())
        .map_err(|_| Error::Corrupt("stream id is not utf-8".into()))?;
    let nw = r.len(MAX_LEN)?;
    let windows = (0..nw)
        .map(|_| r.u64().map(|v| v as usize))
        .collect::<Result<_>>()?;
    let p = r.f64s(FEATURE_COUNT * MAX_LEN)?;
    let rec = EventRecord {
        id,
        start_ts,
        end_ts,
        start,
        len,
        p,
        vector: DetectionVector::from_mask(mask as u16),
        category,
        stream,
        windows,
    };
    rec.check().map_err(|e| Error::Corrupt(e.to_string()))?;
    Ok(rec)
}

pub fn encode(records: &[EventRecord]) -> Vec<u8> {
    let mut w = Writer { buf: header() };
    for e in records {
        encode_record(&mut w, e);
    }
    w.buf
}

pub fn decode(bytes: &[u8]) -> Result<Vec<EventRecord>> {
    let mut r = Reader::new(bytes);
    r.expect_magic(MAGIC)?;
    r.expect_version(VERSION)?;
    let mut out = Vec::new();
    while !r.is_empty() {
        out.push(decode_record(&mut r)?);
    }
    Ok(out)
}

/// A directory holding the record file, its JSON index and the category registry.
#[derive(Debug, Clone)]
pub struct EventStore {
    pub dir: PathBuf,
}

impl EventStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Appends records, creating the store on first use, and rewrites the index.
    pub fn append(&self, records: &[EventRecord]) -> Result<()> {
        std::fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let path = self.path(RECORDS_NAME);
        let exists = path.exists();
        let mut file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        let mut w = Writer {
            buf: if exists { Vec::new() } else { header() },
        };
        for e in records {
            encode_record(&mut w, e);
        }
        file.write_all(&w.buf).map_err(|e| Error::io(&path, e))?;
        drop(file);
        let all = self.load()?;
        write_json(
            &self.path(INDEX_NAME),
            &all.iter().map(IndexEntry::from).collect::<Vec<_>>(),
        )
    }

    pub fn load(&self) -> Result<Vec<EventRecord>> {
        let path = self.path(RECORDS_NAME);
        if !path.exists() {
            return Ok(Vec::new());
        }
        decode(&read_file(&path)?)
    }

    pub fn save_registry(&self, registry: &CategoryRegistry) -> Result<()> {
        std::fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        write_json(&self.path(CATEGORIES_NAME), registry)
    }

    pub fn load_registry(&self) -> Result<CategoryRegistry> {
        let path = self.path(CATEGORIES_NAME);
        if !path.exists() {
            return Ok(CategoryRegistry::default());
        }
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Removes the record file and index so a rerun starts clean.
    pub fn clear(&self) -> Result<()> {
        for name in [RECORDS_NAME, INDEX_NAME, CATEGORIES_NAME] {
            let p = self.path(name);
            if p.exists() {
                std::fs::remove_file(&p).map_err(|e| Error::io(&p, e))?;
            }
        }
        Ok(())
    }
}

pub(crate) fn write_json<S: Serialize + ?Sized>(path: &Path, value: &S) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
