//! Namer backed by an append-only binding log.
//!
//! ```text
//! header:  "XNM1" | 0x01 | namer id (16)
//! record:  seq u64 | action u8 | name_len u32 | name | key_len u32 | key | crc32 u32
//! ```
//!
//! The CRC covers every preceding byte of the record. Torn tails are
//! handled exactly as in the store log.

use std::collections::BTreeSet;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use super::{Action, BindingRecord, Bindings, Namer, NamerError};
use crate::logfmt::{self, Cursor, BASE_HEADER_LEN};
use crate::types::{Key, Name, NamerId};

const NAMER_MAGIC: &[u8; 4] = b"XNM1";

#[derive(Debug)]
pub struct PersistentNamer {
    id: NamerId,
    path: PathBuf,
    inner: RwLock<Inner>,
}

#[derive(Debug)]
struct Inner {
    bindings: Bindings,
    history: Vec<BindingRecord>,
    file: File,
    end: u64,
}

fn corrupt(path: &Path, offset: usize, reason: impl Into<String>) -> NamerError {
    NamerError::Corrupt {
        path: path.to_path_buf(),
        offset: offset as u64,
        reason: reason.into(),
    }
}

pub(crate) fn encode_record(rec: &BindingRecord) -> Vec<u8> {
    let name = rec.name.as_str().as_bytes();
    let mut out = Vec::with_capacity(21 + name.len() + rec.key.len());
    out.extend_from_slice(&rec.seq.to_be_bytes());
    out.push(rec.action.tag());
    out.extend_from_slice(&(name.len() as u32).to_be_bytes());
    out.extend_from_slice(name);
    out.extend_from_slice(&(rec.key.len() as u32).to_be_bytes());
    out.extend_from_slice(rec.key.as_bytes());
    let crc = logfmt::crc32(&[&out]);
    out.extend_from_slice(&crc.to_be_bytes());
    out
}

enum Scan {
    Record(BindingRecord),
    Torn,
}

fn read_record(path: &Path, buf: &[u8], cur: &mut Cursor<'_>) -> Result<Scan, NamerError> {
    let start = cur.pos();
    let parsed = (|| {
        let seq = cur.u64()?;
        let action = cur.u8()?;
        let name_len = cur.u32()? as usize;
        let name = cur.take(name_len)?;
        let key_len = cur.u32()? as usize;
        let key = cur.take(key_len)?;
        let crc = cur.u32()?;
        Some((seq, action, name, key, crc))
    })();
    let Some((seq, action, name, key, crc)) = parsed else {
        return Ok(Scan::Torn);
    };
    let body_end = cur.pos() - 4;
    if logfmt::crc32(&[&buf[start..body_end]]) != crc {
        if cur.pos() == buf.len() {
            return Ok(Scan::Torn);
        }
        return Err(corrupt(path, start, "record checksum mismatch"));
    }
    let action =
        Action::from_tag(action).ok_or_else(|| corrupt(path, start, format!("unknown action {action:#04x}")))?;
    let name = std::str::from_utf8(name).map_err(|_| corrupt(path, start, "name is not UTF-8"))?;
    let name = Name::new(name).map_err(|e| corrupt(path, start, e.to_string()))?;
    let key = Key::new(key.to_vec()).map_err(|e| corrupt(path, start, e.to_string()))?;
    Ok(Scan::Record(BindingRecord { seq, action, name, key }))
}

impl PersistentNamer {
    /// Opens the namer log at `path`, creating it if absent, and replays
    /// every committed record.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, NamerError> {
        let path = path.as_ref();
        if !path.exists() {
            return Self::create(path, NamerId::generate());
        }
        let bytes = fs::read(path)?;
        if bytes.len() < BASE_HEADER_LEN {
            return Err(corrupt(path, 0, "truncated namer header"));
        }
        let id = logfmt::decode_base_header(NAMER_MAGIC, &bytes).map_err(|r| corrupt(path, 0, r))?;

        let mut bindings = Bindings::default();
        let mut history = Vec::new();
        let mut cur = Cursor::new(&bytes, BASE_HEADER_LEN);
        let mut committed = BASE_HEADER_LEN;
        while !cur.at_end() {
            let start = cur.pos();
            let rec = match read_record(path, &bytes, &mut cur)? {
                Scan::Record(r) => r,
                Scan::Torn => break,
            };
            let expected = history.len() as u64 + 1;
            if rec.seq != expected {
                return Err(corrupt(
                    path,
                    start,
                    format!("sequence {} where {expected} was expected", rec.seq),
                ));
            }
            let applied = match rec.action {
                Action::Bind => bindings.insert(&rec.name, &rec.key),
                Action::Unbind => bindings.remove(&rec.name, &rec.key),
            };
            if !applied {
                return Err(corrupt(
                    path,
                    start,
                    format!("record {} does not change the binding set", rec.seq),
                ));
            }
            history.push(rec);
            committed = cur.pos();
        }

        let file = OpenOptions::new().read(true).append(true).open(path)?;
        if committed < bytes.len() {
            file.set_len(committed as u64)?;
            file.sync_all()?;
        }
        Ok(PersistentNamer {
            id,
            path: path.to_path_buf(),
            inner: RwLock::new(Inner {
                bindings,
                history,
                file,
                end: committed as u64,
            }),
        })
    }

    fn create(path: &Path, id: NamerId) -> Result<Self, NamerError> {
        let mut file = OpenOptions::new().read(true).append(true).create_new(true).open(path)?;
        file.write_all(&logfmt::encode_base_header(NAMER_MAGIC, &id))?;
        file.sync_all()?;
        Ok(PersistentNamer {
            id,
            path: path.to_path_buf(),
            inner: RwLock::new(Inner {
                bindings: Bindings::default(),
                history: Vec::new(),
                file,
                end: BASE_HEADER_LEN as u64,
            }),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Sequence number of the last record; 0 for an empty log.
    pub fn max_seq(&self) -> u64 {
        self.inner.read().unwrap().history.len() as u64
    }

    pub fn history(&self) -> Vec<BindingRecord> {
        self.inner.read().unwrap().history.clone()
    }

    /// The keys `lookup(name)` returned right after record `seq` was
    /// applied. Sequence 0 is the empty namer.
    pub fn lookup_as_of(&self, name: &Name, seq: u64) -> Result<BTreeSet<Key>, NamerError> {
        let inner = self.inner.read().unwrap();
        let max = inner.history.len() as u64;
        if seq > max {
            return Err(NamerError::SeqOutOfRange { seq, max });
        }
        let mut keys = BTreeSet::new();
        for rec in inner.history[..seq as usize].iter().filter(|r| &r.name == name) {
            match rec.action {
                Action::Bind => keys.insert(rec.key.clone()),
                Action::Unbind => keys.remove(&rec.key),
            };
        }
        Ok(keys)
    }

    pub fn snapshot(&self) -> super::NamerSnapshot {
        super::NamerSnapshot {
            id: self.id,
            bindings: self.inner.read().unwrap().bindings.pairs(),
        }
    }

    fn append(inner: &mut Inner, action: Action, name: &Name, key: &Key) -> Result<(), NamerError> {
        let rec = BindingRecord {
            seq: inner.history.len() as u64 + 1,
            action,
            name: name.clone(),
            key: key.clone(),
        };
        let bytes = encode_record(&rec);
        if let Err(e) = inner.file.write_all(&bytes).and_then(|_| inner.file.sync_data()) {
            let _ = inner.file.set_len(inner.end);
            return Err(e.into());
        }
        inner.end += bytes.len() as u64;
        inner.history.push(rec);
        Ok(())
    }
}

impl Namer for PersistentNamer {
    fn bind(&self, name: &Name, key: &Key) -> Result<(), NamerError> {
        let mut inner = self.inner.write().unwrap();
        if inner.bindings.contains(name, key) {
            return Ok(());
        }
        Self::append(&mut inner, Action::Bind, name, key)?;
        inner.bindings.insert(name, key);
        Ok(())
    }

    fn unbind(&self, name: &Name, key: &Key) -> Result<(), NamerError> {
        let mut inner = self.inner.write().unwrap();
        if !inner.bindings.contains(name, key) {
            return Err(NamerError::NotBound {
                name: name.clone(),
                key: key.clone(),
            });
        }
        Self::append(&mut inner, Action::Unbind, name, key)?;
        inner.bindings.remove(name, key);
        Ok(())
    }

    fn lookup(&self, name: &Name) -> BTreeSet<Key> {
        self.inner.read().unwrap().bindings.lookup(name)
    }

    fn namer_id(&self) -> NamerId {
        self.id
    }
}
