//! Where a local store's bytes live: memory, one append-log file, or one
//! file per binding.
//!
//! Append-log layout:
//!
//! ```text
//! header:  "XLG1" | 0x01 | store id (16) | policy tag (1)
//! record:  key_len u32 | key | val_len u32 | value | crc32(key ++ value) u32
//! ```
//!
//! All integers are big-endian. A record that runs past end of file, or a
//! final record whose CRC fails, is a torn write and is cut off on open. A
//! CRC failure anywhere else is corruption.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use crate::logfmt::{self, Cursor, BASE_HEADER_LEN};
use crate::store::StoreError;
use crate::types::{Key, StoreId};

pub(crate) const LOG_MAGIC: &[u8; 4] = b"XLG1";
pub(crate) const STORE_HEADER_LEN: usize = BASE_HEADER_LEN + 1;
pub(crate) const META_FILE: &str = "store.meta";
const VALUE_SUFFIX: &str = ".bin";

pub(super) enum Slot {
    Inline(Vec<u8>),
    Log { offset: u64, len: u32 },
    File,
}

pub(super) enum Backend {
    Memory,
    Log { file: File, path: PathBuf, end: u64 },
    Dir { dir: PathBuf },
}

/// State read back from disk: header fields plus bindings in file order.
pub(super) struct Recovered {
    pub id: StoreId,
    pub tag: u8,
    pub entries: Vec<(Key, Slot)>,
}

pub(crate) fn encode_store_header(id: &StoreId, tag: u8) -> Vec<u8> {
    let mut h = logfmt::encode_base_header(LOG_MAGIC, id);
    h.push(tag);
    h
}

/// Returns (id, policy tag) from a store header.
pub(crate) fn decode_store_header(path: &Path, bytes: &[u8]) -> Result<(StoreId, u8), StoreError> {
    if bytes.len() < STORE_HEADER_LEN {
        return Err(StoreError::corrupt(path, 0, "truncated store header"));
    }
    let id = logfmt::decode_base_header(LOG_MAGIC, bytes).map_err(|r| StoreError::corrupt(path, 0, r))?;
    Ok((id, bytes[BASE_HEADER_LEN]))
}

fn sync_parent(path: &Path) -> io::Result<()> {
    #[cfg(unix)]
    {
        let parent = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        File::open(parent)?.sync_all()?;
    }
    #[cfg(not(unix))]
    let _ = path;
    Ok(())
}

#[cfg(unix)]
fn read_exact_at(file: &File, buf: &mut [u8], offset: u64) -> io::Result<()> {
    use std::os::unix::fs::FileExt;
    file.read_exact_at(buf, offset)
}

#[cfg(windows)]
fn read_exact_at(file: &File, mut buf: &mut [u8], mut offset: u64) -> io::Result<()> {
    use std::os::windows::fs::FileExt;
    while !buf.is_empty() {
        match file.seek_read(buf, offset)? {
            0 => return Err(io::ErrorKind::UnexpectedEof.into()),
            n => {
                buf = &mut buf[n..];
                offset += n as u64;
            }
        }
    }
    Ok(())
}

pub(super) fn encode_record(key: &Key, value: &[u8]) -> Vec<u8> {
    let mut rec = Vec::with_capacity(12 + key.len() + value.len());
    rec.extend_from_slice(&(key.len() as u32).to_be_bytes());
    rec.extend_from_slice(key.as_bytes());
    rec.extend_from_slice(&(value.len() as u32).to_be_bytes());
    rec.extend_from_slice(value);
    rec.extend_from_slice(&logfmt::crc32(&[key.as_bytes(), value]).to_be_bytes());
    rec
}

impl Backend {
    pub(super) fn create_log(path: &Path, id: &StoreId, tag: u8) -> Result<Backend, StoreError> {
        let mut file = OpenOptions::new().read(true).append(true).create_new(true).open(path)?;
        file.write_all(&encode_store_header(id, tag))?;
        file.sync_all()?;
        sync_parent(path)?;
        Ok(Backend::Log {
            file,
            path: path.to_path_buf(),
            end: STORE_HEADER_LEN as u64,
        })
    }

    pub(super) fn open_log(path: &Path) -> Result<(Backend, Recovered), StoreError> {
        let bytes = fs::read(path)?;
        let (id, tag) = decode_store_header(path, &bytes)?;
        let mut entries = Vec::new();
        let mut seen: HashMap<Key, (usize, usize)> = HashMap::new();
        let mut cur = Cursor::new(&bytes, STORE_HEADER_LEN);
        let mut committed = STORE_HEADER_LEN;

        while !cur.at_end() {
            let start = cur.pos();
            let Some((key_bytes, value_at, value)) = read_record(&mut cur) else {
                break; // torn tail
            };
            let stored_crc = u32::from_be_bytes(bytes[cur.pos() - 4..cur.pos()].try_into().unwrap());
            if logfmt::crc32(&[key_bytes, value]) != stored_crc {
                if cur.pos() == bytes.len() {
                    break;
                }
                return Err(StoreError::corrupt(path, start as u64, "record checksum mismatch"));
            }
            let key =
                Key::new(key_bytes.to_vec()).map_err(|e| StoreError::corrupt(path, start as u64, e.to_string()))?;
            committed = cur.pos();
            if let Some(&(at, len)) = seen.get(&key) {
                if bytes[at..at + len] != *value {
                    return Err(StoreError::corrupt(
                        path,
                        start as u64,
                        format!("key {key} bound twice"),
                    ));
                }
                continue;
            }
            seen.insert(key.clone(), (value_at, value.len()));
            entries.push((
                key,
                Slot::Log {
                    offset: value_at as u64,
                    len: value.len() as u32,
                },
            ));
        }

        let file = OpenOptions::new().read(true).append(true).open(path)?;
        if committed < bytes.len() {
            file.set_len(committed as u64)?;
            file.sync_all()?;
        }
        Ok((
            Backend::Log {
                file,
                path: path.to_path_buf(),
                end: committed as u64,
            },
            Recovered { id, tag, entries },
        ))
    }

    pub(super) fn create_dir(dir: &Path, id: &StoreId, tag: u8) -> Result<Backend, StoreError> {
        fs::create_dir_all(dir)?;
        write_atomically(dir, META_FILE, &encode_store_header(id, tag))?;
        Ok(Backend::Dir { dir: dir.to_path_buf() })
    }

    pub(super) fn open_dir(dir: &Path) -> Result<(Backend, Recovered), StoreError> {
        let meta_path = dir.join(META_FILE);
        let meta = fs::read(&meta_path)?;
        let (id, tag) = decode_store_header(&meta_path, &meta)?;
        let mut keys = Vec::new();
        for entry in fs::read_dir(dir)? {
            let name = entry?.file_name();
            let Some(name) = name.to_str() else { continue };
            let Some(stem) = name.strip_suffix(VALUE_SUFFIX) else {
                continue;
            };
            if stem.starts_with('.') {
                continue; // leftover temporary from an interrupted write
            }
            let key = Key::from_hex(stem)
                .map_err(|e| StoreError::corrupt(dir.join(name), 0, format!("bad value file name: {e}")))?;
            if key.to_hex() != stem {
                return Err(StoreError::corrupt(
                    dir.join(name),
                    0,
                    "value file name is not canonical hex",
                ));
            }
            keys.push(key);
        }
        // Directory order is arbitrary; key order is at least stable.
        keys.sort();
        let entries = keys.into_iter().map(|k| (k, Slot::File)).collect();
        Ok((Backend::Dir { dir: dir.to_path_buf() }, Recovered { id, tag, entries }))
    }

    pub(super) fn append(&mut self, key: &Key, value: &[u8]) -> Result<Slot, StoreError> {
        match self {
            Backend::Memory => Ok(Slot::Inline(value.to_vec())),
            Backend::Log { file, end, .. } => {
                let rec = encode_record(key, value);
                let written = file.write_all(&rec).and_then(|_| file.sync_data());
                if let Err(e) = written {
                    // Drop any partial record so later appends stay contiguous.
                    let _ = file.set_len(*end);
                    return Err(e.into());
                }
                let offset = *end + 8 + key.len() as u64;
                *end += rec.len() as u64;
                Ok(Slot::Log {
                    offset,
                    len: value.len() as u32,
                })
            }
            Backend::Dir { dir } => {
                write_atomically(dir, &value_file_name(key), value)?;
                Ok(Slot::File)
            }
        }
    }

    pub(super) fn read(&self, key: &Key, slot: &Slot) -> Result<Vec<u8>, StoreError> {
        match (self, slot) {
            (_, Slot::Inline(v)) => Ok(v.clone()),
            (Backend::Log { file, .. }, Slot::Log { offset, len }) => {
                let mut buf = vec![0u8; *len as usize];
                read_exact_at(file, &mut buf, *offset)?;
                Ok(buf)
            }
            (Backend::Dir { dir }, Slot::File) => Ok(fs::read(dir.join(value_file_name(key)))?),
            _ => unreachable!("slot kind always matches its backend"),
        }
    }

    pub(super) fn location(&self) -> Option<&Path> {
        match self {
            Backend::Memory => None,
            Backend::Log { path, .. } => Some(path),
            Backend::Dir { dir } => Some(dir),
        }
    }
}

/// Returns (key bytes, value offset, value bytes); `None` when the record
/// runs past the end of the buffer. The CRC field is consumed but not checked.
fn read_record<'a>(cur: &mut Cursor<'a>) -> Option<(&'a [u8], usize, &'a [u8])> {
    let key_len = cur.u32()? as usize;
    let key = cur.take(key_len)?;
    let val_len = cur.u32()? as usize;
    let value_at = cur.pos();
    let value = cur.take(val_len)?;
    cur.u32()?;
    Some((key, value_at, value))
}

pub(crate) fn value_file_name(key: &Key) -> String {
    format!("{}{VALUE_SUFFIX}", key.to_hex())
}

fn write_atomically(dir: &Path, name: &str, bytes: &[u8]) -> io::Result<()> {
    let tmp = dir.join(format!(".{name}.tmp{VALUE_SUFFIX}"));
    let target = dir.join(name);
    let mut f = File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    drop(f);
    fs::rename(&tmp, &target)?;
    sync_parent(&target)
}
