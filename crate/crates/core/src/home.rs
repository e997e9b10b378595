//! Per-user bootstrap: the root store and root namer.
//!
//! The home directory is `$XBASE_HOME`, or `<user data dir>/xbase` when the
//! variable is unset. The root store is the append-log, content-hash store
//! at `<home>/root.store`; the root namer is the log at `<home>/root.namer`.
//! Both are created on first use and shared within a process.

use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock};

use thiserror::Error;

use crate::namer::{NamerError, PersistentNamer};
use crate::store::{KeyPolicy, Layout, LocalStore, StoreError};

pub const HOME_ENV: &str = "XBASE_HOME";
pub const ROOT_STORE_FILE: &str = "root.store";
pub const ROOT_NAMER_FILE: &str = "root.namer";

#[derive(Debug, Error)]
pub enum HomeError {
    #[error("no {HOME_ENV} set and no user data directory on this platform")]
    NoHome,
    #[error("cannot use {}: {source}", path.display())]
    Unwritable {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Namer(#[from] NamerError),
}

/// `$XBASE_HOME` if set and nonempty, else the platform data directory
/// joined with `xbase`.
pub fn resolve_home() -> Result<PathBuf, HomeError> {
    match std::env::var_os(HOME_ENV) {
        Some(v) if !v.is_empty() => Ok(PathBuf::from(v)),
        _ => fallback_home().ok_or(HomeError::NoHome),
    }
}

pub fn fallback_home() -> Option<PathBuf> {
    dirs::data_dir().map(|d| d.join("xbase"))
}

fn ensure_dir(home: &Path) -> Result<(), HomeError> {
    fs::create_dir_all(home).map_err(|source| HomeError::Unwritable {
        path: home.to_path_buf(),
        source,
    })
}

fn canonical(home: &Path) -> PathBuf {
    fs::canonicalize(home).unwrap_or_else(|_| home.to_path_buf())
}

static ROOT_STORES: OnceLock<Mutex<HashMap<PathBuf, Arc<LocalStore>>>> = OnceLock::new();
static ROOT_NAMERS: OnceLock<Mutex<HashMap<PathBuf, Arc<PersistentNamer>>>> = OnceLock::new();

/// The root store under `home`; repeated calls in one process return the
/// same instance.
pub fn root_store_at(home: &Path) -> Result<Arc<LocalStore>, HomeError> {
    ensure_dir(home)?;
    let mut stores = ROOT_STORES.get_or_init(Default::default).lock().unwrap();
    let slot = canonical(home);
    if let Some(s) = stores.get(&slot) {
        return Ok(Arc::clone(s));
    }
    let store = Arc::new(LocalStore::open(
        home.join(ROOT_STORE_FILE),
        Layout::AppendLog,
        KeyPolicy::ContentHash,
    )?);
    stores.insert(slot, Arc::clone(&store));
    Ok(store)
}

pub fn root_namer_at(home: &Path) -> Result<Arc<PersistentNamer>, HomeError> {
    ensure_dir(home)?;
    let mut namers = ROOT_NAMERS.get_or_init(Default::default).lock().unwrap();
    let slot = canonical(home);
    if let Some(n) = namers.get(&slot) {
        return Ok(Arc::clone(n));
    }
    let namer = Arc::new(PersistentNamer::open(home.join(ROOT_NAMER_FILE))?);
    namers.insert(slot, Arc::clone(&namer));
    Ok(namer)
}

/// The calling actor's personal, persistent store.
pub fn get_root_store() -> Result<Arc<LocalStore>, HomeError> {
    root_store_at(&resolve_home()?)
}

pub fn get_root_namer() -> Result<Arc<PersistentNamer>, HomeError> {
    root_namer_at(&resolve_home()?)
}
