//! Namers: the modifiable many-to-many mapping from symbolic names to keys.
//!
//! Stores never change a binding, so "update" lives here: unbind the old
//! key, bind the new one. The persistent namer records every change in an
//! append-only log, which also gives historical views by sequence number.

use std::collections::{BTreeSet, HashMap};
use std::io;
use std::path::PathBuf;
use std::sync::Arc;

use thiserror::Error;

use crate::types::{Key, Name, NamerId};

mod memory;
mod persistent;

pub use memory::{MemoryNamer, NamerSnapshot};
pub use persistent::PersistentNamer;

#[derive(Debug, Error)]
pub enum NamerError {
    #[error("{name} is not bound to {key}")]
    NotBound { name: Name, key: Key },
    #[error("sequence number {seq} is beyond the last record ({max})")]
    SeqOutOfRange { seq: u64, max: u64 },
    #[error("corrupt namer log at {}: {reason} (offset {offset})", path.display())]
    Corrupt { path: PathBuf, offset: u64, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub trait Namer: Send + Sync {
    /// Adds the pair; binding an existing pair again changes nothing.
    fn bind(&self, name: &Name, key: &Key) -> Result<(), NamerError>;

    /// Removes the pair, or reports `NotBound`.
    fn unbind(&self, name: &Name, key: &Key) -> Result<(), NamerError>;

    /// Every key currently bound to `name`; empty for unknown names.
    fn lookup(&self, name: &Name) -> BTreeSet<Key>;

    fn namer_id(&self) -> NamerId;
}

impl<N: Namer + ?Sized> Namer for Arc<N> {
    fn bind(&self, name: &Name, key: &Key) -> Result<(), NamerError> {
        (**self).bind(name, key)
    }
    fn unbind(&self, name: &Name, key: &Key) -> Result<(), NamerError> {
        (**self).unbind(name, key)
    }
    fn lookup(&self, name: &Name) -> BTreeSet<Key> {
        (**self).lookup(name)
    }
    fn namer_id(&self) -> NamerId {
        (**self).namer_id()
    }
}

impl<N: Namer + ?Sized> Namer for &N {
    fn bind(&self, name: &Name, key: &Key) -> Result<(), NamerError> {
        (**self).bind(name, key)
    }
    fn unbind(&self, name: &Name, key: &Key) -> Result<(), NamerError> {
        (**self).unbind(name, key)
    }
    fn lookup(&self, name: &Name) -> BTreeSet<Key> {
        (**self).lookup(name)
    }
    fn namer_id(&self) -> NamerId {
        (**self).namer_id()
    }
}

/// Rebinds `name` so it refers to `key` alone, unbinding whatever it
/// referred to before.
pub fn rebind(namer: &dyn Namer, name: &Name, key: &Key) -> Result<(), NamerError> {
    for old in namer.lookup(name) {
        if &old != key {
            namer.unbind(name, &old)?;
        }
    }
    namer.bind(name, key)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Bind,
    Unbind,
}

impl Action {
    pub(crate) fn tag(self) -> u8 {
        match self {
            Action::Bind => 0x01,
            Action::Unbind => 0x02,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0x01 => Some(Action::Bind),
            0x02 => Some(Action::Unbind),
            _ => None,
        }
    }
}

/// One entry of a persistent namer's history.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BindingRecord {
    pub seq: u64,
    pub action: Action,
    pub name: Name,
    pub key: Key,
}

/// The current name → keys mapping.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub(crate) struct Bindings {
    map: HashMap<Name, BTreeSet<Key>>,
}

impl Bindings {
    pub(crate) fn contains(&self, name: &Name, key: &Key) -> bool {
        self.map.get(name).is_some_and(|keys| keys.contains(key))
    }

    pub(crate) fn insert(&mut self, name: &Name, key: &Key) -> bool {
        self.map.entry(name.clone()).or_default().insert(key.clone())
    }

    pub(crate) fn remove(&mut self, name: &Name, key: &Key) -> bool {
        let Some(keys) = self.map.get_mut(name) else {
            return false;
        };
        let removed = keys.remove(key);
        if keys.is_empty() {
            self.map.remove(name);
        }
        removed
    }

    pub(crate) fn lookup(&self, name: &Name) -> BTreeSet<Key> {
        self.map.get(name).cloned().unwrap_or_default()
    }

    /// All pairs sorted by name, then key.
    pub(crate) fn pairs(&self) -> Vec<(Name, Key)> {
        let mut out: Vec<(Name, Key)> = self
            .map
            .iter()
            .flat_map(|(n, keys)| keys.iter().map(move |k| (n.clone(), k.clone())))
            .collect();
        out.sort();
        out
    }
}
