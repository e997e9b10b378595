use std::collections::BTreeSet;
use std::sync::RwLock;

use super::{Bindings, Namer, NamerError};
use crate::types::{Key, Name, NamerId};

/// A transient namer. Save it by reifying it with the namer caster.
#[derive(Debug)]
pub struct MemoryNamer {
    id: NamerId,
    bindings: RwLock<Bindings>,
}

/// The current binding set of a namer, sorted by name then key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NamerSnapshot {
    pub id: NamerId,
    pub bindings: Vec<(Name, Key)>,
}

impl Default for MemoryNamer {
    fn default() -> Self {
        Self::new()
    }
}

impl MemoryNamer {
    pub fn new() -> Self {
        Self::with_id(NamerId::generate())
    }

    pub fn with_id(id: NamerId) -> Self {
        MemoryNamer {
            id,
            bindings: RwLock::new(Bindings::default()),
        }
    }

    pub fn from_snapshot(snapshot: &NamerSnapshot) -> Self {
        let namer = Self::with_id(snapshot.id);
        {
            let mut b = namer.bindings.write().unwrap();
            for (name, key) in &snapshot.bindings {
                b.insert(name, key);
            }
        }
        namer
    }

    pub fn snapshot(&self) -> NamerSnapshot {
        NamerSnapshot {
            id: self.id,
            bindings: self.bindings.read().unwrap().pairs(),
        }
    }
}

impl Namer for MemoryNamer {
    fn bind(&self, name: &Name, key: &Key) -> Result<(), NamerError> {
        self.bindings.write().unwrap().insert(name, key);
        Ok(())
    }

    fn unbind(&self, name: &Name, key: &Key) -> Result<(), NamerError> {
        if self.bindings.write().unwrap().remove(name, key) {
            Ok(())
        } else {
            Err(NamerError::NotBound {
                name: name.clone(),
                key: key.clone(),
            })
        }
    }

    fn lookup(&self, name: &Name) -> BTreeSet<Key> {
        self.bindings.read().unwrap().lookup(name)
    }

    fn namer_id(&self) -> NamerId {
        self.id
    }
}
