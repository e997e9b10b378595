use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{RwLock, RwLockReadGuard, RwLockWriteGuard};

use rand::RngCore;

use super::backend::{decode_store_header, Backend, Slot, META_FILE, STORE_HEADER_LEN};
use super::{content_key, sequence_key, KeyPolicy, Layout, Store, StoreError, RANDOM_KEY_ATTEMPTS};
use crate::types::{BitString, Key, StoreId};

/// A store that keeps its bindings on this node: in memory, in a single
/// append-log file, or in a directory with one file per binding.
///
/// One writer at a time appends; readers share the index concurrently.
pub struct LocalStore {
    id: StoreId,
    policy: KeyPolicy,
    accept_remote: AtomicBool,
    state: RwLock<State>,
}

struct State {
    index: HashMap<Key, Slot>,
    order: Vec<Key>,
    /// Next sequence number; kept above every 8-byte key already bound.
    seq_next: u64,
    backend: Backend,
}

/// A consistent copy of a store's contents, used by the store caster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoreSnapshot {
    pub id: StoreId,
    pub policy: KeyPolicy,
    /// Present only for sequence stores.
    pub seq_next: Option<u64>,
    /// Bindings in insertion order (key order for reopened file-per-key stores).
    pub entries: Vec<(Key, BitString)>,
}

/// Reports the layout and policy tag of an existing store at `path`, or
/// `None` if nothing is there yet.
pub fn inspect(path: &Path) -> Result<Option<(Layout, u8)>, StoreError> {
    if path.is_dir() {
        let meta = path.join(META_FILE);
        if !meta.exists() {
            return Ok(None);
        }
        let bytes = fs::read(&meta)?;
        let (_, tag) = decode_store_header(&meta, &bytes)?;
        Ok(Some((Layout::FilePerKey, tag)))
    } else if path.exists() {
        let bytes = read_prefix(path, STORE_HEADER_LEN)?;
        let (_, tag) = decode_store_header(path, &bytes)?;
        Ok(Some((Layout::AppendLog, tag)))
    } else {
        Ok(None)
    }
}

fn read_prefix(path: &Path, n: usize) -> std::io::Result<Vec<u8>> {
    use std::io::Read;
    let mut buf = Vec::with_capacity(n);
    fs::File::open(path)?.take(n as u64).read_to_end(&mut buf)?;
    Ok(buf)
}

impl LocalStore {
    /// A transient store held entirely in memory.
    pub fn memory(policy: KeyPolicy) -> Result<Self, StoreError> {
        policy.validate()?;
        Ok(Self::assemble(StoreId::generate(), policy, Backend::Memory))
    }

    /// Opens the store at `path`, creating it with a fresh id if nothing
    /// exists there yet. An existing store must carry the same policy tag.
    pub fn open(path: impl AsRef<Path>, layout: Layout, policy: KeyPolicy) -> Result<Self, StoreError> {
        let path = path.as_ref();
        policy.validate()?;
        let fresh = match layout {
            Layout::AppendLog => !path.exists(),
            Layout::FilePerKey => !path.join(META_FILE).exists() && dir_is_empty_or_missing(path)?,
        };
        if fresh {
            return Self::create(path, layout, StoreId::generate(), policy);
        }
        let (backend, recovered) = match layout {
            Layout::AppendLog => Backend::open_log(path)?,
            Layout::FilePerKey => Backend::open_dir(path)?,
        };
        if recovered.tag != policy.tag() {
            return Err(StoreError::PolicyMismatch {
                requested: policy.tag(),
                found: recovered.tag,
            });
        }
        let store = Self::assemble(recovered.id, policy, backend);
        {
            let mut st = store.state.write().unwrap();
            for (key, slot) in recovered.entries {
                st.record(&policy, key, slot);
            }
        }
        Ok(store)
    }

    /// Opens an existing store using the policy recorded in its header.
    pub fn open_existing(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref();
        let (layout, tag) = inspect(path)?.ok_or_else(|| {
            StoreError::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("no store at {}", path.display()),
            ))
        })?;
        let policy = KeyPolicy::from_tag(tag).ok_or_else(|| {
            StoreError::corrupt(
                path,
                (STORE_HEADER_LEN - 1) as u64,
                format!("unknown policy tag {tag:#04x}"),
            )
        })?;
        Self::open(path, layout, policy)
    }

    fn create(path: &Path, layout: Layout, id: StoreId, policy: KeyPolicy) -> Result<Self, StoreError> {
        let backend = match layout {
            Layout::AppendLog => Backend::create_log(path, &id, policy.tag())?,
            Layout::FilePerKey => Backend::create_dir(path, &id, policy.tag())?,
        };
        Ok(Self::assemble(id, policy, backend))
    }

    fn assemble(id: StoreId, policy: KeyPolicy, backend: Backend) -> Self {
        LocalStore {
            id,
            policy,
            accept_remote: AtomicBool::new(true),
            state: RwLock::new(State {
                index: HashMap::new(),
                order: Vec::new(),
                seq_next: 1,
                backend,
            }),
        }
    }

    /// Rebuilds a transient store from a snapshot, keeping its id.
    pub fn from_snapshot(snapshot: &StoreSnapshot) -> Result<Self, StoreError> {
        snapshot.policy.validate()?;
        let store = Self::assemble(snapshot.id, snapshot.policy, Backend::Memory);
        store.load_snapshot(snapshot)?;
        Ok(store)
    }

    /// Writes a snapshot out as a new persistent store at `path`, keeping its
    /// id. Fails if anything already exists there.
    pub fn create_from_snapshot(
        path: impl AsRef<Path>,
        layout: Layout,
        snapshot: &StoreSnapshot,
    ) -> Result<Self, StoreError> {
        let path = path.as_ref();
        snapshot.policy.validate()?;
        if path.exists() {
            return Err(StoreError::Io(std::io::Error::new(
                std::io::ErrorKind::AlreadyExists,
                format!("{} already exists", path.display()),
            )));
        }
        let store = Self::create(path, layout, snapshot.id, snapshot.policy)?;
        store.load_snapshot(snapshot)?;
        Ok(store)
    }

    fn load_snapshot(&self, snapshot: &StoreSnapshot) -> Result<(), StoreError> {
        for (key, value) in &snapshot.entries {
            self.put_with_key(value, key)?;
        }
        if let Some(next) = snapshot.seq_next {
            let mut st = self.write();
            st.seq_next = st.seq_next.max(next);
        }
        Ok(())
    }

    pub fn policy(&self) -> KeyPolicy {
        self.policy
    }

    pub fn id(&self) -> StoreId {
        self.id
    }

    /// Filesystem location of a persistent store.
    pub fn location(&self) -> Option<PathBuf> {
        self.read().backend.location().map(Path::to_path_buf)
    }

    pub fn len(&self) -> usize {
        self.read().order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, key: &Key) -> bool {
        self.read().index.contains_key(key)
    }

    /// Keys in insertion order.
    pub fn keys(&self) -> Vec<Key> {
        self.read().order.clone()
    }

    /// The counter value the next sequence `put` will try; `None` for other
    /// policies.
    pub fn next_sequence(&self) -> Option<u64> {
        match self.policy {
            KeyPolicy::Sequence => Some(self.read().seq_next),
            _ => None,
        }
    }

    pub fn set_accepts_remote(&self, accept: bool) {
        self.accept_remote.store(accept, Ordering::Relaxed);
    }

    /// Copies every binding under one read lock, so concurrent puts are
    /// either wholly included or absent.
    pub fn snapshot(&self) -> Result<StoreSnapshot, StoreError> {
        let st = self.read();
        let entries = st
            .order
            .iter()
            .map(|k| Ok((k.clone(), st.backend.read(k, &st.index[k])?)))
            .collect::<Result<Vec<_>, StoreError>>()?;
        Ok(StoreSnapshot {
            id: self.id,
            policy: self.policy,
            seq_next: matches!(self.policy, KeyPolicy::Sequence).then_some(st.seq_next),
            entries,
        })
    }

    fn read(&self) -> RwLockReadGuard<'_, State> {
        self.state.read().unwrap_or_else(|e| e.into_inner())
    }

    fn write(&self) -> RwLockWriteGuard<'_, State> {
        self.state.write().unwrap_or_else(|e| e.into_inner())
    }
}

fn dir_is_empty_or_missing(path: &Path) -> std::io::Result<bool> {
    match fs::read_dir(path) {
        Ok(mut entries) => Ok(entries.next().is_none()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(true),
        Err(e) => Err(e),
    }
}

fn check_value_len(value: &[u8]) -> Result<(), StoreError> {
    if value.len() > u32::MAX as usize {
        return Err(StoreError::InvalidPolicy(format!(
            "value of {} bytes exceeds the 32-bit length limit",
            value.len()
        )));
    }
    Ok(())
}

impl State {
    fn record(&mut self, policy: &KeyPolicy, key: Key, slot: Slot) {
        if matches!(policy, KeyPolicy::Sequence) && key.len() == 8 {
            let n = u64::from_be_bytes(key.as_bytes().try_into().unwrap());
            self.seq_next = self.seq_next.max(n.saturating_add(1));
        }
        self.order.push(key.clone());
        self.index.insert(key, slot);
    }

    fn insert(&mut self, policy: &KeyPolicy, key: Key, value: &[u8]) -> Result<(), StoreError> {
        let slot = self.backend.append(&key, value)?;
        self.record(policy, key, slot);
        Ok(())
    }

    fn value_of(&self, key: &Key) -> Result<Option<Vec<u8>>, StoreError> {
        match self.index.get(key) {
            Some(slot) => self.backend.read(key, slot).map(Some),
            None => Ok(None),
        }
    }
}

impl Store for LocalStore {
    fn put(&self, value: &[u8]) -> Result<Key, StoreError> {
        check_value_len(value)?;
        let mut st = self.write();
        let key = match self.policy {
            KeyPolicy::ContentHash => {
                let key = content_key(value);
                if st.index.contains_key(&key) {
                    return Ok(key);
                }
                key
            }
            KeyPolicy::Sequence => {
                let mut n = st.seq_next;
                loop {
                    if n == u64::MAX {
                        return Err(StoreError::KeyExhausted(1));
                    }
                    let key = sequence_key(n);
                    if !st.index.contains_key(&key) {
                        break key;
                    }
                    n += 1;
                }
            }
            KeyPolicy::Random { key_len } => {
                let mut found = None;
                for _ in 0..RANDOM_KEY_ATTEMPTS {
                    let mut bytes = vec![0u8; key_len];
                    rand::rngs::OsRng.fill_bytes(&mut bytes);
                    let key = Key::new(bytes)?;
                    match st.value_of(&key)? {
                        None => {
                            found = Some(key);
                            break;
                        }
                        Some(existing) if existing == value => return Ok(key),
                        Some(_) => continue,
                    }
                }
                found.ok_or(StoreError::KeyExhausted(RANDOM_KEY_ATTEMPTS))?
            }
        };
        st.insert(&self.policy, key.clone(), value)?;
        Ok(key)
    }

    fn get(&self, key: &Key) -> Result<BitString, StoreError> {
        self.read()
            .value_of(key)?
            .ok_or_else(|| StoreError::UnknownKey(key.clone()))
    }

    fn put_with_key(&self, value: &[u8], key: &Key) -> Result<(), StoreError> {
        check_value_len(value)?;
        if matches!(self.policy, KeyPolicy::ContentHash) {
            let digest = content_key(value);
            if &digest != key {
                return Err(StoreError::KeyMismatch {
                    key: key.clone(),
                    digest,
                });
            }
        }
        let mut st = self.write();
        match st.value_of(key)? {
            Some(existing) if existing == value => Ok(()),
            Some(_) => Err(StoreError::KeyConflict(key.clone())),
            None => st.insert(&self.policy, key.clone(), value),
        }
    }

    fn store_id(&self) -> Result<StoreId, StoreError> {
        Ok(self.id)
    }

    fn accepts_remote(&self) -> bool {
        self.accept_remote.load(Ordering::Relaxed)
    }
}

impl std::fmt::Debug for LocalStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LocalStore")
            .field("id", &self.id)
            .field("policy", &self.policy)
            .field("location", &self.location())
            .finish_non_exhaustive()
    }
}
