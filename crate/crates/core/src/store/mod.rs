//! The store contract and its local implementations.
//!
//! A store is an append-only set of key → bit-string bindings. Nothing is
//! ever removed or overwritten; `put_with_key` on an existing key succeeds
//! only when it restates the identical binding.

use std::io;
use std::path::PathBuf;
use std::sync::Arc;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::types::{BitString, InvalidValue, Key, StoreId};

mod backend;
mod local;

pub use local::{inspect, LocalStore, StoreSnapshot};

/// Default length of keys drawn by the random policy.
pub const DEFAULT_RANDOM_KEY_LEN: usize = 16;

/// How many fresh random keys `put` draws before giving up.
pub const RANDOM_KEY_ATTEMPTS: usize = 8;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("unknown key {0}")]
    UnknownKey(Key),
    #[error("key {0} is already bound to a different value")]
    KeyConflict(Key),
    #[error("key {key} does not match the content digest {digest}")]
    KeyMismatch { key: Key, digest: Key },
    #[error("could not generate an unused key after {0} attempts")]
    KeyExhausted(usize),
    #[error("invalid key policy: {0}")]
    InvalidPolicy(String),
    #[error("store was created with policy tag {found:#04x}, requested {requested:#04x}")]
    PolicyMismatch { requested: u8, found: u8 },
    #[error("corrupt store at {}: {reason} (offset {offset})", path.display())]
    Corrupt { path: PathBuf, offset: u64, reason: String },
    #[error("{address} is unreachable: {source}")]
    Unreachable {
        address: String,
        #[source]
        source: io::Error,
    },
    #[error("no candidate store could be reached")]
    AllTargetsUnreachable,
    #[error("no writable target for put")]
    NoWritableTarget,
    #[error("this store does not accept remote connections")]
    RemoteAccessDisabled,
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("remote store failed: {0}")]
    Remote(String),
    #[error(transparent)]
    InvalidValue(#[from] InvalidValue),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl StoreError {
    pub(crate) fn corrupt(path: impl Into<PathBuf>, offset: u64, reason: impl Into<String>) -> Self {
        StoreError::Corrupt {
            path: path.into(),
            offset,
            reason: reason.into(),
        }
    }

    /// True for failures of the underlying medium or data rather than the
    /// caller's request.
    pub fn is_storage_failure(&self) -> bool {
        matches!(
            self,
            StoreError::Corrupt { .. } | StoreError::Io(_) | StoreError::PolicyMismatch { .. }
        )
    }
}

/// Append-only key → bit-string storage.
///
/// Implementations are shareable across threads and every operation is
/// linearizable with respect to the others on the same instance.
pub trait Store: Send + Sync {
    /// Inserts `value` and returns the key the store chose for it.
    fn put(&self, value: &[u8]) -> Result<Key, StoreError>;

    /// Returns the exact bytes bound to `key`, or `UnknownKey`.
    fn get(&self, key: &Key) -> Result<BitString, StoreError>;

    /// Inserts `value` under a caller-chosen key. Restating an existing
    /// binding is a no-op; binding a key to a second value is `KeyConflict`.
    fn put_with_key(&self, value: &[u8], key: &Key) -> Result<(), StoreError>;

    fn store_id(&self) -> Result<StoreId, StoreError>;

    /// Whether this store may be exposed to other stores over the network.
    fn accepts_remote(&self) -> bool {
        true
    }
}

impl<S: Store + ?Sized> Store for Arc<S> {
    fn put(&self, value: &[u8]) -> Result<Key, StoreError> {
        (**self).put(value)
    }
    fn get(&self, key: &Key) -> Result<BitString, StoreError> {
        (**self).get(key)
    }
    fn put_with_key(&self, value: &[u8], key: &Key) -> Result<(), StoreError> {
        (**self).put_with_key(value, key)
    }
    fn store_id(&self) -> Result<StoreId, StoreError> {
        (**self).store_id()
    }
    fn accepts_remote(&self) -> bool {
        (**self).accepts_remote()
    }
}

impl<S: Store + ?Sized> Store for &S {
    fn put(&self, value: &[u8]) -> Result<Key, StoreError> {
        (**self).put(value)
    }
    fn get(&self, key: &Key) -> Result<BitString, StoreError> {
        (**self).get(key)
    }
    fn put_with_key(&self, value: &[u8], key: &Key) -> Result<(), StoreError> {
        (**self).put_with_key(value, key)
    }
    fn store_id(&self) -> Result<StoreId, StoreError> {
        (**self).store_id()
    }
    fn accepts_remote(&self) -> bool {
        (**self).accepts_remote()
    }
}

/// How a store chooses keys for `put`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeyPolicy {
    /// Keys of `key_len` bytes from the OS entropy source.
    Random { key_len: usize },
    /// 8-byte big-endian counter starting at 1.
    Sequence,
    /// SHA-256 digest of the value; equal values get equal keys in every store.
    ContentHash,
}

impl KeyPolicy {
    pub const RANDOM_TAG: u8 = 0x01;
    pub const SEQUENCE_TAG: u8 = 0x02;
    pub const CONTENT_HASH_TAG: u8 = 0x03;

    pub fn random() -> Self {
        KeyPolicy::Random {
            key_len: DEFAULT_RANDOM_KEY_LEN,
        }
    }

    /// Tag byte written to store headers.
    pub fn tag(&self) -> u8 {
        match self {
            KeyPolicy::Random { .. } => Self::RANDOM_TAG,
            KeyPolicy::Sequence => Self::SEQUENCE_TAG,
            KeyPolicy::ContentHash => Self::CONTENT_HASH_TAG,
        }
    }

    /// The policy a header tag denotes, with default parameters.
    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            Self::RANDOM_TAG => Some(KeyPolicy::random()),
            Self::SEQUENCE_TAG => Some(KeyPolicy::Sequence),
            Self::CONTENT_HASH_TAG => Some(KeyPolicy::ContentHash),
            _ => None,
        }
    }

    /// Name used in store images and on the command line.
    pub fn label(&self) -> &'static str {
        match self {
            KeyPolicy::Random { .. } => "random",
            KeyPolicy::Sequence => "sequence",
            KeyPolicy::ContentHash => "content-hash",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        match label {
            "random" => Some(KeyPolicy::random()),
            "sequence" => Some(KeyPolicy::Sequence),
            "content-hash" => Some(KeyPolicy::ContentHash),
            _ => None,
        }
    }

    pub(crate) fn validate(&self) -> Result<(), StoreError> {
        match *self {
            KeyPolicy::Random { key_len } if key_len == 0 || key_len > crate::types::MAX_KEY_LEN => {
                Err(StoreError::InvalidPolicy(format!(
                    "random key length {key_len} outside 1..={}",
                    crate::types::MAX_KEY_LEN
                )))
            }
            _ => Ok(()),
        }
    }
}

/// On-disk organisation of a persistent local store.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    /// Every binding appended to one log file.
    AppendLog,
    /// A directory holding one file per binding, named by key hex.
    FilePerKey,
}

/// The key a content-hash store assigns to `value`.
pub fn content_key(value: &[u8]) -> Key {
    Key::new(Sha256::digest(value).to_vec()).expect("digest is 32 bytes")
}

/// The key a sequence store issues for counter value `n`.
pub fn sequence_key(n: u64) -> Key {
    Key::new(n.to_be_bytes().to_vec()).expect("8 bytes")
}
