//! Universal value types shared by every component.
//!
//! Keys, names and instance identifiers validate their invariants on
//! construction; invalid input is rejected rather than normalized. The
//! canonical text form of every binary type is lowercase hex.

use std::fmt;

use rand::RngCore;
use thiserror::Error;

/// An uninterpreted byte sequence: the unit of storage.
pub type BitString = Vec<u8>;

/// Longest key any store will accept or issue.
pub const MAX_KEY_LEN: usize = 1024;

/// Longest name, measured in UTF-8 bytes.
pub const MAX_NAME_LEN: usize = 4096;

/// Length in bytes of store and namer instance identifiers.
pub const INSTANCE_ID_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InvalidValue {
    #[error("key is empty")]
    EmptyKey,
    #[error("key is {0} bytes, the limit is {MAX_KEY_LEN}")]
    KeyTooLong(usize),
    #[error("name is empty")]
    EmptyName,
    #[error("name is {0} bytes, the limit is {MAX_NAME_LEN}")]
    NameTooLong(usize),
    #[error("name contains a NUL character")]
    NulInName,
    #[error("instance id must be {INSTANCE_ID_LEN} bytes, got {0}")]
    InstanceIdLength(usize),
    #[error("invalid hex: {0}")]
    Hex(String),
}

/// Store-issued (or caller-supplied) opaque identifier for a stored value.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Key(Vec<u8>);

impl Key {
    pub fn new(bytes: impl Into<Vec<u8>>) -> Result<Self, InvalidValue> {
        let bytes = bytes.into();
        if bytes.is_empty() {
            return Err(InvalidValue::EmptyKey);
        }
        if bytes.len() > MAX_KEY_LEN {
            return Err(InvalidValue::KeyTooLong(bytes.len()));
        }
        Ok(Key(bytes))
    }

    pub fn from_hex(text: &str) -> Result<Self, InvalidValue> {
        Key::new(decode_hex(text)?)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(&self.0)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    /// Always false; keys are nonempty by construction.
    pub fn is_empty(&self) -> bool {
        false
    }
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Key({})", self.to_hex())
    }
}

impl AsRef<[u8]> for Key {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

/// Human-readable symbolic identifier managed by namers.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Name(String);

impl Name {
    pub fn new(text: impl Into<String>) -> Result<Self, InvalidValue> {
        let text = text.into();
        if text.is_empty() {
            return Err(InvalidValue::EmptyName);
        }
        if text.len() > MAX_NAME_LEN {
            return Err(InvalidValue::NameTooLong(text.len()));
        }
        if text.contains('\0') {
            return Err(InvalidValue::NulInName);
        }
        Ok(Name(text))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Name({:?})", self.0)
    }
}

/// 16-byte identifier drawn from the OS entropy source once per instance.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct InstanceId([u8; INSTANCE_ID_LEN]);

/// Identity of a store instance, as returned by `Store::store_id`.
pub type StoreId = InstanceId;

/// Identity of a namer instance.
pub type NamerId = InstanceId;

impl InstanceId {
    pub fn generate() -> Self {
        let mut bytes = [0u8; INSTANCE_ID_LEN];
        rand::rngs::OsRng.fill_bytes(&mut bytes);
        InstanceId(bytes)
    }

    pub const fn from_array(bytes: [u8; INSTANCE_ID_LEN]) -> Self {
        InstanceId(bytes)
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self, InvalidValue> {
        let arr: [u8; INSTANCE_ID_LEN] = bytes
            .try_into()
            .map_err(|_| InvalidValue::InstanceIdLength(bytes.len()))?;
        Ok(InstanceId(arr))
    }

    pub fn from_hex(text: &str) -> Result<Self, InvalidValue> {
        InstanceId::from_slice(&decode_hex(text)?)
    }

    pub fn as_bytes(&self) -> &[u8; INSTANCE_ID_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Display for InstanceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for InstanceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "InstanceId({})", self.to_hex())
    }
}

/// Strict lowercase-or-uppercase hex decoding; odd lengths are rejected.
pub fn decode_hex(text: &str) -> Result<Vec<u8>, InvalidValue> {
    hex::decode(text).map_err(|e| InvalidValue::Hex(e.to_string()))
}
