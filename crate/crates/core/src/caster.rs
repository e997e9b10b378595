//! Casters translate typed entities to and from bit-strings.
//!
//! Three are provided: a person record, a whole local store, and a whole
//! namer. The store and namer casters produce XML images:
//!
//! ```xml
//! <store id="…" policy="sequence" seq-next="3"><entry key="…">hex</entry>…</store>
//! <namer id="…"><binding name="…" key="…"/>…</namer>
//! ```
//!
//! A store image holds bindings in insertion order; a namer image holds the
//! current binding set only, sorted by name then key. Reflecting a store
//! image yields a transient store that keeps the original id.

use std::collections::HashSet;

use thiserror::Error;

use crate::namer::{MemoryNamer, NamerSnapshot};
use crate::store::{content_key, KeyPolicy, LocalStore, StoreError, StoreSnapshot};
use crate::types::{decode_hex, BitString, InstanceId, Key, Name};
use crate::xml::{self, Element, XmlNode};

#[derive(Debug, Error)]
pub enum CastError {
    #[error("invalid representation: {0}")]
    InvalidRepresentation(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

fn invalid(msg: impl Into<String>) -> CastError {
    CastError::InvalidRepresentation(msg.into())
}

pub trait Caster<T> {
    fn reify(&self, entity: &T) -> Result<BitString, CastError>;
    fn reflect(&self, bits: &[u8]) -> Result<T, CastError>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PersonRecord {
    name: String,
    age: u32,
}

impl PersonRecord {
    pub fn new(name: impl Into<String>, age: u32) -> Result<Self, CastError> {
        let name = name.into();
        if name.is_empty() {
            return Err(invalid("person name is empty"));
        }
        Ok(PersonRecord { name, age })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn age(&self) -> u32 {
        self.age
    }
}

/// Casts [`PersonRecord`]s as `<person name="…" age="…"/>`.
#[derive(Debug, Clone, Copy, Default)]
pub struct PersonCaster;

fn parse_root(bits: &[u8], expected: &str) -> Result<Element, CastError> {
    let root = xml::parse(bits).map_err(|e| invalid(e.to_string()))?;
    if root.name != expected {
        return Err(invalid(format!("expected <{expected}>, found <{}>", root.name)));
    }
    Ok(root)
}

fn required<'e>(el: &'e Element, attr: &str) -> Result<&'e str, CastError> {
    el.attr(attr)
        .ok_or_else(|| invalid(format!("<{}> is missing attribute {attr:?}", el.name)))
}

fn reject_unknown_attrs(el: &Element, allowed: &[&str]) -> Result<(), CastError> {
    match el.attributes.iter().find(|(n, _)| !allowed.contains(&n.as_str())) {
        Some((n, _)) => Err(invalid(format!("unexpected attribute {n:?} on <{}>", el.name))),
        None => Ok(()),
    }
}

fn parse_decimal<T: std::str::FromStr>(text: &str, what: &str) -> Result<T, CastError> {
    if text.is_empty() || !text.bytes().all(|b| b.is_ascii_digit()) {
        return Err(invalid(format!("{what} {text:?} is not a decimal number")));
    }
    text.parse()
        .map_err(|_| invalid(format!("{what} {text:?} is out of range")))
}

impl Caster<PersonRecord> for PersonCaster {
    fn reify(&self, p: &PersonRecord) -> Result<BitString, CastError> {
        let el = Element::new("person")
            .with_attr("name", p.name.as_str())
            .with_attr("age", p.age.to_string());
        Ok(xml::serialize(&el))
    }

    fn reflect(&self, bits: &[u8]) -> Result<PersonRecord, CastError> {
        let root = parse_root(bits, "person")?;
        reject_unknown_attrs(&root, &["name", "age"])?;
        if !root.children.is_empty() {
            return Err(invalid("<person> has content"));
        }
        let age = parse_decimal(required(&root, "age")?, "age")?;
        PersonRecord::new(required(&root, "name")?, age)
    }
}

/// Casts a whole [`LocalStore`] to one XML bit-string and back.
#[derive(Debug, Clone, Copy, Default)]
pub struct StoreCaster;

impl StoreCaster {
    pub fn reify_snapshot(&self, snap: &StoreSnapshot) -> BitString {
        let mut root = Element::new("store")
            .with_attr("id", snap.id.to_hex())
            .with_attr("policy", snap.policy.label());
        if let (KeyPolicy::Sequence, Some(next)) = (snap.policy, snap.seq_next) {
            root = root.with_attr("seq-next", next.to_string());
        }
        for (key, value) in &snap.entries {
            let mut entry = Element::new("entry").with_attr("key", key.to_hex());
            if !value.is_empty() {
                entry = entry.with_text(hex::encode(value));
            }
            root = root.with_child(entry);
        }
        xml::serialize(&root)
    }

    pub fn reflect_snapshot(&self, bits: &[u8]) -> Result<StoreSnapshot, CastError> {
        let root = parse_root(bits, "store")?;
        reject_unknown_attrs(&root, &["id", "policy", "seq-next"])?;
        let id = InstanceId::from_hex(required(&root, "id")?).map_err(|e| invalid(format!("store id: {e}")))?;
        let label = required(&root, "policy")?;
        let policy = KeyPolicy::from_label(label).ok_or_else(|| invalid(format!("unknown policy {label:?}")))?;
        let seq_next = match (policy, root.attr("seq-next")) {
            (KeyPolicy::Sequence, Some(v)) => {
                let n: u64 = parse_decimal(v, "seq-next")?;
                if n == 0 {
                    return Err(invalid("seq-next must be at least 1"));
                }
                Some(n)
            }
            (KeyPolicy::Sequence, None) => return Err(invalid("sequence store image lacks seq-next")),
            (_, Some(_)) => return Err(invalid("seq-next is only valid for sequence stores")),
            (_, None) => None,
        };

        let mut entries: Vec<(Key, BitString)> = Vec::new();
        let mut seen = HashSet::new();
        for child in &root.children {
            let entry = match child {
                XmlNode::Element(e) if e.name == "entry" => e,
                XmlNode::Element(e) => return Err(invalid(format!("unexpected <{}> in store image", e.name))),
                XmlNode::Text(_) => return Err(invalid("unexpected text in store image")),
            };
            reject_unknown_attrs(entry, &["key"])?;
            if entry.child_elements().next().is_some() {
                return Err(invalid("<entry> contains elements"));
            }
            let key = Key::from_hex(required(entry, "key")?).map_err(|e| invalid(format!("entry key: {e}")))?;
            let value = decode_hex(&entry.text()).map_err(|e| invalid(format!("entry value: {e}")))?;
            if policy == KeyPolicy::ContentHash && content_key(&value) != key {
                return Err(invalid(format!("entry {key} does not match its content digest")));
            }
            if !seen.insert(key.clone()) {
                return Err(invalid(format!("duplicate entry for key {key}")));
            }
            entries.push((key, value));
        }
        if let Some(next) = seq_next {
            let max = entries
                .iter()
                .filter(|(k, _)| k.len() == 8)
                .map(|(k, _)| u64::from_be_bytes(k.as_bytes().try_into().unwrap()))
                .max();
            if max.is_some_and(|m| m >= next) {
                return Err(invalid("seq-next does not exceed every sequence key"));
            }
        }
        Ok(StoreSnapshot {
            id,
            policy,
            seq_next,
            entries,
        })
    }
}

impl Caster<LocalStore> for StoreCaster {
    fn reify(&self, store: &LocalStore) -> Result<BitString, CastError> {
        Ok(self.reify_snapshot(&store.snapshot()?))
    }

    fn reflect(&self, bits: &[u8]) -> Result<LocalStore, CastError> {
        Ok(LocalStore::from_snapshot(&self.reflect_snapshot(bits)?)?)
    }
}

/// Casts a namer's current bindings to one XML bit-string and back.
#[derive(Debug, Clone, Copy, Default)]
pub struct NamerCaster;

impl NamerCaster {
    pub fn reify_snapshot(&self, snap: &NamerSnapshot) -> BitString {
        let mut root = Element::new("namer").with_attr("id", snap.id.to_hex());
        for (name, key) in &snap.bindings {
            root = root.with_child(
                Element::new("binding")
                    .with_attr("name", name.as_str())
                    .with_attr("key", key.to_hex()),
            );
        }
        xml::serialize(&root)
    }

    pub fn reflect_snapshot(&self, bits: &[u8]) -> Result<NamerSnapshot, CastError> {
        let root = parse_root(bits, "namer")?;
        reject_unknown_attrs(&root, &["id"])?;
        let id = InstanceId::from_hex(required(&root, "id")?).map_err(|e| invalid(format!("namer id: {e}")))?;
        let mut bindings = Vec::new();
        for child in &root.children {
            let b = match child {
                XmlNode::Element(e) if e.name == "binding" => e,
                _ => return Err(invalid("namer image may only contain <binding> elements")),
            };
            reject_unknown_attrs(b, &["name", "key"])?;
            if !b.children.is_empty() {
                return Err(invalid("<binding> has content"));
            }
            let name = Name::new(required(b, "name")?).map_err(|e| invalid(e.to_string()))?;
            let key = Key::from_hex(required(b, "key")?).map_err(|e| invalid(e.to_string()))?;
            bindings.push((name, key));
        }
        bindings.sort();
        bindings.dedup();
        Ok(NamerSnapshot { id, bindings })
    }
}

impl Caster<MemoryNamer> for NamerCaster {
    fn reify(&self, namer: &MemoryNamer) -> Result<BitString, CastError> {
        Ok(self.reify_snapshot(&namer.snapshot()))
    }

    fn reflect(&self, bits: &[u8]) -> Result<MemoryNamer, CastError> {
        Ok(MemoryNamer::from_snapshot(&self.reflect_snapshot(bits)?))
    }
}
