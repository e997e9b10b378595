//! Generic storage building blocks.
//!
//! Four orthogonal components compose into storage systems:
//!
//! * [`store`]: append-only key → bit-string storage (memory, log file,
//!   file-per-key, remote, proxy).
//! * [`namer`]: a mutable many-to-many mapping from names to keys; the only
//!   place where "update" happens.
//! * [`caster`]: reify/reflect between typed entities and bit-strings.
//! * [`interp`]: bit-string transformers such as compression.
//!
//! [`xml`] and [`frag`] split XML documents into store-resident fragments,
//! [`net`] puts stores on the network, and [`home`] resolves the per-user
//! root store and namer.

pub mod caster;
pub mod frag;
pub mod home;
pub mod interp;
mod logfmt;
pub mod namer;
pub mod net;
pub mod store;
pub mod types;
pub mod xml;

pub use caster::{CastError, Caster, NamerCaster, PersonCaster, PersonRecord, StoreCaster};
pub use interp::{InterpretError, Interpreter};
pub use namer::{MemoryNamer, Namer, NamerError, PersistentNamer};
pub use net::{serve, ProxyStore, RemoteStore, TargetRef};
pub use store::{KeyPolicy, Layout, LocalStore, Store, StoreError};
pub use types::{BitString, InstanceId, InvalidValue, Key, Name, NamerId, StoreId};
