//! A store that forwards to a managed set of other stores.
//!
//! Reads try the optional local backing store, then every target in the
//! order it was added. Writes go to exactly one store chosen by the
//! [`PutPolicy`]. Each call works on a snapshot of the target list, so
//! concurrent `add_target`/`remove_target` never tear an in-flight call.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};

use thiserror::Error;

use super::remote::RemoteStore;
use crate::frag::StoreResolver;
use crate::store::{Store, StoreError};
use crate::types::{BitString, Key, StoreId};
use crate::xml::{self, Element};

/// A store the proxy may contact.
#[derive(Clone)]
pub enum TargetRef {
    InProcess(Arc<dyn Store>),
    /// A `host:port` address.
    Remote(String),
}

impl TargetRef {
    pub fn remote(address: impl Into<String>) -> Self {
        TargetRef::Remote(address.into())
    }

    pub fn in_process(store: impl Store + 'static) -> Self {
        TargetRef::InProcess(Arc::new(store))
    }
}

impl PartialEq for TargetRef {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (TargetRef::InProcess(a), TargetRef::InProcess(b)) => std::ptr::addr_eq(Arc::as_ptr(a), Arc::as_ptr(b)),
            (TargetRef::Remote(a), TargetRef::Remote(b)) => a == b,
            _ => false,
        }
    }
}

impl fmt::Debug for TargetRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetRef::InProcess(s) => write!(f, "InProcess({:p})", Arc::as_ptr(s)),
            TargetRef::Remote(a) => write!(f, "Remote({a})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PutPolicy {
    #[default]
    LocalFirst,
    /// Index into the target list at call time.
    Target(usize),
}

#[derive(Clone, Default)]
pub struct ProxyConfig {
    pub put_policy: PutPolicy,
    pub local: Option<Arc<dyn Store>>,
    pub accept_remote: bool,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TargetError {
    #[error("target {0} is already present")]
    DuplicateTarget(String),
    #[error("target {0} is not present")]
    UnknownTarget(String),
    #[error("no address is registered for store {0}")]
    UnknownStoreId(StoreId),
}

/// Which store a probe went to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Candidate {
    Local,
    Target(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Hit,
    Miss,
    Unreachable,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Probe {
    pub candidate: Candidate,
    pub outcome: Outcome,
}

struct Target {
    spec: TargetRef,
    store: Arc<dyn Store>,
}

impl Target {
    fn new(spec: TargetRef) -> Self {
        let store = match &spec {
            TargetRef::InProcess(s) => Arc::clone(s),
            TargetRef::Remote(a) => Arc::new(RemoteStore::new(a.clone())) as Arc<dyn Store>,
        };
        Target { spec, store }
    }
}

pub struct ProxyStore {
    id: StoreId,
    put_policy: PutPolicy,
    local: Option<Arc<dyn Store>>,
    accept_remote: bool,
    targets: RwLock<Arc<Vec<Arc<Target>>>>,
    /// Known store ids of remote targets, kept after the target is removed.
    registry: Mutex<HashMap<StoreId, String>>,
}

impl ProxyStore {
    pub fn new(config: ProxyConfig) -> Self {
        ProxyStore {
            id: StoreId::generate(),
            put_policy: config.put_policy,
            local: config.local,
            accept_remote: config.accept_remote,
            targets: RwLock::new(Arc::new(Vec::new())),
            registry: Mutex::new(HashMap::new()),
        }
    }

    pub fn id(&self) -> StoreId {
        self.id
    }

    fn snapshot(&self) -> Arc<Vec<Arc<Target>>> {
        Arc::clone(&self.targets.read().unwrap())
    }

    pub fn targets(&self) -> Vec<TargetRef> {
        self.snapshot().iter().map(|t| t.spec.clone()).collect()
    }

    /// Adds `target` at the end of the probe order. For a remote target the
    /// store id is fetched if the address answers, so that the target can
    /// later be named by id.
    pub fn add_target(&self, target: TargetRef) -> Result<(), TargetError> {
        let added = {
            let mut guard = self.targets.write().unwrap();
            if guard.iter().any(|t| t.spec == target) {
                return Err(TargetError::DuplicateTarget(describe(&target)));
            }
            let added = Arc::new(Target::new(target));
            let mut next = Vec::clone(&guard);
            next.push(Arc::clone(&added));
            *guard = Arc::new(next);
            added
        };
        if let TargetRef::Remote(address) = &added.spec {
            if let Ok(id) = added.store.store_id() {
                self.registry.lock().unwrap().insert(id, address.clone());
            }
        }
        Ok(())
    }

    /// Adds the remote target previously registered under `id`.
    pub fn add_target_by_id(&self, id: &StoreId) -> Result<(), TargetError> {
        let address = self
            .registry
            .lock()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or(TargetError::UnknownStoreId(*id))?;
        self.add_target(TargetRef::Remote(address))
    }

    pub fn register(&self, id: StoreId, address: impl Into<String>) {
        self.registry.lock().unwrap().insert(id, address.into());
    }

    pub fn registered_address(&self, id: &StoreId) -> Option<String> {
        self.registry.lock().unwrap().get(id).cloned()
    }

    pub fn remove_target(&self, target: &TargetRef) -> Result<(), TargetError> {
        let mut guard = self.targets.write().unwrap();
        let Some(pos) = guard.iter().position(|t| &t.spec == target) else {
            return Err(TargetError::UnknownTarget(describe(target)));
        };
        let mut next = Vec::clone(&guard);
        next.remove(pos);
        *guard = Arc::new(next);
        Ok(())
    }

    /// `get` that also reports every store it asked and what happened.
    pub fn get_traced(&self, key: &Key) -> (Result<BitString, StoreError>, Vec<Probe>) {
        let targets = self.snapshot();
        let candidates = self.local.iter().map(|s| (Candidate::Local, s)).chain(
            targets
                .iter()
                .enumerate()
                .map(|(i, t)| (Candidate::Target(i), &t.store)),
        );

        let mut trace = Vec::new();
        let mut reached_any = false;
        for (candidate, store) in candidates {
            let outcome = match store.get(key) {
                Ok(value) => {
                    trace.push(Probe {
                        candidate,
                        outcome: Outcome::Hit,
                    });
                    return (Ok(value), trace);
                }
                Err(StoreError::UnknownKey(_)) => {
                    reached_any = true;
                    Outcome::Miss
                }
                Err(StoreError::Unreachable { .. } | StoreError::AllTargetsUnreachable) => Outcome::Unreachable,
                Err(e) => {
                    reached_any = true;
                    Outcome::Failed(e.to_string())
                }
            };
            trace.push(Probe { candidate, outcome });
        }
        let err = if reached_any || trace.is_empty() {
            StoreError::UnknownKey(key.clone())
        } else {
            StoreError::AllTargetsUnreachable
        };
        (Err(err), trace)
    }

    fn writable(&self) -> Result<Arc<dyn Store>, StoreError> {
        match self.put_policy {
            PutPolicy::LocalFirst => match &self.local {
                Some(local) => Ok(Arc::clone(local)),
                None => self
                    .snapshot()
                    .first()
                    .map(|t| Arc::clone(&t.store))
                    .ok_or(StoreError::NoWritableTarget),
            },
            PutPolicy::Target(i) => self
                .snapshot()
                .get(i)
                .map(|t| Arc::clone(&t.store))
                .ok_or(StoreError::NoWritableTarget),
        }
    }
}

fn describe(t: &TargetRef) -> String {
    format!("{t:?}")
}

impl Store for ProxyStore {
    fn put(&self, value: &[u8]) -> Result<Key, StoreError> {
        self.writable()?.put(value)
    }

    fn get(&self, key: &Key) -> Result<BitString, StoreError> {
        self.get_traced(key).0
    }

    fn put_with_key(&self, value: &[u8], key: &Key) -> Result<(), StoreError> {
        self.writable()?.put_with_key(value, key)
    }

    /// The proxy's own id; it is a store in its own right.
    fn store_id(&self) -> Result<StoreId, StoreError> {
        Ok(self.id)
    }

    fn accepts_remote(&self) -> bool {
        self.accept_remote
    }
}

impl StoreResolver for ProxyStore {
    fn resolve(&self, id: &StoreId) -> Option<Arc<dyn Store>> {
        if *id == self.id {
            return None;
        }
        if let Some(local) = &self.local {
            if local.store_id().ok().as_ref() == Some(id) {
                return Some(Arc::clone(local));
            }
        }
        let targets = self.snapshot();
        for t in targets.iter() {
            // Remote ids are only consulted through the registry so that
            // resolution never blocks on an unreachable target.
            if let TargetRef::InProcess(s) = &t.spec {
                if s.store_id().ok().as_ref() == Some(id) {
                    return Some(Arc::clone(s));
                }
            }
        }
        let address = self.registered_address(id)?;
        if let Some(t) = targets.iter().find(|t| t.spec == TargetRef::Remote(address.clone())) {
            return Some(Arc::clone(&t.store));
        }
        Some(Arc::new(RemoteStore::new(address)))
    }
}

/// The CLI's persisted proxy settings: an ordered list of remote addresses
/// and a put policy, kept as a small XML file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ProxyFile {
    pub put_policy: PutPolicy,
    pub targets: Vec<String>,
}

#[derive(Debug, Error)]
pub enum ProxyFileError {
    #[error(transparent)]
    Parse(#[from] xml::ParseError),
    #[error("invalid proxy file: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl ProxyFile {
    pub fn to_element(&self) -> Element {
        let policy = match self.put_policy {
            PutPolicy::LocalFirst => "local-first".to_string(),
            PutPolicy::Target(i) => format!("target:{i}"),
        };
        let mut root = Element::new("proxy").with_attr("put-policy", policy);
        for t in &self.targets {
            root = root.with_child(Element::new("target").with_attr("address", t.clone()));
        }
        root
    }

    pub fn from_element(root: &Element) -> Result<Self, ProxyFileError> {
        let invalid = |m: String| ProxyFileError::Invalid(m);
        if root.name != "proxy" {
            return Err(invalid(format!("root element is <{}>", root.name)));
        }
        let put_policy = match root.attr("put-policy") {
            None | Some("local-first") => PutPolicy::LocalFirst,
            Some(p) => p
                .strip_prefix("target:")
                .and_then(|i| i.parse().ok())
                .map(PutPolicy::Target)
                .ok_or_else(|| invalid(format!("unknown put policy {p:?}")))?,
        };
        let mut targets = Vec::new();
        for child in root.child_elements() {
            if child.name != "target" {
                return Err(invalid(format!("unexpected <{}>", child.name)));
            }
            let address = child
                .attr("address")
                .ok_or_else(|| invalid("target without address".into()))?;
            if targets.iter().any(|t| t == address) {
                return Err(invalid(format!("duplicate target {address}")));
            }
            targets.push(address.to_string());
        }
        Ok(ProxyFile { put_policy, targets })
    }

    /// Reads `path`, treating a missing file as the empty configuration.
    pub fn load(path: &Path) -> Result<Self, ProxyFileError> {
        match fs::read(path) {
            Ok(bytes) => Self::from_element(&xml::parse(&bytes)?),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => Err(e.into()),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), ProxyFileError> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let tmp = path.with_extension("xml.tmp");
        fs::write(&tmp, xml::serialize(&self.to_element()))?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn build(&self, local: Option<Arc<dyn Store>>) -> ProxyStore {
        let proxy = ProxyStore::new(ProxyConfig {
            put_policy: self.put_policy,
            local,
            accept_remote: true,
        });
        for t in &self.targets {
            proxy
                .add_target(TargetRef::Remote(t.clone()))
                .expect("file holds no duplicates");
        }
        proxy
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::serve;
    use crate::store::{KeyPolicy, LocalStore};

    fn mem() -> Arc<dyn Store> {
        Arc::new(LocalStore::memory(KeyPolicy::Sequence).unwrap())
    }

    #[test]
    fn target_set_semantics() {
        let proxy = ProxyStore::new(ProxyConfig::default());
        let a = TargetRef::InProcess(mem());
        let b = TargetRef::InProcess(mem());
        proxy.add_target(a.clone()).unwrap();
        proxy.add_target(b.clone()).unwrap();
        proxy.remove_target(&a).unwrap();
        assert_eq!(proxy.targets(), vec![b.clone()]);
        assert!(matches!(proxy.add_target(b), Err(TargetError::DuplicateTarget(_))));
        assert!(matches!(proxy.remove_target(&a), Err(TargetError::UnknownTarget(_))));
        let r = TargetRef::remote("127.0.0.1:1");
        proxy.add_target(r.clone()).unwrap();
        assert!(matches!(proxy.add_target(r), Err(TargetError::DuplicateTarget(_))));
    }

    #[test]
    fn probes_in_insertion_order() {
        let stores: Vec<Arc<dyn Store>> = (0..3)
            .map(|_| Arc::new(LocalStore::memory(KeyPolicy::ContentHash).unwrap()) as Arc<dyn Store>)
            .collect();
        let proxy = ProxyStore::new(ProxyConfig::default());
        for s in &stores {
            proxy.add_target(TargetRef::InProcess(Arc::clone(s))).unwrap();
        }
        let k = stores[2].put(b"third").unwrap();
        let (value, trace) = proxy.get_traced(&k);
        assert_eq!(value.unwrap(), b"third");
        let outcomes: Vec<_> = trace.iter().map(|p| (p.candidate, p.outcome.clone())).collect();
        assert_eq!(
            outcomes,
            [
                (Candidate::Target(0), Outcome::Miss),
                (Candidate::Target(1), Outcome::Miss),
                (Candidate::Target(2), Outcome::Hit),
            ]
        );
    }

    #[test]
    fn local_first() {
        let local = mem();
        let target = mem();
        let proxy = ProxyStore::new(ProxyConfig {
            local: Some(Arc::clone(&local)),
            ..Default::default()
        });
        proxy.add_target(TargetRef::InProcess(Arc::clone(&target))).unwrap();
        let k = proxy.put(b"mine").unwrap();
        assert_eq!(local.get(&k).unwrap(), b"mine");
        assert!(matches!(target.get(&k), Err(StoreError::UnknownKey(_))));
        let (_, trace) = proxy.get_traced(&k);
        assert_eq!(
            trace,
            [Probe {
                candidate: Candidate::Local,
                outcome: Outcome::Hit
            }]
        );
    }

    #[test]
    fn no_writable_target() {
        let proxy = ProxyStore::new(ProxyConfig::default());
        assert!(matches!(proxy.put(b"x"), Err(StoreError::NoWritableTarget)));
        let proxy = ProxyStore::new(ProxyConfig {
            put_policy: PutPolicy::Target(1),
            ..Default::default()
        });
        proxy.add_target(TargetRef::InProcess(mem())).unwrap();
        assert!(matches!(proxy.put(b"x"), Err(StoreError::NoWritableTarget)));
    }

    #[test]
    fn unknown_vs_unreachable() {
        let dead = || {
            let port = std::net::TcpListener::bind("127.0.0.1:0")
                .unwrap()
                .local_addr()
                .unwrap()
                .port();
            TargetRef::remote(format!("127.0.0.1:{port}"))
        };
        let proxy = ProxyStore::new(ProxyConfig::default());
        let k = Key::new(vec![7]).unwrap();
        assert!(matches!(proxy.get(&k), Err(StoreError::UnknownKey(_))));
        proxy.add_target(dead()).unwrap();
        assert!(matches!(proxy.get(&k), Err(StoreError::AllTargetsUnreachable)));
        proxy.add_target(TargetRef::InProcess(mem())).unwrap();
        let (res, trace) = proxy.get_traced(&k);
        assert!(matches!(res, Err(StoreError::UnknownKey(_))));
        assert_eq!(trace[0].outcome, Outcome::Unreachable);
        assert_eq!(trace[1].outcome, Outcome::Miss);
    }

    #[test]
    fn registry_by_store_id() {
        let served = Arc::new(LocalStore::memory(KeyPolicy::Sequence).unwrap());
        let server = serve(Arc::clone(&served), "127.0.0.1:0").unwrap();
        let addr = server.local_addr().to_string();
        let proxy = ProxyStore::new(ProxyConfig::default());
        let t = TargetRef::remote(addr.clone());
        proxy.add_target(t.clone()).unwrap();
        assert_eq!(proxy.registered_address(&served.id()), Some(addr));
        proxy.remove_target(&t).unwrap();
        proxy.add_target_by_id(&served.id()).unwrap();
        assert_eq!(proxy.targets(), vec![t]);
        assert!(proxy.resolve(&served.id()).is_some());
        assert_eq!(
            proxy.add_target_by_id(&StoreId::from_array([0; 16])),
            Err(TargetError::UnknownStoreId(StoreId::from_array([0; 16])))
        );
    }

    #[test]
    fn proxy_has_its_own_id() {
        let proxy = ProxyStore::new(ProxyConfig::default());
        let target = mem();
        proxy.add_target(TargetRef::InProcess(Arc::clone(&target))).unwrap();
        assert_eq!(proxy.store_id().unwrap(), proxy.id());
        assert_ne!(proxy.store_id().unwrap(), target.store_id().unwrap());
    }

    #[test]
    fn proxy_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("proxy.xml");
        assert_eq!(ProxyFile::load(&path).unwrap(), ProxyFile::default());
        let f = ProxyFile {
            put_policy: PutPolicy::Target(1),
            targets: vec!["a:1".into(), "b:2".into()],
        };
        f.save(&path).unwrap();
        assert_eq!(ProxyFile::load(&path).unwrap(), f);
        assert_eq!(
            fs::read_to_string(&path).unwrap(),
            r#"<proxy put-policy="target:1"><target address="a:1"/><target address="b:2"/></proxy>"#
        );
    }
}
