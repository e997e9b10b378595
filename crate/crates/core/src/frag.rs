//! Schema-driven XML fragmentation.
//!
//! A fragmentation schema mirrors the document's element structure. Each
//! element matched by an expanded schema node becomes its own fragment;
//! matched child elements are replaced by `<x-ref>` placeholders. Elements
//! matched by a collapsed node, or not matched at all, stay inline in their
//! parent's fragment.
//!
//! Schema files are XML: `frag:collapse="true"` marks a collapsed node and
//! `<frag:any>` matches any element name not matched by a named sibling.
//!
//! ```xml
//! <library><book frag:collapse="true"/></library>
//! ```
//!
//! Fragments are written children first, so a parent can embed the keys of
//! its children. References take one of three forms:
//!
//! | mode   | attributes                           |
//! |--------|--------------------------------------|
//! | `key`  | `k`                                  |
//! | `name` | `n`                                  |
//! | `self` | `k`, `store-id`, optionally `n`, `namer-id` |

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use thiserror::Error;

use crate::namer::{rebind, Namer, NamerError};
use crate::store::{Store, StoreError};
use crate::types::{InvalidValue, Key, Name, StoreId};
use crate::xml::{self, Element, ParseError, XmlNode};

pub const XREF: &str = "x-ref";
pub const COLLAPSE_ATTR: &str = "frag:collapse";
pub const WILDCARD: &str = "frag:any";

#[derive(Debug, Error)]
pub enum FragError {
    #[error("document contains a reserved <{XREF}> element at {0}")]
    ReservedElement(String),
    #[error("document root <{found}> does not match schema root <{expected}>")]
    SchemaMismatch { expected: String, found: String },
    #[error("invalid fragmentation schema: {0}")]
    InvalidSchema(String),
    #[error("invalid document: {0}")]
    InvalidDocument(String),
    #[error("name references need a namer and a name prefix")]
    MissingNamer,
    #[error("name {name} resolves to {count} keys, expected exactly one")]
    AmbiguousName { name: Name, count: usize },
    #[error("reference cycle through key {0}")]
    CycleDetected(Key),
    #[error("invalid fragment reference: {0}")]
    InvalidReference(String),
    #[error("fragment {key} is not well-formed: {source}")]
    FragmentParse {
        key: Key,
        #[source]
        source: ParseError,
    },
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    InvalidValue(#[from] InvalidValue),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Namer(#[from] NamerError),
}

/// One node of a fragmentation schema. `element == None` is the wildcard.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaNode {
    pub element: Option<String>,
    pub collapse: bool,
    pub children: Vec<SchemaNode>,
}

impl SchemaNode {
    pub fn expanded(element: &str, children: Vec<SchemaNode>) -> Self {
        SchemaNode {
            element: (element != WILDCARD).then(|| element.to_string()),
            collapse: false,
            children,
        }
    }

    pub fn collapsed(element: &str) -> Self {
        SchemaNode {
            element: (element != WILDCARD).then(|| element.to_string()),
            collapse: true,
            children: Vec::new(),
        }
    }

    fn matches(&self, name: &str) -> bool {
        self.element.as_deref().is_none_or(|e| e == name)
    }

    /// A named child wins over the wildcard.
    fn child_for(&self, name: &str) -> Option<&SchemaNode> {
        self.children
            .iter()
            .find(|c| c.element.as_deref() == Some(name))
            .or_else(|| self.children.iter().find(|c| c.element.is_none()))
    }

    fn from_element(el: &Element) -> Result<Self, FragError> {
        let element = (el.name != WILDCARD).then(|| el.name.clone());
        let collapse = match el.attr(COLLAPSE_ATTR) {
            None | Some("false") => false,
            Some("true") => true,
            Some(other) => {
                return Err(FragError::InvalidSchema(format!(
                    "{COLLAPSE_ATTR} must be \"true\" or \"false\", found {other:?}"
                )))
            }
        };
        let mut children = Vec::new();
        if !collapse {
            for child in el.child_elements() {
                let node = SchemaNode::from_element(child)?;
                let clash = children.iter().any(|c: &SchemaNode| c.element == node.element);
                if clash {
                    return Err(FragError::InvalidSchema(format!(
                        "<{}> has two children for <{}>",
                        el.name, child.name
                    )));
                }
                children.push(node);
            }
        }
        Ok(SchemaNode {
            element,
            collapse,
            children,
        })
    }

    pub fn to_element(&self) -> Element {
        let mut el = Element::new(self.element.as_deref().unwrap_or(WILDCARD));
        if self.collapse {
            el.attributes.push((COLLAPSE_ATTR.into(), "true".into()));
        }
        for c in &self.children {
            el.children.push(XmlNode::Element(c.to_element()));
        }
        el
    }
}

/// A parsed fragmentation schema.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FragSchema {
    pub root: SchemaNode,
}

impl FragSchema {
    pub fn new(root: SchemaNode) -> Self {
        FragSchema { root }
    }

    pub fn parse(bytes: &[u8]) -> Result<Self, FragError> {
        Self::from_element(&xml::parse(bytes)?)
    }

    pub fn from_element(el: &Element) -> Result<Self, FragError> {
        Ok(FragSchema {
            root: SchemaNode::from_element(el)?,
        })
    }

    /// A schema that keeps the whole document in a single fragment.
    pub fn collapsed_root(element: &str) -> Self {
        FragSchema::new(SchemaNode::collapsed(element))
    }

    /// Wildcards expanded to `depth` levels: one fragment per element for any
    /// document no deeper than that.
    pub fn fully_expanded(depth: usize) -> Self {
        let mut node = SchemaNode::expanded(WILDCARD, vec![]);
        for _ in 1..depth {
            node = SchemaNode::expanded(WILDCARD, vec![node]);
        }
        FragSchema::new(node)
    }

    pub fn to_xml(&self) -> Vec<u8> {
        xml::serialize(&self.root.to_element())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefMode {
    Key,
    Name,
    SelfDescribing,
}

impl RefMode {
    pub fn label(self) -> &'static str {
        match self {
            RefMode::Key => "key",
            RefMode::Name => "name",
            RefMode::SelfDescribing => "self",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        match label {
            "key" => Some(RefMode::Key),
            "name" => Some(RefMode::Name),
            "self" => Some(RefMode::SelfDescribing),
            _ => None,
        }
    }
}

/// How to reach a document's root fragment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RootRef {
    Key(Key),
    Name(Name),
}

impl std::fmt::Display for RootRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RootRef::Key(k) => write!(f, "{k}"),
            RootRef::Name(n) => write!(f, "{n}"),
        }
    }
}

/// Result of fragmenting a document.
#[derive(Debug, Clone)]
pub struct Fragmented {
    pub root: RootRef,
    /// Keys in the order the fragments were put (children before parents).
    pub fragments: Vec<Key>,
    /// Names bound, in the same order, when names were requested.
    pub names: Vec<Name>,
}

/// Splits documents into fragments and writes them to a store.
pub struct Fragmenter<'a> {
    store: &'a dyn Store,
    mode: RefMode,
    naming: Option<(&'a dyn Namer, String)>,
}

struct Link {
    key: Key,
    name: Option<Name>,
}

impl<'a> Fragmenter<'a> {
    pub fn new(store: &'a dyn Store, mode: RefMode) -> Self {
        Fragmenter {
            store,
            mode,
            naming: None,
        }
    }

    /// Binds every fragment to `prefix/path` in `namer`. Required for name
    /// mode; optional for self-describing mode.
    pub fn with_names(mut self, namer: &'a dyn Namer, prefix: impl Into<String>) -> Self {
        self.naming = Some((namer, prefix.into()));
        self
    }

    pub fn fragment(&self, doc: &Element, schema: &FragSchema) -> Result<Fragmented, FragError> {
        if self.mode == RefMode::Name && self.naming.is_none() {
            return Err(FragError::MissingNamer);
        }
        doc.validate().map_err(FragError::InvalidDocument)?;
        check_reserved(doc, &doc.name)?;
        if !schema.root.matches(&doc.name) {
            return Err(FragError::SchemaMismatch {
                expected: schema.root.element.clone().unwrap_or_default(),
                found: doc.name.clone(),
            });
        }
        let store_id = match self.mode {
            RefMode::SelfDescribing => Some(self.store.store_id()?),
            _ => None,
        };
        let mut out = Fragmented {
            root: RootRef::Key(Key::new(vec![0])?),
            fragments: Vec::new(),
            names: Vec::new(),
        };
        let root_path = format!("{}.1", doc.name);
        let link = self.emit(doc, &schema.root, &root_path, store_id.as_ref(), &mut out)?;
        out.root = match (self.mode, link.name) {
            (RefMode::Name, Some(name)) => RootRef::Name(name),
            _ => RootRef::Key(link.key),
        };
        Ok(out)
    }

    fn emit(
        &self,
        el: &Element,
        node: &SchemaNode,
        path: &str,
        store_id: Option<&StoreId>,
        out: &mut Fragmented,
    ) -> Result<Link, FragError> {
        let piece = if node.collapse {
            el.clone()
        } else {
            let mut ordinals: HashMap<&str, usize> = HashMap::new();
            let mut children = Vec::with_capacity(el.children.len());
            for child in &el.children {
                let XmlNode::Element(c) = child else {
                    children.push(child.clone());
                    continue;
                };
                let ordinal = ordinals.entry(c.name.as_str()).or_insert(0);
                *ordinal += 1;
                match node.child_for(&c.name) {
                    Some(sub) => {
                        let child_path = format!("{path}/{}.{ordinal}", c.name);
                        let link = self.emit(c, sub, &child_path, store_id, out)?;
                        children.push(XmlNode::Element(self.xref(&link, store_id)));
                    }
                    None => children.push(child.clone()),
                }
            }
            Element {
                name: el.name.clone(),
                attributes: el.attributes.clone(),
                children,
            }
        };

        let key = self.store.put(&xml::serialize(&piece))?;
        out.fragments.push(key.clone());
        let name = match &self.naming {
            Some((namer, prefix)) => {
                let name = Name::new(format!("{prefix}/{path}"))?;
                rebind(*namer, &name, &key)?;
                out.names.push(name.clone());
                Some(name)
            }
            None => None,
        };
        Ok(Link { key, name })
    }

    fn xref(&self, link: &Link, store_id: Option<&StoreId>) -> Element {
        let el = Element::new(XREF).with_attr("mode", self.mode.label());
        match self.mode {
            RefMode::Key => el.with_attr("k", link.key.to_hex()),
            RefMode::Name => el.with_attr("n", link.name.as_ref().expect("names are bound in name mode").as_str()),
            RefMode::SelfDescribing => {
                let mut el = el
                    .with_attr("k", link.key.to_hex())
                    .with_attr("store-id", store_id.expect("store id fetched for self mode").to_hex());
                if let (Some(name), Some((namer, _))) = (&link.name, &self.naming) {
                    el = el
                        .with_attr("n", name.as_str())
                        .with_attr("namer-id", namer.namer_id().to_hex());
                }
                el
            }
        }
    }
}

fn check_reserved(el: &Element, path: &str) -> Result<(), FragError> {
    if el.name == XREF {
        return Err(FragError::ReservedElement(path.to_string()));
    }
    for c in el.child_elements() {
        check_reserved(c, &format!("{path}/{}", c.name))?;
    }
    Ok(())
}

/// Finds the store a self-describing reference names.
pub trait StoreResolver: Send + Sync {
    fn resolve(&self, id: &StoreId) -> Option<Arc<dyn Store>>;
}

/// Reassembles documents from their fragments.
pub struct Defragmenter<'a> {
    store: &'a dyn Store,
    namer: Option<&'a dyn Namer>,
    resolver: Option<&'a dyn StoreResolver>,
}

enum Source<'s> {
    Primary,
    Other(Arc<dyn Store + 's>),
}

impl<'a> Defragmenter<'a> {
    pub fn new(store: &'a dyn Store) -> Self {
        Defragmenter {
            store,
            namer: None,
            resolver: None,
        }
    }

    pub fn with_namer(mut self, namer: &'a dyn Namer) -> Self {
        self.namer = Some(namer);
        self
    }

    /// Used for self-describing references whose store id is not the
    /// primary store's. Unresolved ids fall back to the primary store.
    pub fn with_resolver(mut self, resolver: &'a dyn StoreResolver) -> Self {
        self.resolver = Some(resolver);
        self
    }

    pub fn defragment(&self, root: &RootRef) -> Result<Element, FragError> {
        let key = match root {
            RootRef::Key(k) => k.clone(),
            RootRef::Name(n) => self.resolve_name(n)?,
        };
        let mut on_path = HashSet::new();
        self.load(&key, &Source::Primary, &mut on_path)
    }

    fn resolve_name(&self, name: &Name) -> Result<Key, FragError> {
        let namer = self.namer.ok_or(FragError::MissingNamer)?;
        let keys = namer.lookup(name);
        if keys.len() != 1 {
            return Err(FragError::AmbiguousName {
                name: name.clone(),
                count: keys.len(),
            });
        }
        Ok(keys.into_iter().next().unwrap())
    }

    fn load(&self, key: &Key, source: &Source<'_>, on_path: &mut HashSet<Key>) -> Result<Element, FragError> {
        if !on_path.insert(key.clone()) {
            return Err(FragError::CycleDetected(key.clone()));
        }
        let bytes = match source {
            Source::Primary => self.store.get(key)?,
            Source::Other(s) => s.get(key)?,
        };
        let fragment = xml::parse(&bytes).map_err(|source| FragError::FragmentParse {
            key: key.clone(),
            source,
        })?;
        let resolved = self.expand(fragment, on_path)?;
        on_path.remove(key);
        Ok(resolved)
    }

    fn expand(&self, mut el: Element, on_path: &mut HashSet<Key>) -> Result<Element, FragError> {
        if el.name == XREF {
            let (key, source) = self.target(&el)?;
            return self.load(&key, &source, on_path);
        }
        let children = std::mem::take(&mut el.children);
        el.children = children
            .into_iter()
            .map(|c| match c {
                XmlNode::Element(e) => self.expand(e, on_path).map(XmlNode::Element),
                text => Ok(text),
            })
            .collect::<Result<_, _>>()?;
        Ok(el)
    }

    fn target(&self, xref: &Element) -> Result<(Key, Source<'a>), FragError> {
        if !xref.children.is_empty() {
            return Err(FragError::InvalidReference(format!("<{XREF}> must be empty")));
        }
        let attr = |name: &str| {
            xref.attr(name)
                .ok_or_else(|| FragError::InvalidReference(format!("missing attribute {name:?}")))
        };
        let key_attr = || -> Result<Key, FragError> {
            Key::from_hex(attr("k")?).map_err(|e| FragError::InvalidReference(e.to_string()))
        };
        let name_attr = || -> Result<Name, FragError> {
            Name::new(attr("n")?).map_err(|e| FragError::InvalidReference(e.to_string()))
        };
        match attr("mode")? {
            "key" => Ok((key_attr()?, Source::Primary)),
            "name" => Ok((self.resolve_name(&name_attr()?)?, Source::Primary)),
            "self" => {
                let store_id =
                    StoreId::from_hex(attr("store-id")?).map_err(|e| FragError::InvalidReference(e.to_string()))?;
                let named_here = match (xref.attr("namer-id"), self.namer) {
                    (Some(id), Some(namer)) => id.eq_ignore_ascii_case(&namer.namer_id().to_hex()),
                    _ => false,
                };
                let key = if named_here {
                    self.resolve_name(&name_attr()?)?
                } else {
                    key_attr()?
                };
                let source = if self.store.store_id().ok() == Some(store_id) {
                    Source::Primary
                } else {
                    self.resolver
                        .and_then(|r| r.resolve(&store_id))
                        .map_or(Source::Primary, Source::Other)
                };
                Ok((key, source))
            }
            other => Err(FragError::InvalidReference(format!("unknown mode {other:?}"))),
        }
    }
}

/// Fragments `doc` in one call.
pub fn fragment(
    doc: &Element,
    schema: &FragSchema,
    store: &dyn Store,
    mode: RefMode,
    naming: Option<(&dyn Namer, &str)>,
) -> Result<Fragmented, FragError> {
    let mut f = Fragmenter::new(store, mode);
    if let Some((namer, prefix)) = naming {
        f = f.with_names(namer, prefix);
    }
    f.fragment(doc, schema)
}

/// Reassembles a document in one call.
pub fn defragment(root: &RootRef, store: &dyn Store, namer: Option<&dyn Namer>) -> Result<Element, FragError> {
    let mut d = Defragmenter::new(store);
    if let Some(n) = namer {
        d = d.with_namer(n);
    }
    d.defragment(root)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::namer::MemoryNamer;
    use crate::store::{sequence_key, KeyPolicy, LocalStore};

    fn library() -> Element {
        xml::parse(b"<library><book><t>A</t></book><book><t>B</t></book></library>").unwrap()
    }

    fn book_collapsed() -> FragSchema {
        FragSchema::parse(br#"<library><book frag:collapse="true"/></library>"#).unwrap()
    }

    #[test]
    fn schema_file_format() {
        let s = FragSchema::parse(br#"<library><book frag:collapse="true"/><frag:any/></library>"#).unwrap();
        assert_eq!(
            s.root,
            SchemaNode::expanded(
                "library",
                vec![SchemaNode::collapsed("book"), SchemaNode::expanded(WILDCARD, vec![])]
            )
        );
        assert_eq!(FragSchema::parse(&s.to_xml()).unwrap(), s);
        assert!(FragSchema::parse(b"<a><frag:any/><frag:any/></a>").is_err());
        assert!(FragSchema::parse(b"<a frag:collapse=\"yes\"/>").is_err());
        // children of a collapsed node are ignored
        let c = FragSchema::parse(br#"<a frag:collapse="true"><b/></a>"#).unwrap();
        assert!(c.root.children.is_empty());
    }

    #[test]
    fn library_example_layout() {
        let store = LocalStore::memory(KeyPolicy::Sequence).unwrap();
        let out = fragment(&library(), &book_collapsed(), &store, RefMode::Key, None).unwrap();
        assert_eq!(out.fragments, vec![sequence_key(1), sequence_key(2), sequence_key(3)]);
        assert_eq!(store.get(&sequence_key(1)).unwrap(), b"<book><t>A</t></book>");
        assert_eq!(store.get(&sequence_key(2)).unwrap(), b"<book><t>B</t></book>");
        assert_eq!(
            String::from_utf8(store.get(&sequence_key(3)).unwrap()).unwrap(),
            r#"<library><x-ref mode="key" k="0000000000000001"/><x-ref mode="key" k="0000000000000002"/></library>"#
        );
        assert_eq!(out.root, RootRef::Key(sequence_key(3)));
        let back = defragment(&out.root, &store, None).unwrap();
        assert_eq!(back, library());
    }

    #[test]
    fn collapsed_root_is_one_fragment() {
        let store = LocalStore::memory(KeyPolicy::Sequence).unwrap();
        let out = fragment(
            &library(),
            &FragSchema::collapsed_root("library"),
            &store,
            RefMode::Key,
            None,
        )
        .unwrap();
        assert_eq!(out.fragments.len(), 1);
        assert_eq!(store.len(), 1);
        assert_eq!(defragment(&out.root, &store, None).unwrap(), library());
    }

    #[test]
    fn fully_expanded_is_one_fragment_per_element() {
        let store = LocalStore::memory(KeyPolicy::Sequence).unwrap();
        let doc = library();
        let out = fragment(&doc, &FragSchema::fully_expanded(3), &store, RefMode::Key, None).unwrap();
        assert_eq!(out.fragments.len(), doc.element_count());
        assert_eq!(defragment(&out.root, &store, None).unwrap(), doc);
    }

    #[test]
    fn unmatched_children_stay_inline() {
        let store = LocalStore::memory(KeyPolicy::Sequence).unwrap();
        let doc = xml::parse(b"<library><book/><note>x</note></library>").unwrap();
        let out = fragment(&doc, &book_collapsed(), &store, RefMode::Key, None).unwrap();
        assert_eq!(out.fragments.len(), 2);
        let root = store.get(&sequence_key(2)).unwrap();
        assert!(String::from_utf8(root).unwrap().ends_with("<note>x</note></library>"));
    }

    #[test]
    fn name_mode_paths_and_root_name() {
        let store = LocalStore::memory(KeyPolicy::Sequence).unwrap();
        let namer = MemoryNamer::new();
        let out = fragment(
            &library(),
            &book_collapsed(),
            &store,
            RefMode::Name,
            Some((&namer, "doc")),
        )
        .unwrap();
        let names: Vec<_> = out.names.iter().map(|n| n.as_str().to_string()).collect();
        assert_eq!(names, ["doc/library.1/book.1", "doc/library.1/book.2", "doc/library.1"]);
        assert_eq!(out.root, RootRef::Name(Name::new("doc/library.1").unwrap()));
        assert_eq!(defragment(&out.root, &store, Some(&namer)).unwrap(), library());
        assert!(matches!(
            defragment(&out.root, &store, None),
            Err(FragError::MissingNamer)
        ));
    }

    #[test]
    fn name_mode_requires_namer() {
        let store = LocalStore::memory(KeyPolicy::Sequence).unwrap();
        assert!(matches!(
            fragment(&library(), &book_collapsed(), &store, RefMode::Name, None),
            Err(FragError::MissingNamer)
        ));
    }

    #[test]
    fn self_mode_embeds_store_id() {
        let store = LocalStore::memory(KeyPolicy::ContentHash).unwrap();
        let out = fragment(&library(), &book_collapsed(), &store, RefMode::SelfDescribing, None).unwrap();
        let RootRef::Key(root) = &out.root else { panic!() };
        let root_xml = xml::parse(&store.get(root).unwrap()).unwrap();
        let xref = root_xml.child_elements().next().unwrap();
        assert_eq!(xref.attr("store-id"), Some(store.id().to_hex().as_str()));
        assert_eq!(defragment(&out.root, &store, None).unwrap(), library());
    }

    #[test]
    fn reserved_element_and_schema_mismatch() {
        let store = LocalStore::memory(KeyPolicy::Sequence).unwrap();
        let doc = xml::parse(b"<library><x-ref/></library>").unwrap();
        assert!(matches!(
            fragment(&doc, &book_collapsed(), &store, RefMode::Key, None),
            Err(FragError::ReservedElement(_))
        ));
        let doc = xml::parse(b"<shelf/>").unwrap();
        assert!(matches!(
            fragment(&doc, &book_collapsed(), &store, RefMode::Key, None),
            Err(FragError::SchemaMismatch { .. })
        ));
        assert!(store.is_empty());
    }

    #[test]
    fn cycles_are_detected() {
        let store = LocalStore::memory(KeyPolicy::random()).unwrap();
        let k = Key::new(b"loop".to_vec()).unwrap();
        let body = format!(r#"<a><x-ref mode="key" k="{}"/></a>"#, k.to_hex());
        store.put_with_key(body.as_bytes(), &k).unwrap();
        assert!(matches!(
            defragment(&RootRef::Key(k), &store, None),
            Err(FragError::CycleDetected(_))
        ));
    }

    #[test]
    fn ambiguous_names() {
        let store = LocalStore::memory(KeyPolicy::Sequence).unwrap();
        let namer = MemoryNamer::new();
        let n = Name::new("two").unwrap();
        namer.bind(&n, &store.put(b"<a/>").unwrap()).unwrap();
        namer.bind(&n, &store.put(b"<b/>").unwrap()).unwrap();
        assert!(matches!(
            defragment(&RootRef::Name(n), &store, Some(&namer)),
            Err(FragError::AmbiguousName { count: 2, .. })
        ));
        let none = Name::new("none").unwrap();
        assert!(matches!(
            defragment(&RootRef::Name(none), &store, Some(&namer)),
            Err(FragError::AmbiguousName { count: 0, .. })
        ));
    }

    #[test]
    fn mixed_modes_resolve() {
        let store = LocalStore::memory(KeyPolicy::Sequence).unwrap();
        let namer = MemoryNamer::new();
        let leaf = store.put(b"<leaf/>").unwrap();
        let named = store.put(b"<named/>").unwrap();
        namer.bind(&Name::new("n").unwrap(), &named).unwrap();
        let root = format!(
            r#"<r><x-ref mode="key" k="{}"/><x-ref mode="name" n="n"/></r>"#,
            leaf.to_hex()
        );
        let root = store.put(root.as_bytes()).unwrap();
        let doc = defragment(&RootRef::Key(root), &store, Some(&namer)).unwrap();
        assert_eq!(doc.to_string(), "<r><leaf/><named/></r>");
    }

    #[test]
    fn refragmenting_with_same_prefix_rebinds() {
        let store = LocalStore::memory(KeyPolicy::Sequence).unwrap();
        let namer = MemoryNamer::new();
        let schema = book_collapsed();
        fragment(&library(), &schema, &store, RefMode::Name, Some((&namer, "doc"))).unwrap();
        let edited = xml::parse(b"<library><book><t>C</t></book></library>").unwrap();
        let out = fragment(&edited, &schema, &store, RefMode::Name, Some((&namer, "doc"))).unwrap();
        assert_eq!(defragment(&out.root, &store, Some(&namer)).unwrap(), edited);
    }
}
