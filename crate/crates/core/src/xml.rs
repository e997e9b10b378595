//! A small XML parser and canonical serializer.
//!
//! Supported: UTF-8 input, one root element, attributes in single or double
//! quotes, character data, self-closing tags, the five predefined entities
//! and numeric character references. An XML declaration and comments are
//! accepted and dropped. DTDs, processing instructions and CDATA sections
//! are rejected. Whitespace-only text is kept.
//!
//! The serializer writes attributes in stored order with double quotes,
//! escapes only what it must, self-closes childless elements and adds no
//! whitespace. `parse(serialize(e)) == e` for every normalized element.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum XmlNode {
    Element(Element),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Element {
    pub name: String,
    pub attributes: Vec<(String, String)>,
    pub children: Vec<XmlNode>,
}

impl Element {
    pub fn new(name: impl Into<String>) -> Self {
        Element {
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn with_attr(mut self, name: impl Into<String>, value: impl Into<String>) -> Self {
        self.attributes.push((name.into(), value.into()));
        self
    }

    pub fn with_child(mut self, child: Element) -> Self {
        self.children.push(XmlNode::Element(child));
        self
    }

    pub fn with_text(mut self, text: impl Into<String>) -> Self {
        self.children.push(XmlNode::Text(text.into()));
        self
    }

    pub fn attr(&self, name: &str) -> Option<&str> {
        self.attributes.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_str())
    }

    pub fn child_elements(&self) -> impl Iterator<Item = &Element> {
        self.children.iter().filter_map(|c| match c {
            XmlNode::Element(e) => Some(e),
            XmlNode::Text(_) => None,
        })
    }

    /// Concatenation of the direct text children.
    pub fn text(&self) -> String {
        self.children
            .iter()
            .filter_map(|c| match c {
                XmlNode::Text(t) => Some(t.as_str()),
                XmlNode::Element(_) => None,
            })
            .collect()
    }

    /// Number of elements in this subtree, including itself.
    pub fn element_count(&self) -> usize {
        1 + self.child_elements().map(Element::element_count).sum::<usize>()
    }

    /// Depth-first search for an element with the given name.
    pub fn find(&self, name: &str) -> Option<&Element> {
        if self.name == name {
            return Some(self);
        }
        self.child_elements().find_map(|c| c.find(name))
    }

    /// Merges adjacent text children and drops empty ones, recursively. This
    /// is the form `parse` produces.
    pub fn normalized(&self) -> Element {
        let mut children: Vec<XmlNode> = Vec::with_capacity(self.children.len());
        for child in &self.children {
            match child {
                XmlNode::Text(t) if t.is_empty() => {}
                XmlNode::Text(t) => match children.last_mut() {
                    Some(XmlNode::Text(prev)) => prev.push_str(t),
                    _ => children.push(XmlNode::Text(t.clone())),
                },
                XmlNode::Element(e) => children.push(XmlNode::Element(e.normalized())),
            }
        }
        Element {
            name: self.name.clone(),
            attributes: self.attributes.clone(),
            children,
        }
    }

    /// Checks names and attribute uniqueness throughout the subtree.
    pub fn validate(&self) -> Result<(), String> {
        if !is_valid_name(&self.name) {
            return Err(format!("invalid element name {:?}", self.name));
        }
        for (i, (name, _)) in self.attributes.iter().enumerate() {
            if !is_valid_name(name) {
                return Err(format!("invalid attribute name {name:?}"));
            }
            if self.attributes[..i].iter().any(|(n, _)| n == name) {
                return Err(format!("duplicate attribute {name:?} on <{}>", self.name));
            }
        }
        self.child_elements().try_for_each(Element::validate)
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        write_element(self, &mut out);
        f.write_str(&out)
    }
}

fn is_name_start(c: char) -> bool {
    c.is_alphabetic() || c == '_' || c == ':'
}

fn is_name_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '_' | '-' | '.' | ':')
}

/// Letters, digits, `_ - . :`; not starting with a digit, `-` or `.`.
pub fn is_valid_name(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if is_name_start(c)) && chars.all(is_name_char)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("XML parse error at byte {offset}: {kind}")]
pub struct ParseError {
    pub offset: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("input is not valid UTF-8")]
    InvalidUtf8,
    #[error("unexpected end of input")]
    UnexpectedEof,
    #[error("expected {0}")]
    Expected(&'static str),
    #[error("closing tag </{found}> does not match <{expected}>")]
    MismatchedTag { expected: String, found: String },
    #[error("invalid name")]
    InvalidName,
    #[error("duplicate attribute {0:?}")]
    DuplicateAttribute(String),
    #[error("undefined entity &{0};")]
    UndefinedEntity(String),
    #[error("invalid character reference")]
    InvalidCharRef,
    #[error("unsupported construct: {0}")]
    Unsupported(&'static str),
    #[error("'<' is not allowed in attribute values")]
    LtInAttribute,
    #[error("no root element")]
    MissingRoot,
    #[error("content after the root element")]
    TrailingContent,
}

pub fn parse(input: &[u8]) -> Result<Element, ParseError> {
    let src = std::str::from_utf8(input).map_err(|e| ParseError {
        offset: e.valid_up_to(),
        kind: ParseErrorKind::InvalidUtf8,
    })?;
    Parser { src, pos: 0 }.document()
}

pub fn parse_str(input: &str) -> Result<Element, ParseError> {
    Parser { src: input, pos: 0 }.document()
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, offset: usize, kind: ParseErrorKind) -> Result<T, ParseError> {
        Err(ParseError { offset, kind })
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn starts_with(&self, s: &str) -> bool {
        self.rest().starts_with(s)
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn skip_ws(&mut self) -> bool {
        let rest = self.rest();
        let trimmed = rest.trim_start_matches([' ', '\t', '\r', '\n']);
        self.pos += rest.len() - trimmed.len();
        rest.len() != trimmed.len()
    }

    fn expect(&mut self, s: &'static str) -> Result<(), ParseError> {
        if self.starts_with(s) {
            self.pos += s.len();
            Ok(())
        } else if self.rest().is_empty() {
            self.err(self.pos, ParseErrorKind::UnexpectedEof)
        } else {
            self.err(self.pos, ParseErrorKind::Expected(s))
        }
    }

    fn document(mut self) -> Result<Element, ParseError> {
        if self.starts_with("\u{FEFF}") {
            self.pos += 3;
        }
        if self.starts_with("<?xml")
            && matches!(
                self.src[self.pos + 5..].chars().next(),
                Some(' ' | '\t' | '\r' | '\n' | '?')
            )
        {
            let end = self.rest().find("?>").map(|i| self.pos + i + 2);
            match end {
                Some(end) => self.pos = end,
                None => return self.err(self.src.len(), ParseErrorKind::UnexpectedEof),
            }
        }
        self.misc()?;
        if self.rest().is_empty() {
            return self.err(self.pos, ParseErrorKind::MissingRoot);
        }
        if self.peek() != Some('<') {
            return self.err(self.pos, ParseErrorKind::Expected("root element"));
        }
        let root = self.element()?;
        self.misc()?;
        if !self.rest().is_empty() {
            return self.err(self.pos, ParseErrorKind::TrailingContent);
        }
        Ok(root)
    }

    /// Whitespace and comments outside the root element.
    fn misc(&mut self) -> Result<(), ParseError> {
        loop {
            self.skip_ws();
            if self.starts_with("<!--") {
                self.comment()?;
            } else if self.starts_with("<!DOCTYPE") || self.starts_with("<!") {
                return self.err(self.pos, ParseErrorKind::Unsupported("document type declaration"));
            } else if self.starts_with("<?") {
                return self.err(self.pos, ParseErrorKind::Unsupported("processing instruction"));
            } else {
                return Ok(());
            }
        }
    }

    fn comment(&mut self) -> Result<(), ParseError> {
        let start = self.pos;
        self.pos += 4;
        match self.rest().find("-->") {
            Some(i) => {
                self.pos += i + 3;
                Ok(())
            }
            None => self.err(start, ParseErrorKind::UnexpectedEof),
        }
    }

    fn name(&mut self) -> Result<&'a str, ParseError> {
        let rest = self.rest();
        let mut chars = rest.char_indices();
        match chars.next() {
            Some((_, c)) if is_name_start(c) => {}
            Some(_) => return self.err(self.pos, ParseErrorKind::InvalidName),
            None => return self.err(self.pos, ParseErrorKind::UnexpectedEof),
        }
        let end = chars.find(|&(_, c)| !is_name_char(c)).map_or(rest.len(), |(i, _)| i);
        self.pos += end;
        Ok(&rest[..end])
    }

    /// Parses the element starting at the current `<`. Iterative so deeply
    /// nested input cannot exhaust the call stack.
    fn element(&mut self) -> Result<Element, ParseError> {
        let mut stack: Vec<(Element, usize)> = Vec::new();
        let (root, closed) = self.start_tag()?;
        if closed {
            return Ok(root.0);
        }
        stack.push(root);

        loop {
            if self.rest().is_empty() {
                let (_, start) = stack.last().unwrap();
                return self.err(*start, ParseErrorKind::UnexpectedEof);
            }
            if self.starts_with("</") {
                let tag_at = self.pos;
                self.pos += 2;
                let name = self.name()?;
                self.skip_ws();
                self.expect(">")?;
                let (el, _) = stack.pop().unwrap();
                if el.name != name {
                    return self.err(
                        tag_at,
                        ParseErrorKind::MismatchedTag {
                            expected: el.name,
                            found: name.to_string(),
                        },
                    );
                }
                match stack.last_mut() {
                    Some((parent, _)) => parent.children.push(XmlNode::Element(el)),
                    None => return Ok(el),
                }
            } else if self.starts_with("<!--") {
                self.comment()?;
            } else if self.starts_with("<![CDATA[") {
                return self.err(self.pos, ParseErrorKind::Unsupported("CDATA section"));
            } else if self.starts_with("<!") {
                return self.err(self.pos, ParseErrorKind::Unsupported("document type declaration"));
            } else if self.starts_with("<?") {
                return self.err(self.pos, ParseErrorKind::Unsupported("processing instruction"));
            } else if self.starts_with("<") {
                let (el, closed) = self.start_tag()?;
                if closed {
                    stack.last_mut().unwrap().0.children.push(XmlNode::Element(el.0));
                } else {
                    stack.push(el);
                }
            } else {
                let text = self.char_data()?;
                let parent = &mut stack.last_mut().unwrap().0;
                match parent.children.last_mut() {
                    Some(XmlNode::Text(prev)) => prev.push_str(&text),
                    _ => parent.children.push(XmlNode::Text(text)),
                }
            }
        }
    }

    /// Returns the element and whether it was self-closing. The element's
    /// start offset accompanies it for error reporting.
    fn start_tag(&mut self) -> Result<((Element, usize), bool), ParseError> {
        let start = self.pos;
        self.expect("<")?;
        let mut el = Element::new(self.name()?);
        loop {
            let had_ws = self.skip_ws();
            if self.starts_with("/>") {
                self.pos += 2;
                return Ok(((el, start), true));
            }
            if self.starts_with(">") {
                self.pos += 1;
                return Ok(((el, start), false));
            }
            if self.rest().is_empty() {
                return self.err(self.pos, ParseErrorKind::UnexpectedEof);
            }
            if !had_ws {
                return self.err(self.pos, ParseErrorKind::Expected("whitespace before attribute"));
            }
            let attr_at = self.pos;
            let name = self.name()?;
            self.skip_ws();
            self.expect("=")?;
            self.skip_ws();
            let value = self.attr_value()?;
            if el.attributes.iter().any(|(n, _)| n == name) {
                return self.err(attr_at, ParseErrorKind::DuplicateAttribute(name.to_string()));
            }
            el.attributes.push((name.to_string(), value));
        }
    }

    fn attr_value(&mut self) -> Result<String, ParseError> {
        let quote = match self.peek() {
            Some(q @ ('"' | '\'')) => q,
            Some(_) => return self.err(self.pos, ParseErrorKind::Expected("quoted attribute value")),
            None => return self.err(self.pos, ParseErrorKind::UnexpectedEof),
        };
        self.pos += 1;
        let mut out = String::new();
        loop {
            let rest = self.rest();
            let Some(i) = rest.find([quote, '&', '<']) else {
                return self.err(self.src.len(), ParseErrorKind::UnexpectedEof);
            };
            out.push_str(&rest[..i]);
            self.pos += i;
            match self.peek() {
                Some('<') => return self.err(self.pos, ParseErrorKind::LtInAttribute),
                Some('&') => out.push(self.reference()?),
                _ => {
                    self.pos += 1;
                    return Ok(out);
                }
            }
        }
    }

    fn char_data(&mut self) -> Result<String, ParseError> {
        let mut out = String::new();
        loop {
            let rest = self.rest();
            let i = rest.find(['<', '&']).unwrap_or(rest.len());
            out.push_str(&rest[..i]);
            self.pos += i;
            if self.peek() == Some('&') {
                out.push(self.reference()?);
            } else {
                return Ok(out);
            }
        }
    }

    /// Decodes the entity or character reference at the current `&`.
    fn reference(&mut self) -> Result<char, ParseError> {
        let start = self.pos;
        let rest = &self.rest()[1..];
        let Some(end) = rest.find(';').filter(|&e| e <= 32) else {
            return self.err(start, ParseErrorKind::UndefinedEntity(rest.chars().take(8).collect()));
        };
        let body = &rest[..end];
        let c = match body {
            "amp" => '&',
            "lt" => '<',
            "gt" => '>',
            "quot" => '"',
            "apos" => '\'',
            _ if body.starts_with('#') => {
                let code = match body.strip_prefix("#x") {
                    Some(h) => u32::from_str_radix(h, 16),
                    None => body[1..].parse::<u32>(),
                };
                let ok = !body[1..].starts_with(['+', '-']);
                match code
                    .ok()
                    .filter(|_| ok)
                    .and_then(char::from_u32)
                    .filter(|&c| is_xml_char(c))
                {
                    Some(c) => c,
                    None => return self.err(start, ParseErrorKind::InvalidCharRef),
                }
            }
            _ => return self.err(start, ParseErrorKind::UndefinedEntity(body.to_string())),
        };
        self.pos += end + 2;
        Ok(c)
    }
}

fn is_xml_char(c: char) -> bool {
    matches!(c, '\t' | '\n' | '\r') || (c >= ' ' && c != '\u{FFFE}' && c != '\u{FFFF}')
}

pub fn serialize(el: &Element) -> Vec<u8> {
    el.to_string().into_bytes()
}

fn escape_into(out: &mut String, s: &str, in_attr: bool) {
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' if in_attr => out.push_str("&quot;"),
            _ => out.push(c),
        }
    }
}

fn write_element(el: &Element, out: &mut String) {
    out.push('<');
    out.push_str(&el.name);
    for (name, value) in &el.attributes {
        out.push(' ');
        out.push_str(name);
        out.push_str("=\"");
        escape_into(out, value, true);
        out.push('"');
    }
    if el.children.is_empty() {
        out.push_str("/>");
        return;
    }
    out.push('>');
    for child in &el.children {
        match child {
            XmlNode::Text(t) => escape_into(out, t, false),
            XmlNode::Element(e) => write_element(e, out),
        }
    }
    out.push_str("</");
    out.push_str(&el.name);
    out.push('>');
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(s: &str) -> Result<Element, ParseError> {
        parse(s.as_bytes())
    }

    #[test]
    fn smallest_documents() {
        assert_eq!(p("<a/>").unwrap(), Element::new("a"));
        assert_eq!(
            p(r#"<a x="1">hi</a>"#).unwrap(),
            Element::new("a").with_attr("x", "1").with_text("hi")
        );
    }

    #[test]
    fn mismatched_tag_offset() {
        let e = p("<a><b></a>").unwrap_err();
        assert_eq!(e.offset, 6);
        assert!(matches!(e.kind, ParseErrorKind::MismatchedTag { .. }));
    }

    #[test]
    fn entities_and_char_refs() {
        let e = p("<a t='&lt;&apos;&#65;&#x42;'>&amp;&gt;&quot;&#233;</a>").unwrap();
        assert_eq!(e.attr("t"), Some("<'AB"));
        assert_eq!(e.text(), "&>\"é");
        assert!(matches!(
            p("<a>&nbsp;</a>").unwrap_err().kind,
            ParseErrorKind::UndefinedEntity(_)
        ));
        assert!(matches!(
            p("<a>&#0;</a>").unwrap_err().kind,
            ParseErrorKind::InvalidCharRef
        ));
        assert!(matches!(
            p("<a>&#xD800;</a>").unwrap_err().kind,
            ParseErrorKind::InvalidCharRef
        ));
        assert!(matches!(
            p("<a>& b</a>").unwrap_err().kind,
            ParseErrorKind::UndefinedEntity(_)
        ));
    }

    #[test]
    fn declaration_and_comments_are_dropped() {
        let e = p("<?xml version=\"1.0\"?>\n<!-- c --><a>x<!-- in -->y</a>\n<!-- tail -->").unwrap();
        assert_eq!(e, Element::new("a").with_text("xy"));
    }

    #[test]
    fn whitespace_text_is_preserved() {
        let e = p("<a>\n  <b/>\n</a>").unwrap();
        assert_eq!(e.children.len(), 3);
        assert_eq!(e.children[0], XmlNode::Text("\n  ".into()));
    }

    #[test]
    fn unsupported_constructs() {
        for doc in [
            "<!DOCTYPE a><a/>",
            "<?pi x?><a/>",
            "<a><![CDATA[x]]></a>",
            "<a><?pi?></a>",
        ] {
            assert!(
                matches!(p(doc).unwrap_err().kind, ParseErrorKind::Unsupported(_)),
                "{doc}"
            );
        }
    }

    #[test]
    fn malformed_documents() {
        assert_eq!(p("").unwrap_err().kind, ParseErrorKind::MissingRoot);
        assert_eq!(p("<a/><b/>").unwrap_err().kind, ParseErrorKind::TrailingContent);
        assert_eq!(
            p("<a x='1' x='2'/>").unwrap_err().kind,
            ParseErrorKind::DuplicateAttribute("x".into())
        );
        assert_eq!(p("<a x='<'/>").unwrap_err().kind, ParseErrorKind::LtInAttribute);
        assert_eq!(p("<1a/>").unwrap_err().kind, ParseErrorKind::InvalidName);
        assert!(p("<a x='1'y='2'/>").is_err());
        assert!(p("<a>").is_err());
        assert!(p("text").is_err());
        assert_eq!(
            parse(&[b'<', b'a', 0xFF, b'/', b'>']).unwrap_err().kind,
            ParseErrorKind::InvalidUtf8
        );
    }

    #[test]
    fn serializer_is_canonical() {
        assert_eq!(Element::new("a").to_string(), "<a/>");
        assert_eq!(Element::new("a").with_text("a<b").to_string(), "<a>a&lt;b</a>");
        assert_eq!(
            Element::new("a").with_attr("q", "\"&'>").to_string(),
            r#"<a q="&quot;&amp;'&gt;"/>"#
        );
    }

    #[test]
    fn deep_nesting_does_not_overflow() {
        let depth = 50_000;
        let doc = "<d>".repeat(depth) + &"</d>".repeat(depth);
        let e = p(&doc).unwrap();
        let mut n = 1;
        let mut cur = &e;
        while let Some(c) = cur.child_elements().next() {
            cur = c;
            n += 1;
        }
        assert_eq!(n, depth);
        std::mem::forget(e); // recursive drop of 50k levels is the caller's problem
    }

    #[test]
    fn names() {
        assert!(is_valid_name("frag:any"));
        assert!(is_valid_name("x-ref"));
        assert!(is_valid_name("_a.b"));
        assert!(is_valid_name("élan"));
        assert!(!is_valid_name("-a"));
        assert!(!is_valid_name(".a"));
        assert!(!is_valid_name("9a"));
        assert!(!is_valid_name(""));
        assert!(!is_valid_name("a b"));
    }

    fn arb_name() -> impl Strategy<Value = String> {
        "[a-zA-Z_][a-zA-Z0-9_.:-]{0,6}"
    }

    fn arb_text() -> impl Strategy<Value = String> {
        "[ a-z<>&\"'\\n\\t\u{e9}\u{4e2d}]{1,8}"
    }

    fn arb_element() -> impl Strategy<Value = Element> {
        let leaf = (arb_name(), proptest::collection::vec((arb_name(), arb_text()), 0..3)).prop_map(|(n, attrs)| {
            let mut e = Element::new(n);
            for (k, v) in attrs {
                if e.attr(&k).is_none() {
                    e.attributes.push((k, v));
                }
            }
            e
        });
        leaf.prop_recursive(4, 40, 5, |inner| {
            (
                arb_name(),
                proptest::collection::vec(
                    prop_oneof![inner.prop_map(XmlNode::Element), arb_text().prop_map(XmlNode::Text)],
                    0..5,
                ),
            )
                .prop_map(|(n, children)| {
                    Element {
                        name: n,
                        attributes: vec![],
                        children,
                    }
                    .normalized()
                })
        })
    }

    proptest! {
        #[test]
        fn parse_inverts_serialize(e in arb_element()) {
            let bytes = serialize(&e);
            prop_assert_eq!(parse(&bytes).unwrap(), e);
        }

        #[test]
        fn parser_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
            let _ = parse(&bytes);
        }

        #[test]
        fn parser_never_panics_on_markup(s in "[<>/a-c=\"'&#;x0-9! ?-]{0,64}") {
            let _ = parse(s.as_bytes());
        }
    }
}
