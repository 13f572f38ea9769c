//! XML trees and the YXML transfer syntax.
//!
//! YXML replaces angle-bracket markup with two reserved control bytes:
//!
//! ```text
//! Element(name, attrs, body)  =>  X Y name (Y key=value)* X  body  X Y X
//! Text(s)                     =>  s
//! ```
//!
//! with `X = 0x05` and `Y = 0x06`. Reserved bytes are rejected rather than
//! escaped, so every valid tree list has exactly one encoding.

use std::fmt;

use thiserror::Error;

pub const X: u8 = 0x05;
pub const Y: u8 = 0x06;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum YxmlError {
    #[error("reserved byte in {0}")]
    ReservedByteInContent(&'static str),
    #[error("empty element name")]
    EmptyName,
    #[error("invalid attribute key {0:?}")]
    InvalidAttributeKey(String),
    #[error("duplicate attribute key {0:?}")]
    DuplicateAttribute(String),
    #[error("unbalanced markers at byte {0}")]
    UnbalancedMarkers(usize),
    #[error("malformed attribute at byte {0}")]
    MalformedAttribute(usize),
    #[error("payload is not valid UTF-8")]
    InvalidUtf8,
}

/// An element/text tree, the universal payload of the protocol.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum XmlTree {
    Elem(Element),
    Text(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Element {
    pub name: String,
    pub attributes: Vec<(String, String)>,
    pub body: Vec<XmlTree>,
}

pub type XmlBody = Vec<XmlTree>;

impl XmlTree {
    pub fn elem(name: impl Into<String>, attributes: Vec<(String, String)>, body: XmlBody) -> Self {
        XmlTree::Elem(Element {
            name: name.into(),
            attributes,
            body,
        })
    }

    pub fn text(s: impl Into<String>) -> Self {
        XmlTree::Text(s.into())
    }

    pub fn as_elem(&self) -> Option<&Element> {
        match self {
            XmlTree::Elem(e) => Some(e),
            XmlTree::Text(_) => None,
        }
    }

    /// Concatenated text content of this tree.
    pub fn content(&self) -> String {
        let mut out = String::new();
        self.collect_text(&mut out);
        out
    }

    fn collect_text(&self, out: &mut String) {
        match self {
            XmlTree::Text(s) => out.push_str(s),
            XmlTree::Elem(e) => e.body.iter().for_each(|t| t.collect_text(out)),
        }
    }

    /// Renders the tree as indented XML, one element per line. Text nodes are
    /// written verbatim (escaped) so their whitespace survives.
    pub fn to_pretty_xml(&self) -> String {
        let mut out = String::new();
        pretty(self, 0, &mut out);
        out
    }
}

impl Element {
    pub fn attr(&self, key: &str) -> Option<&str> {
        self.attributes
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

/// Concatenated text content of a body.
pub fn body_text(body: &[XmlTree]) -> String {
    body.iter().map(XmlTree::content).collect()
}

fn escape(s: &str, out: &mut String) {
    for c in s.chars() {
        match c {
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '&' => out.push_str("&amp;"),
            '"' => out.push_str("&quot;"),
            c => out.push(c),
        }
    }
}

fn open_tag(e: &Element, out: &mut String) {
    out.push('<');
    out.push_str(&e.name);
    for (k, v) in &e.attributes {
        out.push(' ');
        out.push_str(k);
        out.push_str("=\"");
        escape(v, out);
        out.push('"');
    }
}

impl fmt::Display for XmlTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        compact(self, &mut out);
        f.write_str(&out)
    }
}

fn compact(t: &XmlTree, out: &mut String) {
    match t {
        XmlTree::Text(s) => escape(s, out),
        XmlTree::Elem(e) => {
            open_tag(e, out);
            if e.body.is_empty() {
                out.push_str("/>");
                return;
            }
            out.push('>');
            e.body.iter().for_each(|c| compact(c, out));
            out.push_str("</");
            out.push_str(&e.name);
            out.push('>');
        }
    }
}

fn pretty(t: &XmlTree, depth: usize, out: &mut String) {
    let indent = "  ".repeat(depth);
    match t {
        XmlTree::Text(s) => {
            out.push_str(&indent);
            escape(s, out);
            out.push('\n');
        }
        XmlTree::Elem(e) => {
            out.push_str(&indent);
            // Text-only elements stay on one line so the text is unambiguous.
            if e.body.iter().all(|c| matches!(c, XmlTree::Text(_))) {
                compact(t, out);
                out.push('\n');
                return;
            }
            open_tag(e, out);
            out.push_str(">\n");
            e.body.iter().for_each(|c| pretty(c, depth + 1, out));
            out.push_str(&indent);
            out.push_str("</");
            out.push_str(&e.name);
            out.push_str(">\n");
        }
    }
}

fn has_reserved(s: &str) -> bool {
    s.bytes().any(|b| b == X || b == Y)
}

fn check_tree(t: &XmlTree) -> Result<(), YxmlError> {
    match t {
        XmlTree::Text(s) => {
            if has_reserved(s) {
                return Err(YxmlError::ReservedByteInContent("text"));
            }
        }
        XmlTree::Elem(e) => {
            if e.name.is_empty() {
                return Err(YxmlError::EmptyName);
            }
            if has_reserved(&e.name) {
                return Err(YxmlError::ReservedByteInContent("element name"));
            }
            for (i, (k, v)) in e.attributes.iter().enumerate() {
                if k.is_empty() || k.contains('=') {
                    return Err(YxmlError::InvalidAttributeKey(k.clone()));
                }
                if has_reserved(k) {
                    return Err(YxmlError::ReservedByteInContent("attribute key"));
                }
                if has_reserved(v) {
                    return Err(YxmlError::ReservedByteInContent("attribute value"));
                }
                if e.attributes[..i].iter().any(|(k2, _)| k2 == k) {
                    return Err(YxmlError::DuplicateAttribute(k.clone()));
                }
            }
            e.body.iter().try_for_each(check_tree)?;
        }
    }
    Ok(())
}

/// Encodes a list of trees. Fails if any name, key, value or text contains a
/// reserved byte.
pub fn encode(trees: &[XmlTree]) -> Result<Vec<u8>, YxmlError> {
    trees.iter().try_for_each(check_tree)?;
    let mut out = Vec::new();
    trees.iter().for_each(|t| encode_into(t, &mut out));
    Ok(out)
}

fn encode_into(t: &XmlTree, out: &mut Vec<u8>) {
    match t {
        XmlTree::Text(s) => out.extend_from_slice(s.as_bytes()),
        XmlTree::Elem(e) => {
            out.extend_from_slice(&[X, Y]);
            out.extend_from_slice(e.name.as_bytes());
            for (k, v) in &e.attributes {
                out.push(Y);
                out.extend_from_slice(k.as_bytes());
                out.push(b'=');
                out.extend_from_slice(v.as_bytes());
            }
            out.push(X);
            e.body.iter().for_each(|c| encode_into(c, out));
            out.extend_from_slice(&[X, Y, X]);
        }
    }
}

/// Number of bytes `encode` produces for `trees`, computed from the tree shape.
pub fn encoded_len(trees: &[XmlTree]) -> usize {
    trees
        .iter()
        .map(|t| match t {
            XmlTree::Text(s) => s.len(),
            XmlTree::Elem(e) => {
                6 + e.name.len()
                    + e.attributes
                        .iter()
                        .map(|(k, v)| 2 + k.len() + v.len())
                        .sum::<usize>()
                    + encoded_len(&e.body)
            }
        })
        .sum()
}

/// Decodes YXML bytes into a list of trees. Adjacent text is always one node.
pub fn decode(bytes: &[u8]) -> Result<Vec<XmlTree>, YxmlError> {
    std::str::from_utf8(bytes).map_err(|_| YxmlError::InvalidUtf8)?;

    // Stack of open elements; the bottom entry collects the top-level list.
    let mut stack: Vec<(Option<Element>, Vec<XmlTree>)> = vec![(None, Vec::new())];
    let mut pos = 0;
    let text_of = |range: &[u8]| String::from_utf8(range.to_vec()).map_err(|_| YxmlError::InvalidUtf8);

    while pos < bytes.len() {
        match bytes[pos] {
            X => {
                if bytes.get(pos + 1) != Some(&Y) {
                    return Err(YxmlError::UnbalancedMarkers(pos));
                }
                if bytes.get(pos + 2) == Some(&X) {
                    // end marker
                    if stack.len() == 1 {
                        return Err(YxmlError::UnbalancedMarkers(pos));
                    }
                    let (elem, body) = stack.pop().expect("stack non-empty");
                    let mut elem = elem.expect("only the root has no element");
                    elem.body = body;
                    stack.last_mut().expect("root").1.push(XmlTree::Elem(elem));
                    pos += 3;
                    continue;
                }
                let start = pos + 2;
                let end = bytes[start..]
                    .iter()
                    .position(|&b| b == X)
                    .map(|i| start + i)
                    .ok_or(YxmlError::UnbalancedMarkers(pos))?;
                let mut fields = bytes[start..end].split(|&b| b == Y);
                let name = text_of(fields.next().unwrap_or_default())?;
                if name.is_empty() {
                    return Err(YxmlError::EmptyName);
                }
                let mut attributes: Vec<(String, String)> = Vec::new();
                for field in fields {
                    let eq = field
                        .iter()
                        .position(|&b| b == b'=')
                        .ok_or(YxmlError::MalformedAttribute(pos))?;
                    if eq == 0 {
                        return Err(YxmlError::MalformedAttribute(pos));
                    }
                    let key = text_of(&field[..eq])?;
                    if attributes.iter().any(|(k, _)| *k == key) {
                        return Err(YxmlError::DuplicateAttribute(key));
                    }
                    attributes.push((key, text_of(&field[eq + 1..])?));
                }
                stack.push((
                    Some(Element {
                        name,
                        attributes,
                        body: Vec::new(),
                    }),
                    Vec::new(),
                ));
                pos = end + 1;
            }
            Y => return Err(YxmlError::UnbalancedMarkers(pos)),
            _ => {
                let end = bytes[pos..]
                    .iter()
                    .position(|&b| b == X || b == Y)
                    .map_or(bytes.len(), |i| pos + i);
                let text = text_of(&bytes[pos..end])?;
                stack.last_mut().expect("root").1.push(XmlTree::Text(text));
                pos = end;
            }
        }
    }
    if stack.len() != 1 {
        return Err(YxmlError::UnbalancedMarkers(bytes.len()));
    }
    Ok(stack.pop().expect("root").1)
}

/// Merges adjacent text siblings and drops empty text nodes, recursively.
/// `decode(encode(t)) == canonicalize(t)` for every valid `t`.
pub fn canonicalize(trees: &[XmlTree]) -> Vec<XmlTree> {
    let mut out: Vec<XmlTree> = Vec::new();
    for t in trees {
        match t {
            XmlTree::Text(s) if s.is_empty() => {}
            XmlTree::Text(s) => match out.last_mut() {
                Some(XmlTree::Text(prev)) => prev.push_str(s),
                _ => out.push(XmlTree::Text(s.clone())),
            },
            XmlTree::Elem(e) => out.push(XmlTree::Elem(Element {
                name: e.name.clone(),
                attributes: e.attributes.clone(),
                body: canonicalize(&e.body),
            })),
        }
    }
    out
}
