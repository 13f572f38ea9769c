//! Structured data inside XML bodies.
//!
//! Lists and pairs are children of separator elements named `:`; tagged
//! variants are elements whose name is the decimal tag. `None` is the empty
//! body.
//!
//! ```text
//! pair(a, b)   = <:>a</:><:>b</:>
//! list[x, y]   = <:>x</:><:>y</:>
//! Some(x)      = <:>x</:>
//! variant(0,b) = <0>b</0>
//! ```

use crate::yxml::{Element, XmlBody, XmlTree};

use super::WireError;

pub const SEPARATOR: &str = ":";

pub fn node(body: XmlBody) -> XmlTree {
    XmlTree::elem(SEPARATOR, Vec::new(), body)
}

pub fn string(s: &str) -> XmlBody {
    if s.is_empty() {
        Vec::new()
    } else {
        vec![XmlTree::text(s)]
    }
}

pub fn int(i: i64) -> XmlBody {
    string(&i.to_string())
}

pub fn pair(a: XmlBody, b: XmlBody) -> XmlBody {
    vec![node(a), node(b)]
}

pub fn list<I: IntoIterator<Item = XmlBody>>(items: I) -> XmlBody {
    items.into_iter().map(node).collect()
}

pub fn option(o: Option<XmlBody>) -> XmlBody {
    o.map(|b| vec![node(b)]).unwrap_or_default()
}

pub fn variant(tag: usize, body: XmlBody) -> XmlBody {
    vec![XmlTree::elem(tag.to_string(), Vec::new(), body)]
}

fn shape(msg: impl Into<String>) -> WireError {
    WireError::UnknownShape(msg.into())
}

fn separator_body(t: &XmlTree) -> Result<&[XmlTree], WireError> {
    match t {
        XmlTree::Elem(Element {
            name,
            attributes,
            body,
        }) if name == SEPARATOR && attributes.is_empty() => Ok(body),
        other => Err(shape(format!("expected <:> separator, found {other}"))),
    }
}

pub fn decode_string(body: &[XmlTree]) -> Result<String, WireError> {
    body.iter()
        .map(|t| match t {
            XmlTree::Text(s) => Ok(s.as_str()),
            other => Err(shape(format!("expected text, found {other}"))),
        })
        .collect()
}

pub fn decode_int(body: &[XmlTree]) -> Result<i64, WireError> {
    let s = decode_string(body)?;
    s.parse()
        .map_err(|_| shape(format!("expected integer, found {s:?}")))
}

pub fn decode_pair(body: &[XmlTree]) -> Result<(&[XmlTree], &[XmlTree]), WireError> {
    match body {
        [a, b] => Ok((separator_body(a)?, separator_body(b)?)),
        _ => Err(shape(format!("expected pair, found {} nodes", body.len()))),
    }
}

pub fn decode_list(body: &[XmlTree]) -> Result<Vec<&[XmlTree]>, WireError> {
    body.iter().map(separator_body).collect()
}

pub fn decode_option(body: &[XmlTree]) -> Result<Option<&[XmlTree]>, WireError> {
    match body {
        [] => Ok(None),
        [x] => separator_body(x).map(Some),
        _ => Err(shape("expected option")),
    }
}

pub fn decode_variant(body: &[XmlTree]) -> Result<(usize, &[XmlTree]), WireError> {
    match body {
        [XmlTree::Elem(e)] if e.attributes.is_empty() => {
            let tag = e
                .name
                .parse()
                .map_err(|_| shape(format!("expected numeric variant tag, found {:?}", e.name)))?;
            Ok((tag, &e.body))
        }
        _ => Err(shape("expected variant")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn none_and_some() {
        assert_eq!(option(None), Vec::new());
        assert_eq!(option(Some(int(-1))).len(), 1);
        let pair_xml = node(pair(option(None), option(Some(int(-1)))));
        assert_eq!(pair_xml.to_string(), "<:><:/><:><:>-1</:></:></:>");
    }

    #[test]
    fn decode_errors() {
        assert!(decode_int(&string("x")).is_err());
        assert!(decode_pair(&list([int(1)])).is_err());
        assert!(decode_list(&[XmlTree::text("x")]).is_err());
        assert!(decode_variant(&string("x")).is_err());
    }
}
