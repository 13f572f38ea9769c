use asyncdoc::yxml::{canonicalize, decode, encode, encoded_len, XmlTree, YxmlError, X, Y};
use proptest::prelude::*;

fn name() -> impl Strategy<Value = String> {
    "[a-z:_][a-z0-9_.-]{0,6}"
}

fn text() -> impl Strategy<Value = String> {
    "[ -~\n\u{e9}\u{3bb}]{0,12}"
}

fn tree() -> impl Strategy<Value = XmlTree> {
    let leaf = text().prop_map(XmlTree::Text);
    leaf.prop_recursive(4, 48, 5, |inner| {
        (
            name(),
            prop::collection::btree_map("[a-z_]{1,5}", "[ -~]{0,8}", 0..3),
            prop::collection::vec(inner, 0..5),
        )
            .prop_map(|(n, attrs, body)| XmlTree::elem(n, attrs.into_iter().collect(), body))
    })
}

/// Naive angle-bracket rendering, used as an independent injectivity witness.
fn render(trees: &[XmlTree]) -> String {
    trees
        .iter()
        .map(|t| match t {
            XmlTree::Text(s) => format!("T{}:{s}", s.len()),
            XmlTree::Elem(e) => {
                let attrs: String = e
                    .attributes
                    .iter()
                    .map(|(k, v)| format!("{}:{k}{}:{v}", k.len(), v.len()))
                    .collect();
                format!("E{}:{}[{attrs}]({})", e.name.len(), e.name, render(&e.body))
            }
        })
        .collect()
}

proptest! {
    #[test]
    fn roundtrip(trees in prop::collection::vec(tree(), 0..4)) {
        let bytes = encode(&trees).unwrap();
        prop_assert_eq!(decode(&bytes).unwrap(), canonicalize(&trees));
    }

    #[test]
    fn length_matches_shape(trees in prop::collection::vec(tree(), 0..4)) {
        prop_assert_eq!(encode(&trees).unwrap().len(), encoded_len(&trees));
    }

    #[test]
    fn canonical_trees_encode_injectively(
        a in prop::collection::vec(tree(), 0..3),
        b in prop::collection::vec(tree(), 0..3),
    ) {
        let (a, b) = (canonicalize(&a), canonicalize(&b));
        if render(&a) != render(&b) {
            prop_assert_ne!(encode(&a).unwrap(), encode(&b).unwrap());
        }
    }

    #[test]
    fn decode_never_panics(bytes in prop::collection::vec(prop::sample::select(vec![X, Y, b'a', b'=', b'b']), 0..24)) {
        let _ = decode(&bytes);
    }

    #[test]
    fn reserved_bytes_rejected(s in "[a-z]{0,4}", at in 0usize..5, reserved in prop::sample::select(vec![X, Y])) {
        let mut bytes = s.into_bytes();
        let at = at.min(bytes.len());
        bytes.insert(at, reserved);
        let t = XmlTree::Text(String::from_utf8(bytes).unwrap());
        prop_assert!(matches!(encode(&[t]), Err(YxmlError::ReservedByteInContent(_))));
    }
}

#[test]
fn grammar_examples() {
    let t = XmlTree::elem("a", vec![("k".into(), "v".into())], vec![XmlTree::text("b")]);
    assert_eq!(encode(&[t]).unwrap(), [5, 6, b'a', 6, b'k', b'=', b'v', 5, b'b', 5, 6, 5]);
    assert_eq!(decode(&[5, 6, b'a', 5, 5, 6, 5]).unwrap(), [XmlTree::elem("a", vec![], vec![])]);
    assert!(decode(b"").unwrap().is_empty());
    assert_eq!(decode(b"x").unwrap(), [XmlTree::text("x")]);
    assert!(matches!(decode(&[5, 6, 5]), Err(YxmlError::UnbalancedMarkers(_))));
    assert!(matches!(decode(&[5, 6, b'a', 6, b'k', 5, 5, 6, 5]), Err(YxmlError::MalformedAttribute(_))));
    assert!(matches!(decode(&[5, 6, b'a', 5]), Err(YxmlError::UnbalancedMarkers(_))));
}
