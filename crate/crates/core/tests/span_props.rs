use asyncdoc::span_parser::{affected_region, reparse, LanguageParser, PeriodParser, SpanKind, TextEdit};
use proptest::prelude::*;

mod common;
use common::tokenize_oracle as oracle;

fn source() -> impl Strategy<Value = String> {
    prop::collection::vec(
        prop::sample::select(vec!["a", "b", " ", "\n", ".", "(", "*", ")", "\"", "\u{e9}", "(*", "*)", ". "]),
        0..40,
    )
    .prop_map(|v| v.concat())
}

fn parse(text: &str) -> Vec<(String, SpanKind)> {
    PeriodParser.parse_spans(text).into_iter().map(|s| (s.text, s.kind)).collect()
}

fn edit_for(text: &str) -> impl Strategy<Value = TextEdit> {
    let len = text.chars().count();
    prop_oneof![
        (0..=len, source()).prop_map(|(o, s)| TextEdit::insert(o, s)),
        (0..=len).prop_flat_map(move |o| (Just(o), 0..=len - o)).prop_map(|(o, l)| TextEdit::remove(o, l)),
    ]
}

fn text_and_edits() -> impl Strategy<Value = (String, Vec<TextEdit>)> {
    // Edits are generated against the original length and clamped when applied.
    (source(), prop::collection::vec((any::<prop::sample::Index>(), any::<prop::sample::Index>(), source(), any::<bool>()), 1..6))
        .prop_map(|(text, raw)| {
            let mut cur = text.clone();
            let mut edits = Vec::new();
            for (a, b, ins, is_insert) in raw {
                let len = cur.chars().count();
                let o = a.index(len + 1);
                let e = if is_insert {
                    TextEdit::insert(o, ins)
                } else {
                    TextEdit::remove(o, b.index(len - o + 1))
                };
                cur = e.apply(&cur).unwrap();
                edits.push(e);
            }
            (text, edits)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn matches_oracle(text in source()) {
        prop_assert_eq!(parse(&text), oracle(&text));
    }

    #[test]
    fn spans_partition_text(text in source()) {
        let spans = PeriodParser.parse_spans(&text);
        prop_assert_eq!(spans.iter().map(|s| s.text.as_str()).collect::<String>(), text);
        prop_assert!(spans.iter().all(|s| !s.text.is_empty()));
        let improper = spans.iter().filter(|s| s.kind == SpanKind::Improper).count();
        prop_assert!(improper <= 1);
        if improper == 1 {
            prop_assert_eq!(spans.last().unwrap().kind, SpanKind::Improper);
        }
    }

    #[test]
    fn boundaries_are_restart_points(text in source()) {
        let spans = PeriodParser.parse_spans(&text);
        let mut at = 0;
        for (i, s) in spans.iter().enumerate() {
            let rest: Vec<_> = parse(&text[at..]);
            prop_assert_eq!(rest, parse(&text)[i..].to_vec());
            at += s.text.len();
        }
    }

    #[test]
    fn incremental_equals_full((text, edits) in text_and_edits()) {
        let mut cur = text;
        let mut spans = PeriodParser.parse_spans(&cur);
        for e in &edits {
            let r = reparse(&PeriodParser, &cur, &spans, e).unwrap();
            spans = r.splice(&spans);
            cur = r.new_text;
            let got: Vec<_> = spans.iter().map(|s| (s.text.clone(), s.kind)).collect();
            prop_assert_eq!(got, parse(&cur));
        }
    }

    #[test]
    fn region_covers_edit(text in source().prop_flat_map(|t| { let e = edit_for(&t); (Just(t), e) })) {
        let (text, edit) = text;
        let r = affected_region(&PeriodParser, &text, &edit).unwrap();
        let (o, l) = match &edit {
            TextEdit::Insert { offset, .. } => (*offset, 0),
            TextEdit::Remove { offset, length } => (*offset, *length),
        };
        prop_assert!(r.start <= o && o + l <= r.end);
        prop_assert!(r.end <= text.chars().count());
    }
}

#[test]
fn out_of_bounds() {
    assert!(TextEdit::remove(2, 5).apply("abc").is_err());
    assert!(TextEdit::insert(4, "x").apply("abc").is_err());
    assert_eq!(TextEdit::insert(1, "\u{e9}").apply("ab").unwrap(), "a\u{e9}b");
}
