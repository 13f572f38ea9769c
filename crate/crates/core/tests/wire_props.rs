use std::io::{Cursor, Read};

use asyncdoc::document::EditOp;
use asyncdoc::ids::{CommandId, ExecId, VersionId};
use asyncdoc::wire::codec;
use asyncdoc::wire::{
    decode_command_call, encode_command_call, read_prover_message, ChunkReader, ChunkWriter, Entity,
    Feedback, FeedbackKind, NodeEdit, ProverMessage, Request, TextRange, WireError,
};
use asyncdoc::document::Assignment;
use asyncdoc::yxml::{self, XmlBody};
use proptest::prelude::*;

/// A value of the structured codec, kept beside its expected encoding.
#[derive(Clone, Debug, PartialEq)]
enum Value {
    Int(i64),
    Str(String),
    Pair(Box<Value>, Box<Value>),
    List(Vec<Value>),
    Opt(Option<Box<Value>>),
}

fn value() -> impl Strategy<Value = Value> {
    let leaf = prop_oneof![any::<i64>().prop_map(Value::Int), "[a-z ]{1,6}".prop_map(Value::Str)];
    leaf.prop_recursive(4, 32, 4, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Value::Pair(Box::new(a), Box::new(b))),
            prop::collection::vec(inner.clone(), 0..4).prop_map(Value::List),
            prop::option::of(inner).prop_map(|o| Value::Opt(o.map(Box::new))),
        ]
    })
}

fn enc(v: &Value) -> XmlBody {
    match v {
        Value::Int(i) => codec::int(*i),
        Value::Str(s) => codec::string(s),
        Value::Pair(a, b) => codec::pair(enc(a), enc(b)),
        Value::List(xs) => codec::list(xs.iter().map(enc)),
        Value::Opt(o) => codec::option(o.as_ref().map(|x| enc(x))),
    }
}

/// Decodes guided by the expected shape.
fn dec(shape: &Value, body: &[yxml::XmlTree]) -> Result<Value, WireError> {
    Ok(match shape {
        Value::Int(_) => Value::Int(codec::decode_int(body)?),
        Value::Str(_) => Value::Str(codec::decode_string(body)?),
        Value::Pair(a, b) => {
            let (x, y) = codec::decode_pair(body)?;
            Value::Pair(Box::new(dec(a, x)?), Box::new(dec(b, y)?))
        }
        Value::List(xs) => {
            let items = codec::decode_list(body)?;
            assert_eq!(items.len(), xs.len());
            Value::List(xs.iter().zip(items).map(|(s, b)| dec(s, b)).collect::<Result<_, _>>()?)
        }
        Value::Opt(o) => match (o, codec::decode_option(body)?) {
            (Some(s), Some(b)) => Value::Opt(Some(Box::new(dec(s, b)?))),
            (None, None) => Value::Opt(None),
            _ => panic!("option shape mismatch"),
        },
    })
}

fn edit_op() -> impl Strategy<Value = EditOp> {
    let id = (-50i64..0).prop_map(CommandId);
    prop_oneof![
        (prop::option::of(id.clone()), id.clone()).prop_map(|(after, id)| EditOp::Insert { after, id }),
        prop::option::of(id).prop_map(|after| EditOp::Delete { after }),
    ]
}

fn request() -> impl Strategy<Value = Request> {
    prop_oneof![
        ((-1000i64..0), "[ -~\n\u{e9}]{1,20}")
            .prop_map(|(id, text)| Request::DefineCommand { id: CommandId(id), text }),
        (
            -100i64..=0,
            -100i64..0,
            prop::collection::vec(("[a-z/.]{1,8}", prop::collection::vec(edit_op(), 0..5)), 0..3)
        )
            .prop_map(|(old, new, edits)| Request::Update {
                old: VersionId(old),
                new: VersionId(new),
                edits: edits.into_iter().map(|(node, ops)| NodeEdit { node, ops }).collect(),
            }),
        any::<i64>().prop_map(|token| Request::Sync { token }),
    ]
}

fn feedback() -> impl Strategy<Value = Feedback> {
    (
        prop::sample::select(vec![FeedbackKind::Writeln, FeedbackKind::Error]),
        1u64..1000,
        1i64..1000,
        prop::option::of((1usize..50, 0usize..10)),
        "[ -~\n]{1,30}",
    )
        .prop_map(|(kind, serial, id, range, text)| {
            let mut f = Feedback::new(kind, ExecId(id), codec::string(&text));
            f.serial = serial;
            f.range = range.map(|(o, l)| TextRange::new(o, o + l));
            f
        })
}

/// Hands out the bytes in pieces of the given sizes.
struct Chunked {
    data: Vec<u8>,
    pos: usize,
    sizes: Vec<usize>,
    k: usize,
}

impl Read for Chunked {
    fn read(&mut self, out: &mut [u8]) -> std::io::Result<usize> {
        let want = self.sizes[self.k % self.sizes.len()].max(1);
        self.k += 1;
        let n = want.min(out.len()).min(self.data.len() - self.pos);
        out[..n].copy_from_slice(&self.data[self.pos..self.pos + n]);
        self.pos += n;
        Ok(n)
    }
}

proptest! {
    #[test]
    fn codec_roundtrip(v in value()) {
        let body = enc(&v);
        let bytes = yxml::encode(&body).unwrap();
        let back = yxml::decode(&bytes).unwrap();
        prop_assert_eq!(dec(&v, &back).unwrap(), v);
    }

    #[test]
    fn request_roundtrip(r in request()) {
        let bytes = encode_command_call(&r.to_call()).unwrap();
        let back = Request::from_call(&decode_command_call(&bytes).unwrap()).unwrap();
        prop_assert_eq!(back, r);
    }

    #[test]
    fn frames_survive_any_read_split(
        payloads in prop::collection::vec(prop::collection::vec(any::<u8>(), 0..40), 0..8),
        sizes in prop::collection::vec(1usize..7, 1..5),
    ) {
        let mut w = ChunkWriter::new(Vec::new());
        for p in &payloads {
            w.write_chunk(p).unwrap();
        }
        let data = w.into_inner();
        let mut r = ChunkReader::new(Chunked { data, pos: 0, sizes, k: 0 });
        for p in &payloads {
            prop_assert_eq!(&r.read_chunk().unwrap(), p);
        }
        prop_assert!(matches!(r.read_chunk(), Err(WireError::ChannelClosed)));
    }

    #[test]
    fn prover_messages_roundtrip(fs in prop::collection::vec(feedback(), 0..6), token in any::<i64>()) {
        let mut msgs: Vec<ProverMessage> = fs.into_iter().map(ProverMessage::Feedback).collect();
        msgs.push(ProverMessage::Assign(asyncdoc::wire::AssignUpdate {
            version: VersionId(-3),
            assignment: Assignment { entries: vec![(CommandId(-1), vec![ExecId(49)])] },
        }));
        msgs.push(ProverMessage::SyncDone(token));
        let mut w = ChunkWriter::new(Vec::new());
        for m in &msgs {
            for c in m.to_chunks().unwrap() {
                w.write_chunk(&c).unwrap();
            }
        }
        let mut r = ChunkReader::new(Cursor::new(w.into_inner()));
        for m in &msgs {
            prop_assert_eq!(&read_prover_message(&mut r).unwrap().0, m);
        }
    }
}

#[test]
fn entity_roundtrip() {
    let e = Entity {
        def_id: Some(ExecId(13)),
        id: ExecId(16),
        range: TextRange::new(9, 18),
        def_range: TextRange::new(7, 16),
        name: "app_assoc".into(),
        kind: "thm".into(),
    };
    let f = Feedback::report(&e);
    let bytes = asyncdoc::wire::encode_feedback(&f).unwrap();
    let back = Feedback::from_xml(&yxml::decode(&bytes).unwrap()[0]).unwrap();
    assert_eq!(back.entities(), [e]);
}
