//! Typed protocol messages.
//!
//! Editor to prover: one chunk per call,
//! `<prover_command name=NAME><prover_arg>..</prover_arg>..</prover_command>`.
//!
//! Prover to editor: either a feedback chunk (`<writeln>`, `<error>`,
//! `<report>`) or a function message split into a header chunk
//! `<protocol function=NAME/>` and a body chunk.

use std::io::Read;

use serde::Serialize;

use crate::document::{Assignment, EditOp};
use crate::ids::{CommandId, ExecId, VersionId};
use crate::yxml::{self, body_text, XmlBody, XmlTree};

use super::codec;
use super::framing::ChunkReader;
use super::WireError;

pub const DEFINE_COMMAND: &str = "Document.define_command";
pub const UPDATE: &str = "Document.update";
/// Barrier request: the prover answers with a `sync` function message once
/// every execution demanded so far has finished.
pub const SYNC: &str = "Engine.sync";

pub const ASSIGN_UPDATE: &str = "assign_update";
pub const SYNC_DONE: &str = "sync";

/// Node edit variant tag for the Edit operation.
pub const EDIT_TAG: usize = 0;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommandCall {
    pub name: String,
    pub args: Vec<XmlBody>,
}

impl CommandCall {
    pub fn new(name: impl Into<String>, args: Vec<XmlBody>) -> Self {
        CommandCall {
            name: name.into(),
            args,
        }
    }

    /// A call whose arguments are all plain strings.
    pub fn with_text_args<S: AsRef<str>>(name: impl Into<String>, args: &[S]) -> Self {
        CommandCall::new(
            name,
            args.iter().map(|a| codec::string(a.as_ref())).collect(),
        )
    }

    pub fn arg(&self, i: usize) -> Result<&[XmlTree], WireError> {
        self.args
            .get(i)
            .map(Vec::as_slice)
            .ok_or_else(|| WireError::BadArgument(format!("{}: missing argument {i}", self.name)))
    }

    pub fn to_xml(&self) -> XmlTree {
        XmlTree::elem(
            "prover_command",
            vec![("name".into(), self.name.clone())],
            self.args
                .iter()
                .map(|a| XmlTree::elem("prover_arg", Vec::new(), a.clone()))
                .collect(),
        )
    }

    pub fn from_xml(tree: &XmlTree) -> Result<Self, WireError> {
        let e = match tree {
            XmlTree::Elem(e) if e.name == "prover_command" => e,
            other => return Err(WireError::UnknownShape(format!("not a prover_command: {other}"))),
        };
        let name = e
            .attr("name")
            .filter(|n| !n.is_empty())
            .ok_or_else(|| WireError::UnknownShape("prover_command without name".into()))?;
        let args = e
            .body
            .iter()
            .map(|a| match a {
                XmlTree::Elem(arg) if arg.name == "prover_arg" => Ok(arg.body.clone()),
                other => Err(WireError::UnknownShape(format!("not a prover_arg: {other}"))),
            })
            .collect::<Result<_, _>>()?;
        Ok(CommandCall::new(name, args))
    }
}

pub fn encode_command_call(call: &CommandCall) -> Result<Vec<u8>, WireError> {
    Ok(yxml::encode(&[call.to_xml()])?)
}

pub fn decode_command_call(bytes: &[u8]) -> Result<CommandCall, WireError> {
    match yxml::decode(bytes)?.as_slice() {
        [tree] => CommandCall::from_xml(tree),
        other => Err(WireError::UnknownShape(format!(
            "expected one root element, found {} nodes",
            other.len()
        ))),
    }
}

/// Edits for one file node of the document.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeEdit {
    pub node: String,
    pub ops: Vec<EditOp>,
}

/// The editor-to-prover calls this implementation understands.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Request {
    DefineCommand {
        id: CommandId,
        text: String,
    },
    Update {
        old: VersionId,
        new: VersionId,
        edits: Vec<NodeEdit>,
    },
    Sync {
        token: i64,
    },
}

fn encode_edit_op(op: &EditOp) -> XmlBody {
    let (after, what) = op.as_pair();
    let opt = |id: Option<CommandId>| codec::option(id.map(|c| codec::int(c.0)));
    codec::pair(opt(after), opt(what))
}

fn decode_edit_op(body: &[XmlTree]) -> Result<EditOp, WireError> {
    let (a, b) = codec::decode_pair(body)?;
    let opt = |x: &[XmlTree]| -> Result<Option<CommandId>, WireError> {
        codec::decode_option(x)?
            .map(|v| codec::decode_int(v).map(CommandId))
            .transpose()
    };
    Ok(EditOp::from_pair(opt(a)?, opt(b)?))
}

impl Request {
    pub fn to_call(&self) -> CommandCall {
        match self {
            Request::DefineCommand { id, text } => CommandCall::with_text_args(
                DEFINE_COMMAND,
                &[id.to_string().as_str(), "", "", text.as_str()],
            ),
            Request::Update { old, new, edits } => {
                let edits = codec::list(edits.iter().map(|e| {
                    codec::pair(
                        codec::string(&e.node),
                        codec::variant(EDIT_TAG, codec::list(e.ops.iter().map(encode_edit_op))),
                    )
                }));
                CommandCall::new(UPDATE, vec![codec::int(old.0), codec::int(new.0), edits])
            }
            Request::Sync { token } => CommandCall::new(SYNC, vec![codec::int(*token)]),
        }
    }

    pub fn from_call(call: &CommandCall) -> Result<Self, WireError> {
        match call.name.as_str() {
            DEFINE_COMMAND => Ok(Request::DefineCommand {
                id: CommandId(codec::decode_int(call.arg(0)?)?),
                text: codec::decode_string(call.arg(3)?)?,
            }),
            UPDATE => {
                let old = VersionId(codec::decode_int(call.arg(0)?)?);
                let new = VersionId(codec::decode_int(call.arg(1)?)?);
                let mut edits = Vec::new();
                for entry in codec::decode_list(call.arg(2)?)? {
                    let (node, edit) = codec::decode_pair(entry)?;
                    let node = codec::decode_string(node)?;
                    let (tag, ops) = codec::decode_variant(edit)?;
                    if tag != EDIT_TAG {
                        log::warn!("ignoring unsupported node edit variant {tag} for {node}");
                        continue;
                    }
                    let ops = codec::decode_list(ops)?
                        .into_iter()
                        .map(decode_edit_op)
                        .collect::<Result<_, _>>()?;
                    edits.push(NodeEdit { node, ops });
                }
                Ok(Request::Update { old, new, edits })
            }
            SYNC => Ok(Request::Sync {
                token: codec::decode_int(call.arg(0)?)?,
            }),
            other => Err(WireError::UnknownShape(format!("unknown prover command {other}"))),
        }
    }
}

/// A prover-to-editor function call, sent as header chunk plus body chunk.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FunctionMessage {
    pub function: String,
    pub body: XmlBody,
}

impl FunctionMessage {
    pub fn header_xml(&self) -> XmlTree {
        XmlTree::elem(
            "protocol",
            vec![("function".into(), self.function.clone())],
            Vec::new(),
        )
    }
}

pub fn encode_function_message(m: &FunctionMessage) -> Result<(Vec<u8>, Vec<u8>), WireError> {
    Ok((yxml::encode(&[m.header_xml()])?, yxml::encode(&m.body)?))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AssignUpdate {
    pub version: VersionId,
    pub assignment: Assignment,
}

impl AssignUpdate {
    pub fn to_message(&self) -> FunctionMessage {
        let entries = self.assignment.entries.iter().map(|(cmd, execs)| {
            codec::pair(
                codec::int(cmd.0),
                codec::list(execs.iter().map(|e| codec::int(e.0))),
            )
        });
        FunctionMessage {
            function: ASSIGN_UPDATE.into(),
            body: codec::pair(codec::int(self.version.0), codec::list(entries)),
        }
    }

    pub fn from_body(body: &[XmlTree]) -> Result<Self, WireError> {
        let (version, entries) = codec::decode_pair(body)?;
        let entries = codec::decode_list(entries)?
            .into_iter()
            .map(|entry| {
                let (cmd, execs) = codec::decode_pair(entry)?;
                let execs = codec::decode_list(execs)?
                    .into_iter()
                    .map(|e| codec::decode_int(e).map(ExecId))
                    .collect::<Result<_, _>>()?;
                Ok((CommandId(codec::decode_int(cmd)?), execs))
            })
            .collect::<Result<_, WireError>>()?;
        Ok(AssignUpdate {
            version: VersionId(codec::decode_int(version)?),
            assignment: Assignment { entries },
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FeedbackKind {
    Writeln,
    Error,
    Report,
}

impl FeedbackKind {
    pub fn name(self) -> &'static str {
        match self {
            FeedbackKind::Writeln => "writeln",
            FeedbackKind::Error => "error",
            FeedbackKind::Report => "report",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "writeln" => Some(FeedbackKind::Writeln),
            "error" => Some(FeedbackKind::Error),
            "report" => Some(FeedbackKind::Report),
            _ => None,
        }
    }
}

/// Character offsets inside a command: 1-based start, exclusive end.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct TextRange {
    pub offset: usize,
    pub end_offset: usize,
}

impl TextRange {
    pub fn new(offset: usize, end_offset: usize) -> Self {
        TextRange { offset, end_offset }
    }

    /// The range covering 0-based character positions `start..end`.
    pub fn from_zero_based(start: usize, end: usize) -> Self {
        TextRange::new(start + 1, end + 1)
    }

    /// 0-based `start..end` character positions.
    pub fn zero_based(self) -> (usize, usize) {
        (self.offset.saturating_sub(1), self.end_offset.saturating_sub(1))
    }
}

/// Asynchronous prover output attached to one execution.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Feedback {
    pub kind: FeedbackKind,
    /// Assigned by the outbound queue; 0 until then.
    pub serial: u64,
    pub exec_id: ExecId,
    pub range: Option<TextRange>,
    pub body: XmlBody,
}

impl Feedback {
    pub fn new(kind: FeedbackKind, exec_id: ExecId, body: XmlBody) -> Self {
        Feedback {
            kind,
            serial: 0,
            exec_id,
            range: None,
            body,
        }
    }

    pub fn writeln(exec_id: ExecId, text: impl Into<String>) -> Self {
        Feedback::new(FeedbackKind::Writeln, exec_id, codec::string(&text.into()))
    }

    pub fn error(exec_id: ExecId, text: impl Into<String>) -> Self {
        Feedback::new(FeedbackKind::Error, exec_id, codec::string(&text.into()))
    }

    pub fn report(entity: &Entity) -> Self {
        Feedback {
            kind: FeedbackKind::Report,
            serial: 0,
            exec_id: entity.id,
            range: Some(entity.range),
            body: vec![entity.to_xml()],
        }
    }

    pub fn with_range(mut self, range: TextRange) -> Self {
        self.range = Some(range);
        self
    }

    pub fn text(&self) -> String {
        body_text(&self.body)
    }

    /// Entity elements carried by a report.
    pub fn entities(&self) -> Vec<Entity> {
        self.body.iter().filter_map(|t| Entity::from_xml(t).ok()).collect()
    }

    pub fn to_xml(&self) -> XmlTree {
        let mut attrs = vec![("serial".to_string(), self.serial.to_string())];
        if let Some(r) = self.range {
            attrs.push(("offset".into(), r.offset.to_string()));
            attrs.push(("end_offset".into(), r.end_offset.to_string()));
        }
        attrs.push(("id".into(), self.exec_id.to_string()));
        XmlTree::elem(self.kind.name(), attrs, self.body.clone())
    }

    pub fn from_xml(tree: &XmlTree) -> Result<Self, WireError> {
        let e = tree
            .as_elem()
            .ok_or_else(|| WireError::UnknownShape("feedback is text".into()))?;
        let kind = FeedbackKind::from_name(&e.name)
            .ok_or_else(|| WireError::UnknownShape(format!("unknown feedback kind {}", e.name)))?;
        let serial = parse_attr(e, "serial")?;
        let exec_id = ExecId(parse_attr(e, "id")?);
        let range = match (e.attr("offset"), e.attr("end_offset")) {
            (Some(_), Some(_)) => Some(TextRange::new(
                parse_attr(e, "offset")?,
                parse_attr(e, "end_offset")?,
            )),
            _ => None,
        };
        Ok(Feedback {
            kind,
            serial,
            exec_id,
            range,
            body: e.body.clone(),
        })
    }
}

fn parse_attr<T: std::str::FromStr>(e: &yxml::Element, key: &str) -> Result<T, WireError> {
    let v = e
        .attr(key)
        .ok_or_else(|| WireError::UnknownShape(format!("<{}> lacks {key}", e.name)))?;
    v.parse()
        .map_err(|_| WireError::UnknownShape(format!("<{}> has bad {key}={v:?}", e.name)))
}

pub fn encode_feedback(f: &Feedback) -> Result<Vec<u8>, WireError> {
    Ok(yxml::encode(&[f.to_xml()])?)
}

/// A hyperlink from a name's use site to its definition site.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Entity {
    /// Execution that defined the name, when it lives in the same document.
    pub def_id: Option<ExecId>,
    /// Execution of the command containing the use.
    pub id: ExecId,
    pub range: TextRange,
    pub def_range: TextRange,
    pub name: String,
    pub kind: String,
}

impl Entity {
    pub fn to_xml(&self) -> XmlTree {
        let mut attrs = Vec::new();
        if let Some(d) = self.def_id {
            attrs.push(("def_id".to_string(), d.to_string()));
        }
        attrs.extend([
            ("id".to_string(), self.id.to_string()),
            ("offset".into(), self.range.offset.to_string()),
            ("end_offset".into(), self.range.end_offset.to_string()),
            ("def_offset".into(), self.def_range.offset.to_string()),
            ("def_end_offset".into(), self.def_range.end_offset.to_string()),
            ("name".into(), self.name.clone()),
            ("kind".into(), self.kind.clone()),
        ]);
        XmlTree::elem("entity", attrs, Vec::new())
    }

    pub fn from_xml(tree: &XmlTree) -> Result<Self, WireError> {
        let e = match tree {
            XmlTree::Elem(e) if e.name == "entity" => e,
            other => return Err(WireError::UnknownShape(format!("not an entity: {other}"))),
        };
        Ok(Entity {
            def_id: e.attr("def_id").map(|_| parse_attr(e, "def_id").map(ExecId)).transpose()?,
            id: ExecId(parse_attr(e, "id")?),
            range: TextRange::new(parse_attr(e, "offset")?, parse_attr(e, "end_offset")?),
            def_range: TextRange::new(
                parse_attr(e, "def_offset")?,
                parse_attr(e, "def_end_offset")?,
            ),
            name: e.attr("name").unwrap_or_default().to_string(),
            kind: e.attr("kind").unwrap_or_default().to_string(),
        })
    }
}

/// Anything the prover sends to the editor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ProverMessage {
    Assign(AssignUpdate),
    SyncDone(i64),
    Feedback(Feedback),
}

impl ProverMessage {
    pub fn from_function(m: &FunctionMessage) -> Result<Self, WireError> {
        match m.function.as_str() {
            ASSIGN_UPDATE => AssignUpdate::from_body(&m.body).map(ProverMessage::Assign),
            SYNC_DONE => codec::decode_int(&m.body).map(ProverMessage::SyncDone),
            other => Err(WireError::UnknownShape(format!("unknown function {other}"))),
        }
    }

    /// Encodes into the one or two chunks that carry this message.
    pub fn to_chunks(&self) -> Result<Vec<Vec<u8>>, WireError> {
        let function = match self {
            ProverMessage::Feedback(f) => return Ok(vec![encode_feedback(f)?]),
            ProverMessage::Assign(a) => a.to_message(),
            ProverMessage::SyncDone(token) => FunctionMessage {
                function: SYNC_DONE.into(),
                body: codec::int(*token),
            },
        };
        let (header, body) = encode_function_message(&function)?;
        Ok(vec![header, body])
    }
}

/// A single prover-to-editor chunk, before pairing headers with bodies.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ProverChunk {
    FunctionHeader(String),
    Feedback(Feedback),
}

pub fn decode_prover_chunk(bytes: &[u8]) -> Result<ProverChunk, WireError> {
    let trees = yxml::decode(bytes)?;
    let [tree] = trees.as_slice() else {
        return Err(WireError::UnknownShape(format!(
            "expected one root element, found {} nodes",
            trees.len()
        )));
    };
    match tree {
        XmlTree::Elem(e) if e.name == "protocol" => e
            .attr("function")
            .map(|f| ProverChunk::FunctionHeader(f.to_string()))
            .ok_or_else(|| WireError::UnknownShape("protocol header without function".into())),
        other => Feedback::from_xml(other).map(ProverChunk::Feedback),
    }
}

/// Reads one complete prover message, returning it with the raw chunks it
/// occupied on the wire.
pub fn read_prover_message<R: Read>(
    reader: &mut ChunkReader<R>,
) -> Result<(ProverMessage, Vec<Vec<u8>>), WireError> {
    let first = reader.read_chunk()?;
    match decode_prover_chunk(&first)? {
        ProverChunk::Feedback(f) => Ok((ProverMessage::Feedback(f), vec![first])),
        ProverChunk::FunctionHeader(function) => {
            let body_bytes = reader.read_chunk()?;
            let body = yxml::decode(&body_bytes)?;
            let msg = ProverMessage::from_function(&FunctionMessage { function, body })?;
            Ok((msg, vec![first, body_bytes]))
        }
    }
}
