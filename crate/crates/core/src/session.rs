//! Editor side of the protocol, without I/O.
//!
//! [`Session::edit_buffer`] turns text edits into the requests to send;
//! [`Session::handle_assign`] and [`Session::accumulate`] consume what the
//! prover sends back. Queries run against a [`Snapshot`] of the latest
//! confirmed version, so they never see execution ids from an update the
//! prover has not acknowledged yet.

use std::collections::{HashMap, HashSet, VecDeque};
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::document::{apply_edits, EditOp};
use crate::ids::{CommandId, ExecId, VersionId};
use crate::span_parser::{reparse, CommandSpan, LanguageParser, PeriodParser, SpanError, SpanKind, TextEdit};
use crate::wire::{AssignUpdate, Entity, Feedback, FeedbackKind, NodeEdit, Request};

/// File node name used when none is configured.
pub const DEFAULT_NODE: &str = "main.v";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SessionError {
    #[error("assignment for unknown version {0}")]
    UnknownVersion(VersionId),
    #[error(transparent)]
    Span(#[from] SpanError),
}

/// A span with absolute character offsets.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SnapshotSpan {
    pub command_id: CommandId,
    pub exec_id: Option<ExecId>,
    pub start: usize,
    pub end: usize,
    pub text: String,
    pub kind: SpanKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SpanStatus {
    /// No result yet.
    Pending,
    Done,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ErrorRegion {
    pub start: usize,
    pub end: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LinkTarget {
    pub command_id: CommandId,
    pub span: usize,
    pub start: usize,
    pub end: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Link {
    pub start: usize,
    pub end: usize,
    pub name: String,
    pub kind: String,
    /// `None` when the definition is not in this document.
    pub target: Option<LinkTarget>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct MarkupQueryResult {
    pub span: Option<usize>,
    pub state_text: Option<String>,
    pub errors: Vec<ErrorRegion>,
    pub links: Vec<Link>,
}

/// Immutable view of one confirmed version and its markup.
#[derive(Clone, Debug, Default)]
pub struct Snapshot {
    pub version: VersionId,
    pub spans: Vec<SnapshotSpan>,
    /// Feedback per execution, in serial order. Only executions of
    /// `spans` are present.
    pub markup: HashMap<ExecId, Vec<Feedback>>,
}

impl Snapshot {
    pub fn text(&self) -> String {
        self.spans.iter().map(|s| s.text.as_str()).collect()
    }

    /// Span containing `cursor`; the end of the buffer belongs to the last span.
    pub fn span_at(&self, cursor: usize) -> Option<usize> {
        if self.spans.is_empty() {
            return None;
        }
        let i = self.spans.partition_point(|s| s.end <= cursor);
        Some(i.min(self.spans.len() - 1))
    }

    pub fn feedback(&self, span: usize) -> &[Feedback] {
        self.spans[span]
            .exec_id
            .and_then(|e| self.markup.get(&e))
            .map_or(&[], |v| v.as_slice())
    }

    pub fn status(&self, span: usize) -> SpanStatus {
        let fb = self.feedback(span);
        if fb.iter().any(|f| f.kind == FeedbackKind::Error) {
            SpanStatus::Failed
        } else if fb.iter().any(|f| f.kind == FeedbackKind::Writeln) {
            SpanStatus::Done
        } else {
            SpanStatus::Pending
        }
    }

    pub fn query(&self, cursor: usize) -> MarkupQueryResult {
        match self.span_at(cursor) {
            Some(i) => self.query_span(i),
            None => MarkupQueryResult::default(),
        }
    }

    pub fn query_span(&self, i: usize) -> MarkupQueryResult {
        let span = &self.spans[i];
        let fb = self.feedback(i);
        let state_text = fb
            .iter()
            .rfind(|f| f.kind == FeedbackKind::Writeln)
            .map(Feedback::text);
        let trimmed_end = span.start + span.text.trim_end().chars().count();
        let clamp = |p: usize| (span.start + p).min(span.end);
        let errors = fb
            .iter()
            .filter(|f| f.kind == FeedbackKind::Error)
            .map(|f| {
                let (start, end) = match f.range {
                    Some(r) => {
                        let (s, e) = r.zero_based();
                        (clamp(s), clamp(e.max(s)))
                    }
                    None => (span.start, trimmed_end.max(span.start)),
                };
                ErrorRegion {
                    start,
                    end,
                    message: f.text(),
                }
            })
            .collect();
        let links = fb
            .iter()
            .filter(|f| f.kind == FeedbackKind::Report)
            .flat_map(Feedback::entities)
            .map(|e| self.link(span, &e))
            .collect();
        MarkupQueryResult {
            span: Some(i),
            state_text,
            errors,
            links,
        }
    }

    fn link(&self, span: &SnapshotSpan, e: &Entity) -> Link {
        let (s, end) = e.range.zero_based();
        let target = e.def_id.and_then(|def| {
            let j = self.spans.iter().position(|t| t.exec_id == Some(def))?;
            let t = &self.spans[j];
            let (ds, de) = e.def_range.zero_based();
            Some(LinkTarget {
                command_id: t.command_id,
                span: j,
                start: (t.start + ds).min(t.end),
                end: (t.start + de).min(t.end),
            })
        });
        Link {
            start: (span.start + s).min(span.end),
            end: (span.start + end).min(span.end),
            name: e.name.clone(),
            kind: e.kind.clone(),
            target,
        }
    }
}

struct Confirmed {
    version: VersionId,
    spans: Arc<Vec<CommandSpan>>,
    assignment: HashMap<CommandId, ExecId>,
}

pub struct Session {
    parser: Box<dyn LanguageParser>,
    node: String,
    text: String,
    spans: Vec<CommandSpan>,
    next_command: i64,
    next_version: i64,
    /// Sent but not yet assigned, oldest first.
    pending: VecDeque<(VersionId, Arc<Vec<CommandSpan>>)>,
    confirmed: Confirmed,
    /// Executions of the previously confirmed version.
    previous_execs: HashSet<ExecId>,
    markup: HashMap<ExecId, Vec<Feedback>>,
}

impl Default for Session {
    fn default() -> Self {
        Self::new()
    }
}

impl Session {
    pub fn new() -> Self {
        Self::with_parser(Box::new(PeriodParser), DEFAULT_NODE)
    }

    pub fn with_parser(parser: Box<dyn LanguageParser>, node: impl Into<String>) -> Self {
        Session {
            parser,
            node: node.into(),
            text: String::new(),
            spans: Vec::new(),
            next_command: -1,
            next_version: -1,
            pending: VecDeque::new(),
            confirmed: Confirmed {
                version: VersionId::INITIAL,
                spans: Arc::new(Vec::new()),
                assignment: HashMap::new(),
            },
            previous_execs: HashSet::new(),
            markup: HashMap::new(),
        }
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Current spans, including edits the prover has not confirmed.
    pub fn spans(&self) -> &[CommandSpan] {
        &self.spans
    }

    pub fn node(&self) -> &str {
        &self.node
    }

    /// Last version sent to the prover.
    pub fn latest_version(&self) -> VersionId {
        self.pending
            .back()
            .map_or(self.confirmed.version, |(v, _)| *v)
    }

    pub fn confirmed_version(&self) -> VersionId {
        self.confirmed.version
    }

    pub fn pending_updates(&self) -> usize {
        self.pending.len()
    }

    /// Number of executions with stored markup.
    pub fn markup_len(&self) -> usize {
        self.markup.len()
    }

    /// Applies `edits` in order and returns the requests that bring the
    /// prover up to date: definitions of new commands, then one update.
    /// Nothing is returned when the command sequence did not change.
    pub fn edit_buffer(&mut self, edits: &[TextEdit]) -> Result<Vec<Request>, SessionError> {
        let mut text = self.text.clone();
        let mut spans = self.spans.clone();
        let mut defined = Vec::new();
        let mut next_command = self.next_command;
        for edit in edits {
            let r = reparse(self.parser.as_ref(), &text, &spans, edit)?;
            let old = &spans[r.first..r.first + r.removed];
            let mut inserted = r.inserted.clone();
            // Re-tokenized spans with unchanged text keep their ids.
            let pre = old
                .iter()
                .zip(&inserted)
                .take_while(|(o, n)| o.text == n.text && o.kind == n.kind)
                .count();
            let suf = old[pre..]
                .iter()
                .rev()
                .zip(inserted[pre..].iter().rev())
                .take_while(|(o, n)| o.text == n.text && o.kind == n.kind)
                .count();
            for (i, span) in inserted.iter_mut().enumerate() {
                if i < pre {
                    span.id = old[i].id;
                } else if i >= r.inserted.len() - suf {
                    span.id = old[old.len() - (r.inserted.len() - i)].id;
                } else {
                    span.id = CommandId(next_command);
                    next_command -= 1;
                    defined.push((span.id, span.text.clone()));
                }
            }
            let mut next = Vec::with_capacity(spans.len() + inserted.len());
            next.extend_from_slice(&spans[..r.first]);
            next.extend(inserted);
            next.extend_from_slice(&spans[r.first + r.removed..]);
            spans = next;
            text = r.new_text;
        }

        let old_ids: Vec<CommandId> = self.spans.iter().map(|s| s.id).collect();
        let new_ids: Vec<CommandId> = spans.iter().map(|s| s.id).collect();
        self.text = text;
        self.spans = spans;
        self.next_command = next_command;
        let ops = diff_ops(&old_ids, &new_ids);
        if ops.is_empty() {
            return Ok(Vec::new());
        }
        debug_assert_eq!(apply_edits(&old_ids, &ops).as_deref(), Ok(new_ids.as_slice()));

        let live: HashSet<CommandId> = new_ids.iter().copied().collect();
        let mut out: Vec<Request> = defined
            .into_iter()
            .filter(|(id, _)| live.contains(id))
            .map(|(id, text)| Request::DefineCommand { id, text })
            .collect();
        let old = self.latest_version();
        let new = VersionId(self.next_version);
        self.next_version -= 1;
        self.pending.push_back((new, Arc::new(self.spans.clone())));
        out.push(Request::Update {
            old,
            new,
            edits: vec![NodeEdit {
                node: self.node.clone(),
                ops,
            }],
        });
        Ok(out)
    }

    /// Records the prover's assignment for a sent version.
    pub fn handle_assign(&mut self, a: &AssignUpdate) -> Result<(), SessionError> {
        if a.version == self.confirmed.version {
            return Ok(());
        }
        let Some(pos) = self.pending.iter().position(|(v, _)| *v == a.version) else {
            return Err(SessionError::UnknownVersion(a.version));
        };
        let (_, spans) = self.pending.drain(..=pos).next_back().expect("drained");
        let assignment: HashMap<CommandId, ExecId> = a
            .assignment
            .entries
            .iter()
            .filter_map(|(c, e)| e.first().map(|e| (*c, *e)))
            .collect();
        // Feedback outside the current and the previous assignment has had
        // its one version cycle of grace.
        let current: HashSet<ExecId> = assignment.values().copied().collect();
        self.previous_execs = self.confirmed.assignment.values().copied().collect();
        let previous = &self.previous_execs;
        self.markup
            .retain(|e, _| current.contains(e) || previous.contains(e));
        self.confirmed = Confirmed {
            version: a.version,
            spans,
            assignment,
        };
        Ok(())
    }

    /// Stores prover feedback under its execution id.
    pub fn accumulate(&mut self, f: Feedback) {
        let list = self.markup.entry(f.exec_id).or_default();
        let at = list.partition_point(|g| g.serial <= f.serial);
        list.insert(at, f);
    }

    pub fn snapshot(&self) -> Snapshot {
        let mut start = 0;
        let spans: Vec<SnapshotSpan> = self
            .confirmed
            .spans
            .iter()
            .map(|s| {
                let len = s.char_len();
                let out = SnapshotSpan {
                    command_id: s.id,
                    exec_id: self.confirmed.assignment.get(&s.id).copied(),
                    start,
                    end: start + len,
                    text: s.text.clone(),
                    kind: s.kind,
                };
                start += len;
                out
            })
            .collect();
        let markup = spans
            .iter()
            .filter_map(|s| s.exec_id)
            .filter_map(|e| self.markup.get(&e).map(|m| (e, m.clone())))
            .collect();
        Snapshot {
            version: self.confirmed.version,
            spans,
            markup,
        }
    }

    pub fn query(&self, cursor: usize) -> MarkupQueryResult {
        self.snapshot().query(cursor)
    }
}

/// Minimal edit operations turning `old` into `new`: everything between the
/// common prefix and the common suffix is deleted, then re-inserted.
pub fn diff_ops(old: &[CommandId], new: &[CommandId]) -> Vec<EditOp> {
    let pre = old.iter().zip(new).take_while(|(a, b)| a == b).count();
    let suf = old[pre..]
        .iter()
        .rev()
        .zip(new[pre..].iter().rev())
        .take_while(|(a, b)| a == b)
        .count();
    let hook = pre.checked_sub(1).map(|i| old[i]);
    let mut ops: Vec<EditOp> = (pre..old.len() - suf)
        .map(|_| EditOp::Delete { after: hook })
        .collect();
    let mut after = hook;
    for id in &new[pre..new.len() - suf] {
        ops.push(EditOp::Insert { after, id: *id });
        after = Some(*id);
    }
    ops
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::document::Assignment;

    fn ids(v: &[i64]) -> Vec<CommandId> {
        v.iter().map(|&i| CommandId(i)).collect()
    }

    #[test]
    fn typing_two_commands() {
        let mut s = Session::new();
        let reqs = s.edit_buffer(&[TextEdit::insert(0, "Proof.\n  intros l.")]).unwrap();
        assert_eq!(reqs.len(), 3);
        assert_eq!(
            reqs[0],
            Request::DefineCommand {
                id: CommandId(-1),
                text: "Proof.\n  ".into()
            }
        );
        let Request::Update { old, new, edits } = &reqs[2] else { panic!("update expected") };
        assert_eq!((*old, *new), (VersionId(0), VersionId(-1)));
        assert_eq!(
            edits[0].ops,
            [
                EditOp::Insert { after: None, id: CommandId(-1) },
                EditOp::Insert { after: Some(CommandId(-1)), id: CommandId(-2) },
            ]
        );
    }

    #[test]
    fn empty_edit_list_sends_nothing() {
        let mut s = Session::new();
        assert!(s.edit_buffer(&[]).unwrap().is_empty());
    }

    #[test]
    fn edit_inside_one_span_is_local() {
        let mut s = Session::new();
        s.edit_buffer(&[TextEdit::insert(0, "a. b. c.")]).unwrap();
        let reqs = s.edit_buffer(&[TextEdit::insert(3, "x")]).unwrap();
        let Request::Update { edits, .. } = reqs.last().unwrap() else { panic!() };
        assert_eq!(
            edits[0].ops,
            [
                EditOp::Delete { after: Some(CommandId(-1)) },
                EditOp::Insert { after: Some(CommandId(-1)), id: CommandId(-4) },
            ]
        );
        assert_eq!(s.spans()[2].id, CommandId(-3));
    }

    #[test]
    fn diff_round_trips() {
        let old = ids(&[-1, -2, -3, -4]);
        let new = ids(&[-1, -9, -4]);
        assert_eq!(apply_edits(&old, &diff_ops(&old, &new)).unwrap(), new);
        assert!(diff_ops(&old, &old).is_empty());
    }

    #[test]
    fn snapshot_only_after_assign() {
        let mut s = Session::new();
        s.edit_buffer(&[TextEdit::insert(0, "a. b.")]).unwrap();
        assert!(s.snapshot().spans.is_empty());
        let a = AssignUpdate {
            version: VersionId(-1),
            assignment: Assignment {
                entries: vec![(CommandId(-1), vec![ExecId(49)]), (CommandId(-2), vec![ExecId(50)])],
            },
        };
        s.handle_assign(&a).unwrap();
        s.handle_assign(&a).unwrap();
        assert_eq!(
            s.handle_assign(&AssignUpdate { version: VersionId(-7), assignment: Assignment::default() }),
            Err(SessionError::UnknownVersion(VersionId(-7)))
        );
        let snap = s.snapshot();
        assert_eq!(snap.spans[1].exec_id, Some(ExecId(50)));
        assert_eq!((snap.spans[1].start, snap.spans[1].end), (3, 5));

        let mut f = Feedback::error(ExecId(50), "bad");
        f.serial = 1;
        s.accumulate(f);
        s.accumulate(Feedback::writeln(ExecId(999), "stale"));
        let q = s.query(4);
        assert_eq!(q.span, Some(1));
        assert_eq!(q.errors, [ErrorRegion { start: 3, end: 5, message: "bad".into() }]);
        assert_eq!(s.snapshot().status(0), SpanStatus::Pending);
        assert_eq!(s.snapshot().status(1), SpanStatus::Failed);
    }

    #[test]
    fn out_of_bounds_leaves_state() {
        let mut s = Session::new();
        s.edit_buffer(&[TextEdit::insert(0, "a.")]).unwrap();
        let err = s.edit_buffer(&[TextEdit::insert(1, "b"), TextEdit::remove(5, 1)]);
        assert!(matches!(err, Err(SessionError::Span(_))));
        assert_eq!(s.text(), "a.");
    }
}
