//! The structured result of a scripted run.

use asyncdoc::ids::{CommandId, ExecId};
use asyncdoc::session::{ErrorRegion, Link, MarkupQueryResult, Snapshot, SpanStatus};
use asyncdoc::wire::FeedbackKind;
use serde::Serialize;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SpanReport {
    pub start: usize,
    pub end: usize,
    pub text: String,
    pub command_id: CommandId,
    pub exec_id: Option<ExecId>,
    pub status: SpanStatus,
    /// Every writeln, oldest first.
    pub states: Vec<String>,
    pub errors: Vec<ErrorRegion>,
    pub links: Vec<Link>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct QueryReport {
    /// Position of the query step in the script.
    pub step: usize,
    pub offset: usize,
    pub result: MarkupQueryResult,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Report {
    pub spans: Vec<SpanReport>,
    pub queries: Vec<QueryReport>,
}

impl Report {
    pub fn spans_of(snap: &Snapshot) -> Vec<SpanReport> {
        (0..snap.spans.len())
            .map(|i| {
                let s = &snap.spans[i];
                let q = snap.query_span(i);
                SpanReport {
                    start: s.start,
                    end: s.end,
                    text: s.text.clone(),
                    command_id: s.command_id,
                    exec_id: s.exec_id,
                    status: snap.status(i),
                    states: snap
                        .feedback(i)
                        .iter()
                        .filter(|f| f.kind == FeedbackKind::Writeln)
                        .map(|f| f.text())
                        .collect(),
                    errors: q.errors,
                    links: q.links,
                }
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}
