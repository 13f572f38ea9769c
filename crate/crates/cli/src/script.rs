//! Edit scripts: one JSON step per line, `#` comments and blank lines ignored.
//!
//! ```text
//! {"insert": {"offset": 0, "text": "Lemma t : 1 = 1.\n"}}
//! {"remove": {"offset": 3, "length": 2}}
//! {"await_quiescent": {}}
//! {"query": {"offset": 12}}
//! ```

use asyncdoc::span_parser::TextEdit;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Step {
    Insert { offset: usize, text: String },
    Remove { offset: usize, length: usize },
    AwaitQuiescent {},
    Query { offset: usize },
}

impl Step {
    pub fn as_edit(&self) -> Option<TextEdit> {
        match self {
            Step::Insert { offset, text } => Some(TextEdit::insert(*offset, text.clone())),
            Step::Remove { offset, length } => Some(TextEdit::remove(*offset, *length)),
            _ => None,
        }
    }
}

#[derive(Debug, Error)]
#[error("line {line}: {message}")]
pub struct ScriptError {
    pub line: usize,
    pub message: String,
}

pub fn parse_script(src: &str) -> Result<Vec<Step>, ScriptError> {
    src.lines()
        .enumerate()
        .filter(|(_, l)| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with('#')
        })
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| ScriptError {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// A script that types `text` in one insertion and waits for the result.
pub fn typing_script(text: &str) -> Vec<Step> {
    vec![
        Step::Insert {
            offset: 0,
            text: text.to_string(),
        },
        Step::AwaitQuiescent {},
    ]
}

pub fn render_script(steps: &[Step]) -> String {
    steps
        .iter()
        .map(|s| serde_json::to_string(s).expect("steps serialize") + "\n")
        .collect()
}
