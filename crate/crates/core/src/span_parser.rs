//! Splitting proof text into command spans.
//!
//! [`LanguageParser`] is the registration point for language frontends;
//! [`PeriodParser`] is the concrete tokenizer for period-terminated
//! commands. [`reparse`] applies one [`TextEdit`] to a span list and
//! re-tokenizes only the affected region.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::CommandId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpanKind {
    /// Ends with a terminator.
    Proper,
    /// Unterminated text at the end of the input.
    Improper,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CommandSpan {
    pub id: CommandId,
    pub text: String,
    pub kind: SpanKind,
}

impl CommandSpan {
    pub fn new(text: impl Into<String>, kind: SpanKind) -> Self {
        CommandSpan {
            id: CommandId::UNASSIGNED,
            text: text.into(),
            kind,
        }
    }

    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }
}

/// A buffer edit in character offsets.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextEdit {
    Insert { offset: usize, text: String },
    Remove { offset: usize, length: usize },
}

impl TextEdit {
    pub fn insert(offset: usize, text: impl Into<String>) -> Self {
        TextEdit::Insert {
            offset,
            text: text.into(),
        }
    }

    pub fn remove(offset: usize, length: usize) -> Self {
        TextEdit::Remove { offset, length }
    }

    /// Applies the edit to `text`, returning the new text.
    pub fn apply(&self, text: &str) -> Result<String, SpanError> {
        let (start, end, ins) = self.byte_range(text)?;
        let mut out = String::with_capacity(text.len() + ins.len());
        out.push_str(&text[..start]);
        out.push_str(ins);
        out.push_str(&text[end..]);
        Ok(out)
    }

    /// Replaced byte range of `text` and the inserted string.
    fn byte_range<'a>(&'a self, text: &str) -> Result<(usize, usize, &'a str), SpanError> {
        let len = text.chars().count();
        let (offset, length, ins) = match self {
            TextEdit::Insert { offset, text } => (*offset, 0, text.as_str()),
            TextEdit::Remove { offset, length } => (*offset, *length, ""),
        };
        if offset > len || length > len - offset {
            return Err(SpanError::OutOfBounds {
                offset,
                length,
                len,
            });
        }
        let start = char_to_byte(text, offset);
        let end = start + text[start..].chars().take(length).map(char::len_utf8).sum::<usize>();
        Ok((start, end, ins))
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SpanError {
    #[error("edit at {offset}+{length} outside text of {len} characters")]
    OutOfBounds {
        offset: usize,
        length: usize,
        len: usize,
    },
}

pub(crate) fn char_to_byte(text: &str, chars: usize) -> usize {
    text.char_indices().nth(chars).map_or(text.len(), |(b, _)| b)
}

/// Prover-specific command-span recognition.
///
/// Implementations must partition their input: concatenating the returned
/// span texts reproduces the text exactly. Every span boundary must be a
/// restart point, i.e. scanning the text after a boundary yields the same
/// spans as scanning from the start.
pub trait LanguageParser: Send + Sync {
    fn spans<'a>(&'a self, text: &'a str) -> Box<dyn Iterator<Item = CommandSpan> + 'a>;

    fn parse_spans(&self, text: &str) -> Vec<CommandSpan> {
        self.spans(text).collect()
    }

    /// Whether changing `window` (edited text plus one character of context on
    /// each side) can move span boundaries arbitrarily far away.
    fn edit_is_nonlocal(&self, _window: &str) -> bool {
        false
    }
}

/// Lexical tokens that control span boundaries, kept in one place.
mod tokens {
    pub const COMMENT_OPEN: &[u8] = b"(*";
    pub const COMMENT_CLOSE: &[u8] = b"*)";
    pub const QUOTE: u8 = b'"';
    pub const TERMINATOR: u8 = b'.';

    pub fn is_space(b: u8) -> bool {
        matches!(b, b' ' | b'\t' | b'\n' | b'\r' | 0x0c)
    }
}

/// Splits text at periods that end a command.
///
/// A period terminates a span iff it lies outside comments and string
/// literals, is neither preceded nor followed by another period, and is
/// followed by whitespace or end of input. The span absorbs the whitespace
/// after its terminator. Comments `(* .. *)` nest; strings use `""` as an
/// escaped quote.
#[derive(Clone, Copy, Debug, Default)]
pub struct PeriodParser;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Lex {
    Normal,
    Comment(usize),
    Str,
}

struct PeriodScanner<'a> {
    text: &'a str,
    pos: usize,
}

impl Iterator for PeriodScanner<'_> {
    type Item = CommandSpan;

    fn next(&mut self) -> Option<CommandSpan> {
        use tokens::*;
        let b = self.text.as_bytes();
        let n = b.len();
        let start = self.pos;
        if start >= n {
            return None;
        }
        let at = |i: usize, tok: &[u8]| b[i..].starts_with(tok);
        let mut i = start;
        let mut lex = Lex::Normal;
        while i < n {
            match lex {
                Lex::Normal => {
                    if at(i, COMMENT_OPEN) {
                        lex = Lex::Comment(1);
                        i += 2;
                    } else if b[i] == QUOTE {
                        lex = Lex::Str;
                        i += 1;
                    } else if b[i] == TERMINATOR
                        && (i == 0 || b[i - 1] != TERMINATOR)
                        && (i + 1 == n || is_space(b[i + 1]))
                    {
                        let mut end = i + 1;
                        while end < n && is_space(b[end]) {
                            end += 1;
                        }
                        self.pos = end;
                        return Some(CommandSpan::new(&self.text[start..end], SpanKind::Proper));
                    } else {
                        i += 1;
                    }
                }
                Lex::Str => {
                    if b[i] == QUOTE {
                        if i + 1 < n && b[i + 1] == QUOTE {
                            i += 2;
                        } else {
                            lex = Lex::Normal;
                            i += 1;
                        }
                    } else {
                        i += 1;
                    }
                }
                Lex::Comment(depth) => {
                    if at(i, COMMENT_OPEN) {
                        lex = Lex::Comment(depth + 1);
                        i += 2;
                    } else if at(i, COMMENT_CLOSE) {
                        lex = if depth == 1 {
                            Lex::Normal
                        } else {
                            Lex::Comment(depth - 1)
                        };
                        i += 2;
                    } else {
                        i += 1;
                    }
                }
            }
        }
        self.pos = n;
        Some(CommandSpan::new(&self.text[start..], SpanKind::Improper))
    }
}

impl LanguageParser for PeriodParser {
    fn spans<'a>(&'a self, text: &'a str) -> Box<dyn Iterator<Item = CommandSpan> + 'a> {
        Box::new(PeriodScanner { text, pos: 0 })
    }

    fn edit_is_nonlocal(&self, window: &str) -> bool {
        let w = window.as_bytes();
        w.windows(2)
            .any(|p| p == tokens::COMMENT_OPEN || p == tokens::COMMENT_CLOSE)
            || w.contains(&tokens::QUOTE)
            || w.contains(&tokens::TERMINATOR)
    }
}

/// Region of the old text (character offsets) that must be re-tokenized.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Region {
    pub start: usize,
    pub end: usize,
}

/// Result of re-tokenizing after one edit: old spans
/// `first..first + removed` are replaced by `inserted`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Reparse {
    pub region: Region,
    pub first: usize,
    pub removed: usize,
    pub inserted: Vec<CommandSpan>,
    pub new_text: String,
}

impl Reparse {
    /// Splices the re-tokenized spans into `old_spans`.
    pub fn splice(&self, old_spans: &[CommandSpan]) -> Vec<CommandSpan> {
        let mut out = Vec::with_capacity(old_spans.len() + self.inserted.len());
        out.extend_from_slice(&old_spans[..self.first]);
        out.extend(self.inserted.iter().cloned());
        out.extend_from_slice(&old_spans[self.first + self.removed..]);
        out
    }
}

/// Re-tokenizes the part of `old_text` affected by `edit`.
///
/// `old_spans` must be the parse of `old_text`. The region starts at the span
/// holding the character before the edit (a boundary there can move when
/// whitespace is inserted or removed). It extends to end of text when the edit
/// touches a comment delimiter, a quote or a period; otherwise up to the first
/// old span boundary after the edit that the new parse reproduces.
pub fn reparse(
    parser: &dyn LanguageParser,
    old_text: &str,
    old_spans: &[CommandSpan],
    edit: &TextEdit,
) -> Result<Reparse, SpanError> {
    let (edit_start, edit_end, ins) = edit.byte_range(old_text)?;
    let new_text = edit.apply(old_text)?;
    let delta = ins.len() as isize - (edit_end - edit_start) as isize;

    let mut ends = Vec::with_capacity(old_spans.len());
    let mut acc = 0;
    for s in old_spans {
        acc += s.text.len();
        ends.push(acc);
    }
    debug_assert_eq!(acc, old_text.len(), "spans must partition the old text");

    // Index of the span containing the byte before the edit.
    let first = if edit_start == 0 {
        0
    } else {
        ends.partition_point(|&e| e < edit_start)
    };
    let region_start = if first == 0 { 0 } else { ends[first - 1] };

    let prev_char = |s: &str, at: usize| s[..at].chars().next_back().map_or(0, char::len_utf8);
    let next_char = |s: &str, at: usize| s[at..].chars().next().map_or(0, char::len_utf8);
    let old_window =
        &old_text[edit_start - prev_char(old_text, edit_start)..edit_end + next_char(old_text, edit_end)];
    let ins_end = edit_start + ins.len();
    let new_window =
        &new_text[edit_start - prev_char(&new_text, edit_start)..ins_end + next_char(&new_text, ins_end)];
    let to_end = parser.edit_is_nonlocal(old_window) || parser.edit_is_nonlocal(new_window);

    let mut inserted = Vec::new();
    let mut pos = region_start;
    let mut old_end = old_text.len();
    for span in parser.spans(&new_text[region_start..]) {
        pos += span.text.len();
        inserted.push(span);
        if to_end || pos < ins_end {
            continue;
        }
        let old_pos = (pos as isize - delta) as usize;
        if old_pos < old_text.len() && ends.binary_search(&old_pos).is_ok() {
            old_end = old_pos;
            break;
        }
    }
    let last = if old_end == old_text.len() {
        old_spans.len()
    } else {
        ends.binary_search(&old_end).expect("boundary") + 1
    };

    Ok(Reparse {
        region: Region {
            start: old_text[..region_start].chars().count(),
            end: old_text[..old_end].chars().count(),
        },
        first,
        removed: last - first,
        inserted,
        new_text,
    })
}

/// The region of `old_text` that must be re-tokenized after `edit`.
pub fn affected_region(
    parser: &dyn LanguageParser,
    old_text: &str,
    edit: &TextEdit,
) -> Result<Region, SpanError> {
    let spans = parser.parse_spans(old_text);
    reparse(parser, old_text, &spans, edit).map(|r| r.region)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(text: &str) -> Vec<String> {
        PeriodParser.parse_spans(text).into_iter().map(|s| s.text).collect()
    }

    #[test]
    fn two_commands() {
        assert_eq!(texts("Proof.\n  intros l."), ["Proof.\n  ", "intros l."]);
        assert!(texts("").is_empty());
    }

    #[test]
    fn qualified_names_do_not_terminate() {
        assert_eq!(texts("apply List.app_assoc."), ["apply List.app_assoc."]);
    }

    #[test]
    fn ellipsis_does_not_terminate() {
        assert_eq!(texts("a.. b... c."), ["a.. b... c."]);
        assert_eq!(texts("x ..."), ["x ..."]);
    }

    #[test]
    fn comments_attach_to_following_span() {
        assert_eq!(
            texts("a. (* note. (* nested. *) *) b. c"),
            ["a. ", "(* note. (* nested. *) *) b. ", "c"]
        );
    }

    #[test]
    fn strings_hide_periods() {
        assert_eq!(texts(r#"x "a. ""b. " y. z."#), [r#"x "a. ""b. " y. "#, "z."]);
    }

    #[test]
    fn unterminated_tail_is_improper() {
        let spans = PeriodParser.parse_spans("a. b (* open. ");
        assert_eq!(spans[0].kind, SpanKind::Proper);
        assert_eq!(spans[1].kind, SpanKind::Improper);
        assert_eq!(spans[1].text, "b (* open. ");
        let ws = PeriodParser.parse_spans("  ");
        assert_eq!(ws.len(), 1);
        assert_eq!(ws[0].kind, SpanKind::Improper);
    }

    #[test]
    fn local_edit_region() {
        let text = "a. b. cd";
        let r = affected_region(&PeriodParser, text, &TextEdit::insert(7, "x")).unwrap();
        assert_eq!(r, Region { start: 6, end: 8 });
        let text = "ab. cd. ef.";
        let r = affected_region(&PeriodParser, text, &TextEdit::insert(1, "x")).unwrap();
        assert_eq!(r, Region { start: 0, end: 4 });
        let r = affected_region(&PeriodParser, text, &TextEdit::insert(5, "x")).unwrap();
        assert_eq!(r, Region { start: 4, end: 8 });
    }

    #[test]
    fn comment_open_reparses_to_end() {
        let text = "a. b. c.";
        let r = affected_region(&PeriodParser, text, &TextEdit::insert(0, "(*")).unwrap();
        assert_eq!(r, Region { start: 0, end: 8 });
        let rp = reparse(&PeriodParser, text, &PeriodParser.parse_spans(text), &TextEdit::insert(0, "(*"))
            .unwrap();
        assert_eq!(rp.inserted.len(), 1);
        assert_eq!(rp.inserted[0].kind, SpanKind::Improper);
    }

    #[test]
    fn whitespace_at_boundary_moves_previous_span() {
        let text = "a. b.";
        let old = PeriodParser.parse_spans(text);
        let rp = reparse(&PeriodParser, text, &old, &TextEdit::insert(3, " ")).unwrap();
        assert_eq!(rp.first, 0);
        assert_eq!(rp.splice(&old), PeriodParser.parse_spans("a.  b."));
    }

    #[test]
    fn out_of_bounds() {
        assert!(matches!(
            affected_region(&PeriodParser, "ab", &TextEdit::insert(3, "x")),
            Err(SpanError::OutOfBounds { .. })
        ));
        assert!(matches!(
            TextEdit::remove(1, 2).apply("ab"),
            Err(SpanError::OutOfBounds { .. })
        ));
    }

    #[test]
    fn multibyte_offsets_are_characters() {
        let text = "λ. μ.";
        assert_eq!(TextEdit::insert(1, "x").apply(text).unwrap(), "λx. μ.");
        assert_eq!(TextEdit::remove(3, 1).apply(text).unwrap(), "λ. .");
        let r = affected_region(&PeriodParser, text, &TextEdit::insert(5, "ν")).unwrap();
        assert_eq!(r, Region { start: 3, end: 5 });
    }
}
