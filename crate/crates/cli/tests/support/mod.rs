//! Helpers shared by the CLI integration tests and the acceptance suite.
#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use asyncdoc::yxml::XmlTree;
use asyncdoc_cli::report::Report;
use asyncdoc_cli::runner::{self, RunError, RunOptions};
use asyncdoc_cli::script::{parse_script, Step};
use asyncdoc_cli::trace::{TraceRecord, TraceWriter};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn fixture_script(name: &str) -> Vec<Step> {
    let src = fs::read_to_string(fixtures().join("scripts").join(name)).expect("fixture script");
    parse_script(&src).expect("fixture parses")
}

/// Runs `steps` with a trace file attached and returns the report together
/// with the decoded trace.
pub fn run_traced(steps: &[Step], mut options: RunOptions) -> Result<(Report, Vec<TraceRecord>), RunError> {
    let dir = tempfile::tempdir().expect("tempdir");
    let path = dir.path().join("trace.jsonl");
    options.trace = Some(Arc::new(TraceWriter::create(&path).expect("trace file")));
    let report = runner::run(steps, &options)?;
    let records = fs::read_to_string(&path)
        .expect("trace readable")
        .lines()
        .map(|l| TraceRecord::parse_line(l).expect("trace line"))
        .collect();
    Ok((report, records))
}

/// Transcript text: outbound chunks, then inbound chunks, each in channel
/// order. Cross-direction interleaving depends on timing and is left out.
pub fn transcript(records: &[TraceRecord]) -> String {
    let mut out = String::new();
    for dir in ["out", "in"] {
        for r in records.iter().filter(|r| r.dir == dir) {
            out.push_str(&format!("# {dir}\n{}", r.xml));
            if !r.xml.ends_with('\n') {
                out.push('\n');
            }
        }
    }
    out
}

/// Compares `actual` with the fixture at `rel`, or rewrites it when
/// `BLESS=1`. Returns a unified-ish diff, empty when equal.
pub fn check_fixture(rel: &str, actual: &[u8]) -> String {
    let path = fixtures().join(rel);
    if std::env::var("BLESS").as_deref() == Ok("1") {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(&path, actual).unwrap();
        return String::new();
    }
    let expected = match fs::read(&path) {
        Ok(b) => b,
        Err(e) => return format!("{}: {e} (run with BLESS=1 to create)", path.display()),
    };
    if expected == actual {
        return String::new();
    }
    let (e, a) = (String::from_utf8_lossy(&expected), String::from_utf8_lossy(actual));
    let mut diff = String::new();
    for (i, (x, y)) in e.lines().zip(a.lines()).enumerate() {
        if x != y {
            diff.push_str(&format!("line {}:\n- {x}\n+ {y}\n", i + 1));
        }
    }
    if e.lines().count() != a.lines().count() {
        diff.push_str(&format!("line count {} vs {}\n", e.lines().count(), a.lines().count()));
    }
    if diff.is_empty() {
        diff.push_str("byte-level difference (whitespace or line endings)\n");
    }
    diff
}

/// Parses hand-written XML as it appears in documentation listings.
/// Whitespace-only text between tags is layout and dropped; all other text
/// is kept byte for byte.
pub fn parse_literal_xml(src: &str) -> Vec<XmlTree> {
    fn unescape(s: &str) -> String {
        s.replace("&lt;", "<")
            .replace("&gt;", ">")
            .replace("&quot;", "\"")
            .replace("&amp;", "&")
    }
    type Open = (String, Vec<(String, String)>, Vec<XmlTree>);
    let mut stack: Vec<Open> = vec![(String::new(), Vec::new(), Vec::new())];
    let mut rest = src;
    while !rest.is_empty() {
        if let Some(tag_start) = rest.strip_prefix('<') {
            let end = tag_start.find('>').expect("unterminated tag");
            let tag = &tag_start[..end];
            rest = &tag_start[end + 1..];
            if let Some(name) = tag.strip_prefix('/') {
                let (open, attrs, body) = stack.pop().expect("balanced");
                assert_eq!(open, name.trim(), "mismatched close tag");
                stack.last_mut().unwrap().2.push(XmlTree::elem(open, attrs, body));
                continue;
            }
            let (tag, empty) = match tag.strip_suffix('/') {
                Some(t) => (t, true),
                None => (tag, false),
            };
            let mut parts = tag.splitn(2, char::is_whitespace);
            let name = parts.next().unwrap().to_string();
            let mut attrs = Vec::new();
            let mut a = parts.next().unwrap_or("").trim();
            while !a.is_empty() {
                let eq = a.find('=').expect("attribute needs a value");
                let key = a[..eq].trim().to_string();
                let v = a[eq + 1..].trim_start().strip_prefix('"').expect("quoted value");
                let close = v.find('"').expect("closing quote");
                attrs.push((key, unescape(&v[..close])));
                a = v[close + 1..].trim_start();
            }
            if empty {
                stack.last_mut().unwrap().2.push(XmlTree::elem(name, attrs, Vec::new()));
            } else {
                stack.push((name, attrs, Vec::new()));
            }
        } else {
            let end = rest.find('<').unwrap_or(rest.len());
            let text = &rest[..end];
            rest = &rest[end..];
            if !text.trim().is_empty() {
                stack.last_mut().unwrap().2.push(XmlTree::text(unescape(text)));
            }
        }
    }
    assert_eq!(stack.len(), 1, "unclosed elements");
    stack.pop().unwrap().2
}
