//! Protocol trace: one JSON record per chunk.
//!
//! `payload` is the raw chunk as a string (YXML markers appear as `\u0005`
//! and `\u0006` escapes); `xml` is the decoded, indented rendering.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::Instant;

use asyncdoc::client::Direction;
use asyncdoc::yxml;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub ts_us: u64,
    /// `out` is editor to prover, `in` is prover to editor.
    pub dir: String,
    pub len: usize,
    pub payload: String,
    pub xml: String,
}

impl TraceRecord {
    pub fn new(ts_us: u64, dir: Direction, bytes: &[u8]) -> Self {
        let xml = match yxml::decode(bytes) {
            Ok(trees) => trees.iter().map(|t| t.to_pretty_xml()).collect(),
            Err(e) => format!("<!-- undecodable: {e} -->"),
        };
        TraceRecord {
            ts_us,
            dir: match dir {
                Direction::Out => "out",
                Direction::In => "in",
            }
            .into(),
            len: bytes.len(),
            payload: String::from_utf8_lossy(bytes).into_owned(),
            xml,
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }

    pub fn parse_line(line: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(line)
    }
}

/// Appends trace records to a sink, timestamped from creation.
pub struct TraceWriter {
    epoch: Instant,
    out: Mutex<Box<dyn Write + Send>>,
}

impl TraceWriter {
    pub fn new(out: Box<dyn Write + Send>) -> Self {
        TraceWriter {
            epoch: Instant::now(),
            out: Mutex::new(out),
        }
    }

    pub fn create(path: &Path) -> io::Result<Self> {
        Ok(Self::new(Box::new(BufWriter::new(File::create(path)?))))
    }

    pub fn record(&self, dir: Direction, bytes: &[u8]) -> TraceRecord {
        let mut out = self.out.lock().expect("trace");
        // Stamped under the lock so file order and time order agree.
        let rec = TraceRecord::new(self.epoch.elapsed().as_micros() as u64, dir, bytes);
        if let Err(e) = writeln!(out, "{}", rec.to_line()) {
            log::warn!("trace write failed: {e}");
        }
        rec
    }

    pub fn flush(&self) -> io::Result<()> {
        self.out.lock().expect("trace").flush()
    }
}
