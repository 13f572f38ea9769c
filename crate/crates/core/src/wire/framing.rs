//! Chunked byte channel.
//!
//! ```text
//! frame = ASCII-decimal(len) 0x0A payload[len]
//! ```
//!
//! Transports are plain `Read`/`Write` pairs: an in-process [`pipe`] or a
//! TCP stream.

use std::io::{self, BufRead, BufReader, Read, Write};

use crossbeam_channel::{Receiver, Sender};

use super::WireError;

/// Largest payload accepted by [`ChunkReader`].
pub const MAX_CHUNK_LEN: usize = 64 * 1024 * 1024;

const MAX_HEADER_DIGITS: usize = 10;

pub struct ChunkWriter<W: Write> {
    inner: W,
}

impl<W: Write> ChunkWriter<W> {
    pub fn new(inner: W) -> Self {
        ChunkWriter { inner }
    }

    pub fn write_chunk(&mut self, payload: &[u8]) -> Result<(), WireError> {
        let header = format!("{}\n", payload.len());
        let mut frame = Vec::with_capacity(header.len() + payload.len());
        frame.extend_from_slice(header.as_bytes());
        frame.extend_from_slice(payload);
        self.inner.write_all(&frame).map_err(closed_or_io)?;
        self.inner.flush().map_err(closed_or_io)
    }

    pub fn into_inner(self) -> W {
        self.inner
    }
}

fn closed_or_io(e: io::Error) -> WireError {
    match e.kind() {
        io::ErrorKind::BrokenPipe
        | io::ErrorKind::ConnectionReset
        | io::ErrorKind::ConnectionAborted
        | io::ErrorKind::UnexpectedEof => WireError::ChannelClosed,
        _ => WireError::Io(e),
    }
}

pub struct ChunkReader<R: Read> {
    inner: BufReader<R>,
}

impl<R: Read> ChunkReader<R> {
    pub fn new(inner: R) -> Self {
        ChunkReader {
            inner: BufReader::new(inner),
        }
    }

    /// Reads one frame. End of stream on a frame boundary is `ChannelClosed`;
    /// end of stream anywhere else is `MalformedFrame`.
    pub fn read_chunk(&mut self) -> Result<Vec<u8>, WireError> {
        let mut header = Vec::new();
        loop {
            let buf = self.inner.fill_buf().map_err(closed_or_io)?;
            if buf.is_empty() {
                return Err(if header.is_empty() {
                    WireError::ChannelClosed
                } else {
                    WireError::MalformedFrame("end of stream inside frame header".into())
                });
            }
            let b = buf[0];
            self.inner.consume(1);
            match b {
                b'\n' if !header.is_empty() => break,
                b'0'..=b'9' if header.len() < MAX_HEADER_DIGITS => header.push(b),
                _ => {
                    return Err(WireError::MalformedFrame(format!(
                        "unexpected byte {b:#04x} in frame header"
                    )))
                }
            }
        }
        let len: usize = std::str::from_utf8(&header)
            .expect("ascii digits")
            .parse()
            .map_err(|_| WireError::MalformedFrame("length out of range".into()))?;
        if len > MAX_CHUNK_LEN {
            return Err(WireError::MalformedFrame(format!("frame of {len} bytes exceeds limit")));
        }
        let mut payload = vec![0; len];
        self.inner.read_exact(&mut payload).map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => {
                WireError::MalformedFrame("end of stream inside payload".into())
            }
            _ => closed_or_io(e),
        })?;
        Ok(payload)
    }
}

/// Write half of an in-process byte pipe.
#[derive(Clone)]
pub struct PipeWriter {
    tx: Sender<Vec<u8>>,
}

/// Read half of an in-process byte pipe. Reads return 0 once every writer is
/// dropped and the buffered data is consumed.
pub struct PipeReader {
    rx: Receiver<Vec<u8>>,
    buf: Vec<u8>,
    pos: usize,
}

/// Creates a unidirectional FIFO byte stream.
pub fn pipe() -> (PipeWriter, PipeReader) {
    let (tx, rx) = crossbeam_channel::unbounded();
    (
        PipeWriter { tx },
        PipeReader {
            rx,
            buf: Vec::new(),
            pos: 0,
        },
    )
}

impl Write for PipeWriter {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        if buf.is_empty() {
            return Ok(0);
        }
        self.tx
            .send(buf.to_vec())
            .map_err(|_| io::Error::from(io::ErrorKind::BrokenPipe))?;
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

impl Read for PipeReader {
    fn read(&mut self, out: &mut [u8]) -> io::Result<usize> {
        if self.pos == self.buf.len() {
            match self.rx.recv() {
                Ok(next) => {
                    self.buf = next;
                    self.pos = 0;
                }
                Err(_) => return Ok(0),
            }
        }
        let n = out.len().min(self.buf.len() - self.pos);
        out[..n].copy_from_slice(&self.buf[self.pos..self.pos + n]);
        self.pos += n;
        Ok(n)
    }
}

/// One side of a bidirectional in-process channel.
pub struct Endpoint {
    pub reader: ChunkReader<PipeReader>,
    pub writer: ChunkWriter<PipeWriter>,
}

/// Creates two connected endpoints; chunks written on one are read on the other.
pub fn duplex() -> (Endpoint, Endpoint) {
    let (a_tx, a_rx) = pipe();
    let (b_tx, b_rx) = pipe();
    (
        Endpoint {
            reader: ChunkReader::new(b_rx),
            writer: ChunkWriter::new(a_tx),
        },
        Endpoint {
            reader: ChunkReader::new(a_rx),
            writer: ChunkWriter::new(b_tx),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn framed(payload: &[u8]) -> Vec<u8> {
        let mut w = ChunkWriter::new(Vec::new());
        w.write_chunk(payload).unwrap();
        w.into_inner()
    }

    fn reader(bytes: &[u8]) -> ChunkReader<&[u8]> {
        ChunkReader::new(bytes)
    }

    #[test]
    fn frame_layout() {
        assert_eq!(framed(b"abc"), b"3\nabc");
        assert_eq!(framed(b""), b"0\n");
    }

    #[test]
    fn read_frames() {
        assert_eq!(reader(b"2\nhi").read_chunk().unwrap(), b"hi");
        let mut r = reader(b"1\na1\nb");
        assert_eq!(r.read_chunk().unwrap(), b"a");
        assert_eq!(r.read_chunk().unwrap(), b"b");
        assert!(matches!(r.read_chunk(), Err(WireError::ChannelClosed)));
    }

    #[test]
    fn malformed_frames() {
        assert!(matches!(reader(b"x\n").read_chunk(), Err(WireError::MalformedFrame(_))));
        assert!(matches!(reader(b"\n").read_chunk(), Err(WireError::MalformedFrame(_))));
        assert!(matches!(reader(b"5\nab").read_chunk(), Err(WireError::MalformedFrame(_))));
        assert!(matches!(reader(b"12").read_chunk(), Err(WireError::MalformedFrame(_))));
        assert!(matches!(
            reader(b"99999999999\n").read_chunk(),
            Err(WireError::MalformedFrame(_))
        ));
    }

    #[test]
    fn pipe_loopback() {
        let (a, mut b) = duplex();
        let Endpoint { mut writer, .. } = a;
        writer.write_chunk(b"ping").unwrap();
        writer.write_chunk(b"").unwrap();
        drop(writer);
        assert_eq!(b.reader.read_chunk().unwrap(), b"ping");
        assert_eq!(b.reader.read_chunk().unwrap(), b"");
        assert!(matches!(b.reader.read_chunk(), Err(WireError::ChannelClosed)));
    }

    #[test]
    fn write_to_closed_pipe() {
        let (tx, rx) = pipe();
        drop(rx);
        let mut w = ChunkWriter::new(tx);
        assert!(matches!(w.write_chunk(b"x"), Err(WireError::ChannelClosed)));
    }
}
