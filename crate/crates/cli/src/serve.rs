//! WebSocket bridge: every connection gets its own editor session and prover.
//!
//! Client to server, one JSON object per text frame:
//!
//! ```text
//! {"edit": [{"insert": {"offset": 0, "text": "Lemma t : 1 = 1."}}]}
//! {"query": {"offset": 3}}
//! {"trace": {"enabled": true}}
//! ```
//!
//! Server to client: `{"spans": ..}` whenever the snapshot changes,
//! `{"markup": ..}` in answer to a query, `{"trace": ..}` per protocol chunk
//! while tracing is enabled, `{"error": ..}` for frames it cannot handle.
//! Plain HTTP requests are answered from the static directory, if any.

use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::{Component, Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use asyncdoc::client::{ChunkObserver, ClientOptions, EditorClient, EventListener};
use asyncdoc::ids::VersionId;
use asyncdoc::session::MarkupQueryResult;
use asyncdoc::span_parser::TextEdit;
use serde::{Deserialize, Serialize};
use tungstenite::{Message, WebSocket};

use crate::report::{Report, SpanReport};
use crate::runner::RunOptions;
use crate::trace::TraceRecord;

#[derive(Clone, Debug, Default)]
pub struct ServeOptions {
    pub run: RunOptionsLite,
    pub static_dir: Option<PathBuf>,
}

/// Engine settings applied to each connection.
#[derive(Clone, Debug, Default)]
pub struct RunOptionsLite {
    pub workers: Option<usize>,
    pub deterministic: bool,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientFrame {
    Edit(Vec<TextEdit>),
    Query { offset: usize },
    Trace { enabled: bool },
}

#[derive(Debug, Serialize)]
pub struct SpansEvent {
    pub version: VersionId,
    pub text: String,
    pub spans: Vec<SpanReport>,
}

#[derive(Debug, Serialize)]
pub struct MarkupEvent {
    pub offset: usize,
    pub result: MarkupQueryResult,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ServerFrame {
    Spans(SpansEvent),
    Markup(MarkupEvent),
    Trace(TraceRecord),
    Error { message: String },
}

/// Binds `addr`. Callers map `AddrInUse` to the port-in-use exit code.
pub fn bind(addr: &str) -> io::Result<TcpListener> {
    TcpListener::bind(addr)
}

/// Accepts connections forever, one thread each.
pub fn serve(listener: TcpListener, options: ServeOptions) -> io::Result<()> {
    let options = Arc::new(options);
    for stream in listener.incoming() {
        let stream = match stream {
            Ok(s) => s,
            Err(e) => {
                log::warn!("accept failed: {e}");
                continue;
            }
        };
        let options = options.clone();
        thread::spawn(move || {
            let peer = stream.peer_addr().ok();
            if let Err(e) = handle_connection(stream, &options) {
                log::info!("connection {peer:?} ended: {e}");
            }
        });
    }
    Ok(())
}

/// Starts `serve` on a background thread and returns the bound address.
pub fn spawn(addr: &str, options: ServeOptions) -> io::Result<SocketAddr> {
    let listener = bind(addr)?;
    let local = listener.local_addr()?;
    thread::spawn(move || serve(listener, options));
    Ok(local)
}

const MAX_HEADER: usize = 16 * 1024;

/// Peeks at the request head without consuming it.
fn peek_head(stream: &TcpStream) -> io::Result<String> {
    let mut buf = vec![0u8; MAX_HEADER];
    let deadline = Instant::now() + Duration::from_secs(5);
    loop {
        let n = stream.peek(&mut buf)?;
        let head = &buf[..n];
        if n == 0 || head.windows(4).any(|w| w == b"\r\n\r\n") || n == buf.len() || Instant::now() > deadline {
            return Ok(String::from_utf8_lossy(head).into_owned());
        }
        thread::sleep(Duration::from_millis(2));
    }
}

fn is_upgrade(head: &str) -> bool {
    head.lines().any(|l| {
        let l = l.to_ascii_lowercase();
        l.starts_with("upgrade:") && l.contains("websocket")
    })
}

fn handle_connection(stream: TcpStream, options: &ServeOptions) -> Result<(), Box<dyn std::error::Error>> {
    let head = peek_head(&stream)?;
    if !is_upgrade(&head) {
        return serve_static(stream, &head, options.static_dir.as_deref()).map_err(Into::into);
    }
    let ws = tungstenite::accept(stream).map_err(|e| e.to_string())?;
    bridge(ws, options)
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js") | Some("mjs") => "text/javascript",
        Some("css") => "text/css",
        Some("json") => "application/json",
        Some("svg") => "image/svg+xml",
        _ => "application/octet-stream",
    }
}

fn resolve_static(root: &Path, target: &str) -> Option<PathBuf> {
    let path = target.split(['?', '#']).next().unwrap_or("/");
    let rel = Path::new(path.trim_start_matches('/'));
    if rel.components().any(|c| !matches!(c, Component::Normal(_))) {
        return None;
    }
    let mut full = root.join(rel);
    if full.is_dir() {
        full = full.join("index.html");
    }
    full.is_file().then_some(full)
}

fn serve_static(mut stream: TcpStream, head: &str, root: Option<&Path>) -> io::Result<()> {
    // Consume the request head that was only peeked at.
    let mut sink = vec![0u8; head.len()];
    stream.read_exact(&mut sink)?;
    let target = head.split_whitespace().nth(1).unwrap_or("/");
    let (status, ctype, body) = match root.and_then(|r| resolve_static(r, target)) {
        Some(p) => ("200 OK", content_type(&p), std::fs::read(&p)?),
        None if target == "/" && root.is_none() => (
            "200 OK",
            "text/plain; charset=utf-8",
            b"asyncdoc bridge: open a WebSocket on this address\n".to_vec(),
        ),
        None => ("404 Not Found", "text/plain; charset=utf-8", b"not found\n".to_vec()),
    };
    write!(
        stream,
        "HTTP/1.1 {status}\r\nContent-Type: {ctype}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        body.len()
    )?;
    stream.write_all(&body)?;
    stream.flush()
}

fn send(ws: &mut WebSocket<TcpStream>, frame: &ServerFrame) -> Result<(), Box<tungstenite::Error>> {
    let text = serde_json::to_string(frame).expect("frames serialize");
    ws.send(Message::text(text)).map_err(Box::new)
}

fn spans_event(client: &EditorClient) -> ServerFrame {
    let snap = client.snapshot();
    ServerFrame::Spans(SpansEvent {
        version: snap.version,
        text: snap.text(),
        spans: Report::spans_of(&snap),
    })
}

fn bridge(mut ws: WebSocket<TcpStream>, options: &ServeOptions) -> Result<(), Box<dyn std::error::Error>> {
    let dirty = Arc::new(AtomicBool::new(false));
    let tracing = Arc::new(AtomicBool::new(false));
    let traces: Arc<Mutex<Vec<TraceRecord>>> = Arc::default();
    let epoch = Instant::now();

    let listener: EventListener = {
        let dirty = dirty.clone();
        Arc::new(move |_| dirty.store(true, Ordering::SeqCst))
    };
    let observer: ChunkObserver = {
        let (tracing, traces) = (tracing.clone(), traces.clone());
        Arc::new(move |dir, bytes: &[u8]| {
            if tracing.load(Ordering::SeqCst) {
                let rec = TraceRecord::new(epoch.elapsed().as_micros() as u64, dir, bytes);
                traces.lock().expect("traces").push(rec);
            }
        })
    };
    let run = RunOptions {
        workers: options.run.workers,
        deterministic: options.run.deterministic,
        ..RunOptions::default()
    };
    let client = EditorClient::in_process(
        run.engine_config(),
        ClientOptions {
            observer: Some(observer),
            listener: Some(listener),
        },
    );

    ws.get_mut().set_read_timeout(Some(Duration::from_millis(15)))?;
    send(&mut ws, &spans_event(&client))?;
    loop {
        match ws.read() {
            Ok(Message::Text(text)) => {
                let reply = match serde_json::from_str::<ClientFrame>(&text) {
                    Ok(ClientFrame::Edit(edits)) => match client.edit(&edits) {
                        Ok(()) => None,
                        Err(e) => Some(ServerFrame::Error { message: e.to_string() }),
                    },
                    Ok(ClientFrame::Query { offset }) => Some(ServerFrame::Markup(MarkupEvent {
                        offset,
                        result: client.query(offset),
                    })),
                    Ok(ClientFrame::Trace { enabled }) => {
                        tracing.store(enabled, Ordering::SeqCst);
                        None
                    }
                    Err(e) => Some(ServerFrame::Error { message: format!("bad frame: {e}") }),
                };
                if let Some(r) = reply {
                    send(&mut ws, &r)?;
                }
            }
            Ok(Message::Close(_)) => break,
            Ok(_) => {}
            Err(tungstenite::Error::Io(e))
                if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => break,
            Err(e) => return Err(e.into()),
        }
        let pending: Vec<TraceRecord> = std::mem::take(&mut *traces.lock().expect("traces"));
        for rec in pending {
            send(&mut ws, &ServerFrame::Trace(rec))?;
        }
        if dirty.swap(false, Ordering::SeqCst) {
            send(&mut ws, &spans_event(&client))?;
        }
    }
    client.close();
    Ok(())
}
