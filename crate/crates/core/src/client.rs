//! Threaded editor client: a [`Session`] connected to a prover.
//!
//! A reader thread applies assignments and feedback to the session as they
//! arrive. [`EditorClient::await_quiescent`] sends a sync token and waits for
//! the prover to echo it, which it does only once all observed work is done.

use std::io::{Read, Write};
use std::net::{Shutdown, TcpStream};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use crate::engine::{self, EngineConfig};
use crate::ids::{ExecId, VersionId};
use crate::session::{MarkupQueryResult, Session, SessionError, Snapshot};
use crate::span_parser::TextEdit;
use crate::wire::{
    encode_command_call, pipe, read_prover_message, ChunkReader, ChunkWriter, ProverMessage,
    Request, WireError,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Editor to prover.
    Out,
    /// Prover to editor.
    In,
}

/// Sees every chunk, in channel order per direction.
pub type ChunkObserver = Arc<dyn Fn(Direction, &[u8]) + Send + Sync>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ClientEvent {
    Assigned(VersionId),
    Feedback(ExecId),
    Synced(i64),
    Closed,
}

pub type EventListener = Arc<dyn Fn(&ClientEvent) + Send + Sync>;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("prover connection closed")]
    Closed,
    #[error("timed out waiting for the prover")]
    Timeout,
    #[error("cannot connect: {0}")]
    Connect(std::io::Error),
}

#[derive(Clone, Default)]
pub struct ClientOptions {
    pub observer: Option<ChunkObserver>,
    pub listener: Option<EventListener>,
}

#[derive(Default)]
struct SyncState {
    last_token: i64,
    closed: bool,
}

struct Shared {
    session: Mutex<Session>,
    sync: Mutex<SyncState>,
    cv: Condvar,
}

type BoxWriter = Box<dyn Write + Send>;

pub struct EditorClient {
    shared: Arc<Shared>,
    writer: Mutex<Option<ChunkWriter<BoxWriter>>>,
    next_token: Mutex<i64>,
    observer: Option<ChunkObserver>,
    reader: Option<JoinHandle<()>>,
    prover: Option<JoinHandle<()>>,
    tcp: Option<TcpStream>,
}

impl EditorClient {
    /// Starts an in-process prover on its own thread.
    pub fn in_process(config: EngineConfig, options: ClientOptions) -> Self {
        let (to_prover, prover_in) = pipe();
        let (prover_out, from_prover) = pipe();
        let prover = thread::Builder::new()
            .name("prover".into())
            .spawn(move || {
                if let Err(e) = engine::serve(prover_in, prover_out, config) {
                    log::error!("prover stopped: {e}");
                }
            })
            .expect("spawn prover");
        let mut c = Self::start(Box::new(from_prover), Box::new(to_prover), options);
        c.prover = Some(prover);
        c
    }

    /// Connects to a prover listening on `addr`.
    pub fn connect(addr: &str, options: ClientOptions) -> Result<Self, ClientError> {
        let stream = TcpStream::connect(addr).map_err(ClientError::Connect)?;
        stream.set_nodelay(true).ok();
        let read = stream.try_clone().map_err(ClientError::Connect)?;
        let write = stream.try_clone().map_err(ClientError::Connect)?;
        let mut c = Self::start(Box::new(read), Box::new(write), options);
        c.tcp = Some(stream);
        Ok(c)
    }

    /// Drives a session over an arbitrary byte channel.
    pub fn start(
        reader: Box<dyn Read + Send>,
        writer: BoxWriter,
        options: ClientOptions,
    ) -> Self {
        let shared = Arc::new(Shared {
            session: Mutex::new(Session::new()),
            sync: Mutex::new(SyncState::default()),
            cv: Condvar::new(),
        });
        let reader = {
            let shared = shared.clone();
            let observer = options.observer.clone();
            let listener = options.listener.clone();
            thread::Builder::new()
                .name("editor-reader".into())
                .spawn(move || read_loop(reader, &shared, observer, listener))
                .expect("spawn reader")
        };
        EditorClient {
            shared,
            writer: Mutex::new(Some(ChunkWriter::new(writer))),
            next_token: Mutex::new(0),
            observer: options.observer,
            reader: Some(reader),
            prover: None,
            tcp: None,
        }
    }

    fn send(&self, writer: &mut ChunkWriter<BoxWriter>, req: &Request) -> Result<(), ClientError> {
        let bytes = encode_command_call(&req.to_call())?;
        if let Some(o) = &self.observer {
            o(Direction::Out, &bytes);
        }
        writer.write_chunk(&bytes)?;
        Ok(())
    }

    /// Applies edits to the buffer and sends the resulting requests.
    pub fn edit(&self, edits: &[TextEdit]) -> Result<(), ClientError> {
        // The writer lock orders concurrent edits; the session lock is
        // released before writing so the reader thread is never blocked
        // behind a full socket.
        let mut w = self.writer.lock().expect("writer");
        let w = w.as_mut().ok_or(ClientError::Closed)?;
        let reqs = self.shared.session.lock().expect("session").edit_buffer(edits)?;
        for r in &reqs {
            self.send(w, r)?;
        }
        Ok(())
    }

    /// Waits until the prover has answered every request sent so far and
    /// finished all work they started.
    pub fn await_quiescent(&self, timeout: Duration) -> Result<(), ClientError> {
        let token = {
            let mut t = self.next_token.lock().expect("token");
            *t += 1;
            *t
        };
        {
            let mut w = self.writer.lock().expect("writer");
            let w = w.as_mut().ok_or(ClientError::Closed)?;
            self.send(w, &Request::Sync { token })?;
        }
        let deadline = Instant::now() + timeout;
        let mut st = self.shared.sync.lock().expect("sync");
        while st.last_token < token {
            if st.closed {
                return Err(ClientError::Closed);
            }
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                return Err(ClientError::Timeout);
            }
            st = self.shared.cv.wait_timeout(st, left).expect("sync").0;
        }
        Ok(())
    }

    pub fn snapshot(&self) -> Snapshot {
        self.shared.session.lock().expect("session").snapshot()
    }

    pub fn query(&self, offset: usize) -> MarkupQueryResult {
        self.snapshot().query(offset)
    }

    pub fn text(&self) -> String {
        self.shared.session.lock().expect("session").text().to_string()
    }

    /// Runs `f` with the session locked.
    pub fn with_session<T>(&self, f: impl FnOnce(&Session) -> T) -> T {
        f(&self.shared.session.lock().expect("session"))
    }

    /// Closes the channel and waits for the prover side to finish.
    pub fn close(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        self.writer.lock().expect("writer").take();
        if let Some(s) = &self.tcp {
            let _ = s.shutdown(Shutdown::Write);
        }
        if let Some(h) = self.prover.take() {
            let _ = h.join();
        }
        if let Some(h) = self.reader.take() {
            let _ = h.join();
        }
    }
}

impl Drop for EditorClient {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn read_loop(
    reader: Box<dyn Read + Send>,
    shared: &Shared,
    observer: Option<ChunkObserver>,
    listener: Option<EventListener>,
) {
    let mut reader = ChunkReader::new(reader);
    let notify = |e: ClientEvent| {
        if let Some(l) = &listener {
            l(&e);
        }
    };
    loop {
        let (msg, chunks) = match read_prover_message(&mut reader) {
            Ok(m) => m,
            Err(WireError::ChannelClosed) => break,
            Err(e) => {
                log::error!("editor reader stopped: {e}");
                break;
            }
        };
        if let Some(o) = &observer {
            for c in &chunks {
                o(Direction::In, c);
            }
        }
        match msg {
            ProverMessage::Assign(a) => {
                let r = shared.session.lock().expect("session").handle_assign(&a);
                match r {
                    Ok(()) => notify(ClientEvent::Assigned(a.version)),
                    Err(e) => log::warn!("{e}"),
                }
            }
            ProverMessage::Feedback(f) => {
                let id = f.exec_id;
                shared.session.lock().expect("session").accumulate(f);
                notify(ClientEvent::Feedback(id));
            }
            ProverMessage::SyncDone(token) => {
                let mut st = shared.sync.lock().expect("sync");
                st.last_token = st.last_token.max(token);
                shared.cv.notify_all();
                drop(st);
                notify(ClientEvent::Synced(token));
            }
        }
    }
    shared.sync.lock().expect("sync").closed = true;
    shared.cv.notify_all();
    notify(ClientEvent::Closed);
}
