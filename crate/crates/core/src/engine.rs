//! Prover side of the channel.
//!
//! Reads command calls, keeps the document store, and drives one STM per file
//! node. On `Document.update` the assignment is written before any command
//! reaches the STM, so the editor always learns an execution id before the
//! first feedback that carries it.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::sync::{Arc, Mutex};

use crate::document::DocumentStore;
use crate::stm::{FeedbackSink, Stm, StmConfig};
use crate::miniprover::MiniProver;
use crate::wire::{
    decode_command_call, AssignUpdate, ChunkReader, ChunkWriter, Feedback, ProverMessage, Request,
    WireError,
};

/// Serializes everything the prover writes. The serial counter lives under
/// the same lock as the writer, so serials increase in channel order.
pub struct Outbound<W: Write> {
    inner: Mutex<(ChunkWriter<W>, u64)>,
}

impl<W: Write> Outbound<W> {
    pub fn new(writer: ChunkWriter<W>) -> Self {
        Outbound {
            inner: Mutex::new((writer, 0)),
        }
    }

    pub fn send(&self, msg: &ProverMessage) -> Result<(), WireError> {
        let mut inner = self.inner.lock().expect("outbound");
        let msg = match msg {
            ProverMessage::Feedback(f) => {
                inner.1 += 1;
                let mut f = f.clone();
                f.serial = inner.1;
                ProverMessage::Feedback(f)
            }
            other => other.clone(),
        };
        for chunk in msg.to_chunks()? {
            inner.0.write_chunk(&chunk)?;
        }
        Ok(())
    }
}

impl<W: Write + Send> FeedbackSink for Outbound<W> {
    fn emit(&self, feedback: Feedback) {
        if let Err(e) = self.send(&ProverMessage::Feedback(feedback)) {
            log::warn!("dropping feedback: {e}");
        }
    }
}

#[derive(Clone, Debug)]
pub struct EngineConfig {
    pub stm: StmConfig,
    /// First execution id handed out.
    pub first_exec_id: i64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            stm: StmConfig::default(),
            first_exec_id: 1,
        }
    }
}

pub struct ProverEngine<W: Write + Send + 'static> {
    store: DocumentStore,
    stms: BTreeMap<String, Stm<MiniProver>>,
    prover: Arc<MiniProver>,
    out: Arc<Outbound<W>>,
    config: EngineConfig,
}

impl<W: Write + Send + 'static> ProverEngine<W> {
    pub fn new(writer: ChunkWriter<W>, config: EngineConfig) -> Self {
        ProverEngine {
            store: DocumentStore::with_first_exec_id(config.first_exec_id),
            stms: BTreeMap::new(),
            prover: Arc::new(MiniProver::new()),
            out: Arc::new(Outbound::new(writer)),
            config,
        }
    }

    pub fn prover(&self) -> &Arc<MiniProver> {
        &self.prover
    }

    pub fn store(&self) -> &DocumentStore {
        &self.store
    }

    fn stm(&mut self, node: &str) -> &Stm<MiniProver> {
        let (prover, out, cfg) = (&self.prover, &self.out, &self.config.stm);
        self.stms
            .entry(node.to_string())
            .or_insert_with(|| Stm::new(prover.clone(), cfg.clone(), out.clone()))
    }

    /// Handles one request. Semantic errors are logged and the request is
    /// dropped; only channel failures are returned.
    pub fn handle(&mut self, req: Request) -> Result<(), WireError> {
        match req {
            Request::DefineCommand { id, text } => {
                if let Err(e) = self.store.define_command(id, &text) {
                    log::warn!("define_command rejected: {e}");
                }
            }
            Request::Update { old, new, edits } => {
                let result = match self.store.update(old, new, &edits) {
                    Ok(r) => r,
                    Err(e) => {
                        log::warn!("update {old} -> {new} rejected: {e}");
                        return Ok(());
                    }
                };
                self.out.send(&ProverMessage::Assign(AssignUpdate {
                    version: new,
                    assignment: result.assignment,
                }))?;
                for change in result.changes {
                    let stm = self.stm(&change.node);
                    if let Err(e) = stm.insert_after(change.last_common, change.inserted) {
                        log::error!("stm rejected update for {}: {e}", change.node);
                        continue;
                    }
                    if let Err(e) = stm.observe_all() {
                        log::error!("observe failed: {e}");
                    }
                }
            }
            Request::Sync { token } => {
                for stm in self.stms.values() {
                    let _ = stm.wait_quiescent();
                }
                self.out.send(&ProverMessage::SyncDone(token))?;
            }
        }
        Ok(())
    }

    /// Serves requests until the channel closes.
    pub fn run<R: Read>(&mut self, reader: &mut ChunkReader<R>) -> Result<(), WireError> {
        loop {
            let chunk = match reader.read_chunk() {
                Ok(c) => c,
                Err(WireError::ChannelClosed) => return Ok(()),
                Err(e) => return Err(e),
            };
            let req = decode_command_call(&chunk).and_then(|call| Request::from_call(&call));
            match req {
                Ok(req) => self.handle(req)?,
                Err(e) => log::warn!("ignoring chunk: {e}"),
            }
        }
    }
}

/// Runs an engine on `reader`/`writer` until the channel closes.
pub fn serve<R: Read, W: Write + Send + 'static>(
    reader: R,
    writer: W,
    config: EngineConfig,
) -> Result<(), WireError> {
    let mut engine = ProverEngine::new(ChunkWriter::new(writer), config);
    engine.run(&mut ChunkReader::new(reader))
}
