//! Executes an edit script against a prover and builds the report.

use std::sync::Arc;
use std::time::Duration;

use asyncdoc::client::{ClientError, ClientOptions, EditorClient};
use asyncdoc::engine::EngineConfig;
use asyncdoc::session::SessionError;
use asyncdoc::stm::StmConfig;
use thiserror::Error;

use crate::report::{QueryReport, Report};
use crate::script::Step;
use crate::trace::TraceWriter;

#[derive(Clone, Debug)]
pub enum Transport {
    InProcess,
    Connect(String),
}

#[derive(Clone)]
pub struct RunOptions {
    pub transport: Transport,
    pub workers: Option<usize>,
    pub deterministic: bool,
    pub trace: Option<Arc<TraceWriter>>,
    /// Limit for each wait on the prover.
    pub timeout: Duration,
    /// First execution id of an in-process prover.
    pub first_exec_id: i64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            transport: Transport::InProcess,
            workers: None,
            deterministic: false,
            trace: None,
            timeout: Duration::from_secs(30),
            first_exec_id: EngineConfig::default().first_exec_id,
        }
    }
}

impl RunOptions {
    pub fn engine_config(&self) -> EngineConfig {
        let stm = if self.deterministic {
            StmConfig::deterministic()
        } else {
            self.workers.map_or_else(StmConfig::default, StmConfig::with_workers)
        };
        EngineConfig {
            stm,
            first_exec_id: self.first_exec_id,
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    /// The script asked for something impossible, such as an edit out of bounds.
    #[error("step {step}: {source}")]
    Script { step: usize, source: SessionError },
    #[error("transport: {0}")]
    Transport(ClientError),
}

pub fn connect(options: &RunOptions) -> Result<EditorClient, RunError> {
    let client_options = ClientOptions {
        observer: options.trace.clone().map(|t| {
            let f: asyncdoc::client::ChunkObserver = Arc::new(move |d, b: &[u8]| {
                t.record(d, b);
            });
            f
        }),
        listener: None,
    };
    match &options.transport {
        Transport::InProcess => Ok(EditorClient::in_process(options.engine_config(), client_options)),
        Transport::Connect(addr) => EditorClient::connect(addr, client_options).map_err(RunError::Transport),
    }
}

/// Runs `steps`, waits for the prover to settle and reports every span.
pub fn run(steps: &[Step], options: &RunOptions) -> Result<Report, RunError> {
    let client = connect(options)?;
    let report = drive(&client, steps, options.timeout);
    client.close();
    if let Some(t) = &options.trace {
        let _ = t.flush();
    }
    report
}

pub fn drive(client: &EditorClient, steps: &[Step], timeout: Duration) -> Result<Report, RunError> {
    let mut report = Report::default();
    for (i, step) in steps.iter().enumerate() {
        match step {
            Step::Insert { .. } | Step::Remove { .. } => {
                let edit = step.as_edit().expect("edit step");
                client.edit(&[edit]).map_err(|e| match e {
                    ClientError::Session(source) => RunError::Script { step: i + 1, source },
                    other => RunError::Transport(other),
                })?;
            }
            Step::AwaitQuiescent {} => client.await_quiescent(timeout).map_err(RunError::Transport)?,
            Step::Query { offset } => report.queries.push(QueryReport {
                step: i + 1,
                offset: *offset,
                result: client.query(*offset),
            }),
        }
    }
    client.await_quiescent(timeout).map_err(RunError::Transport)?;
    report.spans = crate::report::Report::spans_of(&client.snapshot());
    Ok(report)
}
