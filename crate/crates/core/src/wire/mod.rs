//! Byte channel and message vocabulary shared by editor and prover.

pub mod codec;
pub mod framing;
pub mod protocol;

use thiserror::Error;

use crate::yxml::YxmlError;

pub use framing::{duplex, pipe, ChunkReader, ChunkWriter, Endpoint, PipeReader, PipeWriter};
pub use protocol::{
    decode_command_call, decode_prover_chunk, encode_command_call, encode_feedback,
    encode_function_message, read_prover_message, AssignUpdate, CommandCall, Entity, Feedback,
    FeedbackKind, FunctionMessage, NodeEdit, ProverChunk, ProverMessage, Request, TextRange,
};

#[derive(Debug, Error)]
pub enum WireError {
    #[error("channel closed")]
    ChannelClosed,
    #[error("malformed frame: {0}")]
    MalformedFrame(String),
    #[error("unknown message shape: {0}")]
    UnknownShape(String),
    #[error("bad argument: {0}")]
    BadArgument(String),
    #[error(transparent)]
    Yxml(#[from] YxmlError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
