//! Asynchronous document protocol between an editor and a prover.
//!
//! The editor side ([`session`], [`client`]) tokenizes the buffer into
//! command spans and sends define/update calls; the prover side
//! ([`document`], [`engine`], [`stm`]) assigns execution ids, schedules
//! commands as a DAG on a worker pool and streams feedback back. Both sides
//! talk through length-framed YXML chunks ([`wire`], [`yxml`]).

pub mod client;
pub mod document;
pub mod engine;
pub mod ids;
pub mod miniprover;
pub mod session;
pub mod span_parser;
pub mod stm;
pub mod wire;
pub mod yxml;
