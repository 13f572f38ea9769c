//! Command-line driver for the asyncdoc protocol: scripted runs, a TCP
//! prover and a WebSocket bridge for browser clients.

pub mod report;
pub mod runner;
pub mod script;
pub mod serve;
pub mod trace;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const FAILURE: i32 = 1;
    pub const SCRIPT: i32 = 2;
    pub const TRANSPORT: i32 = 3;
    pub const PORT_IN_USE: i32 = 4;
}
