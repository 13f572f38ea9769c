use std::io::{ErrorKind, Write};
use std::net::TcpListener;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::thread;

use asyncdoc::engine::{self, EngineConfig};
use asyncdoc_cli::exit;
use asyncdoc_cli::runner::{self, RunError, RunOptions, Transport};
use asyncdoc_cli::script::parse_script;
use asyncdoc_cli::serve::{self, RunOptionsLite, ServeOptions};
use asyncdoc_cli::trace::TraceWriter;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "asyncdoc", version, about = "Asynchronous prover interaction driver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct EngineArgs {
    /// Worker threads in the prover.
    #[arg(long)]
    workers: Option<usize>,
    /// Single worker, so reports are byte-for-byte reproducible.
    #[arg(long)]
    deterministic: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Replay an edit script and print the final report as JSON.
    Run {
        script: PathBuf,
        /// Talk to a prover started with `asyncdoc prover`.
        #[arg(long, conflicts_with = "in_process")]
        connect: Option<String>,
        /// Run the prover in this process (default).
        #[arg(long)]
        in_process: bool,
        #[command(flatten)]
        engine: EngineArgs,
        /// Write every protocol chunk to FILE as JSON lines.
        #[arg(long, value_name = "FILE")]
        trace: Option<PathBuf>,
        /// Seconds to wait for the prover to settle.
        #[arg(long, default_value_t = 30)]
        timeout: u64,
    },
    /// Serve the prover side over TCP, one engine per connection.
    Prover {
        #[arg(long, default_value = "127.0.0.1:7420")]
        listen: String,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// WebSocket bridge for browser editors.
    Serve {
        #[arg(long, default_value_t = 7421)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[command(flatten)]
        engine: EngineArgs,
        /// Directory served to plain HTTP requests.
        #[arg(long = "static", value_name = "DIR")]
        static_dir: Option<PathBuf>,
    },
}

fn engine_config(args: &EngineArgs) -> EngineConfig {
    RunOptions {
        workers: args.workers,
        deterministic: args.deterministic,
        ..RunOptions::default()
    }
    .engine_config()
}

fn bind(addr: &str) -> Result<TcpListener, ExitCode> {
    TcpListener::bind(addr).map_err(|e| {
        eprintln!("asyncdoc: cannot listen on {addr}: {e}");
        if e.kind() == ErrorKind::AddrInUse {
            ExitCode::from(exit::PORT_IN_USE as u8)
        } else {
            ExitCode::from(exit::TRANSPORT as u8)
        }
    })
}

fn code(c: i32) -> ExitCode {
    ExitCode::from(c as u8)
}

fn cmd_run(
    script: PathBuf,
    connect: Option<String>,
    engine: EngineArgs,
    trace: Option<PathBuf>,
    timeout: u64,
) -> ExitCode {
    let src = match std::fs::read_to_string(&script) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("asyncdoc: {}: {e}", script.display());
            return code(exit::SCRIPT);
        }
    };
    let steps = match parse_script(&src) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("asyncdoc: {}: {e}", script.display());
            return code(exit::SCRIPT);
        }
    };
    let trace = match trace.map(|p| TraceWriter::create(&p)).transpose() {
        Ok(t) => t.map(Arc::new),
        Err(e) => {
            eprintln!("asyncdoc: cannot create trace file: {e}");
            return code(exit::FAILURE);
        }
    };
    let options = RunOptions {
        transport: connect.map_or(Transport::InProcess, Transport::Connect),
        workers: engine.workers,
        deterministic: engine.deterministic,
        trace,
        timeout: std::time::Duration::from_secs(timeout),
        ..RunOptions::default()
    };
    match runner::run(&steps, &options) {
        Ok(report) => {
            let mut out = std::io::stdout().lock();
            let _ = writeln!(out, "{}", report.to_json());
            code(exit::OK)
        }
        Err(e @ RunError::Script { .. }) => {
            eprintln!("asyncdoc: {e}");
            code(exit::SCRIPT)
        }
        Err(e @ RunError::Transport(_)) => {
            eprintln!("asyncdoc: {e}");
            code(exit::TRANSPORT)
        }
    }
}

fn cmd_prover(listen: String, engine: EngineArgs) -> ExitCode {
    let listener = match bind(&listen) {
        Ok(l) => l,
        Err(c) => return c,
    };
    log::info!("prover listening on {listen}");
    let config = engine_config(&engine);
    for stream in listener.incoming() {
        let stream = match stream {
            Ok(s) => s,
            Err(e) => {
                log::warn!("accept failed: {e}");
                continue;
            }
        };
        let config = config.clone();
        thread::spawn(move || {
            stream.set_nodelay(true).ok();
            let reader = match stream.try_clone() {
                Ok(r) => r,
                Err(e) => return log::warn!("{e}"),
            };
            if let Err(e) = engine::serve(reader, stream, config) {
                log::info!("prover connection ended: {e}");
            }
        });
    }
    code(exit::OK)
}

fn cmd_serve(host: String, port: u16, engine: EngineArgs, static_dir: Option<PathBuf>) -> ExitCode {
    let addr = format!("{host}:{port}");
    let listener = match bind(&addr) {
        Ok(l) => l,
        Err(c) => return c,
    };
    eprintln!("asyncdoc: serving on ws://{addr}");
    let options = ServeOptions {
        run: RunOptionsLite {
            workers: engine.workers,
            deterministic: engine.deterministic,
        },
        static_dir,
    };
    match serve::serve(listener, options) {
        Ok(()) => code(exit::OK),
        Err(e) => {
            eprintln!("asyncdoc: {e}");
            code(exit::TRANSPORT)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ASYNCDOC_LOG", "warn")).init();
    match Cli::parse().command {
        Command::Run {
            script,
            connect,
            in_process: _,
            engine,
            trace,
            timeout,
        } => cmd_run(script, connect, engine, trace, timeout),
        Command::Prover { listen, engine } => cmd_prover(listen, engine),
        Command::Serve {
            port,
            host,
            engine,
            static_dir,
        } => cmd_serve(host, port, engine, static_dir),
    }
}
