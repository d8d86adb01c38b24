//! Command-line entry points. Each command returns its process exit code.

mod bench;
mod config;
mod serve;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::client::{self, ClientError, ClientSession};
use crate::model::{ElementType, Elements};

pub use bench::{format_speedup, run_bench, synthetic_frame, BenchError, BenchReport, BenchRow};
pub use config::{ConfigError, ServerConfig};
pub use serve::{build_registry, load_module, start_server, ServeError, Server};

#[derive(Debug, Parser)]
#[command(name = "reconfgrid", version, about = "Serve, invoke and benchmark reconfigurable-hardware pipelines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Deploy the configured modules and serve them until interrupted.
    Serve { config: PathBuf },
    /// Stream a raw little-endian file through a remote service.
    Invoke {
        url: String,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long = "type", value_parser = parse_element_type)]
        element: ElementType,
    },
    /// Compare cpu and simfpga cycle counts for a module, locally.
    Bench {
        config: PathBuf,
        manifest: PathBuf,
        #[arg(long, default_value_t = 1)]
        frames: usize,
        #[arg(long = "frame-size", default_value_t = 4096)]
        frame_size: usize,
    },
    /// Print the services exposed by a container.
    List { url_base: String },
}

fn parse_element_type(s: &str) -> Result<ElementType, String> {
    match s {
        "i32" | "f64" | "bytes" => Ok(s.parse().expect("known name")),
        _ => Err(format!("expected one of i32, f64, bytes; got {s:?}")),
    }
}

pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match cli.command {
        Command::Serve { config } => cmd_serve(&config),
        Command::Invoke {
            url,
            input,
            output,
            element,
        } => cmd_invoke(&url, &input, &output, element),
        Command::Bench {
            config,
            manifest,
            frames,
            frame_size,
        } => cmd_bench(&config, &manifest, frames, frame_size),
        Command::List { url_base } => cmd_list(&url_base),
    }
}

pub fn cmd_serve(config_path: &Path) -> i32 {
    let config = match ServerConfig::load(config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let server = match start_server(&config) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    for url in server.urls() {
        println!("{url}");
    }
    if let Err(e) = wait_for_shutdown_signal() {
        eprintln!("error: cannot install signal handlers: {e}");
    }
    server.shutdown();
    0
}

fn wait_for_shutdown_signal() -> std::io::Result<()> {
    let rt = tokio::runtime::Builder::new_current_thread().enable_all().build()?;
    rt.block_on(async {
        #[cfg(unix)]
        {
            use tokio::signal::unix::{signal, SignalKind};
            let mut term = signal(SignalKind::terminate())?;
            tokio::select! {
                r = tokio::signal::ctrl_c() => r,
                _ = term.recv() => Ok(()),
            }
        }
        #[cfg(not(unix))]
        {
            tokio::signal::ctrl_c().await
        }
    })
}

pub fn cmd_invoke(url: &str, input: &Path, output: &Path, element: ElementType) -> i32 {
    let bytes = match std::fs::read(input) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("error: {}: {e}", input.display());
            return 1;
        }
    };
    let elements = match Elements::from_le_bytes(element, &bytes) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("error: {}: {e}", input.display());
            return 1;
        }
    };
    let result = (|| -> Result<Elements, ClientError> {
        let mut session = ClientSession::connect(url)?;
        session.send(&elements)?;
        session.finish()?;
        let mut results = session.receive_all(client::PROCESS_TIMEOUT)?;
        let _ = session.unsubscribe();
        match results.len() {
            1 => Ok(results.pop().expect("one result")),
            n => Err(ClientError::ProtocolError(format!("expected one result frame, got {n}"))),
        }
    })();
    match result {
        Ok(out) => match std::fs::write(output, out.to_le_bytes()) {
            Ok(()) => 0,
            Err(e) => {
                eprintln!("error: {}: {e}", output.display());
                1
            }
        },
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                ClientError::TypeMismatch { .. } => 5,
                ClientError::MalformedUrl(_) => 1,
                _ => 4,
            }
        }
    }
}

pub fn cmd_bench(config_path: &Path, manifest: &Path, frames: usize, frame_size: usize) -> i32 {
    let config = match ServerConfig::load(config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let module = match load_module(manifest) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    match run_bench(&config, module, frames, frame_size) {
        Ok(report) => {
            println!("{report}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn cmd_list(url_base: &str) -> i32 {
    match client::list_services(url_base) {
        Ok(names) => {
            for n in names {
                println!("{n}");
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            4
        }
    }
}
