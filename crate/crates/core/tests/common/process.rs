//! Driving the `reconfgrid` binary.

use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};
use std::time::{Duration, Instant};

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_reconfgrid"))
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

pub fn free_port() -> u16 {
    std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

/// A running `serve`; terminated on drop.
pub struct Served {
    child: Child,
    pub urls: Vec<String>,
}

impl Served {
    /// Starts `serve config` and reads `expect` URLs from its stdout. If the
    /// process exits first, returns its exit code and stderr.
    pub fn start(config: &Path, expect: usize) -> Result<Served, (i32, String)> {
        let mut child = bin()
            .arg("serve")
            .arg(config)
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .unwrap();
        let mut lines = BufReader::new(child.stdout.take().unwrap()).lines();
        let mut urls = Vec::new();
        while urls.len() < expect {
            match lines.next() {
                Some(Ok(line)) => urls.push(line),
                _ => {
                    let status = child.wait().unwrap();
                    let mut err = String::new();
                    child.stderr.take().unwrap().read_to_string(&mut err).unwrap();
                    return Err((status.code().unwrap_or(-1), err));
                }
            }
        }
        Ok(Served { child, urls })
    }

    /// Sends SIGTERM and waits for the exit code.
    pub fn terminate(mut self) -> i32 {
        Command::new("kill")
            .arg("-TERM")
            .arg(self.child.id().to_string())
            .status()
            .unwrap();
        let deadline = Instant::now() + Duration::from_secs(10);
        loop {
            if let Some(status) = self.child.try_wait().unwrap() {
                return status.code().unwrap_or(-1);
            }
            assert!(Instant::now() < deadline, "serve ignored SIGTERM");
            std::thread::sleep(Duration::from_millis(20));
        }
    }
}

impl Drop for Served {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Writes a config with generous cpu and simfpga capacity.
pub fn write_config(dir: &Path, port: u16, manifests: &[String], devices: usize) -> std::path::PathBuf {
    let devs: Vec<_> = (0..devices)
        .map(|i| serde_json::json!({"lanes": 1 + (i * 7) % 64, "pipelineDepth": i % 9, "reconfigCycles": 100}))
        .collect();
    let mut backends = vec![serde_json::json!({"type": "cpu", "slots": 256})];
    if devices > 0 {
        backends.push(serde_json::json!({"type": "simfpga", "devices": devs}));
    }
    let config = serde_json::json!({
        "bindHost": "127.0.0.1",
        "port": port,
        "backends": backends,
        "modules": manifests,
    });
    let path = dir.join("server.json");
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}
