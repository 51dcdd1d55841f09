use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
struct FileHash {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: u64,
    jobs: usize,
    config: &'a serde_json::Value,
    inputs: Vec<FileHash>,
    outputs: Vec<FileHash>,
    runtime_seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    replicate_runtimes: Option<&'a [f64]>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut r = BufReader::new(File::open(path).with_context(|| format!("hashing {}", path.display()))?);
    let mut h = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = r.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

/// Tracks the files a command reads and writes, and writes its manifest.
pub struct Run {
    pub out_dir: PathBuf,
    command: &'static str,
    started: Instant,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    /// Per-replicate wall-clock seconds of a benchmark.
    pub replicate_runtimes: Option<Vec<f64>>,
}

impl Run {
    pub fn new(command: &'static str, out_dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
        Ok(Run {
            out_dir: out_dir.to_path_buf(),
            command,
            started: Instant::now(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            replicate_runtimes: None,
        })
    }

    pub fn input(&mut self, path: &Path) -> PathBuf {
        self.inputs.push(path.to_path_buf());
        path.to_path_buf()
    }

    /// Path for an output file inside the output directory.
    pub fn output(&mut self, name: &str) -> PathBuf {
        let p = self.out_dir.join(name);
        self.outputs.push(p.clone());
        p
    }

    pub fn record(&mut self, path: PathBuf) {
        self.outputs.push(path);
    }

    pub fn finish(self, seed: u64, jobs: usize, config: &serde_json::Value) -> Result<PathBuf> {
        let hash = |p: &PathBuf, rel: bool| -> Result<FileHash> {
            let name = if rel {
                p.strip_prefix(&self.out_dir).unwrap_or(p).display().to_string()
            } else {
                p.display().to_string()
            };
            Ok(FileHash {
                path: name,
                sha256: sha256_file(p)?,
            })
        };
        let manifest = Manifest {
            tool: "riaft",
            version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            seed,
            jobs,
            config,
            inputs: self.inputs.iter().map(|p| hash(p, false)).collect::<Result<_>>()?,
            outputs: self.outputs.iter().map(|p| hash(p, true)).collect::<Result<_>>()?,
            runtime_seconds: self.started.elapsed().as_secs_f64(),
            replicate_runtimes: self.replicate_runtimes.as_deref(),
        };
        let path = self.out_dir.join(format!("{}.manifest.json", self.command));
        let mut w = BufWriter::new(File::create(&path)?);
        serde_json::to_writer_pretty(&mut w, &manifest)?;
        writeln!(w)?;
        w.flush()?;
        Ok(path)
    }
}
