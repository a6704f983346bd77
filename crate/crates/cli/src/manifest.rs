use std::fs::File;
use std::io::{self, BufReader};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_file(path: &Path) -> Result<String> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut hasher = Sha256::new();
    io::copy(&mut BufReader::new(file), &mut hasher)
        .with_context(|| format!("hashing {}", path.display()))?;
    Ok(hex::encode(hasher.finalize()))
}

#[derive(Debug, Serialize)]
pub struct InputHash {
    pub path: PathBuf,
    pub sha256: String,
}

/// Everything needed to rerun a stage: its flags, seeds and the digests of
/// the files it read.
#[derive(Debug, Serialize)]
pub struct Manifest<'a, C: Serialize> {
    pub command: &'a str,
    pub version: &'a str,
    pub tokenizer_version: u32,
    pub workers: Option<usize>,
    pub config: &'a C,
    pub seeds: Vec<u64>,
    pub inputs: Vec<InputHash>,
    pub outputs: Vec<PathBuf>,
}

impl<'a, C: Serialize> Manifest<'a, C> {
    pub fn new(command: &'a str, config: &'a C, workers: Option<usize>) -> Self {
        Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            tokenizer_version: commgen::text::TOKENIZER_VERSION,
            workers,
            config,
            seeds: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let sha256 = sha256_file(path)?;
        self.inputs.push(InputHash {
            path: path.to_path_buf(),
            sha256,
        });
        Ok(())
    }

    /// Writes `<out_dir>/manifests/<command>.json`.
    pub fn write(&self, out_dir: &Path) -> Result<PathBuf> {
        let dir = out_dir.join("manifests");
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(format!("{}.json", self.command));
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        serde_json::to_writer_pretty(file, self)?;
        Ok(path)
    }
}
