use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    /// Paths relative to the run directory.
    pub outputs: Vec<FileDigest>,
    pub timings: Vec<StageTiming>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Collects outputs and stage timings while a command runs.
pub struct Recorder {
    dir: PathBuf,
    outputs: Vec<PathBuf>,
    timings: Vec<StageTiming>,
}

impl Recorder {
    pub fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            outputs: Vec::new(),
            timings: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn output(&mut self, path: PathBuf) {
        if !self.outputs.contains(&path) {
            self.outputs.push(path);
        }
    }

    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce(&mut Self) -> T) -> T {
        let t = Instant::now();
        let out = f(self);
        self.timings.push(StageTiming {
            stage: stage.to_string(),
            seconds: t.elapsed().as_secs_f64(),
        });
        out
    }

    /// Hashes everything recorded and writes the manifest last.
    pub fn finish(
        self,
        command: &str,
        seed: u64,
        config: serde_json::Value,
        inputs: &[PathBuf],
    ) -> Result<RunManifest> {
        let inputs = inputs
            .iter()
            .map(|p| {
                Ok(FileDigest {
                    path: p.display().to_string(),
                    sha256: sha256_file(p)?,
                })
            })
            .collect::<Result<_>>()?;
        let outputs = self
            .outputs
            .iter()
            .map(|p| {
                let rel = p.strip_prefix(&self.dir).unwrap_or(p);
                Ok(FileDigest {
                    path: rel.display().to_string(),
                    sha256: sha256_file(p)?,
                })
            })
            .collect::<Result<_>>()?;
        let m = RunManifest {
            command: command.to_string(),
            seed,
            config,
            inputs,
            outputs,
            timings: self.timings,
        };
        std::fs::write(
            self.dir.join(MANIFEST_FILE),
            serde_json::to_string_pretty(&m)?,
        )?;
        Ok(m)
    }
}

/// Recomputes every output digest of the manifest in `dir`.
pub fn verify(dir: &Path) -> Result<RunManifest> {
    let path = dir.join(MANIFEST_FILE);
    let text =
        std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let m: RunManifest =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    for f in &m.outputs {
        let actual = sha256_file(&dir.join(&f.path))?;
        if actual != f.sha256 {
            bail!("{}: digest mismatch", f.path);
        }
    }
    Ok(m)
}
