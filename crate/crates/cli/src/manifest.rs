use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::Loaded;

/// An upstream artifact a stage needs is absent.
#[derive(Debug)]
pub struct MissingArtifact {
    pub stage: &'static str,
    pub what: &'static str,
    pub path: PathBuf,
    pub producer: &'static str,
}

impl fmt::Display for MissingArtifact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: missing {} ({}); run `revspam {}` first",
            self.stage,
            self.what,
            self.path.display(),
            self.producer
        )
    }
}

impl std::error::Error for MissingArtifact {}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Serialize)]
struct Manifest<'a> {
    stage: &'a str,
    config_hash: String,
    seed: u64,
    config: serde_json::Value,
    inputs: &'a BTreeMap<String, String>,
    outputs: &'a BTreeMap<String, String>,
}

/// Tracks one stage's inputs and outputs and writes its run manifest.
pub struct StageRun<'a> {
    pub cfg: &'a Loaded,
    stage: String,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

impl<'a> StageRun<'a> {
    pub fn new(cfg: &'a Loaded, stage: impl Into<String>) -> Self {
        StageRun {
            cfg,
            stage: stage.into(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn out_path(&self, rel: &str) -> PathBuf {
        self.cfg.out.join(rel)
    }

    /// Records a file from the config's input paths under its configured name.
    pub fn config_input(&mut self, rel: &Path) -> Result<PathBuf> {
        let path = self.cfg.input(rel);
        self.inputs
            .insert(format!("config:{}", rel.display()), sha256_file(&path)?);
        Ok(path)
    }

    /// Records an artifact of an earlier stage, failing with [`MissingArtifact`]
    /// when it is absent.
    pub fn artifact(
        &mut self,
        stage: &'static str,
        what: &'static str,
        rel: &str,
        producer: &'static str,
    ) -> Result<PathBuf> {
        let path = self.out_path(rel);
        if !path.is_file() {
            return Err(MissingArtifact {
                stage,
                what,
                path,
                producer,
            }
            .into());
        }
        self.inputs.insert(rel.to_string(), sha256_file(&path)?);
        Ok(path)
    }

    /// Writes an output, reads it back and records its hash.
    pub fn write(&mut self, rel: &str, contents: &str) -> Result<PathBuf> {
        let path = self.out_path(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        let back = fs::read(&path).with_context(|| format!("reading back {}", path.display()))?;
        if back != contents.as_bytes() {
            bail!("{}: content changed after write", path.display());
        }
        self.outputs
            .insert(rel.to_string(), hex::encode(Sha256::digest(&back)));
        Ok(path)
    }

    pub fn finish(self) -> Result<PathBuf> {
        let manifest = Manifest {
            stage: &self.stage,
            config_hash: self.cfg.hash(),
            seed: self.cfg.seed,
            config: serde_json::from_str(&self.cfg.canonical_json())?,
            inputs: &self.inputs,
            outputs: &self.outputs,
        };
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        let path = self.out_path(&format!("manifests/{}.json", self.stage));
        fs::create_dir_all(path.parent().expect("manifest dir"))?;
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
