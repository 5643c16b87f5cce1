//! Run manifests: what a run wrote, with digests, plus the headline numbers
//! the report compares.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputEntry {
    /// Relative to the manifest's directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub experiment: String,
    pub config_hash: String,
    pub outputs: Vec<OutputEntry>,
    #[serde(default)]
    pub results: BTreeMap<String, f64>,
    /// s
    pub wall_time: f64,
}

impl RunManifest {
    pub fn file_name(experiment: &str) -> String {
        format!("{experiment}.manifest.json")
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }

    /// Checks every listed output against its digest.
    pub fn verify(&self, dir: &Path) -> anyhow::Result<()> {
        for o in &self.outputs {
            let p = dir.join(&o.path);
            let bytes = std::fs::read(&p).with_context(|| format!("manifest output {} is missing", p.display()))?;
            if sha256_hex(&bytes) != o.sha256 {
                bail!("digest mismatch for {}", p.display());
            }
        }
        Ok(())
    }
}

/// Collects the files of one run in an output directory.
pub struct OutputWriter {
    dir: PathBuf,
    outputs: Vec<OutputEntry>,
}

impl OutputWriter {
    pub fn new(dir: &Path) -> anyhow::Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self { dir: dir.to_path_buf(), outputs: Vec::new() })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> anyhow::Result<()> {
        let p = self.dir.join(name);
        std::fs::write(&p, bytes).with_context(|| format!("writing {}", p.display()))?;
        self.outputs.push(OutputEntry { path: name.to_string(), sha256: sha256_hex(bytes) });
        Ok(())
    }

    pub fn finish(
        self,
        experiment: &str,
        config_hash: String,
        results: BTreeMap<String, f64>,
        wall_time: f64,
    ) -> anyhow::Result<PathBuf> {
        let manifest = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            experiment: experiment.to_string(),
            config_hash,
            outputs: self.outputs,
            results,
            wall_time,
        };
        let p = self.dir.join(RunManifest::file_name(experiment));
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        std::fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?;
        Ok(p)
    }
}
