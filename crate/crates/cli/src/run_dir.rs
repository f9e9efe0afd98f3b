//! Run-stamped output directories with a manifest of config, inputs and
//! output digests.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

pub const OUT_DIR_ENV: &str = "PHS_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "runs";

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn digest(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

fn canonical(config: &BTreeMap<String, String>) -> String {
    config.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

pub struct RunDir {
    stage: String,
    path: PathBuf,
    config: BTreeMap<String, String>,
    outputs: Vec<(String, String)>,
}

impl RunDir {
    /// Creates `<root>/<stage>-<hash>`, where the hash covers the stage name
    /// and the resolved configuration (including input digests).
    pub fn create(root: &Path, stage: &str, config: BTreeMap<String, String>) -> Result<Self> {
        let stamp = digest(format!("stage={stage}\n{}", canonical(&config)).as_bytes());
        let path = root.join(format!("{stage}-{}", &stamp[..12]));
        std::fs::create_dir_all(&path).with_context(|| format!("creating {}", path.display()))?;
        Ok(RunDir {
            stage: stage.to_string(),
            path,
            config,
            outputs: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.file(name);
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.push((name.to_string(), digest(bytes)));
        Ok(path)
    }

    /// Writes `manifest.txt`: stage, resolved config, then each output with
    /// its SHA-256.
    pub fn finish(self) -> Result<PathBuf> {
        let mut text = format!("stage={}\n[config]\n{}[outputs]\n", self.stage, canonical(&self.config));
        for (name, sum) in &self.outputs {
            let _ = writeln!(text, "{name} sha256={sum}");
        }
        std::fs::write(self.file("manifest.txt"), text)?;
        Ok(self.path)
    }
}
