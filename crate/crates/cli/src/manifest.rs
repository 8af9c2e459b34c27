use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use dirac_tomo::formats::{to_json, write_text, FormatError, FORMAT_VERSION};

/// Record of one run: what was asked for and everything it wrote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub command: String,
    /// SHA-256 of the resolved config copy listed first in `output_paths`.
    pub config_hash: String,
    pub seed: u64,
    pub tool_version: String,
    pub output_paths: Vec<String>,
    pub warnings: Vec<String>,
}

pub fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Collects the files of a run under one output directory.
pub struct Run {
    command: String,
    seed: u64,
    out_dir: PathBuf,
    config_hash: String,
    outputs: Vec<String>,
    pub warnings: Vec<String>,
}

impl Run {
    /// Writes the resolved config copy and starts the output list with it.
    pub fn start(command: &str, seed: u64, out_dir: &Path, resolved_config: &str) -> Result<Self, FormatError> {
        std::fs::create_dir_all(out_dir).map_err(|source| FormatError::Io {
            path: out_dir.display().to_string(),
            source,
        })?;
        let mut run = Self {
            command: command.to_string(),
            seed,
            out_dir: out_dir.to_path_buf(),
            config_hash: sha256_hex(resolved_config),
            outputs: Vec::new(),
            warnings: Vec::new(),
        };
        run.write(&format!("{command}.config.txt"), resolved_config)?;
        Ok(run)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    pub fn write(&mut self, name: &str, text: &str) -> Result<PathBuf, FormatError> {
        let path = self.path(name);
        write_text(&path, text)?;
        self.outputs.push(path.display().to_string());
        Ok(path)
    }

    pub fn warn(&mut self, message: impl Into<String>) {
        let message = message.into();
        eprintln!("warning: {message}");
        self.warnings.push(message);
    }

    pub fn finish(self) -> Result<RunManifest, FormatError> {
        let manifest = RunManifest {
            format_version: FORMAT_VERSION,
            command: self.command.clone(),
            config_hash: self.config_hash,
            seed: self.seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            output_paths: self.outputs,
            warnings: self.warnings,
        };
        write_text(&self.out_dir.join(format!("{}.manifest.json", self.command)), &to_json(&manifest))?;
        Ok(manifest)
    }
}
