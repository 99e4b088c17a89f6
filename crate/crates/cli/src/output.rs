use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use msq_core::seed;
use serde::Serialize;

use crate::{CliError, Common, Format};

/// Provenance record written next to every set of outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub subcommand: &'static str,
    pub inputs: Vec<PathBuf>,
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub version: &'static str,
    /// SHA-256 over the arguments and the bytes of every input file.
    pub config_hash: String,
    pub arguments: serde_json::Value,
}

impl RunManifest {
    pub fn new<A: Serialize>(
        subcommand: &'static str,
        args: &A,
        inputs: Vec<PathBuf>,
        seed: Option<u64>,
        out: &Path,
    ) -> Result<Self, CliError> {
        let arguments = serde_json::to_value(args).map_err(|e| CliError::Runtime(e.to_string()))?;
        let mut material = serde_json::to_vec(&arguments).map_err(|e| CliError::Runtime(e.to_string()))?;
        for path in &inputs {
            let bytes = fs::read(path).map_err(|e| read_error(path, e))?;
            material.extend_from_slice(seed::fingerprint(&bytes).as_bytes());
        }
        Ok(Self {
            subcommand,
            inputs,
            seed,
            out: out.to_path_buf(),
            version: env!("CARGO_PKG_VERSION"),
            config_hash: seed::fingerprint(&material),
            arguments,
        })
    }
}

pub fn read_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("read {}: {e}", path.display()))
}

pub fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| read_error(path, e))
}

/// Destination of a command's documents: a directory, or stdout for the
/// primary document only.
pub struct Sink {
    dir: Option<PathBuf>,
    pub format: Format,
}

impl Sink {
    pub fn new(common: &Common) -> Result<Self, CliError> {
        if let Some(dir) = &common.out {
            fs::create_dir_all(dir).map_err(|e| write_error(dir, e))?;
        }
        Ok(Self { dir: common.out.clone(), format: common.format })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    /// Same format, writing into `sub` below this sink's directory.
    pub fn child(&self, sub: &str) -> Result<Self, CliError> {
        let dir = self.dir.as_ref().map(|d| d.join(sub));
        if let Some(d) = &dir {
            fs::create_dir_all(d).map_err(|e| write_error(d, e))?;
        }
        Ok(Self { dir, format: self.format })
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T, primary: bool) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
        text.push('\n');
        self.text(&format!("{name}.json"), &text, primary)
    }

    pub fn csv<R: Serialize>(&self, name: &str, rows: impl IntoIterator<Item = R>, primary: bool) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in rows {
            w.serialize(row).map_err(|e| CliError::Runtime(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?;
        let text = String::from_utf8(bytes).map_err(|e| CliError::Runtime(e.to_string()))?;
        self.text(&format!("{name}.csv"), &text, primary)
    }

    pub fn text(&self, file: &str, text: &str, primary: bool) -> Result<(), CliError> {
        match &self.dir {
            Some(dir) => {
                let path = dir.join(file);
                fs::write(&path, text).map_err(|e| write_error(&path, e))
            }
            None if primary => {
                let mut out = std::io::stdout().lock();
                out.write_all(text.as_bytes()).map_err(|e| CliError::Runtime(e.to_string()))
            }
            None => Ok(()),
        }
    }

    pub fn manifest(&self, manifest: &RunManifest) -> Result<(), CliError> {
        if self.dir.is_some() {
            self.json("manifest", manifest, false)?;
        }
        Ok(())
    }
}

fn write_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("write {}: {e}", path.display()))
}
