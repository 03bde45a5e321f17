use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::commands::Command;
use crate::CliError;

pub const TOOL: &str = "fracnmp";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> Result<Self, CliError> {
        Ok(Self {
            path: path.to_path_buf(),
            sha256: sha256_file(path)?,
        })
    }
}

/// Record of one run: enough to re-execute it and check the outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub argv: Vec<String>,
    /// Fully resolved parameters, defaults included.
    pub params: Command,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

impl RunManifest {
    pub fn new(command: &Command, argv: Vec<String>, inputs: &[PathBuf], outputs: &[PathBuf]) -> Result<Self, CliError> {
        Ok(Self {
            tool: TOOL.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.name().into(),
            argv,
            params: command.clone(),
            inputs: inputs.iter().map(|p| FileDigest::of(p)).collect::<Result<_, _>>()?,
            outputs: outputs.iter().map(|p| FileDigest::of(p)).collect::<Result<_, _>>()?,
        })
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read manifest {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: invalid manifest: {e}", path.display())))
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        fs::write(path, text).map_err(|e| CliError::io(path, e))
    }
}

pub fn manifest_path(prefix: &Path) -> PathBuf {
    with_suffix(prefix, ".manifest.json")
}

/// `prefix` with `suffix` appended to the file name.
pub fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Checks that every recorded input still has the recorded digest.
pub fn verify_inputs(m: &RunManifest) -> Result<(), CliError> {
    for input in &m.inputs {
        let now = sha256_file(&input.path)?;
        if now != input.sha256 {
            return Err(CliError::Input(format!(
                "input {} changed since the recorded run (sha256 {now}, recorded {})",
                input.path.display(),
                input.sha256
            )));
        }
    }
    Ok(())
}

/// Compares produced outputs with the recorded ones, position by position.
pub fn compare_outputs(recorded: &[FileDigest], produced: &[PathBuf]) -> Result<(), CliError> {
    if recorded.len() != produced.len() {
        return Err(CliError::Mismatch(format!(
            "run produced {} outputs, manifest records {}",
            produced.len(),
            recorded.len()
        )));
    }
    for (rec, path) in recorded.iter().zip(produced) {
        let now = sha256_file(path)?;
        if now != rec.sha256 {
            return Err(CliError::Mismatch(format!(
                "{} differs from recorded {} (sha256 {now} vs {})",
                path.display(),
                rec.path.display(),
                rec.sha256
            )));
        }
    }
    Ok(())
}
