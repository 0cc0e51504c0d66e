//! Run manifests: a plain-text record of what a command ran with —
//! settings, input digests, output digests — written alongside every
//! output so a run can be audited and reproduced.

use occucast::Result;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

/// SHA-256 digest of a file's contents, as lowercase hex.
pub fn sha256_hex(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    let mut hex = String::with_capacity(64);
    for byte in hasher.finalize() {
        write!(hex, "{byte:02x}").expect("writing to a String cannot fail");
    }
    Ok(hex)
}

/// One command's provenance record. Every rendered line except
/// `timestamp_unix` is reproducible across reruns with identical
/// inputs, flags, and seeds.
pub struct RunManifest {
    command: &'static str,
    settings: Vec<(String, String)>,
    inputs: Vec<(String, String)>,
    outputs: Vec<(String, String)>,
}

impl RunManifest {
    pub fn new(command: &'static str) -> Self {
        RunManifest {
            command,
            settings: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    /// Record one flag or derived setting.
    pub fn setting(&mut self, key: &str, value: impl std::fmt::Display) {
        self.settings.push((key.to_string(), value.to_string()));
    }

    /// Record an input file by name and content digest.
    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push((file_label(path), sha256_hex(path)?));
        Ok(())
    }

    /// Record an output file by name and content digest.
    pub fn output(&mut self, path: &Path) -> Result<()> {
        self.outputs.push((file_label(path), sha256_hex(path)?));
        Ok(())
    }

    pub fn render(&self) -> String {
        let stamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let mut out = String::new();
        out.push_str(&format!("tool occucast {}\n", env!("CARGO_PKG_VERSION")));
        out.push_str(&format!("command {}\n", self.command));
        out.push_str(&format!("timestamp_unix {stamp}\n"));
        for (key, value) in &self.settings {
            out.push_str(&format!("setting {key} {value}\n"));
        }
        for (name, digest) in &self.inputs {
            out.push_str(&format!("input {name} sha256 {digest}\n"));
        }
        for (name, digest) in &self.outputs {
            out.push_str(&format!("output {name} sha256 {digest}\n"));
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.render())?;
        Ok(())
    }
}

/// Base file name only, so manifests do not depend on where files live.
fn file_label(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}
