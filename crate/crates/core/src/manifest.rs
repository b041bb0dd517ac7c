//! Run manifests written beside every output file.
//!
//! Timestamps live only here, so data files stay byte-identical between runs
//! with the same configuration and seed.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub command_line: Vec<String>,
    pub config_path: String,
    pub config_sha256: String,
    pub seed: u64,
    pub started_utc: String,
    pub finished_utc: String,
    pub output: String,
    pub output_sha256: String,
    /// Command-specific results and the modelling assumptions in force.
    pub extras: Map<String, Value>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn now_utc() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// `<out>.manifest.json`
pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

impl RunManifest {
    pub fn new(
        command: &str,
        config_path: &Path,
        config_text: &str,
        seed: u64,
        started_utc: String,
    ) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            command_line: std::env::args().collect(),
            config_path: config_path.display().to_string(),
            config_sha256: sha256_hex(config_text.as_bytes()),
            seed,
            started_utc,
            finished_utc: String::new(),
            output: String::new(),
            output_sha256: String::new(),
            extras: Map::new(),
        }
    }

    pub fn extra(&mut self, key: &str, value: impl Into<Value>) -> &mut Self {
        self.extras.insert(key.to_string(), value.into());
        self
    }

    /// Digests the finished output and writes the manifest beside it.
    pub fn finish(mut self, output: &Path) -> Result<PathBuf> {
        self.output = output.display().to_string();
        self.output_sha256 = sha256_hex(&fs::read(output)?);
        self.finished_utc = now_utc();
        let path = manifest_path(output);
        let text = serde_json::to_string_pretty(&self).map_err(std::io::Error::other)?;
        fs::write(&path, text + "\n")?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_of_known_input() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_lands_beside_output() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("scan.csv");
        fs::write(&out, "a,b\n1,2\n").unwrap();
        let mut m = RunManifest::new("simulate-phase", Path::new("c.toml"), "x = 1", 9, now_utc());
        m.extra("note", "test");
        let path = m.finish(&out).unwrap();
        assert_eq!(path, dir.path().join("scan.csv.manifest.json"));
        let back: RunManifest = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
        assert_eq!(back.seed, 9);
        assert_eq!(back.output_sha256, sha256_hex(b"a,b\n1,2\n"));
        assert_eq!(back.extras["note"], "test");
    }
}
