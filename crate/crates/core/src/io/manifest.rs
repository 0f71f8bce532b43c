//! Run manifests written next to every output. They hold no timestamps
//! or paths, so identical runs produce identical manifests.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::tagfile;
use crate::error::Result;
use crate::walk::CALIBRATION_FORMAT_VERSION;

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, Serialize)]
pub struct Versions {
    pub snspd_core: &'static str,
    pub tag_format: u16,
    pub calibration_format: u32,
}

impl Default for Versions {
    fn default() -> Self {
        Self {
            snspd_core: env!("CARGO_PKG_VERSION"),
            tag_format: tagfile::FORMAT_VERSION,
            calibration_format: CALIBRATION_FORMAT_VERSION,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    /// File name without directories.
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut f = BufReader::with_capacity(1 << 20, File::open(path)?);
        let mut h = Sha256::new();
        let mut buf = vec![0u8; 1 << 20];
        let mut bytes = 0u64;
        loop {
            let n = f.read(&mut buf)?;
            if n == 0 {
                break;
            }
            h.update(&buf[..n]);
            bytes += n as u64;
        }
        let file = path.file_name().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
        Ok(Self { file, bytes, sha256: hex::encode(h.finalize()) })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub config_sha256: Option<String>,
    pub seed: Option<u64>,
    pub versions: Versions,
    /// Effective command options.
    pub options: Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    /// Command-specific results.
    pub summary: Value,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            config_sha256: None,
            seed: None,
            versions: Versions::default(),
            options: Value::Object(Default::default()),
            inputs: Vec::new(),
            outputs: Vec::new(),
            summary: Value::Null,
        }
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        super::table::write_json(dir.as_ref().join(MANIFEST_NAME), self)
    }
}
