//! Versioning, hashing and writing of JSON artifacts.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, SageError};

/// Major version of every JSON artifact this build reads and writes.
pub const SCHEMA_MAJOR: u32 = 1;
pub const SCHEMA_VERSION: &str = "1.0";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Header embedded in reports and experiment outputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactMeta {
    pub schema_version: String,
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
}

impl ArtifactMeta {
    pub fn new(config_hash: impl Into<String>, seed: u64) -> Self {
        ArtifactMeta {
            schema_version: SCHEMA_VERSION.to_string(),
            tool_version: TOOL_VERSION.to_string(),
            config_hash: config_hash.into(),
            seed,
        }
    }
}

/// A report wrapped with its header; `artifact` names the payload type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    #[serde(flatten)]
    pub meta: ArtifactMeta,
    pub artifact: String,
    pub data: T,
}

impl<T> Envelope<T> {
    pub fn new(meta: ArtifactMeta, artifact: impl Into<String>, data: T) -> Self {
        Envelope {
            meta,
            artifact: artifact.into(),
            data,
        }
    }
}

/// Accepts `"<major>.<minor>"` strings whose major matches this build.
pub fn check_schema_version(version: &str) -> Result<()> {
    let major = version.split('.').next().and_then(|m| m.parse::<u32>().ok());
    match major {
        Some(SCHEMA_MAJOR) => Ok(()),
        _ => Err(SageError::SchemaVersion {
            found: version.to_string(),
            expected: SCHEMA_MAJOR,
        }),
    }
}

/// Hex SHA-256 of the compact JSON encoding of `value`.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config serializes");
    hex::encode(Sha256::digest(&bytes))
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("artifact serializes");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_json(value)).map_err(|e| SageError::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| SageError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| SageError::parse(path.display().to_string(), e))
}
