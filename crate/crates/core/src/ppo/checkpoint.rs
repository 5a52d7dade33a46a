//! Versioned, integrity-checked checkpoint files.
//!
//! A checkpoint is a JSON envelope holding a format tag, a version, the kind
//! of trainer state, the SHA-256 of the body and the body itself (JSON text).

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "hmppo-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Envelope {
    format: String,
    version: u32,
    kind: String,
    sha256: String,
    body: String,
}

fn digest(body: &str) -> String {
    let hash = Sha256::digest(body.as_bytes());
    hash.iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes `value` under `kind`, replacing any existing file atomically.
pub fn write_checkpoint<T: Serialize>(path: impl AsRef<Path>, kind: &str, value: &T) -> Result<()> {
    let path = path.as_ref();
    let body = serde_json::to_string(value)?;
    let env = Envelope {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        kind: kind.into(),
        sha256: digest(&body),
        body,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, serde_json::to_string(&env)?).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn read_envelope(path: &Path) -> Result<Envelope> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let env: Envelope = serde_json::from_str(&text)
        .map_err(|e| Error::Integrity(format!("{}: unreadable checkpoint envelope: {e}", path.display())))?;
    if env.format != CHECKPOINT_FORMAT {
        return Err(Error::Integrity(format!("{}: not a checkpoint file", path.display())));
    }
    if env.version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            found: env.version,
            expected: CHECKPOINT_VERSION,
        });
    }
    if digest(&env.body) != env.sha256 {
        return Err(Error::Integrity(format!("{}: checksum mismatch", path.display())));
    }
    Ok(env)
}

/// The kind tag stored in a checkpoint.
pub fn checkpoint_kind(path: impl AsRef<Path>) -> Result<String> {
    Ok(read_envelope(path.as_ref())?.kind)
}

/// Reads a checkpoint of the given kind; nothing is returned unless every check passes.
pub fn read_checkpoint<T: DeserializeOwned>(path: impl AsRef<Path>, kind: &str) -> Result<T> {
    let path = path.as_ref();
    let env = read_envelope(path)?;
    if env.kind != kind {
        return Err(Error::InvalidInput(format!(
            "{}: checkpoint holds a {} state, expected {kind}",
            path.display(),
            env.kind
        )));
    }
    serde_json::from_str(&env.body)
        .map_err(|e| Error::Integrity(format!("{}: malformed checkpoint body: {e}", path.display())))
}
