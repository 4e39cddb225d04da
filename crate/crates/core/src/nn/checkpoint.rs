use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const CHECKPOINT_FORMAT: &str = "epiecon-checkpoint";

/// Versioned JSON envelope around a serializable model bundle. Floats are
/// written in shortest round-trip form, so save/load is exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint<T> {
    pub format: String,
    pub version: u32,
    pub kind: String,
    pub payload: T,
}

impl<T> Checkpoint<T> {
    pub fn new(kind: &str, payload: T) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            kind: kind.to_string(),
            payload,
        }
    }
}

pub fn save_checkpoint<T: Serialize>(path: &Path, kind: &str, payload: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(&Checkpoint::new(kind, payload))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ckpt: Checkpoint<T> = serde_json::from_str(&text)?;
    let name = path.display().to_string();
    if ckpt.format != CHECKPOINT_FORMAT {
        return Err(Error::format(
            &name,
            format!("not a checkpoint (format `{}`)", ckpt.format),
        ));
    }
    if ckpt.version != CHECKPOINT_VERSION {
        return Err(Error::format(
            &name,
            format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                ckpt.version
            ),
        ));
    }
    if ckpt.kind != kind {
        return Err(Error::format(
            &name,
            format!("expected a `{kind}` checkpoint, found `{}`", ckpt.kind),
        ));
    }
    Ok(ckpt.payload)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Lstm;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lstm.json");
        let l = Lstm::init(3, 5, &mut ChaCha8Rng::seed_from_u64(4));
        save_checkpoint(&path, "lstm", &l).unwrap();
        let back: Lstm = load_checkpoint(&path, "lstm").unwrap();
        assert_eq!(l, back);
        assert!(load_checkpoint::<Lstm>(&path, "dense").is_err());
    }
}
