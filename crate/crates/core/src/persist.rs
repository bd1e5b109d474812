//! Versioned JSON envelopes for every on-disk artifact.
//!
//! Floats are written with shortest round-trip formatting and parsed exactly,
//! so `load(save(x)) == x` holds bit for bit.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    kind: String,
    version: u32,
    body: T,
}

pub fn to_json_bytes<T: Serialize>(kind: &str, body: &T) -> Result<Vec<u8>> {
    let env = Envelope {
        kind: kind.to_string(),
        version: FORMAT_VERSION,
        body,
    };
    let mut bytes = serde_json::to_vec(&env)?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn from_json_bytes<T: DeserializeOwned>(kind: &str, bytes: &[u8]) -> Result<T> {
    let env: Envelope<T> = serde_json::from_slice(bytes)?;
    if env.version != FORMAT_VERSION {
        return Err(Error::Version {
            found: env.version,
            expected: FORMAT_VERSION,
        });
    }
    if env.kind != kind {
        return Err(Error::InputDomain(format!(
            "expected a {kind} file, found {}",
            env.kind
        )));
    }
    Ok(env.body)
}

pub fn save<T: Serialize>(path: &Path, kind: &str, body: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, to_json_bytes(kind, body)?)?;
    Ok(())
}

pub fn load<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::Data {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    from_json_bytes(kind, &bytes).map_err(|e| Error::Data {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Hex SHA-256 of the canonical serialization of `body`.
pub fn fingerprint<T: Serialize>(body: &T) -> Result<String> {
    let bytes = serde_json::to_vec(body)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_wrong_kind_and_version() {
        let bytes = to_json_bytes("rtree", &vec![1.5f64]).unwrap();
        assert!(from_json_bytes::<Vec<f64>>("workload", &bytes).is_err());
        let bumped = String::from_utf8(bytes)
            .unwrap()
            .replace("\"version\":1", "\"version\":9");
        assert!(matches!(
            from_json_bytes::<Vec<f64>>("rtree", bumped.as_bytes()),
            Err(Error::Version { found: 9, .. })
        ));
    }

    #[test]
    fn awkward_floats_round_trip_exactly() {
        let v = vec![
            0.1 + 0.2,
            1e-308,
            f64::MIN_POSITIVE,
            f64::from_bits(0xC055_E84B_7C9B_2F3D),
            41.883_333_333_333_3,
        ];
        let back: Vec<f64> = from_json_bytes("x", &to_json_bytes("x", &v).unwrap()).unwrap();
        for (a, b) in v.iter().zip(&back) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
