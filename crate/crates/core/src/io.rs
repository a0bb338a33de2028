//! Artifact plumbing shared by every persisted document: provenance stamps,
//! config hashing, and atomic file writes.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result, TOOL_VERSION};

/// Tool version plus hash of the configuration that produced an artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub config_hash: String,
}

impl Provenance {
    pub fn for_config<T: Serialize>(config: &T) -> Self {
        Provenance {
            tool_version: TOOL_VERSION.to_string(),
            config_hash: config_hash(config),
        }
    }
}

/// First 16 hex chars of the SHA-256 of the config's compact JSON form.
///
/// Struct fields serialize in declaration order, so equal configs hash equal.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let bytes = serde_json::to_vec(config).expect("config serialization is infallible");
    let digest = Sha256::digest(&bytes);
    hex::encode(&digest[..8])
}

/// Writes `contents` to a temp file next to `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(contents).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Sidecar path `<file>.meta.json` used for provenance of CSV artifacts.
pub fn meta_path(path: &Path) -> std::path::PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    path.with_file_name(name)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvMeta {
    pub format_version: u32,
    pub kind: String,
    pub provenance: Provenance,
}

pub fn write_csv_meta(path: &Path, kind: &str, provenance: &Provenance) -> Result<()> {
    write_json(
        &meta_path(path),
        &CsvMeta {
            format_version: 1,
            kind: kind.to_string(),
            provenance: provenance.clone(),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Cfg {
        a: u32,
        b: f64,
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let h1 = config_hash(&Cfg { a: 1, b: 0.5 });
        let h2 = config_hash(&Cfg { a: 1, b: 0.5 });
        let h3 = config_hash(&Cfg { a: 2, b: 0.5 });
        assert_eq!(h1, h2);
        assert_ne!(h1, h3);
        assert_eq!(h1.len(), 16);
    }

    #[test]
    fn atomic_write_replaces_contents() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/out.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        let leftovers: Vec<_> = fs::read_dir(p.parent().unwrap()).unwrap().collect();
        assert_eq!(leftovers.len(), 1);
    }
}
