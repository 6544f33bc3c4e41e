//! Flat `key=value` documents used for run manifests and config files.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{AarmError, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) -> &mut Self {
        self.entries.insert(key.into(), value.to_string());
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| AarmError::Schema(format!("missing key {key}")))
    }

    pub fn parse_value<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.require(key)?;
        raw.parse()
            .map_err(|_| AarmError::Schema(format!("bad value for {key}: {raw:?}")))
    }

    /// Parsed value of `key`, or `default` when absent.
    pub fn parse_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            Some(_) => self.parse_value(key),
            None => Ok(default),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn extend(&mut self, other: &KeyValues) {
        for (k, v) in other.iter() {
            self.set(k, v);
        }
    }

    /// Entries under `prefix.`, with the prefix stripped.
    pub fn section(&self, prefix: &str) -> KeyValues {
        let p = format!("{prefix}.");
        let mut out = KeyValues::new();
        for (k, v) in self.iter() {
            if let Some(rest) = k.strip_prefix(&p) {
                out.set(rest, v);
            }
        }
        out
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.iter() {
            s.push_str(k);
            s.push('=');
            s.push_str(v);
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut out = KeyValues::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| AarmError::Parse {
                context: "key=value".into(),
                line: i + 1,
                message: format!("expected key=value, got {line:?}"),
            })?;
            out.set(k.trim(), v.trim());
        }
        Ok(out)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| AarmError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.render()).map_err(|e| AarmError::io(path, e))
    }

    pub fn hash(&self) -> String {
        sha256_hex(self.render().as_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Run manifest written next to every output: config hash, seed and version.
pub fn run_manifest(command: &str, config: &KeyValues, seed: u64) -> KeyValues {
    let mut m = KeyValues::new();
    m.set("command", command)
        .set("config_hash", config.hash())
        .set("seed", seed)
        .set("version", VERSION);
    for (k, v) in config.iter() {
        m.set(format!("config.{k}"), v);
    }
    m
}

/// Hash over every regular file in `dir` (sorted by name).
pub fn directory_hash(dir: &Path) -> Result<String> {
    let mut names: Vec<_> = fs::read_dir(dir)
        .map_err(|e| AarmError::io(dir, e))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_file())
        .map(|e| e.file_name())
        .collect();
    names.sort();
    let mut hasher = Sha256::new();
    for name in names {
        let path = dir.join(&name);
        let bytes = fs::read(&path).map_err(|e| AarmError::io(&path, e))?;
        hasher.update(name.to_string_lossy().as_bytes());
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(&bytes);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_sections() {
        let mut kv = KeyValues::new();
        kv.set("train.lr", 0.003).set("train.l2", "0.0001").set("seed", 7);
        let parsed = KeyValues::parse(&kv.render()).unwrap();
        assert_eq!(parsed, kv);
        assert_eq!(parsed.section("train").get("lr"), Some("0.003"));
        assert_eq!(parsed.hash(), kv.hash());
    }

    #[test]
    fn comments_and_errors() {
        let kv = KeyValues::parse("# hi\n\na = b\n").unwrap();
        assert_eq!(kv.get("a"), Some("b"));
        assert!(KeyValues::parse("nonsense").is_err());
    }
}
