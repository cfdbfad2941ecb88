// Copyright 2026 The PASCO Authors
// SPDX-License-Identifier: Apache-2.0

//! Client configuration: a TOML file plus environment overrides.
//!
//! ```toml
//! outbox_path = "/home/me/.local/share/pasco/outbox.json"
//!
//! [[sss]]
//! url = "https://sss1.example"
//! pinned_key = "3b6a27bc..."
//! ```

use std::path::{Path, PathBuf};

use pasco::account::canonicalize_url;
use pasco::transport::Endpoint;
use pasco::{Error, Result};
use serde::Deserialize;

use crate::parse_public_key;

pub const ENV_SSS_URL: &str = "PASCO_SSS_URL";
pub const ENV_PROFILE_PATH: &str = "PASCO_PROFILE_PATH";

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub sss: Vec<SssEntry>,
    pub outbox_path: Option<PathBuf>,
    pub profile_path: Option<PathBuf>,
    pub clipboard_path: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SssEntry {
    pub url: String,
    pub pinned_key: String,
}

fn data_dir() -> PathBuf {
    if let Some(d) = std::env::var_os("XDG_DATA_HOME") {
        return PathBuf::from(d).join("pasco");
    }
    match std::env::var_os("HOME") {
        Some(h) => PathBuf::from(h).join(".local/share/pasco"),
        None => PathBuf::from(".pasco"),
    }
}

pub fn default_config_path() -> PathBuf {
    if let Some(d) = std::env::var_os("XDG_CONFIG_HOME") {
        return PathBuf::from(d).join("pasco/config.toml");
    }
    match std::env::var_os("HOME") {
        Some(h) => PathBuf::from(h).join(".config/pasco/config.toml"),
        None => PathBuf::from("pasco.toml"),
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Config> {
        toml::from_str(text).map_err(|e| Error::invalid(format!("bad configuration: {e}")))
    }

    /// Reads `path`; a missing file yields the empty configuration.
    pub fn load(path: &Path) -> Result<Config> {
        match std::fs::read_to_string(path) {
            Ok(text) => Config::parse(&text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Config::default()),
            Err(e) => Err(Error::Storage(format!("{}: {e}", path.display()))),
        }
    }

    /// Profile location: `PASCO_PROFILE_PATH`, then the file, then the
    /// per-user data directory.
    pub fn profile_path(&self, env: Option<&str>) -> PathBuf {
        env.map(PathBuf::from)
            .or_else(|| self.profile_path.clone())
            .unwrap_or_else(|| data_dir().join("profile"))
    }

    pub fn outbox_path(&self, profile: &Path) -> PathBuf {
        self.outbox_path
            .clone()
            .unwrap_or_else(|| profile.with_extension("outbox.json"))
    }

    pub fn clipboard_path(&self, profile: &Path) -> PathBuf {
        self.clipboard_path
            .clone()
            .unwrap_or_else(|| profile.with_extension("clipboard"))
    }

    fn configured(&self) -> Result<Vec<Endpoint>> {
        self.sss
            .iter()
            .map(|e| Endpoint::new(&e.url, parse_public_key(&e.pinned_key)?))
            .collect()
    }

    /// Services to use. `PASCO_SSS_URL` is a comma-separated list of
    /// `URL` or `URL|KEY` items; a bare URL takes its key from the file,
    /// or from the only configured service when there is exactly one.
    pub fn endpoints(&self, env: Option<&str>) -> Result<Vec<Endpoint>> {
        let configured = self.configured()?;
        let Some(list) = env.filter(|s| !s.trim().is_empty()) else {
            if configured.is_empty() {
                return Err(Error::invalid("no secret storage service configured"));
            }
            return Ok(configured);
        };
        list.split(',')
            .map(|item| {
                let item = item.trim();
                if let Some((url, key)) = item.split_once('|') {
                    return Endpoint::new(url, parse_public_key(key)?);
                }
                let url = canonicalize_url(item)?;
                let key = match configured.iter().find(|e| e.url == url) {
                    Some(e) => e.pinned_key,
                    None if configured.len() == 1 => configured[0].pinned_key,
                    None => return Err(Error::invalid(format!("no pinned key for {url}"))),
                };
                Endpoint::new(&url, key)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use pasco::crypto::SigningKeyPair;

    fn key_hex() -> (String, pasco::crypto::PublicKey) {
        let k = SigningKeyPair::generate().public();
        (hex::encode(k.0), k)
    }

    #[test]
    fn file_and_overrides() {
        let (a, ka) = key_hex();
        let (b, kb) = key_hex();
        let cfg = Config::parse(&format!(
            "outbox_path = \"/tmp/o.json\"\n[[sss]]\nurl = \"https://one.example\"\npinned_key = \"{a}\"\n"
        ))
        .unwrap();
        let eps = cfg.endpoints(None).unwrap();
        assert_eq!(eps[0].url, "https://one.example");
        assert_eq!(eps[0].pinned_key, ka);

        let eps = cfg.endpoints(Some("http://127.0.0.1:9000")).unwrap();
        assert_eq!(eps[0].url, "http://127.0.0.1:9000");
        assert_eq!(eps[0].pinned_key, ka);

        let eps = cfg
            .endpoints(Some(&format!("https://ONE.example, http://two.example|{b}")))
            .unwrap();
        assert_eq!(eps.len(), 2);
        assert_eq!(eps[1].pinned_key, kb);
        assert_eq!(cfg.outbox_path(Path::new("/x/p")), PathBuf::from("/tmp/o.json"));
    }

    #[test]
    fn rejects_unknown_keys_and_missing_pins() {
        assert!(Config::parse("bogus = 1").is_err());
        assert!(Config::default().endpoints(None).is_err());
        assert!(Config::default().endpoints(Some("https://x.example")).is_err());
    }

    #[test]
    fn profile_env_wins() {
        let cfg = Config {
            profile_path: Some("/from/file".into()),
            ..Default::default()
        };
        assert_eq!(cfg.profile_path(Some("/from/env")), PathBuf::from("/from/env"));
        assert_eq!(cfg.profile_path(None), PathBuf::from("/from/file"));
    }
}
