// Copyright 2026 The PASCO Authors
// SPDX-License-Identifier: Apache-2.0

//! JSON snapshot of the service state, written with atomic replace.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::wire::{AclPolicy, Role};
use crate::account::b64;
use crate::account::EncryptedRecord;
use crate::crypto::Fingerprint;
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
pub struct Snapshot {
    pub version: u32,
    pub accounts: Vec<AccountDump>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AccountDump {
    pub id: String,
    pub keys: Vec<KeyDump>,
    pub records: Vec<EncryptedRecord>,
    pub tokens: Vec<TokenDump>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct KeyDump {
    pub fingerprint: Fingerprint,
    #[serde(with = "b64")]
    pub public_key: Vec<u8>,
    pub role: Role,
    #[serde(default, with = "super::wire::opt_b64")]
    pub otp: Option<Vec<u8>>,
    pub acl: AclPolicy,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TokenDump {
    #[serde(with = "b64")]
    pub token: Vec<u8>,
    pub issued_at: u64,
    pub ttl: u64,
    pub role: Role,
    pub acl: AclPolicy,
}

#[derive(Debug, Clone)]
pub struct SnapshotStore {
    path: PathBuf,
}

impl SnapshotStore {
    pub fn new(path: PathBuf) -> Self {
        SnapshotStore { path }
    }

    pub fn load(&self) -> Result<Option<Snapshot>> {
        match fs::read(&self.path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map(Some)
                .map_err(|e| Error::Storage(format!("corrupt snapshot {}: {e}", self.path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::Storage(e.to_string())),
        }
    }

    pub fn save(&self, snapshot: &Snapshot) -> Result<()> {
        let dir = match self.path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => std::path::Path::new("."),
        };
        let io = |e: std::io::Error| Error::Storage(e.to_string());
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
        serde_json::to_writer(&mut tmp, snapshot).map_err(|e| Error::Storage(e.to_string()))?;
        tmp.flush().map_err(io)?;
        tmp.as_file().sync_all().map_err(io)?;
        tmp.persist(&self.path).map_err(|e| io(e.error))?;
        Ok(())
    }
}
