// Copyright 2026 The PASCO Authors
// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::account::{AccountId, EncryptedRecord};
use crate::device::write_atomic_file;
use crate::error::{Error, Result};

/// A write that did not reach one service.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum PendingOp {
    Put { record: EncryptedRecord },
    Delete { id: AccountId },
}

impl PendingOp {
    pub fn id(&self) -> &AccountId {
        match self {
            PendingOp::Put { record } => &record.id,
            PendingOp::Delete { id } => id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutboxEntry {
    pub seq: u64,
    pub endpoint: String,
    #[serde(flatten)]
    pub op: PendingOp,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct OutboxFile {
    next_seq: u64,
    entries: Vec<OutboxEntry>,
}

/// Durable queue of missed writes, at most one per (service, record).
///
/// Entries hold sealed records only.
#[derive(Debug, Default)]
pub struct Outbox {
    path: Option<PathBuf>,
    data: OutboxFile,
}

impl Outbox {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn open(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let data = match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map_err(|e| Error::Storage(format!("corrupt outbox {}: {e}", path.display())))?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => OutboxFile::default(),
            Err(e) => return Err(Error::Storage(e.to_string())),
        };
        Ok(Outbox { path: Some(path), data })
    }

    fn save(&self) -> Result<()> {
        match &self.path {
            Some(p) => write_atomic_file(p, &serde_json::to_vec_pretty(&self.data).expect("serializable")),
            None => Ok(()),
        }
    }

    /// Allocates the sequence number for the next logical write.
    pub fn next_seq(&mut self) -> u64 {
        self.data.next_seq += 1;
        self.data.next_seq
    }

    /// Queues `op` for `endpoint`, replacing anything older for the same
    /// record.
    pub fn record(&mut self, seq: u64, endpoint: &str, op: PendingOp) -> Result<()> {
        let id = *op.id();
        if self
            .data
            .entries
            .iter()
            .any(|e| e.endpoint == endpoint && e.op.id() == &id && e.seq > seq)
        {
            return Ok(());
        }
        self.data.entries.retain(|e| !(e.endpoint == endpoint && e.op.id() == &id));
        self.data.entries.push(OutboxEntry {
            seq,
            endpoint: endpoint.to_string(),
            op,
        });
        self.save()
    }

    /// Drops queued writes for `(endpoint, id)` up to and including `seq`.
    pub fn clear(&mut self, endpoint: &str, id: &AccountId, seq: u64) -> Result<()> {
        let before = self.data.entries.len();
        self.data
            .entries
            .retain(|e| !(e.endpoint == endpoint && e.op.id() == id && e.seq <= seq));
        if self.data.entries.len() != before {
            self.save()?;
        }
        Ok(())
    }

    pub fn has_pending(&self, endpoint: &str, id: Option<&AccountId>) -> bool {
        self.data
            .entries
            .iter()
            .any(|e| e.endpoint == endpoint && id.is_none_or(|id| e.op.id() == id))
    }

    pub fn entries(&self) -> &[OutboxEntry] {
        &self.data.entries
    }

    pub fn len(&self) -> usize {
        self.data.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn put(id: u8, body: u8) -> PendingOp {
        PendingOp::Put {
            record: EncryptedRecord {
                id: AccountId([id; 32]),
                blob: vec![body; 30],
            },
        }
    }

    #[test]
    fn coalesces_by_sequence_number() {
        let mut ob = Outbox::in_memory();
        let s1 = ob.next_seq();
        let s2 = ob.next_seq();
        ob.record(s2, "https://a", put(1, 2)).unwrap();
        ob.record(s1, "https://a", put(1, 1)).unwrap();
        assert_eq!(ob.entries().len(), 1);
        assert_eq!(ob.entries()[0].op, put(1, 2));
        let s3 = ob.next_seq();
        ob.record(s3, "https://a", PendingOp::Delete { id: AccountId([1; 32]) }).unwrap();
        ob.record(s3, "https://b", put(1, 3)).unwrap();
        assert_eq!(ob.len(), 2);
        assert!(ob.has_pending("https://a", Some(&AccountId([1; 32]))));
        assert!(!ob.has_pending("https://a", Some(&AccountId([2; 32]))));
        ob.clear("https://a", &AccountId([1; 32]), s2).unwrap();
        assert_eq!(ob.len(), 2, "newer entry survives an older acknowledgement");
        ob.clear("https://a", &AccountId([1; 32]), s3).unwrap();
        assert_eq!(ob.len(), 1);
    }

    #[test]
    fn survives_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("outbox.json");
        {
            let mut ob = Outbox::open(&path).unwrap();
            let s = ob.next_seq();
            ob.record(s, "https://a", put(4, 4)).unwrap();
        }
        let mut ob = Outbox::open(&path).unwrap();
        assert_eq!(ob.len(), 1);
        assert_eq!(ob.next_seq(), 2);
    }
}
