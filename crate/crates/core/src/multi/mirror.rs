// Copyright 2026 The PASCO Authors
// SPDX-License-Identifier: Apache-2.0

use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::outbox::{Outbox, PendingOp};
use super::{sss_auth_key, sss_data_key};
use crate::account::{self, split_data_key, AccountData, AccountId, EncryptedRecord};
use crate::clock::SharedClock;
use crate::crypto::{SecretBytes, SigningKeyPair};
use crate::error::{Error, Result};
use crate::sss::wire::{Ack, RecordList};
use crate::sss::Method;
use crate::transport::{self, Endpoint, Transport};

/// Result of a write that reached at least one service.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WriteOutcome {
    Complete,
    /// These services missed the write; it is queued in the outbox.
    Degraded { missed: Vec<String> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ReconcileReport {
    pub applied: usize,
    pub remaining: usize,
}

/// Ordered set of services that all hold the same logical records.
///
/// Writes go to every service; reads are served by the first reachable
/// one that has no queued writes for the record.
#[derive(Clone)]
pub struct MirrorSet {
    endpoints: Vec<Endpoint>,
    transport: Arc<dyn Transport>,
    clock: SharedClock,
}

impl MirrorSet {
    pub fn new(endpoints: Vec<Endpoint>, transport: Arc<dyn Transport>, clock: SharedClock) -> Result<Self> {
        if endpoints.is_empty() {
            return Err(Error::invalid("at least one service is required"));
        }
        Ok(MirrorSet {
            endpoints,
            transport,
            clock,
        })
    }

    pub fn endpoints(&self) -> &[Endpoint] {
        &self.endpoints
    }

    pub fn transport(&self) -> &Arc<dyn Transport> {
        &self.transport
    }

    pub fn clock(&self) -> &SharedClock {
        &self.clock
    }

    /// One signed round trip to `endpoint`.
    pub fn call<B, T>(
        &self,
        endpoint: &Endpoint,
        key: &SigningKeyPair,
        method: Method,
        path: &str,
        body: Option<&B>,
    ) -> Result<T>
    where
        B: Serialize + ?Sized,
        T: DeserializeOwned,
    {
        transport::call(
            |req| self.transport.send(&endpoint.url, req),
            key,
            &*self.clock,
            &endpoint.pinned_key,
            method,
            path,
            body,
        )
    }

    /// Identifier of the record for `account_url` at `endpoint`.
    pub fn record_id(&self, k_data: &SecretBytes, endpoint: &Endpoint, account_url: &str) -> Result<AccountId> {
        let k_sss = sss_data_key(k_data, &endpoint.url)?;
        account::account_id(&split_data_key(&k_sss)?.mac, account_url)
    }

    fn fan_out(
        &self,
        auth_root: &SecretBytes,
        ops: Vec<PendingOp>,
        outbox: &mut Outbox,
        delete: bool,
    ) -> Result<WriteOutcome> {
        let seq = outbox.next_seq();
        let results: Vec<Result<()>> = std::thread::scope(|scope| {
            let handles: Vec<_> = self
                .endpoints
                .iter()
                .zip(&ops)
                .map(|(endpoint, op)| scope.spawn(move || self.apply(auth_root, endpoint, op)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err(Error::Transport("worker panicked".into()))))
                .collect()
        });

        let mut missed = Vec::new();
        let mut not_found = 0;
        let mut failure = None;
        for ((endpoint, op), result) in self.endpoints.iter().zip(ops).zip(results) {
            match result {
                Ok(()) => outbox.clear(&endpoint.url, op.id(), seq)?,
                Err(Error::NotFound(_)) if delete => {
                    not_found += 1;
                    outbox.clear(&endpoint.url, op.id(), seq)?;
                }
                Err(Error::Transport(e)) => {
                    log::warn!("{}: {e}", endpoint.url);
                    missed.push((endpoint.url.clone(), op));
                }
                Err(e) => failure = failure.or(Some(e)),
            }
        }
        if let Some(e) = failure {
            return Err(e);
        }
        if missed.len() == self.endpoints.len() {
            return Err(Error::Transport("all services unavailable".into()));
        }
        if not_found == self.endpoints.len() {
            return Err(Error::NotFound("no such account".into()));
        }
        if missed.is_empty() {
            return Ok(WriteOutcome::Complete);
        }
        let urls = missed.iter().map(|(u, _)| u.clone()).collect();
        for (url, op) in missed {
            outbox.record(seq, &url, op)?;
        }
        Ok(WriteOutcome::Degraded { missed: urls })
    }

    fn apply(&self, auth_root: &SecretBytes, endpoint: &Endpoint, op: &PendingOp) -> Result<()> {
        let key = sss_auth_key(auth_root, &endpoint.url)?;
        match op {
            PendingOp::Put { record } => {
                let _: Ack = self.call(
                    endpoint,
                    &key,
                    Method::Put,
                    &format!("/v1/records/{}", record.id.to_path()),
                    Some(record),
                )?;
            }
            PendingOp::Delete { id } => {
                let _: Ack = self.call::<(), _>(
                    endpoint,
                    &key,
                    Method::Delete,
                    &format!("/v1/records/{}", id.to_path()),
                    None,
                )?;
            }
        }
        Ok(())
    }

    /// Seals `data` separately for every service and stores it everywhere.
    pub fn put(
        &self,
        k_data: &SecretBytes,
        auth_root: &SecretBytes,
        data: &AccountData,
        outbox: &mut Outbox,
    ) -> Result<WriteOutcome> {
        let ops = self
            .endpoints
            .iter()
            .map(|e| {
                let record = account::seal(data, &sss_data_key(k_data, &e.url)?)?;
                Ok(PendingOp::Put { record })
            })
            .collect::<Result<Vec<_>>>()?;
        self.fan_out(auth_root, ops, outbox, false)
    }

    pub fn delete(
        &self,
        k_data: &SecretBytes,
        auth_root: &SecretBytes,
        account_url: &str,
        outbox: &mut Outbox,
    ) -> Result<WriteOutcome> {
        let ops = self
            .endpoints
            .iter()
            .map(|e| {
                Ok(PendingOp::Delete {
                    id: self.record_id(k_data, e, account_url)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        self.fan_out(auth_root, ops, outbox, true)
    }

    /// Tries each service in order, skipping stale ones and moving on
    /// only when a service is unreachable.
    fn first_healthy<T>(&self, stale: impl Fn(&Endpoint) -> bool, op: impl Fn(&Endpoint) -> Result<T>) -> Result<T> {
        let mut last = Error::Transport("all services unavailable".into());
        for endpoint in &self.endpoints {
            if stale(endpoint) {
                continue;
            }
            match op(endpoint) {
                Err(e @ Error::Transport(_)) => {
                    log::warn!("{}: {e}", endpoint.url);
                    last = e;
                }
                other => return other,
            }
        }
        Err(last)
    }

    pub fn get(
        &self,
        k_data: &SecretBytes,
        auth_root: &SecretBytes,
        account_url: &str,
        outbox: &Outbox,
    ) -> Result<AccountData> {
        let ids = self
            .endpoints
            .iter()
            .map(|e| self.record_id(k_data, e, account_url))
            .collect::<Result<Vec<_>>>()?;
        let index = |e: &Endpoint| self.endpoints.iter().position(|x| x == e).expect("own endpoint");
        self.first_healthy(
            |e| outbox.has_pending(&e.url, Some(&ids[index(e)])),
            |e| {
                let key = sss_auth_key(auth_root, &e.url)?;
                let id = &ids[index(e)];
                let record: EncryptedRecord =
                    self.call::<(), _>(e, &key, Method::Get, &format!("/v1/records/{}", id.to_path()), None)?;
                account::open(&record, &sss_data_key(k_data, &e.url)?)
            },
        )
    }

    /// Every record, decrypted, from the first service with nothing queued.
    pub fn list(&self, k_data: &SecretBytes, auth_root: &SecretBytes, outbox: &Outbox) -> Result<Vec<AccountData>> {
        self.first_healthy(
            |e| outbox.has_pending(&e.url, None),
            |e| {
                let key = sss_auth_key(auth_root, &e.url)?;
                let list: RecordList = self.call::<(), _>(e, &key, Method::Get, "/v1/records", None)?;
                let k_sss = sss_data_key(k_data, &e.url)?;
                list.records.iter().map(|r| account::open(r, &k_sss)).collect()
            },
        )
    }

    /// Replays queued writes. Entries for unreachable services stay queued.
    pub fn reconcile(&self, auth_root: &SecretBytes, outbox: &mut Outbox) -> Result<ReconcileReport> {
        let mut report = ReconcileReport::default();
        for entry in outbox.entries().to_vec() {
            let Some(endpoint) = self.endpoints.iter().find(|e| e.url == entry.endpoint) else {
                continue;
            };
            match self.apply(auth_root, endpoint, &entry.op) {
                Ok(()) | Err(Error::NotFound(_)) => {
                    outbox.clear(&entry.endpoint, entry.op.id(), entry.seq)?;
                    report.applied += 1;
                }
                Err(Error::Transport(e)) => log::warn!("{}: {e}", entry.endpoint),
                Err(e) => return Err(e),
            }
        }
        report.remaining = outbox.len();
        Ok(report)
    }
}
