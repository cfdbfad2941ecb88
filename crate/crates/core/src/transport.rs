// Copyright 2026 The PASCO Authors
// SPDX-License-Identifier: Apache-2.0

//! Moving signed requests between devices and synchronization services.

use std::collections::HashMap;
use std::sync::Arc;

use parking_lot::RwLock;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::account::canonicalize_url;
use crate::clock::Clock;
use crate::crypto::{PublicKey, SigningKeyPair};
use crate::device::SssLink;
use crate::error::{Error, Result};
use crate::sss::{Method, Request, Response, SssService};

/// A service address together with its pinned response-signing key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Endpoint {
    pub url: String,
    pub pinned_key: PublicKey,
}

impl Endpoint {
    pub fn new(url: &str, pinned_key: PublicKey) -> Result<Self> {
        Ok(Endpoint {
            url: canonicalize_url(url)?,
            pinned_key,
        })
    }
}

/// Delivers one request to the service at `url`.
///
/// Implementations report unreachable services as [`Error::Transport`];
/// every other outcome is a [`Response`].
pub trait Transport: Send + Sync {
    fn send(&self, url: &str, request: &Request) -> Result<Response>;
}

impl<T: Transport + ?Sized> Transport for Arc<T> {
    fn send(&self, url: &str, request: &Request) -> Result<Response> {
        (**self).send(url, request)
    }
}

/// In-process transport to services living in the same address space.
///
/// Requests and responses are round-tripped through their byte encoding.
#[derive(Default)]
pub struct LocalTransport {
    services: RwLock<HashMap<String, (Arc<SssService>, bool)>>,
}

impl LocalTransport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&self, url: &str, service: Arc<SssService>) -> Result<()> {
        self.services.write().insert(canonicalize_url(url)?, (service, true));
        Ok(())
    }

    /// Simulates an outage (`false`) or recovery (`true`).
    pub fn set_online(&self, url: &str, online: bool) -> Result<()> {
        let url = canonicalize_url(url)?;
        match self.services.write().get_mut(&url) {
            Some(entry) => {
                entry.1 = online;
                Ok(())
            }
            None => Err(Error::NotFound(format!("no local service at {url}"))),
        }
    }

    pub fn service(&self, url: &str) -> Option<Arc<SssService>> {
        let url = canonicalize_url(url).ok()?;
        self.services.read().get(&url).map(|(s, _)| s.clone())
    }
}

impl Transport for LocalTransport {
    fn send(&self, url: &str, request: &Request) -> Result<Response> {
        let url = canonicalize_url(url)?;
        let service = match self.services.read().get(&url) {
            Some((s, true)) => s.clone(),
            _ => return Err(Error::Transport(format!("{url} unreachable"))),
        };
        let request = Request::from_bytes(&request.to_bytes())?;
        Response::from_bytes(&service.handle(&request).to_bytes())
    }
}

/// Signs `body` as `method path`, sends it, checks the service signature
/// against `pinned` and decodes the reply.
pub fn call<B, T, F>(
    send: F,
    key: &SigningKeyPair,
    clock: &dyn Clock,
    pinned: &PublicKey,
    method: Method,
    path: &str,
    body: Option<&B>,
) -> Result<T>
where
    B: Serialize + ?Sized,
    T: DeserializeOwned,
    F: FnOnce(&Request) -> Result<Response>,
{
    let body = match body {
        Some(b) => serde_json::to_vec(b).map_err(|e| Error::invalid(e.to_string()))?,
        None => Vec::new(),
    };
    let request = Request::signed(key, clock, method, path, body);
    let response = send(&request)?;
    if !response.verify_server(pinned, request.nonce().unwrap_or_default()) {
        return Err(Error::Integrity("response not signed by the pinned service key".into()));
    }
    response.into_result()
}

/// Host-side pass-through that carries device request frames to a
/// service unchanged.
pub struct Proxy<'a>(pub &'a dyn Transport);

impl SssLink for Proxy<'_> {
    fn forward(&mut self, url: &str, frame: &[u8]) -> Result<Vec<u8>> {
        let request = Request::from_bytes(frame)?;
        Ok(self.0.send(url, &request)?.to_bytes())
    }
}
