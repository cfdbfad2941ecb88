// Copyright 2026 The PASCO Authors
// SPDX-License-Identifier: Apache-2.0

use std::io::Read;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use pasco::sss::wire::HDR_SERVER_SIGNATURE;
use pasco::sss::{Request, Response};
use pasco::transport::Transport;
use pasco::{Error, Result};

const MAX_RESPONSE_LEN: u64 = 4 << 20;

/// Blocking HTTP client for [`Transport`].
pub struct HttpTransport {
    agent: ureq::Agent,
}

impl Default for HttpTransport {
    fn default() -> Self {
        Self::new(Duration::from_secs(10))
    }
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> Self {
        HttpTransport {
            agent: ureq::AgentBuilder::new()
                .timeout_connect(timeout)
                .timeout(timeout)
                .build(),
        }
    }
}

impl Transport for HttpTransport {
    fn send(&self, url: &str, request: &Request) -> Result<Response> {
        let full = format!("{}{}", url.trim_end_matches('/'), request.path);
        let mut call = self.agent.request(request.method.as_str(), &full);
        if let Some(auth) = &request.auth {
            for (name, value) in auth.to_pairs() {
                call = call.set(name, &value);
            }
        }
        if !request.body.is_empty() {
            call = call.set("content-type", "application/json");
        }
        let resp = match call.send_bytes(&request.body) {
            Ok(r) | Err(ureq::Error::Status(_, r)) => r,
            Err(e) => return Err(Error::Transport(format!("{url}: {e}"))),
        };
        let status = resp.status();
        let signature = match resp.header(HDR_SERVER_SIGNATURE) {
            Some(v) => Some(
                STANDARD
                    .decode(v)
                    .map_err(|_| Error::Integrity("malformed service signature".into()))?,
            ),
            None => None,
        };
        let mut body = Vec::new();
        resp.into_reader()
            .take(MAX_RESPONSE_LEN)
            .read_to_end(&mut body)
            .map_err(|e| Error::Transport(format!("{url}: {e}")))?;
        Ok(Response { status, body, signature })
    }
}
