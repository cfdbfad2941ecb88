// Copyright 2026 The PASCO Authors
// SPDX-License-Identifier: Apache-2.0

//! Request/response envelopes and the detached-signature authentication
//! scheme shared by the service, the client and the backup device.
//!
//! Every request carries four headers. The signature covers
//!
//! ```text
//! PASCO-REQ-V1\n{METHOD}\n{path}\n{hex sha256(body)}\n{nonce}\n{timestamp}
//! ```
//!
//! and responses are signed by the service key over
//!
//! ```text
//! PASCO-RESP-V1\n{status}\n{request nonce}\n{hex sha256(body)}
//! ```

use std::collections::BTreeSet;
use std::fmt;

use base64::engine::general_purpose::{STANDARD, URL_SAFE_NO_PAD};
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::account::{b64, AccountId};
use crate::clock::Clock;
use crate::crypto::{self, Fingerprint, PublicKey, SigningKeyPair};
use crate::error::{Error, Result};

pub const HDR_FINGERPRINT: &str = "X-Key-Fingerprint";
pub const HDR_NONCE: &str = "X-Nonce";
pub const HDR_TIMESTAMP: &str = "X-Timestamp";
pub const HDR_SIGNATURE: &str = "X-Signature";
pub const HDR_SERVER_SIGNATURE: &str = "X-Server-Signature";

pub const TOKEN_LEN: usize = 32;
pub const TOKEN_TTL_SECS: u64 = 300;
pub const CLOCK_SKEW_SECS: u64 = 60;
const MAX_NONCE_LEN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    UserDevice,
    BackupRestore,
    BackupEmergency,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::UserDevice => "user-device",
            Role::BackupRestore => "backup-restore",
            Role::BackupEmergency => "backup-emergency",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AclMode {
    Full,
    List,
}

/// Which records a key may read. In `full` mode `allowed` is ignored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AclPolicy {
    pub mode: AclMode,
    #[serde(default)]
    pub allowed: BTreeSet<AccountId>,
}

impl AclPolicy {
    pub fn full() -> Self {
        AclPolicy {
            mode: AclMode::Full,
            allowed: BTreeSet::new(),
        }
    }

    pub fn list(ids: impl IntoIterator<Item = AccountId>) -> Self {
        AclPolicy {
            mode: AclMode::List,
            allowed: ids.into_iter().collect(),
        }
    }

    pub fn permits(&self, id: &AccountId) -> bool {
        match self.mode {
            AclMode::Full => true,
            AclMode::List => self.allowed.contains(id),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Get,
    Post,
    Put,
    Delete,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Get => "GET",
            Method::Post => "POST",
            Method::Put => "PUT",
            Method::Delete => "DELETE",
        }
    }

    pub fn parse(s: &str) -> Result<Method> {
        match s {
            "GET" => Ok(Method::Get),
            "POST" => Ok(Method::Post),
            "PUT" => Ok(Method::Put),
            "DELETE" => Ok(Method::Delete),
            other => Err(Error::invalid(format!("unsupported method {other}"))),
        }
    }
}

#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthHeaders {
    pub fingerprint: Fingerprint,
    pub nonce: String,
    pub timestamp: u64,
    #[serde(with = "b64")]
    pub signature: Vec<u8>,
}

impl fmt::Debug for AuthHeaders {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AuthHeaders")
            .field("fingerprint", &self.fingerprint)
            .field("nonce", &self.nonce)
            .field("timestamp", &self.timestamp)
            .finish_non_exhaustive()
    }
}

impl Serialize for Fingerprint {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Fingerprint {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Fingerprint::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

impl AuthHeaders {
    /// Header name/value pairs as sent over HTTP.
    pub fn to_pairs(&self) -> [(&'static str, String); 4] {
        [
            (HDR_FINGERPRINT, self.fingerprint.to_hex()),
            (HDR_NONCE, self.nonce.clone()),
            (HDR_TIMESTAMP, self.timestamp.to_string()),
            (HDR_SIGNATURE, STANDARD.encode(&self.signature)),
        ]
    }

    /// Parses the four authentication headers; `get` looks a header up by
    /// case-insensitive name.
    pub fn from_lookup<'a, F>(get: F) -> Result<AuthHeaders>
    where
        F: Fn(&str) -> Option<&'a str>,
    {
        let need = |name: &str| {
            get(name).ok_or_else(|| Error::Unauthorized(format!("missing {name} header")))
        };
        let fingerprint = Fingerprint::from_hex(need(HDR_FINGERPRINT)?)
            .map_err(|_| Error::Unauthorized("malformed fingerprint header".into()))?;
        let nonce = need(HDR_NONCE)?.to_string();
        if nonce.is_empty() || nonce.len() > MAX_NONCE_LEN || !nonce.is_ascii() {
            return Err(Error::Unauthorized("malformed nonce header".into()));
        }
        let timestamp = need(HDR_TIMESTAMP)?
            .parse::<u64>()
            .map_err(|_| Error::Unauthorized("malformed timestamp header".into()))?;
        let signature = STANDARD
            .decode(need(HDR_SIGNATURE)?)
            .map_err(|_| Error::Unauthorized("malformed signature header".into()))?;
        Ok(AuthHeaders {
            fingerprint,
            nonce,
            timestamp,
            signature,
        })
    }
}

/// A service request, independent of the transport carrying it.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Request {
    pub method: Method,
    pub path: String,
    pub auth: Option<AuthHeaders>,
    #[serde(with = "b64")]
    pub body: Vec<u8>,
}

impl fmt::Debug for Request {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Request")
            .field("method", &self.method)
            .field("path", &self.path)
            .field("auth", &self.auth)
            .field("body_len", &self.body.len())
            .finish()
    }
}

pub fn request_signing_input(method: Method, path: &str, body: &[u8], nonce: &str, timestamp: u64) -> Vec<u8> {
    format!(
        "PASCO-REQ-V1\n{}\n{}\n{}\n{}\n{}",
        method.as_str(),
        path,
        hex::encode(crypto::sha256(body)),
        nonce,
        timestamp
    )
    .into_bytes()
}

pub fn response_signing_input(status: u16, nonce: &str, body: &[u8]) -> Vec<u8> {
    format!(
        "PASCO-RESP-V1\n{}\n{}\n{}",
        status,
        nonce,
        hex::encode(crypto::sha256(body))
    )
    .into_bytes()
}

impl Request {
    /// Builds and signs a request with `key`, timestamped by `clock`.
    pub fn signed(key: &SigningKeyPair, clock: &dyn Clock, method: Method, path: &str, body: Vec<u8>) -> Request {
        let nonce = URL_SAFE_NO_PAD.encode(crypto::random_bytes(16).expect("valid length"));
        let timestamp = clock.now();
        let signature = key.sign(&request_signing_input(method, path, &body, &nonce, timestamp));
        Request {
            method,
            path: path.to_string(),
            auth: Some(AuthHeaders {
                fingerprint: key.fingerprint(),
                nonce,
                timestamp,
                signature,
            }),
            body,
        }
    }

    pub fn verify_signature(&self, public: &PublicKey) -> bool {
        let Some(auth) = &self.auth else { return false };
        public.verify(
            &request_signing_input(self.method, &self.path, &self.body, &auth.nonce, auth.timestamp),
            &auth.signature,
        )
    }

    pub fn nonce(&self) -> Option<&str> {
        self.auth.as_ref().map(|a| a.nonce.as_str())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("request serialization is infallible")
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Request> {
        serde_json::from_slice(bytes).map_err(|e| Error::invalid(format!("malformed request frame: {e}")))
    }
}

#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Response {
    pub status: u16,
    #[serde(with = "b64")]
    pub body: Vec<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_b64")]
    pub signature: Option<Vec<u8>>,
}

impl fmt::Debug for Response {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Response")
            .field("status", &self.status)
            .field("body_len", &self.body.len())
            .field("signed", &self.signature.is_some())
            .finish()
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

impl Response {
    pub fn json<T: Serialize>(status: u16, value: &T) -> Response {
        Response {
            status,
            body: serde_json::to_vec(value).expect("response serialization is infallible"),
            signature: None,
        }
    }

    pub fn error(err: &Error) -> Response {
        Response::json(
            err.http_status(),
            &ErrorBody {
                code: err.code().to_string(),
                message: err.detail(),
            },
        )
    }

    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }

    /// Checks the service signature against a pinned key.
    pub fn verify_server(&self, pinned: &PublicKey, request_nonce: &str) -> bool {
        self.signature.as_deref().is_some_and(|sig| {
            pinned.verify(&response_signing_input(self.status, request_nonce, &self.body), sig)
        })
    }

    /// Decodes a success body, or turns an error body back into an [`Error`].
    pub fn into_result<T: for<'de> Deserialize<'de>>(self) -> Result<T> {
        if self.is_success() {
            serde_json::from_slice(&self.body)
                .map_err(|e| Error::Transport(format!("malformed response body: {e}")))
        } else {
            Err(self.to_error())
        }
    }

    pub fn to_error(&self) -> Error {
        match serde_json::from_slice::<ErrorBody>(&self.body) {
            Ok(b) => Error::from_wire(self.status, &b.code, &b.message),
            Err(_) => Error::from_wire(self.status, "", "unstructured error response"),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("response serialization is infallible")
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Response> {
        serde_json::from_slice(bytes).map_err(|e| Error::invalid(format!("malformed response frame: {e}")))
    }
}

pub(crate) mod opt_b64 {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Vec<u8>>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(v) => s.serialize_some(&STANDARD.encode(v)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<u8>>, D::Error> {
        Option::<String>::deserialize(d)?
            .map(|s| STANDARD.decode(s).map_err(serde::de::Error::custom))
            .transpose()
    }
}

// JSON bodies.

#[derive(Debug, Serialize, Deserialize)]
pub struct CreateAccountBody {
    #[serde(with = "b64")]
    pub public_key: Vec<u8>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CreateAccountReply {
    pub account_id: String,
    pub fingerprint: Fingerprint,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct IssueTokenBody {
    pub role: Role,
    pub acl: Option<AclPolicy>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TokenReply {
    #[serde(with = "b64")]
    pub token: Vec<u8>,
    pub issued_at: u64,
    pub ttl: u64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RegisterKeyBody {
    #[serde(with = "b64")]
    pub token: Vec<u8>,
    #[serde(with = "b64")]
    pub public_key: Vec<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_b64")]
    pub otp: Option<Vec<u8>>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RegisterKeyReply {
    pub fingerprint: Fingerprint,
    pub role: Role,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct OtpReply {
    #[serde(with = "b64")]
    pub otp: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyInfo {
    pub fingerprint: Fingerprint,
    pub role: Role,
    pub has_otp: bool,
    pub acl: AclPolicy,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct KeyList {
    pub keys: Vec<KeyInfo>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RecordList {
    pub records: Vec<crate::account::EncryptedRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Ack {
    pub ok: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ManualClock;

    #[test]
    fn signed_request_verifies_and_detects_tamper() {
        let kp = SigningKeyPair::generate();
        let clock = ManualClock::new(1000);
        let req = Request::signed(&kp, &clock, Method::Put, "/v1/records/abc", b"{}".to_vec());
        assert!(req.verify_signature(&kp.public()));
        let mut r = req.clone();
        r.path = "/v1/records/abd".into();
        assert!(!r.verify_signature(&kp.public()));
        let mut r = req.clone();
        r.body.push(b' ');
        assert!(!r.verify_signature(&kp.public()));
        let mut r = req.clone();
        r.auth.as_mut().unwrap().timestamp += 1;
        assert!(!r.verify_signature(&kp.public()));
        assert!(!req.verify_signature(&SigningKeyPair::generate().public()));
    }

    #[test]
    fn header_round_trip() {
        let kp = SigningKeyPair::generate();
        let req = Request::signed(&kp, &ManualClock::new(5), Method::Get, "/v1/otp", vec![]);
        let pairs = req.auth.as_ref().unwrap().to_pairs();
        let parsed = AuthHeaders::from_lookup(|name| {
            pairs.iter().find(|(n, _)| n.eq_ignore_ascii_case(name)).map(|(_, v)| v.as_str())
        })
        .unwrap();
        assert_eq!(&parsed, req.auth.as_ref().unwrap());
        let missing = AuthHeaders::from_lookup(|_| None);
        assert!(matches!(missing, Err(Error::Unauthorized(_))));
    }

    #[test]
    fn frames_round_trip() {
        let kp = SigningKeyPair::generate();
        let req = Request::signed(&kp, &ManualClock::new(5), Method::Post, "/v1/tokens", b"x".to_vec());
        assert_eq!(Request::from_bytes(&req.to_bytes()).unwrap(), req);
        let resp = Response::error(&Error::Forbidden("no".into()));
        assert_eq!(resp.status, 403);
        let back = Response::from_bytes(&resp.to_bytes()).unwrap();
        assert_eq!(back.to_error(), Error::Forbidden("no".into()));
    }

    #[test]
    fn acl_semantics() {
        let a = AccountId([1; 32]);
        let b = AccountId([2; 32]);
        assert!(AclPolicy::full().permits(&a));
        let l = AclPolicy::list([a]);
        assert!(l.permits(&a));
        assert!(!l.permits(&b));
        assert!(!AclPolicy::list([]).permits(&a));
        let json = serde_json::to_string(&l).unwrap();
        assert!(json.contains("\"mode\":\"list\""));
        assert_eq!(serde_json::from_str::<AclPolicy>(&json).unwrap(), l);
    }
}
