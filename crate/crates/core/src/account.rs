// Copyright 2026 The PASCO Authors
// SPDX-License-Identifier: Apache-2.0

//! Per-account records exchanged with the synchronization service: the
//! opaque identifier, the canonical byte encoding and the sealed form.

use std::fmt;

use base64::engine::general_purpose::{STANDARD, URL_SAFE_NO_PAD};
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::crypto::{self, SecretBytes, TAG_LEN};
use crate::error::{Error, Result};
use crate::password::{PasswordPolicy, Salt, SALT_LEN};

const MAX_FIELD_LEN: usize = 16 * 1024;

/// Canonical form of a service URL.
///
/// Scheme and host are lowercased, default ports and fragments dropped, the
/// path kept, and a trailing slash removed. A missing scheme means `https`.
pub fn canonicalize_url(input: &str) -> Result<String> {
    let trimmed = input.trim();
    if trimmed.is_empty() {
        return Err(Error::invalid("empty URL"));
    }
    let with_scheme = if trimmed.contains("://") {
        trimmed.to_string()
    } else {
        format!("https://{trimmed}")
    };
    let mut parsed =
        url::Url::parse(&with_scheme).map_err(|e| Error::invalid(format!("malformed URL: {e}")))?;
    if !matches!(parsed.scheme(), "http" | "https") {
        return Err(Error::invalid(format!("unsupported URL scheme {}", parsed.scheme())));
    }
    let host = parsed
        .host_str()
        .filter(|h| !h.is_empty())
        .ok_or_else(|| Error::invalid("URL has no host"))?
        .to_string();
    if !parsed.username().is_empty() || parsed.password().is_some() {
        return Err(Error::invalid("URL must not carry credentials"));
    }
    parsed.set_fragment(None);
    let mut out = format!("{}://{}", parsed.scheme(), host);
    if let Some(port) = parsed.port() {
        out.push_str(&format!(":{port}"));
    }
    let path = parsed.path().trim_end_matches('/');
    out.push_str(path);
    if let Some(q) = parsed.query() {
        out.push('?');
        out.push_str(q);
    }
    Ok(out)
}

/// Keys used to seal and identify records, derived from `K_Data`.
#[derive(Clone)]
pub struct DataKeys {
    pub enc: SecretBytes,
    pub mac: SecretBytes,
}

impl fmt::Debug for DataKeys {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("DataKeys([REDACTED])")
    }
}

pub fn split_data_key(k_data: &SecretBytes) -> Result<DataKeys> {
    Ok(DataKeys {
        enc: crypto::kdf(k_data, "enc")?,
        mac: crypto::kdf(k_data, "mac")?,
    })
}

/// Opaque record identifier, `mac(K_Data,Mac, canonical url)`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AccountId(pub [u8; TAG_LEN]);

impl AccountId {
    /// Standard base64, used in JSON bodies.
    pub fn to_base64(&self) -> String {
        STANDARD.encode(self.0)
    }

    /// URL-safe unpadded base64, used in request paths.
    pub fn to_path(&self) -> String {
        URL_SAFE_NO_PAD.encode(self.0)
    }

    /// Accepts either base64 alphabet, padded or not.
    pub fn parse(s: &str) -> Result<AccountId> {
        let raw = URL_SAFE_NO_PAD
            .decode(s.trim_end_matches('='))
            .or_else(|_| STANDARD.decode(s))
            .map_err(|_| Error::invalid("account id is not base64"))?;
        let arr: [u8; TAG_LEN] = raw
            .try_into()
            .map_err(|_| Error::invalid("account id must be 32 octets"))?;
        Ok(AccountId(arr))
    }
}

impl fmt::Debug for AccountId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AccountId({})", &self.to_path()[..10])
    }
}

impl Serialize for AccountId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_base64())
    }
}

impl<'de> Deserialize<'de> for AccountId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        AccountId::parse(&s).map_err(serde::de::Error::custom)
    }
}

pub fn account_id(mac_key: &SecretBytes, url: &str) -> Result<AccountId> {
    let canonical = canonicalize_url(url)?;
    Ok(AccountId(crypto::mac(mac_key, canonical.as_bytes())))
}

/// Synchronized per-account data: salt, policy, username and service URL.
#[derive(Clone, PartialEq, Eq)]
pub struct AccountData {
    pub salt: Salt,
    pub policy: PasswordPolicy,
    pub username: String,
    url: String,
}

impl fmt::Debug for AccountData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AccountData").finish_non_exhaustive()
    }
}

impl AccountData {
    pub fn new(salt: Salt, policy: PasswordPolicy, username: &str, url: &str) -> Result<Self> {
        policy.check()?;
        if username.len() > MAX_FIELD_LEN {
            return Err(Error::invalid("username too long"));
        }
        Ok(AccountData {
            salt,
            policy,
            username: username.to_string(),
            url: canonicalize_url(url)?,
        })
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    /// Length-prefixed (u32 big-endian) concatenation of salt, policy JSON,
    /// username and URL.
    pub fn encode(&self) -> Vec<u8> {
        let policy = self.policy.to_json();
        let mut out = Vec::with_capacity(16 + SALT_LEN + policy.len() + self.username.len() + self.url.len());
        for field in [
            &self.salt.0[..],
            policy.as_bytes(),
            self.username.as_bytes(),
            self.url.as_bytes(),
        ] {
            out.extend_from_slice(&(field.len() as u32).to_be_bytes());
            out.extend_from_slice(field);
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut rest = bytes;
        let mut take = || -> Result<&[u8]> {
            if rest.len() < 4 {
                return Err(Error::Integrity("truncated account data".into()));
            }
            let (len, tail) = rest.split_at(4);
            let len = u32::from_be_bytes(len.try_into().expect("4 octets")) as usize;
            if len > MAX_FIELD_LEN || len > tail.len() {
                return Err(Error::Integrity("account data field overruns buffer".into()));
            }
            let (field, tail) = tail.split_at(len);
            rest = tail;
            Ok(field)
        };
        let salt = Salt::from_slice(take()?).map_err(|e| Error::Integrity(e.to_string()))?;
        let policy = utf8(take()?)?;
        let username = utf8(take()?)?;
        let url = utf8(take()?)?;
        if !rest.is_empty() {
            return Err(Error::Integrity("trailing octets after account data".into()));
        }
        let policy = PasswordPolicy::from_json(&policy).map_err(|e| Error::Integrity(e.to_string()))?;
        let data = AccountData::new(salt, policy, &username, &url)
            .map_err(|e| Error::Integrity(e.to_string()))?;
        if data.url != url {
            return Err(Error::Integrity("url is not in canonical form".into()));
        }
        Ok(data)
    }
}

fn utf8(bytes: &[u8]) -> Result<String> {
    String::from_utf8(bytes.to_vec()).map_err(|_| Error::Integrity("field is not UTF-8".into()))
}

/// Sealed account data as stored at the service. Wire form:
/// `{"id": base64, "blob": base64}`.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncryptedRecord {
    pub id: AccountId,
    #[serde(with = "b64")]
    pub blob: Vec<u8>,
}

impl fmt::Debug for EncryptedRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EncryptedRecord")
            .field("id", &self.id)
            .field("blob_len", &self.blob.len())
            .finish()
    }
}

impl EncryptedRecord {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("record serialization is infallible")
    }

    pub fn from_json(s: &[u8]) -> Result<Self> {
        serde_json::from_slice(s).map_err(|e| Error::invalid(format!("malformed record: {e}")))
    }
}

pub(crate) mod b64 {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&STANDARD.encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        STANDARD.decode(s).map_err(serde::de::Error::custom)
    }
}

pub fn seal(data: &AccountData, k_data: &SecretBytes) -> Result<EncryptedRecord> {
    let keys = split_data_key(k_data)?;
    let id = AccountId(crypto::mac(&keys.mac, data.url.as_bytes()));
    let mut plain = data.encode();
    let blob = crypto::aead_encrypt(&keys.enc, &plain, &id.0);
    zeroize::Zeroize::zeroize(&mut plain);
    Ok(EncryptedRecord { id, blob: blob? })
}

pub fn open(record: &EncryptedRecord, k_data: &SecretBytes) -> Result<AccountData> {
    let keys = split_data_key(k_data)?;
    let mut plain = crypto::aead_decrypt(&keys.enc, &record.blob, &record.id.0)?;
    let data = AccountData::decode(&plain);
    zeroize::Zeroize::zeroize(&mut plain);
    let data = data?;
    let expected = AccountId(crypto::mac(&keys.mac, data.url.as_bytes()));
    if expected != record.id {
        return Err(Error::Integrity("record id does not match embedded url".into()));
    }
    Ok(data)
}
