// Copyright 2026 The PASCO Authors
// SPDX-License-Identifier: Apache-2.0

//! The transfer payload handed from an enrolled device to a new one, small
//! enough for a QR code.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};
use zeroize::Zeroizing;

use crate::account::{b64, canonicalize_url};
use crate::error::{Error, Result};
use crate::secret::PalpasSecret;

pub const MAX_PAYLOAD_LEN: usize = 2048;
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Payload {
    v: u32,
    #[serde(with = "b64")]
    seed: Vec<u8>,
    #[serde(with = "b64")]
    k_data: Vec<u8>,
    sss_urls: Vec<String>,
    tokens: Vec<String>,
}

impl Drop for Payload {
    fn drop(&mut self) {
        zeroize::Zeroize::zeroize(&mut self.seed);
        zeroize::Zeroize::zeroize(&mut self.k_data);
    }
}

/// Decoded enrollment payload.
#[derive(Debug)]
pub struct Enrollment {
    pub secret: PalpasSecret,
    /// `(canonical service url, token)`, in service order.
    pub tokens: Vec<(String, Vec<u8>)>,
}

pub fn encode_payload(secret: &PalpasSecret, tokens: &[(String, Vec<u8>)]) -> Result<String> {
    let payload = Payload {
        v: VERSION,
        seed: secret.seed.expose().to_vec(),
        k_data: secret.k_data.expose().to_vec(),
        sss_urls: tokens.iter().map(|(u, _)| u.clone()).collect(),
        tokens: tokens.iter().map(|(_, t)| STANDARD.encode(t)).collect(),
    };
    let json = Zeroizing::new(serde_json::to_vec(&payload).expect("serializable"));
    let out = STANDARD.encode(&*json);
    if out.len() > MAX_PAYLOAD_LEN {
        return Err(Error::invalid(format!("enrollment payload exceeds {MAX_PAYLOAD_LEN} octets")));
    }
    Ok(out)
}

pub fn decode_payload(text: &str) -> Result<Enrollment> {
    let text = text.trim();
    if text.len() > MAX_PAYLOAD_LEN {
        return Err(Error::invalid("enrollment payload too large"));
    }
    let json = Zeroizing::new(
        STANDARD
            .decode(text)
            .map_err(|_| Error::invalid("enrollment payload is not base64"))?,
    );
    let p: Payload =
        serde_json::from_slice(&json).map_err(|e| Error::invalid(format!("malformed enrollment payload: {e}")))?;
    if p.v != VERSION {
        return Err(Error::invalid(format!("unsupported enrollment payload version {}", p.v)));
    }
    if p.sss_urls.is_empty() || p.sss_urls.len() != p.tokens.len() {
        return Err(Error::invalid("enrollment payload needs one token per service"));
    }
    let mut both = Zeroizing::new(p.seed.clone());
    both.extend_from_slice(&p.k_data);
    let secret = PalpasSecret::from_bytes(&both).map_err(|_| Error::invalid("bad secret in enrollment payload"))?;
    let tokens = p
        .sss_urls
        .iter()
        .zip(&p.tokens)
        .map(|(u, t)| {
            let token = STANDARD.decode(t).map_err(|_| Error::invalid("token is not base64"))?;
            Ok((canonicalize_url(u)?, token))
        })
        .collect::<Result<_>>()?;
    Ok(Enrollment { secret, tokens })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_within_qr_budget() {
        let secret = PalpasSecret::generate().unwrap();
        let tokens: Vec<_> = (0..4)
            .map(|i| (format!("https://sss{i}.example.org"), vec![i as u8; 32]))
            .collect();
        let text = encode_payload(&secret, &tokens).unwrap();
        assert!(text.len() <= MAX_PAYLOAD_LEN);
        let back = decode_payload(&text).unwrap();
        assert_eq!(back.secret, secret);
        assert_eq!(back.tokens, tokens);
    }

    #[test]
    fn rejects_malformed_payloads() {
        assert!(decode_payload("!!!").is_err());
        assert!(decode_payload(&STANDARD.encode(b"{}")).is_err());
        let bad = r#"{"v":2,"seed":"","k_data":"","sss_urls":[],"tokens":[]}"#;
        assert!(decode_payload(&STANDARD.encode(bad)).is_err());
        assert!(decode_payload(&"A".repeat(MAX_PAYLOAD_LEN + 4)).is_err());
    }
}
