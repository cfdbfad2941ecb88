// Copyright 2026 The PASCO Authors
// SPDX-License-Identifier: Apache-2.0

//! Mirroring account data across several synchronization services, each
//! seeing its own keys, identifiers and masked one-time pads.

mod mirror;
mod outbox;

pub use mirror::{MirrorSet, ReconcileReport, WriteOutcome};
pub use outbox::{Outbox, OutboxEntry, PendingOp};

use crate::account::canonicalize_url;
use crate::crypto::{self, SecretBytes, SigningKeyPair};
use crate::error::{Error, Result};
use zeroize::Zeroizing;

pub const MASK_LEN: usize = 32;

/// Record key for one service: `kdf(k_data, canonical url)`.
pub fn sss_data_key(k_data: &SecretBytes, url_sss: &str) -> Result<SecretBytes> {
    crypto::kdf(k_data, &canonicalize_url(url_sss)?)
}

/// Authentication keypair for one service, derived from a device root.
pub fn sss_auth_key(k_auth_root: &SecretBytes, url_sss: &str) -> Result<SigningKeyPair> {
    if k_auth_root.len() != 32 {
        return Err(Error::InvalidKey);
    }
    let seed = crypto::kdf(k_auth_root, &canonicalize_url(url_sss)?)?;
    SigningKeyPair::from_seed(&seed)
}

/// `otp XOR prg(m, url, |otp|)`. Applying it twice gives back `otp`.
pub fn mask_otp(otp: &SecretBytes, m: &SecretBytes, url_sss: &str) -> Result<SecretBytes> {
    if m.len() != MASK_LEN {
        return Err(Error::invalid(format!("mask must be {MASK_LEN} octets")));
    }
    let url = canonicalize_url(url_sss)?;
    let stream = Zeroizing::new(crypto::prg(m, url.as_bytes(), otp.len())?);
    SecretBytes::new(crypto::xor_mask(otp.expose(), &stream)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sb(b: &[u8]) -> SecretBytes {
        SecretBytes::from_slice(b).unwrap()
    }

    #[test]
    fn per_service_keys_differ_and_canonicalize() {
        let k = sb(&[3; 32]);
        let a = sss_data_key(&k, "https://sss1.example").unwrap();
        let b = sss_data_key(&k, "https://sss2.example").unwrap();
        assert_ne!(a, b);
        assert_eq!(a, sss_data_key(&k, "HTTPS://SSS1.example:443/").unwrap());

        let root = sb(&[4; 32]);
        let p1 = sss_auth_key(&root, "https://sss1.example").unwrap();
        let p2 = sss_auth_key(&root, "https://sss2.example").unwrap();
        assert_ne!(p1.public(), p2.public());
        assert_eq!(p1.public(), sss_auth_key(&root, "sss1.example").unwrap().public());
        let sig = p1.sign(b"m");
        assert!(p1.public().verify(b"m", &sig));
        assert!(matches!(sss_auth_key(&sb(&[1; 16]), "a.example"), Err(Error::InvalidKey)));
    }

    #[test]
    fn zero_otp_masks_to_stream() {
        let m = sb(&[9; 32]);
        let otp = sb(&[0; 64]);
        let masked = mask_otp(&otp, &m, "https://sss1.example").unwrap();
        let stream = crypto::prg(&m, b"https://sss1.example", 64).unwrap();
        assert_eq!(masked.expose(), &stream[..]);
        let other = mask_otp(&otp, &m, "https://sss2.example").unwrap();
        assert_ne!(masked, other);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn mask_is_an_involution(
            otp in proptest::collection::vec(any::<u8>(), 1..200),
            m in proptest::array::uniform32(any::<u8>()),
            host in "[a-z]{1,12}",
        ) {
            let url = format!("https://{host}.example");
            let otp = sb(&otp);
            let m = sb(&m);
            let once = mask_otp(&otp, &m, &url).unwrap();
            prop_assert_eq!(mask_otp(&once, &m, &url).unwrap(), otp);
        }
    }
}
