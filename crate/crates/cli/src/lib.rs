// Copyright 2026 The PASCO Authors
// SPDX-License-Identifier: Apache-2.0

//! Shared plumbing for the `pasco` and `pasco-sss` binaries.

pub mod config;

use pasco::Error;

/// Process exit status for an error.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Unauthorized(_)
        | Error::Forbidden(_)
        | Error::AuthenticationFailure
        | Error::PinRejected { .. }
        | Error::DeviceWiped => 2,
        Error::NotFound(_) => 3,
        Error::Transport(_) => 4,
        _ => 1,
    }
}

/// Accepts a 32-octet public key as hex or standard base64.
pub fn parse_public_key(text: &str) -> pasco::Result<pasco::crypto::PublicKey> {
    use base64::Engine;
    let text = text.trim();
    let raw = hex::decode(text)
        .or_else(|_| base64::engine::general_purpose::STANDARD.decode(text))
        .map_err(|_| Error::invalid("public key must be hex or base64"))?;
    pasco::crypto::PublicKey::from_bytes(&raw)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Unauthorized("x".into())), 2);
        assert_eq!(exit_code(&Error::PinRejected { remaining: 3 }), 2);
        assert_eq!(exit_code(&Error::NotFound("x".into())), 3);
        assert_eq!(exit_code(&Error::Transport("x".into())), 4);
        assert_eq!(exit_code(&Error::Conflict("x".into())), 1);
    }

    #[test]
    fn public_key_forms() {
        let key = pasco::crypto::SigningKeyPair::generate().public();
        use base64::Engine;
        let b64 = base64::engine::general_purpose::STANDARD.encode(key.0);
        assert_eq!(parse_public_key(&hex::encode(key.0)).unwrap(), key);
        assert_eq!(parse_public_key(&b64).unwrap(), key);
        assert!(parse_public_key("abcd").is_err());
    }
}
