// Copyright 2026 The PASCO Authors
// SPDX-License-Identifier: Apache-2.0

use std::fmt;

use crate::crypto::SecretBytes;
use crate::error::{Error, Result};

pub const SEED_LEN: usize = 32;
pub const K_DATA_LEN: usize = 32;
/// Length of the serialized secret `seed || k_data`.
pub const SECRET_LEN: usize = SEED_LEN + K_DATA_LEN;

/// The root secret shared by every enrolled device.
#[derive(Clone, PartialEq, Eq)]
pub struct PalpasSecret {
    pub seed: SecretBytes,
    pub k_data: SecretBytes,
}

impl PalpasSecret {
    pub fn generate() -> Result<Self> {
        Ok(PalpasSecret {
            seed: SecretBytes::random(SEED_LEN)?,
            k_data: SecretBytes::random(K_DATA_LEN)?,
        })
    }

    /// `seed || k_data`.
    pub fn to_bytes(&self) -> SecretBytes {
        let mut v = Vec::with_capacity(SECRET_LEN);
        v.extend_from_slice(self.seed.expose());
        v.extend_from_slice(self.k_data.expose());
        SecretBytes::new(v).expect("non-empty")
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() != SECRET_LEN {
            return Err(Error::Integrity(format!(
                "secret must be {SECRET_LEN} octets, got {}",
                bytes.len()
            )));
        }
        Ok(PalpasSecret {
            seed: SecretBytes::from_slice(&bytes[..SEED_LEN])?,
            k_data: SecretBytes::from_slice(&bytes[SEED_LEN..])?,
        })
    }
}

impl fmt::Debug for PalpasSecret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("PalpasSecret([REDACTED])")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_length_guard() {
        let s = PalpasSecret::generate().unwrap();
        let b = s.to_bytes();
        assert_eq!(b.len(), 64);
        assert_eq!(PalpasSecret::from_bytes(b.expose()).unwrap(), s);
        assert!(matches!(PalpasSecret::from_bytes(&[0; 63]), Err(Error::Integrity(_))));
        assert_eq!(format!("{s:?}"), "PalpasSecret([REDACTED])");
    }
}
