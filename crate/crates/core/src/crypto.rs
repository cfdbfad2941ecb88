// Copyright 2026 The PASCO Authors
// SPDX-License-Identifier: Apache-2.0

//! Keyed pseudorandom generation, key derivation, MACs, AEAD, XOR masking
//! and signatures.
//!
//! `prg`, `kdf` and `mac` all come from HMAC-SHA256. Each one first runs an
//! HKDF extract step with its own salt label (`palpas/prg`, `palpas/kdf`,
//! `palpas/mac`), so the three never share a pseudorandom key even when they
//! are fed the same input key.
//!
//! * `kdf` is HKDF-SHA256 expand with the label as `info`, 32 octets.
//! * `prg` expands in counter mode: block `i` (starting at 1) is
//!   `HMAC(prk, be32(i) || context)`. Outputs are prefix-consistent.
//! * `mac` is `HMAC(prk, message)`.

use std::fmt;

use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use ed25519_dalek::{Signer, Verifier};
use hkdf::Hkdf;
use hmac::{Hmac, Mac};
use rand::rngs::OsRng;
use rand::RngCore;
use sha2::{Digest, Sha256};
use subtle::ConstantTimeEq;
use zeroize::{Zeroize, Zeroizing};

use crate::error::{Error, Result};

type HmacSha256 = Hmac<Sha256>;

pub const PRG_MAX_LEN: usize = 8192;
pub const SECRET_MAX_LEN: usize = 4096;
pub const KEY_LEN: usize = 32;
pub const TAG_LEN: usize = 32;
pub const NONCE_LEN: usize = 12;
pub const AEAD_TAG_LEN: usize = 16;
pub const AEAD_MAX_PLAINTEXT: usize = 64 * 1024;

const PRG_LABEL: &[u8] = b"palpas/prg";
const KDF_LABEL: &[u8] = b"palpas/kdf";
const MAC_LABEL: &[u8] = b"palpas/mac";

/// An owned secret octet string. Zeroed on drop, compared in constant time,
/// and never printed.
#[derive(Clone)]
pub struct SecretBytes(Vec<u8>);

impl SecretBytes {
    pub fn new(bytes: Vec<u8>) -> Result<Self> {
        if bytes.is_empty() || bytes.len() > SECRET_MAX_LEN {
            let len = bytes.len();
            let mut bytes = bytes;
            bytes.zeroize();
            return Err(Error::invalid(format!(
                "secret length {len} outside 1..={SECRET_MAX_LEN}"
            )));
        }
        Ok(SecretBytes(bytes))
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self> {
        Self::new(bytes.to_vec())
    }

    /// Fresh random secret of `len` octets.
    pub fn random(len: usize) -> Result<Self> {
        random_bytes(len).map(SecretBytes)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Borrow the raw octets. Callers must not log or persist them in the
    /// clear.
    pub fn expose(&self) -> &[u8] {
        &self.0
    }
}

impl Drop for SecretBytes {
    fn drop(&mut self) {
        self.0.zeroize();
    }
}

impl PartialEq for SecretBytes {
    fn eq(&self, other: &Self) -> bool {
        ct_eq(&self.0, &other.0)
    }
}

impl Eq for SecretBytes {}

impl fmt::Debug for SecretBytes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SecretBytes([REDACTED; {}])", self.0.len())
    }
}

/// Constant-time equality. Unequal lengths compare unequal.
pub fn ct_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && bool::from(a.ct_eq(b))
}

fn extract(label: &[u8], ikm: &[u8]) -> Zeroizing<[u8; 32]> {
    let (prk, _) = Hkdf::<Sha256>::extract(Some(label), ikm);
    let mut out = Zeroizing::new([0u8; 32]);
    out.copy_from_slice(&prk);
    out
}

fn hmac_parts(key: &[u8], parts: &[&[u8]]) -> [u8; 32] {
    let mut m = <HmacSha256 as Mac>::new_from_slice(key).expect("HMAC accepts any key length");
    for p in parts {
        m.update(p);
    }
    m.finalize().into_bytes().into()
}

/// Deterministic keyed pseudorandom stream of exactly `out_len` octets.
pub fn prg(key: &SecretBytes, context: &[u8], out_len: usize) -> Result<Vec<u8>> {
    if out_len == 0 || out_len > PRG_MAX_LEN {
        return Err(Error::invalid(format!(
            "prg output length {out_len} outside 1..={PRG_MAX_LEN}"
        )));
    }
    let prk = extract(PRG_LABEL, key.expose());
    let mut out = Vec::with_capacity(out_len + 32);
    let mut counter: u32 = 1;
    while out.len() < out_len {
        out.extend_from_slice(&hmac_parts(&prk[..], &[&counter.to_be_bytes(), context]));
        counter += 1;
    }
    out.truncate(out_len);
    Ok(out)
}

/// 32-octet subkey bound to `label`.
pub fn kdf(key: &SecretBytes, label: &str) -> Result<SecretBytes> {
    if label.is_empty() {
        return Err(Error::invalid("kdf label must be non-empty"));
    }
    let hk = Hkdf::<Sha256>::new(Some(KDF_LABEL), key.expose());
    let mut okm = vec![0u8; KEY_LEN];
    hk.expand(label.as_bytes(), &mut okm)
        .expect("32 octets is a valid HKDF-SHA256 output length");
    SecretBytes::new(okm)
}

pub fn mac(key: &SecretBytes, message: &[u8]) -> [u8; TAG_LEN] {
    let prk = extract(MAC_LABEL, key.expose());
    hmac_parts(&prk[..], &[message])
}

pub fn mac_verify(key: &SecretBytes, message: &[u8], tag: &[u8]) -> bool {
    ct_eq(&mac(key, message), tag)
}

/// ChaCha20-Poly1305 with a random 12-octet nonce prepended to the output.
pub fn aead_encrypt(key: &SecretBytes, plaintext: &[u8], associated_data: &[u8]) -> Result<Vec<u8>> {
    if plaintext.len() > AEAD_MAX_PLAINTEXT {
        return Err(Error::invalid(format!(
            "plaintext of {} octets exceeds {AEAD_MAX_PLAINTEXT}",
            plaintext.len()
        )));
    }
    let cipher = aead_cipher(key)?;
    let mut nonce = [0u8; NONCE_LEN];
    OsRng.fill_bytes(&mut nonce);
    let ct = cipher
        .encrypt(
            Nonce::from_slice(&nonce),
            Payload {
                msg: plaintext,
                aad: associated_data,
            },
        )
        .map_err(|_| Error::invalid("aead encryption failed"))?;
    let mut out = Vec::with_capacity(NONCE_LEN + ct.len());
    out.extend_from_slice(&nonce);
    out.extend_from_slice(&ct);
    Ok(out)
}

pub fn aead_decrypt(key: &SecretBytes, ciphertext: &[u8], associated_data: &[u8]) -> Result<Vec<u8>> {
    if ciphertext.len() < NONCE_LEN + AEAD_TAG_LEN {
        return Err(Error::AuthenticationFailure);
    }
    let cipher = aead_cipher(key)?;
    let (nonce, body) = ciphertext.split_at(NONCE_LEN);
    cipher
        .decrypt(
            Nonce::from_slice(nonce),
            Payload {
                msg: body,
                aad: associated_data,
            },
        )
        .map_err(|_| Error::AuthenticationFailure)
}

fn aead_cipher(key: &SecretBytes) -> Result<ChaCha20Poly1305> {
    if key.len() != KEY_LEN {
        return Err(Error::InvalidKey);
    }
    Ok(ChaCha20Poly1305::new(Key::from_slice(key.expose())))
}

/// Octet-wise XOR of two equal-length strings.
pub fn xor_mask(a: &[u8], b: &[u8]) -> Result<Vec<u8>> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "xor operands differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x ^ y).collect())
}

pub fn random_bytes(n: usize) -> Result<Vec<u8>> {
    if n == 0 || n > SECRET_MAX_LEN {
        return Err(Error::invalid(format!(
            "random length {n} outside 1..={SECRET_MAX_LEN}"
        )));
    }
    let mut out = vec![0u8; n];
    OsRng.fill_bytes(&mut out);
    Ok(out)
}

pub fn sha256(data: &[u8]) -> [u8; 32] {
    Sha256::digest(data).into()
}

/// SHA-256 of a public key's canonical 32-octet encoding.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Fingerprint(pub [u8; 32]);

impl Fingerprint {
    pub fn of(public: &PublicKey) -> Fingerprint {
        Fingerprint(sha256(&public.0))
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Fingerprint> {
        let raw = hex::decode(s).map_err(|_| Error::invalid("fingerprint is not hex"))?;
        let arr: [u8; 32] = raw
            .try_into()
            .map_err(|_| Error::invalid("fingerprint must be 32 octets"))?;
        Ok(Fingerprint(arr))
    }
}

impl fmt::Debug for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fingerprint({})", &self.to_hex()[..16])
    }
}

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// Ed25519 verification key, canonical 32-octet encoding.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct PublicKey(pub [u8; 32]);

impl PublicKey {
    pub fn from_bytes(bytes: &[u8]) -> Result<PublicKey> {
        let arr: [u8; 32] = bytes.try_into().map_err(|_| Error::InvalidKey)?;
        ed25519_dalek::VerifyingKey::from_bytes(&arr).map_err(|_| Error::InvalidKey)?;
        Ok(PublicKey(arr))
    }

    pub fn fingerprint(&self) -> Fingerprint {
        Fingerprint::of(self)
    }

    pub fn verify(&self, message: &[u8], signature: &[u8]) -> bool {
        let Ok(vk) = ed25519_dalek::VerifyingKey::from_bytes(&self.0) else {
            return false;
        };
        let Ok(sig) = ed25519_dalek::Signature::from_slice(signature) else {
            return false;
        };
        vk.verify(message, &sig).is_ok()
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", hex::encode(&self.0[..8]))
    }
}

pub fn verify(public: &PublicKey, message: &[u8], signature: &[u8]) -> bool {
    public.verify(message, signature)
}

/// Signing key plus its public half and fingerprint.
#[derive(Clone)]
pub struct SigningKeyPair {
    signing: ed25519_dalek::SigningKey,
    public: PublicKey,
    fingerprint: Fingerprint,
}

impl SigningKeyPair {
    pub fn generate() -> SigningKeyPair {
        Self::from_signing(ed25519_dalek::SigningKey::generate(&mut OsRng))
    }

    /// Deterministic keypair from 32 octets of seed material.
    pub fn from_seed(seed: &SecretBytes) -> Result<SigningKeyPair> {
        let arr: Zeroizing<[u8; 32]> =
            Zeroizing::new(seed.expose().try_into().map_err(|_| Error::InvalidKey)?);
        Ok(Self::from_signing(ed25519_dalek::SigningKey::from_bytes(&arr)))
    }

    fn from_signing(signing: ed25519_dalek::SigningKey) -> SigningKeyPair {
        let public = PublicKey(signing.verifying_key().to_bytes());
        SigningKeyPair {
            fingerprint: Fingerprint::of(&public),
            signing,
            public,
        }
    }

    pub fn public(&self) -> PublicKey {
        self.public
    }

    pub fn fingerprint(&self) -> Fingerprint {
        self.fingerprint
    }

    pub fn sign(&self, message: &[u8]) -> Vec<u8> {
        self.signing.sign(message).to_bytes().to_vec()
    }

    /// Export of the private seed, for at-rest storage only.
    pub fn export_seed(&self) -> SecretBytes {
        SecretBytes(self.signing.to_bytes().to_vec())
    }
}

impl fmt::Debug for SigningKeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SigningKeyPair")
            .field("fingerprint", &self.fingerprint)
            .finish_non_exhaustive()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn key(b: u8) -> SecretBytes {
        SecretBytes::new(vec![b; 32]).unwrap()
    }

    #[test]
    fn prg_is_deterministic_and_sized() {
        let k = key(7);
        assert_eq!(prg(&k, b"ctx", 32).unwrap(), prg(&k, b"ctx", 32).unwrap());
        assert_eq!(prg(&k, b"ctx", 64).unwrap().len(), 64);
        assert_eq!(prg(&k, b"ctx", PRG_MAX_LEN).unwrap().len(), PRG_MAX_LEN);
        assert_ne!(prg(&k, b"c1", 32).unwrap(), prg(&k, b"c2", 32).unwrap());
    }

    #[test]
    fn prg_rejects_bad_lengths() {
        let k = key(1);
        assert!(matches!(prg(&k, b"", 0), Err(Error::InvalidArgument(_))));
        assert!(matches!(prg(&k, b"", PRG_MAX_LEN + 1), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn kdf_labels_separate() {
        let k = key(3);
        let enc = kdf(&k, "enc").unwrap();
        let mac_key = kdf(&k, "mac").unwrap();
        assert_eq!(enc.len(), 32);
        assert_ne!(enc, mac_key);
        assert_eq!(enc, kdf(&k, "enc").unwrap());
        assert!(matches!(kdf(&k, ""), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn mac_is_label_separated_from_kdf() {
        // same key into both must not produce related outputs
        let k = key(9);
        let t = mac(&k, b"enc");
        assert_ne!(&t[..], kdf(&k, "enc").unwrap().expose());
        assert_ne!(mac(&k, b"m"), mac(&k, b"m\0"));
        assert!(mac_verify(&k, b"m", &mac(&k, b"m")));
        assert!(!mac_verify(&k, b"m", &mac(&k, b"m")[..31]));
    }

    #[test]
    fn aead_rejects_tamper_and_wrong_ad() {
        let k = key(5);
        let ct = aead_encrypt(&k, b"hello", b"ad").unwrap();
        assert_eq!(aead_decrypt(&k, &ct, b"ad").unwrap(), b"hello");
        assert_ne!(ct, aead_encrypt(&k, b"hello", b"ad").unwrap());
        let mut bad = ct.clone();
        bad[NONCE_LEN] ^= 1;
        assert_eq!(aead_decrypt(&k, &bad, b"ad"), Err(Error::AuthenticationFailure));
        assert_eq!(aead_decrypt(&k, &ct, b"ae"), Err(Error::AuthenticationFailure));
        assert_eq!(aead_decrypt(&k, &ct[..10], b"ad"), Err(Error::AuthenticationFailure));
        let big = vec![0u8; AEAD_MAX_PLAINTEXT + 1];
        assert!(matches!(aead_encrypt(&k, &big, b""), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn xor_identities() {
        let s = random_bytes(64).unwrap();
        let k = random_bytes(64).unwrap();
        assert_eq!(xor_mask(&s, &[0u8; 64]).unwrap(), s);
        assert_eq!(xor_mask(&xor_mask(&s, &k).unwrap(), &k).unwrap(), s);
        assert_eq!(xor_mask(&k, &k).unwrap(), vec![0u8; 64]);
        assert!(xor_mask(&s, &k[..63]).is_err());
    }

    #[test]
    fn random_bytes_contract() {
        assert_ne!(random_bytes(32).unwrap(), random_bytes(32).unwrap());
        assert_eq!(random_bytes(16).unwrap().len(), 16);
        assert!(random_bytes(0).is_err());
        assert!(random_bytes(SECRET_MAX_LEN + 1).is_err());
    }

    #[test]
    fn signatures() {
        let kp = SigningKeyPair::generate();
        let sig = kp.sign(b"msg");
        assert!(kp.public().verify(b"msg", &sig));
        assert!(!kp.public().verify(b"msh", &sig));
        assert!(!SigningKeyPair::generate().public().verify(b"msg", &sig));
        assert!(!kp.public().verify(b"msg", &sig[..63]));
        let mut flipped = sig.clone();
        flipped[10] ^= 0x80;
        assert!(!kp.public().verify(b"msg", &flipped));
        assert_eq!(kp.fingerprint(), Fingerprint::of(&kp.public()));
        assert_eq!(PublicKey::from_bytes(&[1u8; 31]), Err(Error::InvalidKey));
    }

    #[test]
    fn deterministic_keypair() {
        let seed = key(42);
        let a = SigningKeyPair::from_seed(&seed).unwrap();
        let b = SigningKeyPair::from_seed(&seed).unwrap();
        assert_eq!(a.public(), b.public());
        assert!(SigningKeyPair::from_seed(&SecretBytes::new(vec![1; 16]).unwrap()).is_err());
    }

    #[test]
    fn secret_debug_is_redacted() {
        let s = SecretBytes::new(b"hunter2hunter2".to_vec()).unwrap();
        let dbg = format!("{s:?}");
        assert!(!dbg.contains("hunter2"));
        assert!(SecretBytes::new(vec![]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn xor_involution_and_commutative(pair in (1usize..128).prop_flat_map(|n| {
            (proptest::collection::vec(any::<u8>(), n), proptest::collection::vec(any::<u8>(), n))
        })) {
            let (a, b) = pair;
            let ab = xor_mask(&a, &b).unwrap();
            prop_assert_eq!(&ab, &xor_mask(&b, &a).unwrap());
            prop_assert_eq!(xor_mask(&ab, &b).unwrap(), a);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]
        #[test]
        fn primitives_are_pure(k in proptest::collection::vec(any::<u8>(), 1..64),
                               m in proptest::collection::vec(any::<u8>(), 0..64),
                               n in 1usize..300) {
            let k = SecretBytes::new(k).unwrap();
            prop_assert_eq!(prg(&k, &m, n).unwrap(), prg(&k, &m, n).unwrap());
            prop_assert_eq!(mac(&k, &m), mac(&k, &m));
            prop_assert_eq!(kdf(&k, "l").unwrap(), kdf(&k, "l").unwrap());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1_000))]
        #[test]
        fn aead_round_trip_and_corruption(p in proptest::collection::vec(any::<u8>(), 0..2048),
                                          ad in proptest::collection::vec(any::<u8>(), 0..32),
                                          idx in any::<prop::sample::Index>(),
                                          bit in 0u8..8) {
            let k = SecretBytes::random(32).unwrap();
            let ct = aead_encrypt(&k, &p, &ad).unwrap();
            prop_assert_eq!(aead_decrypt(&k, &ct, &ad).unwrap(), p);
            let mut bad = ct.clone();
            let i = idx.index(bad.len());
            bad[i] ^= 1 << bit;
            prop_assert_eq!(aead_decrypt(&k, &bad, &ad), Err(Error::AuthenticationFailure));
        }
    }

    #[test]
    fn aead_round_trip_at_size_limit() {
        let k = SecretBytes::random(32).unwrap();
        let p = random_bytes(4096).unwrap().repeat(16);
        assert_eq!(p.len(), AEAD_MAX_PLAINTEXT);
        let ct = aead_encrypt(&k, &p, b"").unwrap();
        assert_eq!(aead_decrypt(&k, &ct, b"").unwrap(), p);
    }
}
