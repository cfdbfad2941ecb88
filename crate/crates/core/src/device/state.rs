// Copyright 2026 The PASCO Authors
// SPDX-License-Identifier: Apache-2.0

//! Persistent device memory and its encrypted file image.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use pbkdf2::pbkdf2_hmac;
use serde::{Deserialize, Serialize};
use sha2::Sha256;
use zeroize::{Zeroize, Zeroizing};

use crate::crypto::{self, PublicKey, SecretBytes};
use crate::error::{Error, Result};
use crate::multi::MASK_LEN;
use crate::secret::{PalpasSecret, SECRET_LEN};
use crate::transport::Endpoint;

pub const MAGIC: &[u8; 8] = b"PASCOBD1";
pub const MAX_RETRIES: u8 = 5;
pub const PIN_SALT_LEN: usize = 16;
const FORMAT_VERSION: u8 = 1;
const AUTH_ROOT_LEN: usize = 32;
const MAX_SLOTS: usize = 64;
const MAX_ENDPOINTS: usize = 64;
const MAX_URL_LEN: usize = 2048;
const CHECK_LABEL: &[u8] = b"pasco/bd-secret-check";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Blank,
    Provisioned,
    Wiped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlotRole {
    Restore,
    Emergency,
}

/// One PIN together with the authentication root it unlocks.
#[derive(Clone)]
pub struct PinSlot {
    pub role: SlotRole,
    salt: [u8; PIN_SALT_LEN],
    iterations: u32,
    verifier: [u8; 32],
    auth_root: SecretBytes,
}

impl PinSlot {
    pub(crate) fn new(pin: &str, role: SlotRole, iterations: u32) -> Result<Self> {
        let salt: [u8; PIN_SALT_LEN] = crypto::random_bytes(PIN_SALT_LEN)?.try_into().expect("length");
        Ok(PinSlot {
            role,
            salt,
            iterations,
            verifier: pin_hash(pin, &salt, iterations),
            auth_root: SecretBytes::random(AUTH_ROOT_LEN)?,
        })
    }

    pub fn matches(&self, pin: &str) -> bool {
        let candidate = Zeroizing::new(pin_hash(pin, &self.salt, self.iterations));
        crypto::ct_eq(&*candidate, &self.verifier)
    }

    pub fn auth_root(&self) -> &SecretBytes {
        &self.auth_root
    }
}

impl Drop for PinSlot {
    fn drop(&mut self) {
        self.salt.zeroize();
        self.verifier.zeroize();
    }
}

fn pin_hash(pin: &str, salt: &[u8], iterations: u32) -> [u8; 32] {
    let mut out = [0u8; 32];
    pbkdf2_hmac::<Sha256>(pin.as_bytes(), salt, iterations.max(1), &mut out);
    out
}

/// Commitment to the unmasked secret, used to check that a later slot is
/// provisioned with the same secret and that an unmasked pad is genuine.
pub(crate) fn secret_check(secret: &PalpasSecret) -> [u8; 32] {
    let bytes = secret.to_bytes();
    let mut input = Zeroizing::new(Vec::with_capacity(CHECK_LABEL.len() + SECRET_LEN));
    input.extend_from_slice(CHECK_LABEL);
    input.extend_from_slice(bytes.expose());
    crypto::sha256(&input)
}

/// Everything the device keeps across power cycles.
#[derive(Clone)]
pub struct BdState {
    pub(crate) status: Status,
    pub(crate) retries_left: u8,
    pub(crate) s_bd: Option<SecretBytes>,
    pub(crate) mask: Option<SecretBytes>,
    pub(crate) check: Option<[u8; 32]>,
    pub(crate) endpoints: Vec<Endpoint>,
    pub(crate) slots: Vec<PinSlot>,
}

impl Default for BdState {
    fn default() -> Self {
        BdState {
            status: Status::Blank,
            retries_left: MAX_RETRIES,
            s_bd: None,
            mask: None,
            check: None,
            endpoints: Vec::new(),
            slots: Vec::new(),
        }
    }
}

impl BdState {
    pub fn status(&self) -> Status {
        self.status
    }

    pub fn retries_left(&self) -> u8 {
        self.retries_left
    }

    /// The masked secret `S XOR OTP`.
    pub fn s_bd(&self) -> Option<&SecretBytes> {
        self.s_bd.as_ref()
    }

    pub fn mask(&self) -> Option<&SecretBytes> {
        self.mask.as_ref()
    }

    pub fn check(&self) -> Option<&[u8; 32]> {
        self.check.as_ref()
    }

    pub fn endpoints(&self) -> &[Endpoint] {
        &self.endpoints
    }

    pub fn slots(&self) -> &[PinSlot] {
        &self.slots
    }

    /// Erases every secret and moves to the terminal state.
    pub fn wipe(&mut self) {
        *self = BdState {
            status: Status::Wiped,
            retries_left: 0,
            ..BdState::default()
        };
    }

    pub fn encode(&self) -> Zeroizing<Vec<u8>> {
        let mut out = Zeroizing::new(Vec::new());
        out.push(FORMAT_VERSION);
        out.push(match self.status {
            Status::Blank => 0,
            Status::Provisioned => 1,
            Status::Wiped => 2,
        });
        out.push(self.retries_left);
        put_opt(&mut out, self.s_bd.as_ref().map(|s| s.expose()));
        put_opt(&mut out, self.mask.as_ref().map(|s| s.expose()));
        put_opt(&mut out, self.check.as_ref().map(|c| &c[..]));
        out.extend_from_slice(&(self.endpoints.len() as u16).to_be_bytes());
        for e in &self.endpoints {
            put_opt(&mut out, Some(e.url.as_bytes()));
            out.extend_from_slice(&e.pinned_key.0);
        }
        out.extend_from_slice(&(self.slots.len() as u16).to_be_bytes());
        for s in &self.slots {
            out.push(match s.role {
                SlotRole::Restore => 0,
                SlotRole::Emergency => 1,
            });
            out.extend_from_slice(&s.salt);
            out.extend_from_slice(&s.iterations.to_be_bytes());
            out.extend_from_slice(&s.verifier);
            put_opt(&mut out, Some(s.auth_root.expose()));
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<BdState> {
        let mut r = Reader(bytes);
        if r.u8()? != FORMAT_VERSION {
            return Err(corrupt("unsupported state version"));
        }
        let status = match r.u8()? {
            0 => Status::Blank,
            1 => Status::Provisioned,
            2 => Status::Wiped,
            _ => return Err(corrupt("bad status")),
        };
        let retries_left = r.u8()?;
        if retries_left > MAX_RETRIES {
            return Err(corrupt("retry counter out of range"));
        }
        let s_bd = r.opt_secret(SECRET_LEN)?;
        let mask = r.opt_secret(MASK_LEN)?;
        let check = r.opt(32)?.map(|c| <[u8; 32]>::try_from(c).expect("length"));
        let n = r.u16()? as usize;
        if n > MAX_ENDPOINTS {
            return Err(corrupt("too many endpoints"));
        }
        let mut endpoints = Vec::with_capacity(n);
        for _ in 0..n {
            let url = r.opt_var(MAX_URL_LEN)?.ok_or_else(|| corrupt("missing url"))?;
            let url = std::str::from_utf8(url).map_err(|_| corrupt("url not utf-8"))?;
            let key = PublicKey::from_bytes(r.take(32)?).map_err(|_| corrupt("bad pinned key"))?;
            endpoints.push(Endpoint::new(url, key).map_err(|_| corrupt("bad url"))?);
        }
        let n = r.u16()? as usize;
        if n > MAX_SLOTS {
            return Err(corrupt("too many slots"));
        }
        let mut slots = Vec::with_capacity(n);
        for _ in 0..n {
            let role = match r.u8()? {
                0 => SlotRole::Restore,
                1 => SlotRole::Emergency,
                _ => return Err(corrupt("bad slot role")),
            };
            let salt = r.take(PIN_SALT_LEN)?.try_into().expect("length");
            let iterations = u32::from_be_bytes(r.take(4)?.try_into().expect("length"));
            let verifier = r.take(32)?.try_into().expect("length");
            let auth_root = r
                .opt_secret(AUTH_ROOT_LEN)?
                .ok_or_else(|| corrupt("missing auth root"))?;
            slots.push(PinSlot {
                role,
                salt,
                iterations,
                verifier,
                auth_root,
            });
        }
        if !r.0.is_empty() {
            return Err(corrupt("trailing bytes"));
        }
        let state = BdState {
            status,
            retries_left,
            s_bd,
            mask,
            check,
            endpoints,
            slots,
        };
        state.check_consistency()?;
        Ok(state)
    }

    fn check_consistency(&self) -> Result<()> {
        let full = self.s_bd.is_some()
            && self.mask.is_some()
            && self.check.is_some()
            && !self.slots.is_empty()
            && !self.endpoints.is_empty();
        let empty = self.s_bd.is_none()
            && self.mask.is_none()
            && self.check.is_none()
            && self.slots.is_empty()
            && self.endpoints.is_empty();
        let ok = match self.status {
            Status::Provisioned => full,
            Status::Blank => empty,
            Status::Wiped => empty && self.retries_left == 0,
        };
        if ok {
            Ok(())
        } else {
            Err(corrupt("fields inconsistent with status"))
        }
    }
}

fn corrupt(msg: &str) -> Error {
    Error::Integrity(format!("device state: {msg}"))
}

fn put_opt(out: &mut Vec<u8>, v: Option<&[u8]>) {
    match v {
        Some(v) => {
            out.extend_from_slice(&(v.len() as u32).to_be_bytes());
            out.extend_from_slice(v);
        }
        None => out.extend_from_slice(&0u32.to_be_bytes()),
    }
}

struct Reader<'a>(&'a [u8]);

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.0.len() < n {
            return Err(corrupt("truncated"));
        }
        let (head, tail) = self.0.split_at(n);
        self.0 = tail;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().expect("length")))
    }

    fn opt_var(&mut self, max: usize) -> Result<Option<&'a [u8]>> {
        let len = u32::from_be_bytes(self.take(4)?.try_into().expect("length")) as usize;
        if len > max {
            return Err(corrupt("field too long"));
        }
        Ok(if len == 0 { None } else { Some(self.take(len)?) })
    }

    fn opt(&mut self, exact: usize) -> Result<Option<&'a [u8]>> {
        match self.opt_var(exact)? {
            Some(v) if v.len() != exact => Err(corrupt("field has wrong length")),
            other => Ok(other),
        }
    }

    fn opt_secret(&mut self, exact: usize) -> Result<Option<SecretBytes>> {
        self.opt(exact)?.map(SecretBytes::from_slice).transpose()
    }
}

/// The encrypted file standing in for the device's secure memory.
///
/// Layout: `MAGIC || aead(storage_key, encoded state, ad = MAGIC)`.
#[derive(Clone)]
pub struct StateFile {
    path: PathBuf,
    key: SecretBytes,
}

impl StateFile {
    pub fn new(path: impl Into<PathBuf>, key: SecretBytes) -> Self {
        StateFile { path: path.into(), key }
    }

    /// Uses the storage key at `key_path`, creating it if absent.
    pub fn with_key_file(path: impl Into<PathBuf>, key_path: &Path) -> Result<Self> {
        Ok(StateFile::new(path, load_or_create_key(key_path)?))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn load(&self) -> Result<Option<BdState>> {
        let raw = match fs::read(&self.path) {
            Ok(raw) => raw,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(Error::Storage(e.to_string())),
        };
        let body = raw
            .strip_prefix(MAGIC.as_slice())
            .ok_or_else(|| corrupt("bad magic"))?;
        let plain = Zeroizing::new(crypto::aead_decrypt(&self.key, body, MAGIC)?);
        BdState::decode(&plain).map(Some)
    }

    pub fn save(&self, state: &BdState) -> Result<()> {
        let mut out = MAGIC.to_vec();
        out.extend(crypto::aead_encrypt(&self.key, &state.encode(), MAGIC)?);
        write_atomic(&self.path, &out)
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let io = |e: std::io::Error| Error::Storage(format!("{}: {e}", path.display()));
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

/// Reads a 32-octet key file, or creates one readable only by the owner.
pub fn load_or_create_key(path: &Path) -> Result<SecretBytes> {
    match fs::read(path) {
        Ok(bytes) => {
            let key = SecretBytes::new(bytes)?;
            if key.len() != 32 {
                return Err(Error::Storage(format!("{} is not a 32-octet key", path.display())));
            }
            Ok(key)
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            let key = SecretBytes::random(32)?;
            write_atomic(path, key.expose())?;
            #[cfg(unix)]
            {
                use std::os::unix::fs::PermissionsExt;
                fs::set_permissions(path, fs::Permissions::from_mode(0o600))
                    .map_err(|e| Error::Storage(e.to_string()))?;
            }
            Ok(key)
        }
        Err(e) => Err(Error::Storage(e.to_string())),
    }
}
