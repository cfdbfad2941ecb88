// Copyright 2026 The PASCO Authors
// SPDX-License-Identifier: Apache-2.0

//! The device profile and its encrypted file.

use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use zeroize::Zeroizing;

use crate::account::b64;
use crate::crypto::{self, PublicKey, SecretBytes};
use crate::device::{load_or_create_key, write_atomic_file};
use crate::error::{Error, Result};
use crate::secret::PalpasSecret;
use crate::transport::Endpoint;

const PROFILE_AD: &[u8] = b"pasco-profile-v1";

/// Everything a user device needs: the shared secret, this device's
/// authentication root, and the services it talks to.
#[derive(Clone)]
pub struct DeviceProfile {
    pub secret: PalpasSecret,
    /// Per-service authentication keys are derived from this.
    pub auth_root: SecretBytes,
    pub endpoints: Vec<Endpoint>,
}

impl fmt::Debug for DeviceProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DeviceProfile")
            .field("endpoints", &self.endpoints)
            .finish_non_exhaustive()
    }
}

#[derive(Serialize, Deserialize)]
struct StoredEndpoint {
    url: String,
    #[serde(with = "b64")]
    pinned_key: Vec<u8>,
}

#[derive(Serialize, Deserialize)]
struct StoredProfile {
    v: u32,
    #[serde(with = "b64")]
    seed: Vec<u8>,
    #[serde(with = "b64")]
    k_data: Vec<u8>,
    #[serde(with = "b64")]
    auth_root: Vec<u8>,
    endpoints: Vec<StoredEndpoint>,
}

impl Drop for StoredProfile {
    fn drop(&mut self) {
        zeroize::Zeroize::zeroize(&mut self.seed);
        zeroize::Zeroize::zeroize(&mut self.k_data);
        zeroize::Zeroize::zeroize(&mut self.auth_root);
    }
}

impl DeviceProfile {
    fn to_stored(&self) -> StoredProfile {
        StoredProfile {
            v: 1,
            seed: self.secret.seed.expose().to_vec(),
            k_data: self.secret.k_data.expose().to_vec(),
            auth_root: self.auth_root.expose().to_vec(),
            endpoints: self
                .endpoints
                .iter()
                .map(|e| StoredEndpoint {
                    url: e.url.clone(),
                    pinned_key: e.pinned_key.0.to_vec(),
                })
                .collect(),
        }
    }

    fn from_stored(s: &StoredProfile) -> Result<Self> {
        if s.v != 1 {
            return Err(Error::Storage(format!("unsupported profile version {}", s.v)));
        }
        let mut both = Zeroizing::new(s.seed.clone());
        both.extend_from_slice(&s.k_data);
        Ok(DeviceProfile {
            secret: PalpasSecret::from_bytes(&both)?,
            auth_root: SecretBytes::from_slice(&s.auth_root)?,
            endpoints: s
                .endpoints
                .iter()
                .map(|e| Endpoint::new(&e.url, PublicKey::from_bytes(&e.pinned_key)?))
                .collect::<Result<_>>()?,
        })
    }
}

/// Profile file encrypted under a machine-local key file.
///
/// Mutating commands hold [`ProfileStore::lock`] for their whole run.
#[derive(Debug, Clone)]
pub struct ProfileStore {
    path: PathBuf,
    key_path: PathBuf,
}

/// Exclusive advisory lock on the profile; released on drop.
#[derive(Debug)]
pub struct ProfileLock(File);

impl Drop for ProfileLock {
    fn drop(&mut self) {
        let _ = self.0.unlock();
    }
}

impl ProfileStore {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        let path = path.into();
        let key_path = path.with_extension("key");
        ProfileStore { path, key_path }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn exists(&self) -> bool {
        self.path.exists()
    }

    fn ensure_dir(&self) -> Result<()> {
        if let Some(dir) = self.path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::Storage(e.to_string()))?;
        }
        Ok(())
    }

    /// Blocks until no other process holds the profile.
    pub fn lock(&self) -> Result<ProfileLock> {
        self.ensure_dir()?;
        let file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(self.path.with_extension("lock"))
            .map_err(|e| Error::Storage(e.to_string()))?;
        file.lock().map_err(|e| Error::Storage(e.to_string()))?;
        Ok(ProfileLock(file))
    }

    pub fn load(&self, _lock: &ProfileLock) -> Result<DeviceProfile> {
        let raw = match fs::read(&self.path) {
            Ok(raw) => raw,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(Error::NotFound(format!("no profile at {}", self.path.display())))
            }
            Err(e) => return Err(Error::Storage(e.to_string())),
        };
        let key = load_or_create_key(&self.key_path)?;
        let plain = Zeroizing::new(
            crypto::aead_decrypt(&key, &raw, PROFILE_AD)
                .map_err(|_| Error::Storage("profile cannot be decrypted with this key file".into()))?,
        );
        let stored: StoredProfile =
            serde_json::from_slice(&plain).map_err(|e| Error::Storage(format!("corrupt profile: {e}")))?;
        DeviceProfile::from_stored(&stored)
    }

    pub fn save(&self, _lock: &ProfileLock, profile: &DeviceProfile) -> Result<()> {
        self.ensure_dir()?;
        let key = load_or_create_key(&self.key_path)?;
        let plain = Zeroizing::new(serde_json::to_vec(&profile.to_stored()).expect("serializable"));
        let sealed = crypto::aead_encrypt(&key, &plain, PROFILE_AD)?;
        write_atomic_file(&self.path, &sealed)?;
        #[cfg(unix)]
        {
            use std::os::unix::fs::PermissionsExt;
            fs::set_permissions(&self.path, fs::Permissions::from_mode(0o600))
                .map_err(|e| Error::Storage(e.to_string()))?;
        }
        Ok(())
    }

    /// Saves a new profile, refusing to replace an existing one.
    pub fn create(&self, lock: &ProfileLock, profile: &DeviceProfile) -> Result<()> {
        if self.exists() {
            return Err(Error::Conflict(format!("a profile already exists at {}", self.path.display())));
        }
        self.save(lock, profile)
    }

    /// Deletes the profile (not the key file).
    pub fn remove(&self, _lock: &ProfileLock) -> Result<()> {
        match fs::remove_file(&self.path) {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
            Err(e) => Err(Error::Storage(e.to_string())),
        }
    }
}
