// Copyright 2026 The PASCO Authors
// SPDX-License-Identifier: Apache-2.0

//! User-device orchestration: setup, enrollment, the account portfolio,
//! and driving a backup device.

mod enroll;
mod profile;

pub use enroll::{decode_payload, encode_payload, Enrollment, MAX_PAYLOAD_LEN};
pub use profile::{DeviceProfile, ProfileLock, ProfileStore};

use std::collections::BTreeSet;
use std::sync::Arc;

use crate::account::{canonicalize_url, AccountData, AccountId};
use crate::clock::SharedClock;
use crate::crypto::{Fingerprint, SecretBytes, SigningKeyPair, PRG_MAX_LEN};
use crate::device::{CardClient, DevicePort, SlotRole};
use crate::error::{Error, Result};
use crate::multi::{sss_auth_key, MirrorSet, Outbox, ReconcileReport, WriteOutcome};
use crate::password::{derive_password, password_for, Password, PasswordPolicy, Salt};
use crate::secret::PalpasSecret;
use crate::sss::wire::{
    Ack, CreateAccountBody, CreateAccountReply, IssueTokenBody, KeyInfo, KeyList, RegisterKeyBody, RegisterKeyReply,
    TokenReply,
};
use crate::sss::{AclPolicy, Method, Role};
use crate::transport::{self, Endpoint, Proxy, Transport};

fn auth_key(root: &SecretBytes, endpoint: &Endpoint) -> Result<SigningKeyPair> {
    sss_auth_key(root, &endpoint.url)
}

fn signed_call<B, T>(
    transport: &dyn Transport,
    clock: &SharedClock,
    endpoint: &Endpoint,
    key: &SigningKeyPair,
    method: Method,
    path: &str,
    body: Option<&B>,
) -> Result<T>
where
    B: serde::Serialize + ?Sized,
    T: serde::de::DeserializeOwned,
{
    transport::call(
        |req| transport.send(&endpoint.url, req),
        key,
        &**clock,
        &endpoint.pinned_key,
        method,
        path,
        body,
    )
}

/// Registers this device's per-service key at every endpoint using the
/// matching token.
fn register_everywhere(
    transport: &dyn Transport,
    clock: &SharedClock,
    endpoints: &[Endpoint],
    auth_root: &SecretBytes,
    tokens: &[(String, Vec<u8>)],
) -> Result<()> {
    for endpoint in endpoints {
        let token = tokens
            .iter()
            .find(|(u, _)| *u == endpoint.url)
            .map(|(_, t)| t.clone())
            .ok_or_else(|| Error::Transport(format!("no token obtained for {}", endpoint.url)))?;
        let key = auth_key(auth_root, endpoint)?;
        let body = RegisterKeyBody {
            token,
            public_key: key.public().0.to_vec(),
            otp: None,
        };
        let _: RegisterKeyReply = signed_call(transport, clock, endpoint, &key, Method::Post, "/v1/keys", Some(&body))?;
    }
    Ok(())
}

/// Creates the secret and an account at every service.
pub fn first_time_setup(
    endpoints: Vec<Endpoint>,
    transport: &dyn Transport,
    clock: &SharedClock,
) -> Result<DeviceProfile> {
    if endpoints.is_empty() {
        return Err(Error::invalid("at least one service is required"));
    }
    let profile = DeviceProfile {
        secret: PalpasSecret::generate()?,
        auth_root: SecretBytes::random(32)?,
        endpoints,
    };
    for endpoint in &profile.endpoints {
        let key = auth_key(&profile.auth_root, endpoint)?;
        let body = CreateAccountBody {
            public_key: key.public().0.to_vec(),
        };
        let reply: CreateAccountReply =
            signed_call(transport, clock, endpoint, &key, Method::Post, "/v1/accounts", Some(&body))?;
        log::info!("created account {} at {}", reply.account_id, endpoint.url);
    }
    Ok(profile)
}

/// Builds a profile for a new device from an enrollment payload.
///
/// `endpoints` comes from local configuration and supplies the pinned
/// service keys; every service named in the payload must appear there.
pub fn enroll_new_device(
    payload: &str,
    endpoints: &[Endpoint],
    transport: &dyn Transport,
    clock: &SharedClock,
) -> Result<DeviceProfile> {
    let enrollment = decode_payload(payload)?;
    let endpoints = enrollment
        .tokens
        .iter()
        .map(|(url, _)| {
            endpoints
                .iter()
                .find(|e| &e.url == url)
                .cloned()
                .ok_or_else(|| Error::invalid(format!("{url} is not a configured service")))
        })
        .collect::<Result<Vec<_>>>()?;
    let auth_root = SecretBytes::random(32)?;
    register_everywhere(transport, clock, &endpoints, &auth_root, &enrollment.tokens)?;
    Ok(DeviceProfile {
        secret: enrollment.secret,
        auth_root,
        endpoints,
    })
}

/// Recovers the secret from a backup device and registers this device.
pub fn restore_from_backup(
    port: &dyn DevicePort,
    pin: &str,
    endpoints: &[Endpoint],
    transport: &dyn Transport,
    clock: &SharedClock,
) -> Result<DeviceProfile> {
    let card = CardClient::new(port);
    if card.verify_pin(pin)? != SlotRole::Restore {
        let _ = card.logout();
        return Err(Error::Forbidden("this PIN unlocks an emergency slot".into()));
    }
    let out = card.restore(&mut Proxy(transport));
    let _ = card.logout();
    let out = out?;
    let auth_root = SecretBytes::random(32)?;
    let endpoints: Vec<Endpoint> = out
        .tokens
        .iter()
        .filter_map(|(url, _)| endpoints.iter().find(|e| &e.url == url).cloned())
        .collect();
    if endpoints.len() != out.tokens.len() {
        return Err(Error::invalid("backup device names a service missing from the configuration"));
    }
    register_everywhere(transport, clock, &endpoints, &auth_root, &out.tokens)?;
    Ok(DeviceProfile {
        secret: out.secret,
        auth_root,
        endpoints,
    })
}

/// Emergency access with an emergency-slot PIN. The device produces the
/// random value; the policy mapping happens here.
pub fn emergency_password(
    port: &dyn DevicePort,
    pin: &str,
    account_url: &str,
    transport: &dyn Transport,
) -> Result<(String, Password)> {
    let card = CardClient::new(port);
    let result = (|| {
        if card.verify_pin(pin)? != SlotRole::Emergency {
            return Err(Error::Forbidden("this PIN does not unlock an emergency slot".into()));
        }
        let mut link = Proxy(transport);
        let first = card.emergency(account_url, 0, &mut link)?;
        let policy = first.policy.clone();
        let mut n = policy.random_len();
        let mut random = first.random;
        loop {
            match derive_password(&random, &policy) {
                Err(Error::EntropyExhausted) if n < PRG_MAX_LEN => {
                    n = (n * 2).min(PRG_MAX_LEN);
                    random = card.emergency(account_url, n, &mut link)?.random;
                }
                other => return Ok((first.username.clone(), other?)),
            }
        }
    })();
    let _ = card.logout();
    result
}

/// An enrolled user device.
pub struct Client {
    profile: DeviceProfile,
    mirror: MirrorSet,
    outbox: Outbox,
}

impl Client {
    pub fn new(profile: DeviceProfile, transport: Arc<dyn Transport>, clock: SharedClock, outbox: Outbox) -> Result<Self> {
        let mirror = MirrorSet::new(profile.endpoints.clone(), transport, clock)?;
        Ok(Client {
            profile,
            mirror,
            outbox,
        })
    }

    pub fn profile(&self) -> &DeviceProfile {
        &self.profile
    }

    pub fn outbox(&self) -> &Outbox {
        &self.outbox
    }

    pub fn mirror(&self) -> &MirrorSet {
        &self.mirror
    }

    fn k_data(&self) -> &SecretBytes {
        &self.profile.secret.k_data
    }

    fn call<B, T>(&self, endpoint: &Endpoint, method: Method, path: &str, body: Option<&B>) -> Result<T>
    where
        B: serde::Serialize + ?Sized,
        T: serde::de::DeserializeOwned,
    {
        let key = auth_key(&self.profile.auth_root, endpoint)?;
        self.mirror.call(endpoint, &key, method, path, body)
    }

    /// Fresh user-device tokens, one per service, wrapped for transfer.
    pub fn export_enrollment(&self) -> Result<String> {
        let tokens = self.request_tokens(Role::UserDevice, &[])?;
        encode_payload(&self.profile.secret, &tokens)
    }

    fn request_tokens(&self, role: Role, acl_urls: &[String]) -> Result<Vec<(String, Vec<u8>)>> {
        self.profile
            .endpoints
            .iter()
            .map(|endpoint| {
                let acl = match role {
                    Role::BackupEmergency => Some(AclPolicy::list(
                        acl_urls
                            .iter()
                            .map(|u| self.mirror.record_id(self.k_data(), endpoint, u))
                            .collect::<Result<BTreeSet<AccountId>>>()?,
                    )),
                    _ => None,
                };
                let reply: TokenReply =
                    self.call(endpoint, Method::Post, "/v1/tokens", Some(&IssueTokenBody { role, acl }))?;
                Ok((endpoint.url.clone(), reply.token))
            })
            .collect()
    }

    /// Adds an account with a fresh salt. Returns its identifier at the
    /// first service.
    pub fn add_account(
        &mut self,
        url: &str,
        username: &str,
        policy: PasswordPolicy,
    ) -> Result<(AccountId, WriteOutcome)> {
        match self.mirror.get(self.k_data(), &self.profile.auth_root, url, &self.outbox) {
            Ok(_) => return Err(Error::Conflict(format!("{} already exists", canonicalize_url(url)?))),
            Err(Error::NotFound(_)) => {}
            Err(e) => return Err(e),
        }
        let data = AccountData::new(Salt::random(), policy, username, url)?;
        let outcome = self
            .mirror
            .put(&self.profile.secret.k_data, &self.profile.auth_root, &data, &mut self.outbox)?;
        let id = self.mirror.record_id(self.k_data(), &self.profile.endpoints[0], url)?;
        Ok((id, outcome))
    }

    pub fn account(&self, url: &str) -> Result<AccountData> {
        self.mirror.get(self.k_data(), &self.profile.auth_root, url, &self.outbox)
    }

    pub fn get_password(&self, url: &str) -> Result<(String, Password)> {
        let data = self.account(url)?;
        let password = password_for(&self.profile.secret.seed, &data.salt, &data.policy)?;
        Ok((data.username.clone(), password))
    }

    /// Resamples the salt, which rotates the password.
    pub fn change_password(&mut self, url: &str) -> Result<(Password, WriteOutcome)> {
        let old = self.account(url)?;
        let data = AccountData::new(Salt::random(), old.policy.clone(), &old.username, old.url())?;
        let outcome = self
            .mirror
            .put(&self.profile.secret.k_data, &self.profile.auth_root, &data, &mut self.outbox)?;
        let password = password_for(&self.profile.secret.seed, &data.salt, &data.policy)?;
        Ok((password, outcome))
    }

    pub fn remove_account(&mut self, url: &str) -> Result<WriteOutcome> {
        self.mirror
            .delete(&self.profile.secret.k_data, &self.profile.auth_root, url, &mut self.outbox)
    }

    pub fn list_accounts(&self) -> Result<Vec<AccountData>> {
        let mut all = self.mirror.list(self.k_data(), &self.profile.auth_root, &self.outbox)?;
        all.sort_by(|a, b| a.url().cmp(b.url()));
        Ok(all)
    }

    pub fn reconcile(&mut self) -> Result<ReconcileReport> {
        self.mirror.reconcile(&self.profile.auth_root, &mut self.outbox)
    }

    fn keys_at(&self, endpoint: &Endpoint) -> Result<Vec<KeyInfo>> {
        let list: KeyList = self.call::<(), _>(endpoint, Method::Get, "/v1/keys", None)?;
        Ok(list.keys)
    }

    /// Keys registered at each service.
    pub fn list_keys(&self) -> Result<Vec<(String, KeyInfo)>> {
        let mut out = Vec::new();
        for endpoint in &self.profile.endpoints {
            out.extend(self.keys_at(endpoint)?.into_iter().map(|k| (endpoint.url.clone(), k)));
        }
        Ok(out)
    }

    fn backup_keys(&self) -> Result<BTreeSet<(String, Fingerprint)>> {
        Ok(self
            .list_keys()?
            .into_iter()
            .filter(|(_, k)| k.role != Role::UserDevice)
            .map(|(u, k)| (u, k.fingerprint))
            .collect())
    }

    /// Best effort: revokes backup keys absent from `before` at every
    /// service that still answers.
    fn revoke_orphans(&self, before: &BTreeSet<(String, Fingerprint)>) {
        for endpoint in &self.profile.endpoints {
            let Ok(keys) = self.keys_at(endpoint) else { continue };
            for key in keys.iter().filter(|k| k.role != Role::UserDevice) {
                if !before.contains(&(endpoint.url.clone(), key.fingerprint)) {
                    log::warn!("revoking orphaned backup key {} at {}", key.fingerprint, endpoint.url);
                    let _ = self.revoke_at(&endpoint.url, &key.fingerprint);
                }
            }
        }
    }

    /// Provisions a slot on the backup device behind `port`.
    ///
    /// `acl_urls` lists the accounts an emergency slot may read. If the
    /// device fails part way, keys it managed to register are revoked.
    pub fn create_backup(
        &self,
        port: &dyn DevicePort,
        pin: &str,
        role: SlotRole,
        acl_urls: &[String],
    ) -> Result<Vec<Fingerprint>> {
        let sss_role = match role {
            SlotRole::Restore => Role::BackupRestore,
            SlotRole::Emergency => Role::BackupEmergency,
        };
        let before = self.backup_keys()?;
        let tokens = self.request_tokens(sss_role, acl_urls)?;
        let enrollments: Vec<_> = self
            .profile
            .endpoints
            .iter()
            .zip(tokens)
            .map(|(endpoint, (_, token))| crate::device::Enrollment {
                endpoint: endpoint.clone(),
                token,
            })
            .collect();
        let transport = self.mirror.transport().as_ref();
        let result = CardClient::new(port).provision(
            &self.profile.secret,
            pin,
            role,
            &enrollments,
            &mut Proxy(transport),
        );
        if result.is_err() {
            self.revoke_orphans(&before);
        }
        result
    }

    fn endpoint(&self, url: &str) -> Result<&Endpoint> {
        self.profile
            .endpoints
            .iter()
            .find(|e| e.url == url)
            .ok_or_else(|| Error::NotFound(format!("{url} is not configured")))
    }

    fn revoke_at(&self, url: &str, fp: &Fingerprint) -> Result<()> {
        let _: Ack = self.call::<(), _>(self.endpoint(url)?, Method::Delete, &format!("/v1/keys/{}", fp.to_hex()), None)?;
        Ok(())
    }

    /// Revokes `fp` at whichever services know it.
    pub fn revoke_backup(&self, fp: &Fingerprint) -> Result<()> {
        let mut found = false;
        for endpoint in &self.profile.endpoints {
            match self.revoke_at(&endpoint.url, fp) {
                Ok(()) => found = true,
                Err(Error::NotFound(_)) => {}
                Err(e) => return Err(e),
            }
        }
        if found {
            Ok(())
        } else {
            Err(Error::NotFound(format!("no key {fp}")))
        }
    }

    /// Replaces the ACL of `fp` with the accounts at `urls`.
    pub fn set_acl(&self, fp: &Fingerprint, urls: &[String]) -> Result<()> {
        let keys = self.list_keys()?;
        let mut found = false;
        for (url, info) in keys.iter().filter(|(_, k)| &k.fingerprint == fp) {
            let endpoint = self.endpoint(url)?;
            let ids = urls
                .iter()
                .map(|u| self.mirror.record_id(self.k_data(), endpoint, u))
                .collect::<Result<BTreeSet<_>>>()?;
            let acl = match info.role {
                Role::UserDevice => AclPolicy::full(),
                _ => AclPolicy::list(ids),
            };
            let _: Ack = self.call(endpoint, Method::Put, &format!("/v1/keys/{}/acl", fp.to_hex()), Some(&acl))?;
            found = true;
        }
        if found {
            Ok(())
        } else {
            Err(Error::NotFound(format!("no key {fp}")))
        }
    }
}
