// Copyright 2026 The PASCO Authors
// SPDX-License-Identifier: Apache-2.0

//! Software emulation of the tamper-resistant backup device.
//!
//! The device stores only the masked secret `S_BD = S XOR OTP`; the pad
//! lives at the synchronization services, so deleting it there makes the
//! device worthless. Network access goes through an [`SssLink`] supplied by
//! the host application, which forwards opaque request frames.

mod frame;
mod state;

pub use frame::{
    decode_frame, encode_frame, CardClient, Command, DevicePort, EmergencyReply, InfoReply, SharedCard, MAX_FRAME_LEN,
};
pub use state::{load_or_create_key, write_atomic as write_atomic_file, BdState, PinSlot, SlotRole, StateFile, Status, MAGIC, MAX_RETRIES};

use zeroize::Zeroizing;

use crate::account::{self, canonicalize_url, split_data_key, EncryptedRecord};
use crate::clock::SharedClock;
use crate::crypto::{self, Fingerprint, SecretBytes, PRG_MAX_LEN};
use crate::error::{Error, Result};
use crate::multi::{mask_otp, sss_auth_key, sss_data_key, MASK_LEN};
use crate::password::{generate_random, PasswordPolicy};
use crate::secret::{PalpasSecret, SECRET_LEN};
use crate::sss::wire::{IssueTokenBody, OtpReply, RegisterKeyBody, RegisterKeyReply, TokenReply};
use crate::sss::{Method, Request, Response, Role};
use crate::transport::{self, Endpoint};
use state::secret_check;

/// Carries device-originated request frames to a service and returns the
/// response frame.
pub trait SssLink {
    fn forward(&mut self, url: &str, frame: &[u8]) -> Result<Vec<u8>>;
}

#[derive(Debug, Clone, Copy)]
pub struct DeviceConfig {
    /// PBKDF2 iterations for new PIN verifiers.
    pub pin_iterations: u32,
}

impl Default for DeviceConfig {
    fn default() -> Self {
        DeviceConfig { pin_iterations: 20_000 }
    }
}

/// Where to register a new slot, and the token authorizing it.
#[derive(Debug, Clone)]
pub struct Enrollment {
    pub endpoint: Endpoint,
    pub token: Vec<u8>,
}

pub struct RestoreOutput {
    pub secret: PalpasSecret,
    /// User-device tokens, one per service that answered.
    pub tokens: Vec<(String, Vec<u8>)>,
}

/// What the device hands back for emergency access. The host maps the
/// random value onto the policy.
pub struct EmergencyOutput {
    pub username: String,
    pub policy: PasswordPolicy,
    pub random: Zeroizing<Vec<u8>>,
}

#[derive(Clone)]
pub struct BackupDevice {
    state: BdState,
    config: DeviceConfig,
    clock: SharedClock,
    session: Option<usize>,
    file: Option<StateFile>,
}

impl BackupDevice {
    pub fn new(config: DeviceConfig, clock: SharedClock) -> Self {
        BackupDevice {
            state: BdState::default(),
            config,
            clock,
            session: None,
            file: None,
        }
    }

    /// Loads the device from `file`, starting blank if it does not exist.
    pub fn open(file: StateFile, config: DeviceConfig, clock: SharedClock) -> Result<Self> {
        let state = file.load()?.unwrap_or_default();
        Ok(BackupDevice {
            state,
            config,
            clock,
            session: None,
            file: Some(file),
        })
    }

    pub fn state(&self) -> &BdState {
        &self.state
    }

    /// Role of the slot unlocked by the last successful PIN entry.
    pub fn session_role(&self) -> Option<SlotRole> {
        self.session.map(|i| self.state.slots[i].role)
    }

    fn persist(&self) -> Result<()> {
        match &self.file {
            Some(f) => f.save(&self.state),
            None => Ok(()),
        }
    }

    fn ensure_not_wiped(&self) -> Result<()> {
        if self.state.status == Status::Wiped {
            Err(Error::DeviceWiped)
        } else {
            Ok(())
        }
    }

    /// Adds a PIN slot. On a blank device this also samples the pad and
    /// stores the masked secret; later slots must present the same secret.
    ///
    /// Nothing is stored unless every service accepts the registration.
    /// Returns the fingerprints registered, one per endpoint.
    pub fn provision(
        &mut self,
        secret: &PalpasSecret,
        pin: &str,
        role: SlotRole,
        enrollments: &[Enrollment],
        link: &mut dyn SssLink,
    ) -> Result<Vec<Fingerprint>> {
        self.ensure_not_wiped()?;
        if !(4..=64).contains(&pin.chars().count()) {
            return Err(Error::invalid("PIN must have 4 to 64 characters"));
        }
        if enrollments.is_empty() {
            return Err(Error::invalid("at least one service is required"));
        }
        let endpoints: Vec<Endpoint> = enrollments.iter().map(|e| e.endpoint.clone()).collect();
        for (i, e) in endpoints.iter().enumerate() {
            if endpoints[..i].iter().any(|o| o.url == e.url) {
                return Err(Error::invalid("duplicate service endpoint"));
            }
        }
        let s = secret.to_bytes();
        let (otp, s_bd, mask, check) = match self.state.status {
            Status::Blank => {
                let otp = SecretBytes::random(SECRET_LEN)?;
                let s_bd = SecretBytes::new(crypto::xor_mask(s.expose(), otp.expose())?)?;
                (otp, s_bd, SecretBytes::random(MASK_LEN)?, secret_check(secret))
            }
            Status::Provisioned => {
                if self.state.slots.iter().any(|slot| slot.matches(pin)) {
                    return Err(Error::invalid("PIN already used by another slot"));
                }
                let check = *self.state.check.as_ref().expect("provisioned");
                if !crypto::ct_eq(&secret_check(secret), &check) {
                    return Err(Error::invalid("secret does not match the stored backup"));
                }
                let mut stored: Vec<&str> = self.state.endpoints.iter().map(|e| e.url.as_str()).collect();
                let mut given: Vec<&str> = endpoints.iter().map(|e| e.url.as_str()).collect();
                stored.sort_unstable();
                given.sort_unstable();
                if stored != given {
                    return Err(Error::invalid("a new slot must cover the same services"));
                }
                let s_bd = self.state.s_bd.clone().expect("provisioned");
                let otp = SecretBytes::new(crypto::xor_mask(s.expose(), s_bd.expose())?)?;
                (otp, s_bd, self.state.mask.clone().expect("provisioned"), check)
            }
            Status::Wiped => unreachable!(),
        };
        drop(s);

        let slot = PinSlot::new(pin, role, self.config.pin_iterations)?;
        let mut registered = Vec::with_capacity(enrollments.len());
        for e in enrollments {
            let url = &e.endpoint.url;
            let key = sss_auth_key(slot.auth_root(), url)?;
            let masked = mask_otp(&otp, &mask, url)?;
            let body = RegisterKeyBody {
                token: e.token.clone(),
                public_key: key.public().0.to_vec(),
                otp: Some(masked.expose().to_vec()),
            };
            let reply: RegisterKeyReply = transport::call(
                |req| forward(link, url, req),
                &key,
                &*self.clock,
                &e.endpoint.pinned_key,
                Method::Post,
                "/v1/keys",
                Some(&body),
            )
            .map_err(|err| Error::ProvisioningFailed(format!("{url}: {err}")))?;
            registered.push(reply.fingerprint);
        }

        if self.state.status == Status::Blank {
            self.state.s_bd = Some(s_bd);
            self.state.mask = Some(mask);
            self.state.check = Some(check);
            self.state.endpoints = endpoints;
            self.state.retries_left = MAX_RETRIES;
            self.state.status = Status::Provisioned;
        }
        self.state.slots.push(slot);
        self.persist()?;
        log::info!("device slot {} provisioned as {role:?}", self.state.slots.len() - 1);
        Ok(registered)
    }

    /// Checks `pin` against every slot. A mismatch costs one attempt from
    /// the shared counter; the last one wipes the device.
    pub fn verify_pin(&mut self, pin: &str) -> Result<SlotRole> {
        self.ensure_not_wiped()?;
        if self.state.status == Status::Blank {
            return Err(Error::DeviceState("device is not provisioned".into()));
        }
        // Every verifier is evaluated so timing does not reveal the slot.
        let hits: Vec<bool> = self.state.slots.iter().map(|s| s.matches(pin)).collect();
        match hits.iter().position(|&h| h) {
            Some(i) => {
                self.state.retries_left = MAX_RETRIES;
                self.session = Some(i);
                self.persist()?;
                Ok(self.state.slots[i].role)
            }
            None => {
                self.session = None;
                self.state.retries_left = self.state.retries_left.saturating_sub(1);
                if self.state.retries_left == 0 {
                    self.wipe()?;
                    return Err(Error::DeviceWiped);
                }
                self.persist()?;
                Err(Error::PinRejected {
                    remaining: self.state.retries_left,
                })
            }
        }
    }

    pub fn logout(&mut self) {
        self.session = None;
    }

    /// Erases every stored secret. Idempotent.
    pub fn wipe(&mut self) -> Result<()> {
        self.session = None;
        self.state.wipe();
        log::warn!("backup device wiped");
        self.persist()
    }

    fn session_slot(&self, role: SlotRole) -> Result<&PinSlot> {
        self.ensure_not_wiped()?;
        let i = self
            .session
            .ok_or_else(|| Error::DeviceState("PIN not verified".into()))?;
        let slot = &self.state.slots[i];
        if slot.role != role {
            return Err(Error::Forbidden(format!("{:?} slot cannot do this", slot.role)));
        }
        Ok(slot)
    }

    /// Fetches the pad from the first reachable service and recombines
    /// the secret.
    fn recover_secret(&self, slot: &PinSlot, endpoint: &Endpoint, link: &mut dyn SssLink) -> Result<PalpasSecret> {
        let url = &endpoint.url;
        let key = sss_auth_key(slot.auth_root(), url)?;
        let reply: OtpReply = transport::call::<(), _, _>(
            |req| forward(link, url, req),
            &key,
            &*self.clock,
            &endpoint.pinned_key,
            Method::Get,
            "/v1/otp",
            None,
        )?;
        let masked = SecretBytes::new(reply.otp)?;
        if masked.len() != SECRET_LEN {
            return Err(Error::Integrity(format!("pad has {} octets, expected {SECRET_LEN}", masked.len())));
        }
        let otp = mask_otp(&masked, self.state.mask.as_ref().expect("provisioned"), url)?;
        let s = Zeroizing::new(crypto::xor_mask(
            self.state.s_bd.as_ref().expect("provisioned").expose(),
            otp.expose(),
        )?);
        let secret = PalpasSecret::from_bytes(&s)?;
        if !crypto::ct_eq(&secret_check(&secret), self.state.check.as_ref().expect("provisioned")) {
            return Err(Error::Integrity("pad does not unmask the stored backup".into()));
        }
        Ok(secret)
    }

    /// Runs `op` against each service in order, moving on only when one is
    /// unreachable.
    fn first_healthy<T>(
        &self,
        link: &mut dyn SssLink,
        mut op: impl FnMut(&Endpoint, &mut dyn SssLink) -> Result<T>,
    ) -> Result<T> {
        let mut last = Error::Transport("no service configured".into());
        for endpoint in &self.state.endpoints {
            match op(endpoint, link) {
                Err(e @ Error::Transport(_)) => {
                    log::warn!("{}: {e}", endpoint.url);
                    last = e;
                }
                other => return other,
            }
        }
        Err(last)
    }

    /// Recovers the secret and obtains a user-device token from every
    /// reachable service. The stored state is left untouched.
    pub fn restore(&mut self, link: &mut dyn SssLink) -> Result<RestoreOutput> {
        let slot = self.session_slot(SlotRole::Restore)?;
        let secret = self.first_healthy(link, |ep, link| self.recover_secret(slot, ep, link))?;
        let mut tokens = Vec::new();
        for endpoint in &self.state.endpoints {
            let url = &endpoint.url;
            let key = sss_auth_key(slot.auth_root(), url)?;
            let body = IssueTokenBody {
                role: Role::UserDevice,
                acl: None,
            };
            let reply: Result<TokenReply> = transport::call(
                |req| forward(link, url, req),
                &key,
                &*self.clock,
                &endpoint.pinned_key,
                Method::Post,
                "/v1/tokens",
                Some(&body),
            );
            match reply {
                Ok(t) => tokens.push((url.clone(), t.token)),
                Err(Error::Transport(e)) => log::warn!("{url}: {e}"),
                Err(e) => return Err(e),
            }
        }
        Ok(RestoreOutput { secret, tokens })
    }

    /// Produces the random value for the account at `account_url`.
    /// `random_len` of zero means the policy's default length.
    pub fn emergency_random(
        &mut self,
        account_url: &str,
        random_len: usize,
        link: &mut dyn SssLink,
    ) -> Result<EmergencyOutput> {
        let slot = self.session_slot(SlotRole::Emergency)?;
        let account_url = canonicalize_url(account_url)?;
        if random_len > PRG_MAX_LEN {
            return Err(Error::invalid("random length too large"));
        }
        self.first_healthy(link, |endpoint, link| {
            let url = &endpoint.url;
            let secret = self.recover_secret(slot, endpoint, link)?;
            let k_sss = sss_data_key(&secret.k_data, url)?;
            let id = account::account_id(&split_data_key(&k_sss)?.mac, &account_url)?;
            let key = sss_auth_key(slot.auth_root(), url)?;
            let record: EncryptedRecord = transport::call::<(), _, _>(
                |req| forward(link, url, req),
                &key,
                &*self.clock,
                &endpoint.pinned_key,
                Method::Get,
                &format!("/v1/records/{}", id.to_path()),
                None,
            )?;
            let data = account::open(&record, &k_sss)?;
            let n = if random_len == 0 { data.policy.random_len() } else { random_len };
            let random = Zeroizing::new(generate_random(&secret.seed, &data.salt, n)?);
            Ok(EmergencyOutput {
                username: data.username.clone(),
                policy: data.policy.clone(),
                random,
            })
        })
    }
}

fn forward(link: &mut dyn SssLink, url: &str, request: &Request) -> Result<Response> {
    let reply = link.forward(url, &request.to_bytes())?;
    Response::from_bytes(&reply).map_err(|e| Error::Transport(e.to_string()))
}
