// Copyright 2026 The PASCO Authors
// SPDX-License-Identifier: Apache-2.0

//! The device command port.
//!
//! Every frame is `u32 length (BE) || u8 code || payload`, where `length`
//! counts the code octet and the payload. Request codes are [`Command`]
//! values; response codes are 0 for success and 1 for an error. Payloads
//! are JSON.

use std::sync::Arc;

use parking_lot::Mutex;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use zeroize::Zeroizing;

use super::{BackupDevice, EmergencyOutput, Enrollment, RestoreOutput, SlotRole, SssLink, Status};
use crate::account::b64;
use crate::crypto::{Fingerprint, PublicKey};
use crate::error::{Error, Result};
use crate::password::PasswordPolicy;
use crate::secret::PalpasSecret;
use crate::transport::Endpoint;

pub const MAX_FRAME_LEN: usize = 256 * 1024;
const STATUS_OK: u8 = 0;
const STATUS_ERR: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Command {
    Info = 1,
    Provision = 2,
    VerifyPin = 3,
    Restore = 4,
    EmergencyGenerate = 5,
    Wipe = 6,
    Logout = 7,
}

impl TryFrom<u8> for Command {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        Ok(match v {
            1 => Command::Info,
            2 => Command::Provision,
            3 => Command::VerifyPin,
            4 => Command::Restore,
            5 => Command::EmergencyGenerate,
            6 => Command::Wipe,
            7 => Command::Logout,
            _ => return Err(Error::invalid(format!("unknown command 0x{v:02x}"))),
        })
    }
}

pub fn encode_frame(code: u8, payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(5 + payload.len());
    out.extend_from_slice(&((payload.len() + 1) as u32).to_be_bytes());
    out.push(code);
    out.extend_from_slice(payload);
    out
}

pub fn decode_frame(frame: &[u8]) -> Result<(u8, &[u8])> {
    if frame.len() < 5 {
        return Err(Error::invalid("short frame"));
    }
    let (len, rest) = frame.split_at(4);
    let len = u32::from_be_bytes(len.try_into().expect("length")) as usize;
    if len == 0 || len > MAX_FRAME_LEN || len != rest.len() {
        return Err(Error::invalid("frame length mismatch"));
    }
    Ok((rest[0], &rest[1..]))
}

#[derive(Serialize, Deserialize)]
struct EndpointToken {
    url: String,
    #[serde(with = "b64")]
    pinned_key: Vec<u8>,
    #[serde(with = "b64")]
    token: Vec<u8>,
}

#[derive(Serialize, Deserialize)]
struct ProvisionCmd {
    #[serde(with = "b64")]
    secret: Vec<u8>,
    pin: String,
    role: SlotRole,
    endpoints: Vec<EndpointToken>,
}

impl Drop for ProvisionCmd {
    fn drop(&mut self) {
        zeroize::Zeroize::zeroize(&mut self.secret);
        zeroize::Zeroize::zeroize(&mut self.pin);
    }
}

#[derive(Serialize, Deserialize)]
struct PinCmd {
    pin: String,
}

impl Drop for PinCmd {
    fn drop(&mut self) {
        zeroize::Zeroize::zeroize(&mut self.pin);
    }
}

#[derive(Serialize, Deserialize)]
struct EmergencyCmd {
    url: String,
    random_len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InfoReply {
    pub status: Status,
    pub retries_left: u8,
    pub slots: Vec<SlotRole>,
    pub endpoints: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct ProvisionReply {
    fingerprints: Vec<Fingerprint>,
}

#[derive(Serialize, Deserialize)]
struct PinReply {
    role: SlotRole,
}

#[derive(Serialize, Deserialize)]
struct UrlToken {
    url: String,
    #[serde(with = "b64")]
    token: Vec<u8>,
}

#[derive(Serialize, Deserialize)]
struct RestoreReply {
    #[serde(with = "b64")]
    secret: Vec<u8>,
    tokens: Vec<UrlToken>,
}

impl Drop for RestoreReply {
    fn drop(&mut self) {
        zeroize::Zeroize::zeroize(&mut self.secret);
    }
}

#[derive(Serialize, Deserialize)]
pub struct EmergencyReply {
    pub username: String,
    pub policy: PasswordPolicy,
    #[serde(with = "b64")]
    pub random: Vec<u8>,
}

impl Drop for EmergencyReply {
    fn drop(&mut self) {
        zeroize::Zeroize::zeroize(&mut self.random);
    }
}

#[derive(Serialize, Deserialize)]
struct ErrorReply {
    code: String,
    message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    remaining: Option<u8>,
}

#[derive(Serialize, Deserialize)]
struct Empty {}

fn parse<T: DeserializeOwned>(payload: &[u8]) -> Result<T> {
    serde_json::from_slice(payload).map_err(|e| Error::invalid(format!("malformed payload: {e}")))
}

fn ok_frame<T: Serialize>(value: &T) -> Vec<u8> {
    let payload = Zeroizing::new(serde_json::to_vec(value).expect("reply serialization is infallible"));
    encode_frame(STATUS_OK, &payload)
}

fn error_frame(err: &Error) -> Vec<u8> {
    let reply = ErrorReply {
        code: err.code().to_string(),
        message: err.detail(),
        remaining: match err {
            Error::PinRejected { remaining } => Some(*remaining),
            _ => None,
        },
    };
    encode_frame(STATUS_ERR, &serde_json::to_vec(&reply).expect("reply serialization is infallible"))
}

impl BackupDevice {
    /// Executes one command frame and returns the response frame.
    pub fn process(&mut self, frame: &[u8], link: &mut dyn SssLink) -> Vec<u8> {
        match self.dispatch(frame, link) {
            Ok(reply) => reply,
            Err(e) => error_frame(&e),
        }
    }

    fn dispatch(&mut self, frame: &[u8], link: &mut dyn SssLink) -> Result<Vec<u8>> {
        let (code, payload) = decode_frame(frame)?;
        match Command::try_from(code)? {
            Command::Info => {
                let s = self.state();
                Ok(ok_frame(&InfoReply {
                    status: s.status(),
                    retries_left: s.retries_left(),
                    slots: s.slots().iter().map(|s| s.role).collect(),
                    endpoints: s.endpoints().iter().map(|e| e.url.clone()).collect(),
                }))
            }
            Command::Provision => {
                let cmd: ProvisionCmd = parse(payload)?;
                let secret = PalpasSecret::from_bytes(&cmd.secret).map_err(|_| Error::invalid("bad secret"))?;
                let enrollments = cmd
                    .endpoints
                    .iter()
                    .map(|e| {
                        Ok(Enrollment {
                            endpoint: Endpoint::new(&e.url, PublicKey::from_bytes(&e.pinned_key)?)?,
                            token: e.token.clone(),
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let fingerprints = self.provision(&secret, &cmd.pin, cmd.role, &enrollments, link)?;
                Ok(ok_frame(&ProvisionReply { fingerprints }))
            }
            Command::VerifyPin => {
                let cmd: PinCmd = parse(payload)?;
                let role = self.verify_pin(&cmd.pin)?;
                Ok(ok_frame(&PinReply { role }))
            }
            Command::Restore => {
                let out = self.restore(link)?;
                Ok(ok_frame(&RestoreReply {
                    secret: out.secret.to_bytes().expose().to_vec(),
                    tokens: out
                        .tokens
                        .into_iter()
                        .map(|(url, token)| UrlToken { url, token })
                        .collect(),
                }))
            }
            Command::EmergencyGenerate => {
                let cmd: EmergencyCmd = parse(payload)?;
                let out = self.emergency_random(&cmd.url, cmd.random_len, link)?;
                Ok(ok_frame(&EmergencyReply {
                    username: out.username.clone(),
                    policy: out.policy.clone(),
                    random: out.random.to_vec(),
                }))
            }
            Command::Wipe => {
                self.wipe()?;
                Ok(ok_frame(&Empty {}))
            }
            Command::Logout => {
                self.logout();
                Ok(ok_frame(&Empty {}))
            }
        }
    }
}

/// Something that accepts command frames, like a card reader.
pub trait DevicePort {
    /// Port-level failures (busy, unplugged) are errors; device-level
    /// failures come back as error frames.
    fn transact(&self, frame: &[u8], link: &mut dyn SssLink) -> Result<Vec<u8>>;
}

/// A device shared between threads. Only one command may be in flight;
/// a concurrent command is refused with [`Error::DeviceBusy`].
#[derive(Clone)]
pub struct SharedCard(Arc<Mutex<BackupDevice>>);

impl SharedCard {
    pub fn new(device: BackupDevice) -> Self {
        SharedCard(Arc::new(Mutex::new(device)))
    }

    /// Direct access to the emulated hardware, as an attacker with the
    /// physical device would have.
    pub fn with_device<R>(&self, f: impl FnOnce(&mut BackupDevice) -> R) -> R {
        f(&mut self.0.lock())
    }
}

impl DevicePort for SharedCard {
    fn transact(&self, frame: &[u8], link: &mut dyn SssLink) -> Result<Vec<u8>> {
        let mut device = self.0.try_lock().ok_or(Error::DeviceBusy)?;
        Ok(device.process(frame, link))
    }
}

/// Typed host-side driver for a [`DevicePort`].
pub struct CardClient<'a> {
    port: &'a dyn DevicePort,
}

struct NoLink;

impl SssLink for NoLink {
    fn forward(&mut self, _url: &str, _frame: &[u8]) -> Result<Vec<u8>> {
        Err(Error::Transport("no service link for this command".into()))
    }
}

impl<'a> CardClient<'a> {
    pub fn new(port: &'a dyn DevicePort) -> Self {
        CardClient { port }
    }

    fn exchange<T: DeserializeOwned>(
        &self,
        command: Command,
        payload: &impl Serialize,
        link: &mut dyn SssLink,
    ) -> Result<T> {
        let body = Zeroizing::new(serde_json::to_vec(payload).map_err(|e| Error::invalid(e.to_string()))?);
        let reply = Zeroizing::new(self.port.transact(&encode_frame(command as u8, &body), link)?);
        let (status, payload) = decode_frame(&reply).map_err(|e| Error::Transport(e.to_string()))?;
        match status {
            STATUS_OK => serde_json::from_slice(payload).map_err(|e| Error::Transport(format!("bad device reply: {e}"))),
            STATUS_ERR => {
                let e: ErrorReply =
                    serde_json::from_slice(payload).map_err(|e| Error::Transport(format!("bad device reply: {e}")))?;
                Err(match (e.code.as_str(), e.remaining) {
                    ("pin-rejected", Some(remaining)) => Error::PinRejected { remaining },
                    _ => Error::from_wire(400, &e.code, &e.message),
                })
            }
            _ => Err(Error::Transport("bad device reply status".into())),
        }
    }

    pub fn info(&self) -> Result<InfoReply> {
        self.exchange(Command::Info, &Empty {}, &mut NoLink)
    }

    pub fn provision(
        &self,
        secret: &PalpasSecret,
        pin: &str,
        role: SlotRole,
        enrollments: &[Enrollment],
        link: &mut dyn SssLink,
    ) -> Result<Vec<Fingerprint>> {
        let cmd = ProvisionCmd {
            secret: secret.to_bytes().expose().to_vec(),
            pin: pin.to_string(),
            role,
            endpoints: enrollments
                .iter()
                .map(|e| EndpointToken {
                    url: e.endpoint.url.clone(),
                    pinned_key: e.endpoint.pinned_key.0.to_vec(),
                    token: e.token.clone(),
                })
                .collect(),
        };
        let reply: ProvisionReply = self.exchange(Command::Provision, &cmd, link)?;
        Ok(reply.fingerprints)
    }

    pub fn verify_pin(&self, pin: &str) -> Result<SlotRole> {
        let reply: PinReply = self.exchange(Command::VerifyPin, &PinCmd { pin: pin.to_string() }, &mut NoLink)?;
        Ok(reply.role)
    }

    pub fn restore(&self, link: &mut dyn SssLink) -> Result<RestoreOutput> {
        let reply: RestoreReply = self.exchange(Command::Restore, &Empty {}, link)?;
        Ok(RestoreOutput {
            secret: PalpasSecret::from_bytes(&reply.secret)?,
            tokens: reply.tokens.iter().map(|t| (t.url.clone(), t.token.clone())).collect(),
        })
    }

    pub fn emergency(&self, url: &str, random_len: usize, link: &mut dyn SssLink) -> Result<EmergencyOutput> {
        let cmd = EmergencyCmd {
            url: url.to_string(),
            random_len,
        };
        let reply: EmergencyReply = self.exchange(Command::EmergencyGenerate, &cmd, link)?;
        Ok(EmergencyOutput {
            username: reply.username.clone(),
            policy: reply.policy.clone(),
            random: Zeroizing::new(reply.random.clone()),
        })
    }

    pub fn wipe(&self) -> Result<()> {
        let _: Empty = self.exchange(Command::Wipe, &Empty {}, &mut NoLink)?;
        Ok(())
    }

    pub fn logout(&self) -> Result<()> {
        let _: Empty = self.exchange(Command::Logout, &Empty {}, &mut NoLink)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_round_trip_and_guards() {
        let f = encode_frame(3, b"{}");
        assert_eq!(&f[..5], &[0, 0, 0, 3, 3]);
        assert_eq!(decode_frame(&f).unwrap(), (3, &b"{}"[..]));
        assert!(decode_frame(&f[..f.len() - 1]).is_err());
        assert!(decode_frame(&[0, 0, 0, 0, 1]).is_err());
        assert!(decode_frame(&[0xff, 0xff, 0xff, 0xff, 1]).is_err());
        assert!(Command::try_from(0).is_err());
        assert_eq!(Command::try_from(5).unwrap(), Command::EmergencyGenerate);
    }
}
