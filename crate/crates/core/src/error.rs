// Copyright 2026 The PASCO Authors
// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors surfaced by every layer of the backup scheme.
///
/// The variants map one-to-one onto the wire error codes used by the
/// synchronization service (see [`Error::code`]).
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid key material")]
    InvalidKey,
    #[error("authentication failure")]
    AuthenticationFailure,
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("password policy error: {0}")]
    Policy(String),
    #[error("entropy exhausted while deriving password")]
    EntropyExhausted,
    #[error("unauthorized: {0}")]
    Unauthorized(String),
    #[error("forbidden: {0}")]
    Forbidden(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("PIN rejected, {remaining} attempts left")]
    PinRejected { remaining: u8 },
    #[error("device wiped")]
    DeviceWiped,
    #[error("device busy")]
    DeviceBusy,
    #[error("device state error: {0}")]
    DeviceState(String),
    #[error("provisioning failed: {0}")]
    ProvisioningFailed(String),
    #[error("storage error: {0}")]
    Storage(String),
}

impl Error {
    /// Stable, language-neutral error code.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid-argument",
            Error::InvalidKey => "invalid-key",
            Error::AuthenticationFailure => "authentication-failure",
            Error::Integrity(_) => "integrity-error",
            Error::Policy(_) => "policy-error",
            Error::EntropyExhausted => "entropy-exhausted",
            Error::Unauthorized(_) => "unauthorized",
            Error::Forbidden(_) => "forbidden",
            Error::NotFound(_) => "not-found",
            Error::Conflict(_) => "conflict",
            Error::Transport(_) => "transient-error",
            Error::PinRejected { .. } => "pin-rejected",
            Error::DeviceWiped => "device-wiped",
            Error::DeviceBusy => "device-busy",
            Error::DeviceState(_) => "device-state",
            Error::ProvisioningFailed(_) => "provisioning-failed",
            Error::Storage(_) => "storage-error",
        }
    }

    /// Human-readable detail without the category prefix.
    pub fn detail(&self) -> String {
        match self {
            Error::InvalidArgument(m)
            | Error::Integrity(m)
            | Error::Policy(m)
            | Error::Unauthorized(m)
            | Error::Forbidden(m)
            | Error::NotFound(m)
            | Error::Conflict(m)
            | Error::Transport(m)
            | Error::DeviceState(m)
            | Error::ProvisioningFailed(m)
            | Error::Storage(m) => m.clone(),
            other => other.to_string(),
        }
    }

    /// HTTP status used by the synchronization service for this error.
    pub fn http_status(&self) -> u16 {
        match self {
            Error::Unauthorized(_) | Error::AuthenticationFailure => 401,
            Error::Forbidden(_) => 403,
            Error::NotFound(_) => 404,
            Error::Conflict(_) => 409,
            Error::Storage(_) | Error::Transport(_) => 500,
            _ => 400,
        }
    }

    /// Rebuilds an error from a wire `{code, message}` pair.
    pub fn from_wire(status: u16, code: &str, message: &str) -> Error {
        let message = message.to_string();
        match code {
            "invalid-argument" => Error::InvalidArgument(message),
            "invalid-key" => Error::InvalidKey,
            "authentication-failure" => Error::AuthenticationFailure,
            "integrity-error" => Error::Integrity(message),
            "unauthorized" => Error::Unauthorized(message),
            "forbidden" => Error::Forbidden(message),
            "not-found" => Error::NotFound(message),
            "conflict" => Error::Conflict(message),
            "policy-error" => Error::Policy(message),
            "entropy-exhausted" => Error::EntropyExhausted,
            "transient-error" => Error::Transport(message),
            "device-wiped" => Error::DeviceWiped,
            "device-busy" => Error::DeviceBusy,
            "device-state" => Error::DeviceState(message),
            "provisioning-failed" => Error::ProvisioningFailed(message),
            "storage-error" => Error::Storage(message),
            _ => match status {
                401 => Error::Unauthorized(message),
                403 => Error::Forbidden(message),
                404 => Error::NotFound(message),
                409 => Error::Conflict(message),
                400 => Error::InvalidArgument(message),
                _ => Error::Transport(format!("{status} {code}: {message}")),
            },
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Error {
        Error::InvalidArgument(msg.into())
    }
}
