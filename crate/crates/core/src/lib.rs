// Copyright 2026 The PASCO Authors
// SPDX-License-Identifier: Apache-2.0

pub mod account;
pub mod client;
pub mod clock;
pub mod crypto;
pub mod device;
pub mod error;
pub mod multi;
pub mod password;
pub mod secret;
pub mod sss;
pub mod transport;

pub use error::{Error, Result};
