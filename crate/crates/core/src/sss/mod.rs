// Copyright 2026 The PASCO Authors
// SPDX-License-Identifier: Apache-2.0

//! Salt synchronization service: wire format, request handling and
//! persistence.

pub mod service;
pub mod store;
pub mod wire;

pub use service::{ServiceConfig, SssService};
pub use wire::{AclMode, AclPolicy, Method, Request, Response, Role};
