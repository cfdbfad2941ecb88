// Copyright 2026 The PASCO Authors
// SPDX-License-Identifier: Apache-2.0

//! HTTP server and client for the secret storage service.
//!
//! Both sides map a [`pasco::sss::Request`] onto an HTTP exchange: the
//! method and path carry over unchanged, the four authentication fields
//! travel as headers and the service signature comes back in
//! `X-Server-Signature`.

mod client;
mod server;

pub use client::HttpTransport;
pub use server::{router, ServerHandle};
