// Copyright 2026 The PASCO Authors
// SPDX-License-Identifier: Apache-2.0

#![no_main]

use std::sync::Arc;

use libfuzzer_sys::fuzz_target;
use pasco::clock::ManualClock;
use pasco::crypto::{SecretBytes, SigningKeyPair};
use pasco::sss::SssService;

// Service state files are loaded from disk on startup.
fn key(byte: u8) -> SigningKeyPair {
    SigningKeyPair::from_seed(&SecretBytes::new(vec![byte; 32]).unwrap()).unwrap()
}

fuzz_target!(|data: &[u8]| {
    let dir = std::env::temp_dir().join(format!("pasco-fuzz-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("state.json");
    std::fs::write(&path, data).unwrap();
    let _ = SssService::open(&path, Arc::new(ManualClock::new(0)), key(2));
});
