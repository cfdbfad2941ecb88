// Copyright 2026 The PASCO Authors
// SPDX-License-Identifier: Apache-2.0

#![no_main]

use std::sync::{Arc, OnceLock};

use libfuzzer_sys::fuzz_target;
use pasco::clock::ManualClock;
use pasco::crypto::{SecretBytes, SigningKeyPair};
use pasco::sss::{Request, SssService};

fn key(byte: u8) -> SigningKeyPair {
    SigningKeyPair::from_seed(&SecretBytes::new(vec![byte; 32]).unwrap()).unwrap()
}

fn service() -> &'static SssService {
    static SERVICE: OnceLock<SssService> = OnceLock::new();
    SERVICE.get_or_init(|| {
        let service = SssService::new(Arc::new(ManualClock::new(1_900_000_000)), key(9));
        service.create_account(&key(1).public()).unwrap();
        service
    })
}

fuzz_target!(|data: &[u8]| {
    if let Ok(req) = Request::from_bytes(data) {
        let resp = service().handle(&req);
        assert!((200..600).contains(&resp.status));
    }
});
