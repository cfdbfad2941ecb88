// Copyright 2026 The PASCO Authors
// SPDX-License-Identifier: Apache-2.0

#![no_main]

use libfuzzer_sys::fuzz_target;
use pasco::client::{decode_payload, encode_payload};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(enrollment) = decode_payload(text) {
        if let Ok(text) = encode_payload(&enrollment.secret, &enrollment.tokens) {
            decode_payload(&text).expect("re-encoded payload decodes");
        }
    }
});
