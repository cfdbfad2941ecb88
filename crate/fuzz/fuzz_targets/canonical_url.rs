// Copyright 2026 The PASCO Authors
// SPDX-License-Identifier: Apache-2.0

#![no_main]

use libfuzzer_sys::fuzz_target;
use pasco::account::canonicalize_url;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(url) = canonicalize_url(text) {
        assert_eq!(canonicalize_url(&url).expect("canonical form parses"), url);
    }
});
