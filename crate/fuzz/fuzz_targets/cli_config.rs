// Copyright 2026 The PASCO Authors
// SPDX-License-Identifier: Apache-2.0

#![no_main]

use libfuzzer_sys::fuzz_target;
use pasco_cli::config::Config;
use pasco_cli::parse_public_key;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = Config::parse(text);
    let _ = parse_public_key(text.trim());
});
