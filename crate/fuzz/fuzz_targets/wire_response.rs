// Copyright 2026 The PASCO Authors
// SPDX-License-Identifier: Apache-2.0

#![no_main]

use libfuzzer_sys::fuzz_target;
use pasco::sss::Response;

fuzz_target!(|data: &[u8]| {
    let _ = Response::from_bytes(data);
});
