// Copyright 2026 The PASCO Authors
// SPDX-License-Identifier: Apache-2.0

#![no_main]

use libfuzzer_sys::fuzz_target;
use pasco::device::BdState;

fuzz_target!(|data: &[u8]| {
    if let Ok(state) = BdState::decode(data) {
        let bytes = state.encode();
        let again = BdState::decode(&bytes).expect("re-encoded state decodes");
        assert_eq!(again.encode(), bytes);
    }
});
