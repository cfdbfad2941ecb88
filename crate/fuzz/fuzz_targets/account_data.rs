// Copyright 2026 The PASCO Authors
// SPDX-License-Identifier: Apache-2.0

#![no_main]

use libfuzzer_sys::fuzz_target;
use pasco::account::AccountData;

fuzz_target!(|data: &[u8]| {
    if let Ok(account) = AccountData::decode(data) {
        let again = AccountData::decode(&account.encode()).expect("re-encoded record decodes");
        assert_eq!(again.encode(), account.encode());
    }
});
