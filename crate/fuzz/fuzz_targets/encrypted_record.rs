// Copyright 2026 The PASCO Authors
// SPDX-License-Identifier: Apache-2.0

#![no_main]

use libfuzzer_sys::fuzz_target;
use pasco::account::{self, EncryptedRecord};
use pasco::crypto::SecretBytes;

fuzz_target!(|data: &[u8]| {
    if let Ok(record) = EncryptedRecord::from_json(data) {
        let key = SecretBytes::new(vec![3; 32]).unwrap();
        let _ = account::open(&record, &key);
    }
});
