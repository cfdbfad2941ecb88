// Copyright 2026 The PASCO Authors
// SPDX-License-Identifier: Apache-2.0

#![no_main]

use libfuzzer_sys::fuzz_target;
use pasco::crypto::SecretBytes;
use pasco::password::{password_for, validate, PasswordPolicy, Salt};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(policy) = PasswordPolicy::from_json(text) else { return };
    let seed = SecretBytes::new(vec![7; 32]).unwrap();
    if let Ok(pw) = password_for(&seed, &Salt([1; 32]), &policy) {
        assert!(validate(&pw, &policy));
    }
});
