// Copyright 2026 The PASCO Authors
// SPDX-License-Identifier: Apache-2.0

#![no_main]

use std::sync::Arc;

use libfuzzer_sys::fuzz_target;
use pasco::clock::ManualClock;
use pasco::device::{decode_frame, BackupDevice, DeviceConfig, SssLink};
use pasco::Error;

struct Offline;

impl SssLink for Offline {
    fn forward(&mut self, _url: &str, _frame: &[u8]) -> pasco::Result<Vec<u8>> {
        Err(Error::Transport("offline".into()))
    }
}

fuzz_target!(|data: &[u8]| {
    let _ = decode_frame(data);
    let mut device = BackupDevice::new(DeviceConfig { pin_iterations: 1 }, Arc::new(ManualClock::new(0)));
    let reply = device.process(data, &mut Offline);
    decode_frame(&reply).expect("device replies are well-formed frames");
});
