// Copyright 2026 The PASCO Authors
// SPDX-License-Identifier: Apache-2.0

#![allow(dead_code)]

use std::sync::Arc;

use pasco::client::{first_time_setup, Client};
use pasco::clock::{ManualClock, SharedClock};
use pasco::crypto::SigningKeyPair;
use pasco::device::{BackupDevice, DeviceConfig, SharedCard};
use pasco::multi::Outbox;
use pasco::password::{CharClass, PasswordPolicy};
use pasco::sss::SssService;
use pasco::transport::{Endpoint, LocalTransport, Transport};
use rand::{Rng, SeedableRng};

pub const START: u64 = 1_800_000_000;

/// Services, a shared manual clock and an in-process transport.
pub struct World {
    pub clock: ManualClock,
    pub transport: Arc<LocalTransport>,
    pub endpoints: Vec<Endpoint>,
}

impl World {
    pub fn new(services: usize) -> World {
        let clock = ManualClock::new(START);
        let transport = Arc::new(LocalTransport::new());
        let endpoints = (0..services)
            .map(|i| {
                let url = format!("https://sss{i}.example");
                let service = Arc::new(SssService::new(Arc::new(clock.clone()), SigningKeyPair::generate()));
                let endpoint = Endpoint::new(&url, service.server_public_key()).unwrap();
                transport.add(&url, service).unwrap();
                endpoint
            })
            .collect();
        World {
            clock,
            transport,
            endpoints,
        }
    }

    pub fn shared_clock(&self) -> SharedClock {
        Arc::new(self.clock.clone())
    }

    pub fn dyn_transport(&self) -> Arc<dyn Transport> {
        self.transport.clone()
    }

    pub fn service(&self, i: usize) -> Arc<SssService> {
        self.transport.service(&self.endpoints[i].url).unwrap()
    }

    pub fn client(&self) -> Client {
        let profile = first_time_setup(self.endpoints.clone(), &*self.transport, &self.shared_clock()).unwrap();
        self.wrap(profile)
    }

    pub fn wrap(&self, profile: pasco::client::DeviceProfile) -> Client {
        Client::new(profile, self.dyn_transport(), self.shared_clock(), Outbox::in_memory()).unwrap()
    }

    pub fn card(&self) -> SharedCard {
        SharedCard::new(self.device())
    }

    pub fn device(&self) -> BackupDevice {
        BackupDevice::new(DeviceConfig { pin_iterations: 10 }, self.shared_clock())
    }
}

pub fn random_policy(rng: &mut impl Rng) -> PasswordPolicy {
    let mut classes: Vec<CharClass> = CharClass::ALL.into_iter().filter(|_| rng.gen_bool(0.6)).collect();
    if classes.is_empty() {
        classes.push(CharClass::Lower);
    }
    let min = rng.gen_range(4..=24);
    let max = rng.gen_range(min..=64);
    let mut policy = PasswordPolicy::new(min, max, &classes).with_symbols("!#$%&*+-=?@^_");
    for class in classes {
        if rng.gen_bool(0.5) {
            policy = policy.with_min(class, rng.gen_range(1..=2));
        }
    }
    policy
}

pub fn rng(seed: u64) -> rand::rngs::StdRng {
    rand::rngs::StdRng::seed_from_u64(seed)
}
