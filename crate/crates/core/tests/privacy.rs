// Copyright 2026 The PASCO Authors
// SPDX-License-Identifier: Apache-2.0

//! What the services get to see: no secret material on the wire and
//! nothing that links the same user across mirrors.

mod common;

use std::collections::BTreeSet;
use std::sync::{Arc, Mutex};

use base64::engine::general_purpose::{STANDARD, URL_SAFE_NO_PAD};
use base64::Engine;
use common::{random_policy, rng, World};
use pasco::client::{emergency_password, restore_from_backup, Client};
use pasco::device::SlotRole;
use pasco::multi::Outbox;
use pasco::sss::{Request, Response};
use pasco::transport::{LocalTransport, Transport};
use proptest::prelude::*;

/// Keeps a copy of every request and response.
struct Recorder {
    inner: Arc<LocalTransport>,
    log: Mutex<Vec<u8>>,
}

impl Transport for Recorder {
    fn send(&self, url: &str, request: &Request) -> pasco::Result<Response> {
        let response = self.inner.send(url, request)?;
        let mut log = self.log.lock().unwrap();
        log.extend_from_slice(&request.to_bytes());
        log.extend_from_slice(&response.to_bytes());
        Ok(response)
    }
}

fn encodings(secret: &[u8]) -> Vec<Vec<u8>> {
    let mut out = vec![secret.to_vec(), hex::encode(secret).into_bytes()];
    // Any aligned 24-octet window survives inside a longer base64 string.
    for window in secret.chunks(24).filter(|c| c.len() == 24) {
        out.push(STANDARD.encode(window).into_bytes());
        out.push(URL_SAFE_NO_PAD.encode(window).into_bytes());
    }
    out
}

fn contains(haystack: &[u8], needle: &[u8]) -> bool {
    haystack.windows(needle.len()).any(|w| w == needle)
}

#[test]
fn no_secret_crosses_the_wire() {
    let world = World::new(2);
    let recorder = Arc::new(Recorder {
        inner: world.transport.clone(),
        log: Mutex::new(Vec::new()),
    });
    let profile = pasco::client::first_time_setup(world.endpoints.clone(), &*recorder, &world.shared_clock()).unwrap();
    let mut client = Client::new(profile, recorder.clone(), world.shared_clock(), Outbox::in_memory()).unwrap();
    let mut r = rng(5);
    let mut passwords = Vec::new();
    for i in 0..5 {
        let url = format!("https://s{i}.example");
        client.add_account(&url, "user", random_policy(&mut r)).unwrap();
        passwords.push(client.get_password(&url).unwrap().1);
    }
    let card = world.card();
    client.create_backup(&card, "4321", SlotRole::Restore, &[]).unwrap();
    client
        .create_backup(&card, "8765", SlotRole::Emergency, &["https://s0.example".into()])
        .unwrap();
    emergency_password(&card, "8765", "https://s0.example", &*recorder).unwrap();
    let restored = restore_from_backup(&card, "4321", &world.endpoints, &*recorder, &world.shared_clock()).unwrap();

    let log = recorder.log.lock().unwrap();
    assert!(log.len() > 10_000);
    let (s_bd, mask) = card.with_device(|d| {
        (
            d.state().s_bd().unwrap().expose().to_vec(),
            d.state().mask().unwrap().expose().to_vec(),
        )
    });
    let secret = client.profile().secret.to_bytes();
    let mut secrets = vec![
        ("seed", client.profile().secret.seed.expose().to_vec()),
        ("k_data", client.profile().secret.k_data.expose().to_vec()),
        ("secret", secret.expose().to_vec()),
        ("auth root", client.profile().auth_root.expose().to_vec()),
        ("restored auth root", restored.auth_root.expose().to_vec()),
        ("masked backup", s_bd.clone()),
        ("mask", mask),
        ("pad", pasco::crypto::xor_mask(secret.expose(), &s_bd).unwrap()),
    ];
    // Short passwords could turn up by chance inside base64 text.
    for p in passwords.iter().filter(|p| p.as_str().len() >= 12) {
        secrets.push(("password", p.as_str().as_bytes().to_vec()));
    }
    for (name, value) in &secrets {
        for needle in encodings(value) {
            assert!(!contains(&log, &needle), "{name} leaked");
        }
    }
}

fn identifiers(dump: &pasco::sss::store::Snapshot) -> BTreeSet<Vec<u8>> {
    let mut out = BTreeSet::new();
    for account in &dump.accounts {
        out.insert(account.id.clone().into_bytes());
        for key in &account.keys {
            out.insert(key.fingerprint.0.to_vec());
            out.insert(key.public_key.clone());
            if let Some(otp) = &key.otp {
                out.insert(otp.clone());
            }
        }
        for record in &account.records {
            out.insert(record.id.0.to_vec());
            out.insert(record.blob.clone());
        }
    }
    out
}

#[test]
fn mirrors_cannot_link_their_views() {
    let world = World::new(2);
    let mut client = world.client();
    let mut r = rng(9);
    for i in 0..6 {
        client.add_account(&format!("https://a{i}.example"), "same-user", random_policy(&mut r)).unwrap();
    }
    let card = world.card();
    client.create_backup(&card, "4321", SlotRole::Restore, &[]).unwrap();
    let a = identifiers(&world.service(0).dump());
    let b = identifiers(&world.service(1).dump());
    assert!(a.len() >= 6 * 2 + 4);
    let shared: Vec<_> = a.intersection(&b).collect();
    assert!(shared.is_empty(), "{} shared values", shared.len());

    // The decrypted views agree.
    let mut per_service = Vec::new();
    for i in 0..2 {
        world.transport.set_online(&world.endpoints[1 - i].url, false).unwrap();
        per_service.push(
            client
                .list_accounts()
                .unwrap()
                .iter()
                .map(|d| (d.url().to_string(), d.salt.0, d.username.clone()))
                .collect::<Vec<_>>(),
        );
        world.transport.set_online(&world.endpoints[1 - i].url, true).unwrap();
    }
    assert_eq!(per_service[0], per_service[1]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn enrolled_devices_agree(seed in any::<u64>(), count in 1usize..8) {
        let world = World::new(1);
        let mut first = world.client();
        let mut r = rng(seed);
        let urls: Vec<String> = (0..count).map(|i| format!("https://p{seed}-{i}.example")).collect();
        for url in &urls {
            first.add_account(url, "u", random_policy(&mut r)).unwrap();
        }
        let payload = first.export_enrollment().unwrap();
        let second = world.wrap(
            pasco::client::enroll_new_device(&payload, &world.endpoints, &*world.transport, &world.shared_clock()).unwrap(),
        );
        for url in &urls {
            prop_assert_eq!(first.get_password(url).unwrap().1, second.get_password(url).unwrap().1);
        }
    }
}
