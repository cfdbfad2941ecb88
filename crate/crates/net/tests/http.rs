// Copyright 2026 The PASCO Authors
// SPDX-License-Identifier: Apache-2.0

use std::sync::Arc;

use pasco::client::{first_time_setup, restore_from_backup, Client};
use pasco::clock::{self, SharedClock};
use pasco::crypto::SigningKeyPair;
use pasco::device::{BackupDevice, DeviceConfig, SharedCard, SlotRole};
use pasco::multi::Outbox;
use pasco::password::PasswordPolicy;
use pasco::sss::{Method, Request, SssService};
use pasco::transport::{Endpoint, Transport};
use pasco::Error;
use pasco_net::{HttpTransport, ServerHandle};

fn start(path: &std::path::Path, key: &SigningKeyPair, addr: &str) -> ServerHandle {
    let service = SssService::open(path, clock::system(), key.clone()).unwrap();
    ServerHandle::spawn(Arc::new(service), addr.parse().unwrap()).unwrap()
}

#[test]
fn full_cycle_over_http_with_restart() {
    let dir = tempfile::tempdir().unwrap();
    let state = dir.path().join("sss.json");
    let key = SigningKeyPair::generate();
    let server = start(&state, &key, "127.0.0.1:0");
    let addr = server.addr();
    let endpoint = Endpoint::new(&server.url(), key.public()).unwrap();
    let clock: SharedClock = clock::system();
    let transport: Arc<dyn Transport> = Arc::new(HttpTransport::default());

    let profile = first_time_setup(vec![endpoint.clone()], &*transport, &clock).unwrap();
    let mut client = Client::new(profile, transport.clone(), clock.clone(), Outbox::in_memory()).unwrap();
    client.add_account("https://mail.example", "alice", PasswordPolicy::default()).unwrap();
    let (_, password) = client.get_password("https://mail.example").unwrap();

    let card = SharedCard::new(BackupDevice::new(DeviceConfig { pin_iterations: 10 }, clock.clone()));
    client.create_backup(&card, "2468", SlotRole::Restore, &[]).unwrap();

    server.stop();
    assert!(matches!(client.get_password("https://mail.example"), Err(Error::Transport(_))));

    let server = start(&state, &key, &addr.to_string());
    assert_eq!(server.addr(), addr);
    assert_eq!(client.get_password("https://mail.example").unwrap().1, password);

    let restored = restore_from_backup(&card, "2468", &[endpoint], &*transport, &clock).unwrap();
    let restored = Client::new(restored, transport, clock, Outbox::in_memory()).unwrap();
    assert_eq!(restored.get_password("https://mail.example").unwrap().1, password);
    server.stop();
}

#[test]
fn wrong_pinned_key_is_detected() {
    let dir = tempfile::tempdir().unwrap();
    let server = start(&dir.path().join("s.json"), &SigningKeyPair::generate(), "127.0.0.1:0");
    let impostor = Endpoint::new(&server.url(), SigningKeyPair::generate().public()).unwrap();
    let err = first_time_setup(vec![impostor], &HttpTransport::default(), &clock::system());
    assert!(matches!(err, Err(Error::Integrity(_))), "{err:?}");
}

#[test]
fn unsigned_and_malformed_requests_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let key = SigningKeyPair::generate();
    let server = start(&dir.path().join("s.json"), &key, "127.0.0.1:0");
    let http = HttpTransport::default();
    let unsigned = Request {
        method: Method::Get,
        path: "/v1/records".into(),
        auth: None,
        body: Vec::new(),
    };
    let resp = http.send(&server.url(), &unsigned).unwrap();
    assert_eq!(resp.status, 401);
    assert!(resp.verify_server(&key.public(), ""));
    assert!(matches!(resp.into_result::<()>(), Err(Error::Unauthorized(_))));

    let agent = ureq::agent();
    let garbled = agent
        .get(&format!("{}/v1/records", server.url()))
        .set("X-Key-Fingerprint", "zz")
        .call();
    match garbled {
        Err(ureq::Error::Status(code, _)) => assert_eq!(code, 401),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn unreachable_service_is_a_transport_error() {
    let http = HttpTransport::new(std::time::Duration::from_millis(500));
    let req = Request::signed(&SigningKeyPair::generate(), &*clock::system(), Method::Get, "/v1/keys", Vec::new());
    assert!(matches!(http.send("http://127.0.0.1:1", &req), Err(Error::Transport(_))));
}
