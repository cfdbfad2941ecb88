// Copyright 2026 The PASCO Authors
// SPDX-License-Identifier: Apache-2.0

//! Bit-exact checks against vectors produced by tools/golden_oracle.py.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use pasco::account::{account_id, split_data_key};
use pasco::crypto::{kdf, mac, prg, SecretBytes};
use pasco::password::{derive_password, password_for, Password, PasswordPolicy, Salt};
use pasco::Error;
use serde_json::Value;

const GOLDEN: &str = include_str!("data/golden.json");

fn bytes(v: &Value, field: &str) -> Vec<u8> {
    STANDARD.decode(v["inputs"][field].as_str().unwrap()).unwrap()
}

fn text(v: &Value, field: &str) -> String {
    String::from_utf8(bytes(v, field)).unwrap()
}

fn key(v: &Value, field: &str) -> SecretBytes {
    SecretBytes::new(bytes(v, field)).unwrap()
}

fn output(v: &Value) -> Vec<u8> {
    STANDARD.decode(v["output"].as_str().unwrap()).unwrap()
}

fn policy(v: &Value) -> PasswordPolicy {
    PasswordPolicy::from_json(&v["inputs"]["policy"].to_string()).unwrap()
}

fn check_password(v: &Value, got: pasco::Result<Password>) {
    match v.get("error") {
        Some(_) => assert!(matches!(got, Err(Error::EntropyExhausted)), "{v}"),
        None => assert_eq!(got.unwrap().as_str().as_bytes(), output(v), "{v}"),
    }
}

#[test]
fn golden_vectors_match_reference() {
    let vectors: Vec<Value> = serde_json::from_str(GOLDEN).unwrap();
    assert!(vectors.len() >= 40);
    let mut seen = std::collections::BTreeSet::new();
    for v in &vectors {
        let op = v["op"].as_str().unwrap();
        seen.insert(op);
        match op {
            "prg" => {
                let n = v["inputs"]["len"].as_u64().unwrap() as usize;
                assert_eq!(prg(&key(v, "key"), &bytes(v, "context"), n).unwrap(), output(v));
            }
            "kdf" => assert_eq!(kdf(&key(v, "key"), &text(v, "label")).unwrap().expose(), output(v)),
            "mac" => assert_eq!(mac(&key(v, "key"), &bytes(v, "message")).to_vec(), output(v)),
            "account_id" => {
                let keys = split_data_key(&key(v, "k_data")).unwrap();
                assert_eq!(account_id(&keys.mac, &text(v, "url")).unwrap().0.to_vec(), output(v));
            }
            "derive_password" => check_password(v, derive_password(&bytes(v, "random"), &policy(v))),
            "password_for" => {
                let salt = Salt::from_slice(&bytes(v, "salt")).unwrap();
                check_password(v, password_for(&key(v, "seed"), &salt, &policy(v)));
            }
            other => panic!("unknown op {other}"),
        }
    }
    assert_eq!(seen.len(), 6);
}

#[test]
fn golden_inequalities_hold() {
    let vectors: Vec<Value> = serde_json::from_str(GOLDEN).unwrap();
    let outputs = |op: &str| -> Vec<Vec<u8>> {
        vectors.iter().filter(|v| v["op"] == op && v.get("output").is_some()).map(output).collect()
    };
    for op in ["kdf", "mac", "account_id"] {
        let all = outputs(op);
        let unique: std::collections::BTreeSet<_> = all.iter().collect();
        assert_eq!(unique.len(), all.len(), "{op}");
    }
    // Same key under the two data labels gives distinct subkeys.
    let k = SecretBytes::new(vec![7; 32]).unwrap();
    let keys = split_data_key(&k).unwrap();
    assert_ne!(keys.enc.expose(), keys.mac.expose());
}
