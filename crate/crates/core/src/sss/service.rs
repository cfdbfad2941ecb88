// Copyright 2026 The PASCO Authors
// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use serde::de::DeserializeOwned;

use super::store::{AccountDump, KeyDump, Snapshot, SnapshotStore, TokenDump};
use super::wire::*;
use crate::account::{AccountId, EncryptedRecord};
use crate::clock::SharedClock;
use crate::crypto::{self, Fingerprint, PublicKey, SecretBytes, SigningKeyPair};
use crate::error::{Error, Result};

const MAX_BLOB_LEN: usize = crypto::AEAD_MAX_PLAINTEXT + crypto::NONCE_LEN + crypto::AEAD_TAG_LEN;
const NONCE_PURGE_THRESHOLD: usize = 4096;

#[derive(Debug, Clone, Copy)]
pub struct ServiceConfig {
    pub token_ttl: u64,
    pub clock_skew: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            token_ttl: TOKEN_TTL_SECS,
            clock_skew: CLOCK_SKEW_SECS,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RegisteredKey {
    pub public_key: PublicKey,
    pub role: Role,
    pub otp: Option<SecretBytes>,
    pub acl: AclPolicy,
}

#[derive(Debug, Clone)]
pub struct PendingToken {
    pub value: [u8; TOKEN_LEN],
    pub issued_at: u64,
    pub ttl: u64,
    pub role: Role,
    pub acl: AclPolicy,
}

impl PendingToken {
    pub fn expired_at(&self, now: u64) -> bool {
        now >= self.issued_at.saturating_add(self.ttl)
    }
}

#[derive(Debug, Default)]
pub struct SssAccount {
    pub id: String,
    pub keys: BTreeMap<Fingerprint, RegisteredKey>,
    pub records: BTreeMap<AccountId, EncryptedRecord>,
    pub tokens: Vec<PendingToken>,
}

impl SssAccount {
    fn key(&self, fp: &Fingerprint) -> Result<&RegisteredKey> {
        self.keys
            .get(fp)
            .ok_or_else(|| Error::Unauthorized("key is not registered".into()))
    }

    fn require_user_device(&self, fp: &Fingerprint) -> Result<&RegisteredKey> {
        let key = self.key(fp)?;
        if key.role != Role::UserDevice {
            return Err(Error::Forbidden(format!("{} keys may not do this", key.role.as_str())));
        }
        Ok(key)
    }
}

#[derive(Default)]
struct Registry {
    accounts: HashMap<String, Arc<RwLock<SssAccount>>>,
    keys: HashMap<Fingerprint, String>,
}

/// The salt synchronization service.
///
/// Lock order: `registry` before any account lock; `tokens` and `nonces`
/// are leaf locks.
pub struct SssService {
    config: ServiceConfig,
    clock: SharedClock,
    server_key: SigningKeyPair,
    registry: RwLock<Registry>,
    tokens: Mutex<HashMap<[u8; TOKEN_LEN], String>>,
    nonces: Mutex<HashMap<(Fingerprint, String), u64>>,
    store: Option<SnapshotStore>,
    persist_lock: Mutex<()>,
}

impl SssService {
    pub fn new(clock: SharedClock, server_key: SigningKeyPair) -> Self {
        SssService {
            config: ServiceConfig::default(),
            clock,
            server_key,
            registry: RwLock::new(Registry::default()),
            tokens: Mutex::new(HashMap::new()),
            nonces: Mutex::new(HashMap::new()),
            store: None,
            persist_lock: Mutex::new(()),
        }
    }

    pub fn with_config(mut self, config: ServiceConfig) -> Self {
        self.config = config;
        self
    }

    /// Opens (or creates) a service whose state is snapshotted to `path`
    /// after every mutation.
    pub fn open(path: impl Into<PathBuf>, clock: SharedClock, server_key: SigningKeyPair) -> Result<Self> {
        let store = SnapshotStore::new(path.into());
        let mut service = SssService::new(clock, server_key);
        if let Some(snapshot) = store.load()? {
            service.restore(snapshot)?;
        }
        service.store = Some(store);
        Ok(service)
    }

    pub fn server_public_key(&self) -> PublicKey {
        self.server_key.public()
    }

    fn now(&self) -> u64 {
        self.clock.now()
    }

    fn account_for(&self, fp: &Fingerprint) -> Result<Arc<RwLock<SssAccount>>> {
        let reg = self.registry.read();
        reg.keys
            .get(fp)
            .and_then(|id| reg.accounts.get(id))
            .cloned()
            .ok_or_else(|| Error::Unauthorized("key is not registered".into()))
    }

    pub fn create_account(&self, public_key: &PublicKey) -> Result<String> {
        let fp = public_key.fingerprint();
        let id = hex::encode(crypto::random_bytes(16)?);
        {
            let mut reg = self.registry.write();
            if reg.keys.contains_key(&fp) {
                return Err(Error::Conflict("key already registered".into()));
            }
            let mut account = SssAccount {
                id: id.clone(),
                ..Default::default()
            };
            account.keys.insert(
                fp,
                RegisteredKey {
                    public_key: *public_key,
                    role: Role::UserDevice,
                    otp: None,
                    acl: AclPolicy::full(),
                },
            );
            reg.keys.insert(fp, id.clone());
            reg.accounts.insert(id.clone(), Arc::new(RwLock::new(account)));
        }
        log::info!("created account {id} for key {fp:?}");
        self.persist()?;
        Ok(id)
    }

    pub fn issue_token(&self, caller: &Fingerprint, role: Role, acl: Option<AclPolicy>) -> Result<PendingToken> {
        let account = self.account_for(caller)?;
        let mut acct = account.write();
        let caller_role = acct.key(caller)?.role;
        let permitted = match caller_role {
            Role::UserDevice => true,
            Role::BackupRestore => role == Role::UserDevice,
            Role::BackupEmergency => false,
        };
        if !permitted {
            return Err(Error::Forbidden(format!(
                "{} keys may not request {} tokens",
                caller_role.as_str(),
                role.as_str()
            )));
        }
        let acl = normalize_acl(role, acl)?;
        let now = self.now();
        let purged: Vec<[u8; TOKEN_LEN]> = acct
            .tokens
            .iter()
            .filter(|t| t.expired_at(now))
            .map(|t| t.value)
            .collect();
        acct.tokens.retain(|t| !t.expired_at(now));
        let value: [u8; TOKEN_LEN] = crypto::random_bytes(TOKEN_LEN)?
            .try_into()
            .expect("TOKEN_LEN octets");
        let token = PendingToken {
            value,
            issued_at: now,
            ttl: self.config.token_ttl,
            role,
            acl,
        };
        acct.tokens.push(token.clone());
        let account_id = acct.id.clone();
        {
            let mut index = self.tokens.lock();
            for v in purged {
                index.remove(&v);
            }
            index.insert(value, account_id);
        }
        drop(acct);
        log::info!("issued {} token to {caller:?}", role.as_str());
        self.persist()?;
        Ok(token)
    }

    pub fn register_key(&self, token: &[u8], public_key: &PublicKey, otp: Option<SecretBytes>) -> Result<Fingerprint> {
        let fp = public_key.fingerprint();
        if self.registry.read().keys.contains_key(&fp) {
            return Err(Error::Conflict("key already registered".into()));
        }
        let token: [u8; TOKEN_LEN] = token
            .try_into()
            .map_err(|_| Error::Unauthorized("unknown or consumed token".into()))?;
        // Removing the index entry first makes the token single-use even
        // under concurrent registrations.
        let account_id = self
            .tokens
            .lock()
            .remove(&token)
            .ok_or_else(|| Error::Unauthorized("unknown or consumed token".into()))?;
        let account = self
            .registry
            .read()
            .accounts
            .get(&account_id)
            .cloned()
            .ok_or_else(|| Error::Unauthorized("unknown or consumed token".into()))?;
        let pending = {
            let mut acct = account.write();
            let pos = acct
                .tokens
                .iter()
                .position(|t| crypto::ct_eq(&t.value, &token))
                .ok_or_else(|| Error::Unauthorized("unknown or consumed token".into()))?;
            acct.tokens.remove(pos)
        };
        if pending.expired_at(self.now()) {
            self.persist()?;
            return Err(Error::Unauthorized("token expired".into()));
        }
        {
            let mut reg = self.registry.write();
            if reg.keys.contains_key(&fp) {
                return Err(Error::Conflict("key already registered".into()));
            }
            let mut acct = account.write();
            acct.keys.insert(
                fp,
                RegisteredKey {
                    public_key: *public_key,
                    role: pending.role,
                    otp,
                    acl: pending.acl.clone(),
                },
            );
            reg.keys.insert(fp, account_id);
        }
        log::info!("registered {} key {fp:?}", pending.role.as_str());
        self.persist()?;
        Ok(fp)
    }

    pub fn put_record(&self, caller: &Fingerprint, record: EncryptedRecord) -> Result<()> {
        if record.blob.is_empty() || record.blob.len() > MAX_BLOB_LEN {
            return Err(Error::invalid("record blob size out of range"));
        }
        let account = self.account_for(caller)?;
        {
            let mut acct = account.write();
            acct.require_user_device(caller)?;
            acct.records.insert(record.id, record);
        }
        self.persist()
    }

    pub fn get_record(&self, caller: &Fingerprint, id: &AccountId) -> Result<EncryptedRecord> {
        let account = self.account_for(caller)?;
        let acct = account.read();
        if !acct.key(caller)?.acl.permits(id) {
            return Err(Error::Forbidden("account data not covered by this key's ACL".into()));
        }
        acct.records
            .get(id)
            .cloned()
            .ok_or_else(|| Error::NotFound("no record with this id".into()))
    }

    pub fn delete_record(&self, caller: &Fingerprint, id: &AccountId) -> Result<()> {
        let account = self.account_for(caller)?;
        {
            let mut acct = account.write();
            acct.require_user_device(caller)?;
            acct.records
                .remove(id)
                .ok_or_else(|| Error::NotFound("no record with this id".into()))?;
        }
        self.persist()
    }

    pub fn list_records(&self, caller: &Fingerprint) -> Result<Vec<EncryptedRecord>> {
        let account = self.account_for(caller)?;
        let acct = account.read();
        acct.require_user_device(caller)?;
        Ok(acct.records.values().cloned().collect())
    }

    pub fn fetch_otp(&self, caller: &Fingerprint) -> Result<SecretBytes> {
        let account = self.account_for(caller)?;
        let acct = account.read();
        acct.key(caller)?
            .otp
            .clone()
            .ok_or_else(|| Error::Forbidden("no one-time pad stored for this key".into()))
    }

    pub fn list_keys(&self, caller: &Fingerprint) -> Result<Vec<KeyInfo>> {
        let account = self.account_for(caller)?;
        let acct = account.read();
        acct.require_user_device(caller)?;
        Ok(acct
            .keys
            .iter()
            .map(|(fp, k)| KeyInfo {
                fingerprint: *fp,
                role: k.role,
                has_otp: k.otp.is_some(),
                acl: k.acl.clone(),
            })
            .collect())
    }

    /// Deletes `target` together with its one-time pad and ACL.
    pub fn revoke_key(&self, caller: &Fingerprint, target: &Fingerprint) -> Result<()> {
        let account = self.account_for(caller)?;
        {
            let mut reg = self.registry.write();
            let mut acct = account.write();
            acct.require_user_device(caller)?;
            acct.keys
                .remove(target)
                .ok_or_else(|| Error::NotFound("no such key on this account".into()))?;
            reg.keys.remove(target);
        }
        log::info!("revoked key {target:?}");
        self.persist()
    }

    pub fn update_acl(&self, caller: &Fingerprint, target: &Fingerprint, acl: AclPolicy) -> Result<()> {
        let account = self.account_for(caller)?;
        {
            let mut acct = account.write();
            acct.require_user_device(caller)?;
            let key = acct
                .keys
                .get_mut(target)
                .ok_or_else(|| Error::NotFound("no such key on this account".into()))?;
            key.acl = normalize_acl(key.role, Some(acl))?;
        }
        self.persist()
    }

    fn consume_nonce(&self, auth: &AuthHeaders) -> Result<()> {
        let now = self.now();
        let mut nonces = self.nonces.lock();
        if nonces.len() > NONCE_PURGE_THRESHOLD {
            nonces.retain(|_, expiry| *expiry > now);
        }
        let expiry = auth.timestamp.saturating_add(self.config.clock_skew).saturating_add(1);
        match nonces.insert((auth.fingerprint, auth.nonce.clone()), expiry) {
            Some(prev) if prev > now => Err(Error::Unauthorized("replayed nonce".into())),
            _ => Ok(()),
        }
    }

    fn check_freshness(&self, auth: &AuthHeaders) -> Result<()> {
        if self.now().abs_diff(auth.timestamp) > self.config.clock_skew {
            return Err(Error::Unauthorized("request timestamp outside the accepted window".into()));
        }
        Ok(())
    }

    fn authenticate_with(&self, req: &Request, public: &PublicKey) -> Result<Fingerprint> {
        let auth = req.auth.as_ref().ok_or_else(|| Error::Unauthorized("unsigned request".into()))?;
        if auth.fingerprint != public.fingerprint() || !req.verify_signature(public) {
            return Err(Error::Unauthorized("bad request signature".into()));
        }
        self.consume_nonce(auth)?;
        Ok(auth.fingerprint)
    }

    fn authenticate(&self, req: &Request) -> Result<Fingerprint> {
        let auth = req.auth.as_ref().ok_or_else(|| Error::Unauthorized("unsigned request".into()))?;
        let account = self.account_for(&auth.fingerprint)?;
        let public = account.read().key(&auth.fingerprint)?.public_key;
        self.authenticate_with(req, &public)
    }

    /// Verifies, routes and executes one request. The response is signed
    /// with the service key.
    pub fn handle(&self, req: &Request) -> Response {
        let mut resp = self.dispatch(req).unwrap_or_else(|e| {
            log::debug!("{} {} -> {}", req.method.as_str(), req.path, e.code());
            Response::error(&e)
        });
        let nonce = req.nonce().unwrap_or("");
        resp.signature = Some(self.server_key.sign(&response_signing_input(resp.status, nonce, &resp.body)));
        resp
    }

    fn dispatch(&self, req: &Request) -> Result<Response> {
        let auth = req.auth.as_ref().ok_or_else(|| Error::Unauthorized("unsigned request".into()))?;
        self.check_freshness(auth)?;
        let path = req.path.split('?').next().unwrap_or("");
        let segments: Vec<&str> = path.trim_start_matches('/').split('/').collect();
        match (req.method, segments.as_slice()) {
            (Method::Post, ["v1", "accounts"]) => {
                let body: CreateAccountBody = parse_body(&req.body)?;
                let public = PublicKey::from_bytes(&body.public_key)
                    .map_err(|_| Error::invalid("malformed public key"))?;
                let fingerprint = self.authenticate_with(req, &public)?;
                let account_id = self.create_account(&public)?;
                Ok(Response::json(200, &CreateAccountReply { account_id, fingerprint }))
            }
            (Method::Post, ["v1", "keys"]) => {
                let body: RegisterKeyBody = parse_body(&req.body)?;
                let public = PublicKey::from_bytes(&body.public_key)
                    .map_err(|_| Error::invalid("malformed public key"))?;
                self.authenticate_with(req, &public)?;
                let otp = body.otp.map(SecretBytes::new).transpose()?;
                let fingerprint = self.register_key(&body.token, &public, otp)?;
                let role = {
                    let account = self.account_for(&fingerprint)?;
                    let role = account.read().key(&fingerprint)?.role;
                    role
                };
                Ok(Response::json(200, &RegisterKeyReply { fingerprint, role }))
            }
            _ => {
                let caller = self.authenticate(req)?;
                self.route(req, &caller, &segments)
            }
        }
    }

    fn route(&self, req: &Request, caller: &Fingerprint, segments: &[&str]) -> Result<Response> {
        let ok = || Response::json(200, &Ack { ok: true });
        match (req.method, segments) {
            (Method::Post, ["v1", "tokens"]) => {
                let body: IssueTokenBody = parse_body(&req.body)?;
                let t = self.issue_token(caller, body.role, body.acl)?;
                Ok(Response::json(
                    200,
                    &TokenReply {
                        token: t.value.to_vec(),
                        issued_at: t.issued_at,
                        ttl: t.ttl,
                    },
                ))
            }
            (Method::Get, ["v1", "keys"]) => Ok(Response::json(200, &KeyList { keys: self.list_keys(caller)? })),
            (Method::Delete, ["v1", "keys", fp]) => {
                self.revoke_key(caller, &Fingerprint::from_hex(fp)?)?;
                Ok(ok())
            }
            (Method::Put, ["v1", "keys", fp, "acl"]) => {
                let acl: AclPolicy = parse_body(&req.body)?;
                self.update_acl(caller, &Fingerprint::from_hex(fp)?, acl)?;
                Ok(ok())
            }
            (Method::Get, ["v1", "records"]) => Ok(Response::json(
                200,
                &RecordList {
                    records: self.list_records(caller)?,
                },
            )),
            (Method::Get, ["v1", "records", id]) => {
                let rec = self.get_record(caller, &AccountId::parse(id)?)?;
                Ok(Response::json(200, &rec))
            }
            (Method::Put, ["v1", "records", id]) => {
                let id = AccountId::parse(id)?;
                let rec: EncryptedRecord = parse_body(&req.body)?;
                if rec.id != id {
                    return Err(Error::invalid("record id does not match path"));
                }
                self.put_record(caller, rec)?;
                Ok(ok())
            }
            (Method::Delete, ["v1", "records", id]) => {
                self.delete_record(caller, &AccountId::parse(id)?)?;
                Ok(ok())
            }
            (Method::Get, ["v1", "otp"]) => {
                let otp = self.fetch_otp(caller)?;
                Ok(Response::json(200, &OtpReply { otp: otp.expose().to_vec() }))
            }
            _ => Err(Error::NotFound(format!("no route for {} {}", req.method.as_str(), req.path))),
        }
    }

    /// Full server state, as persisted.
    pub fn dump(&self) -> Snapshot {
        let reg = self.registry.read();
        let mut accounts: Vec<AccountDump> = reg
            .accounts
            .values()
            .map(|a| {
                let a = a.read();
                AccountDump {
                    id: a.id.clone(),
                    keys: a
                        .keys
                        .iter()
                        .map(|(fp, k)| KeyDump {
                            fingerprint: *fp,
                            public_key: k.public_key.0.to_vec(),
                            role: k.role,
                            otp: k.otp.as_ref().map(|o| o.expose().to_vec()),
                            acl: k.acl.clone(),
                        })
                        .collect(),
                    records: a.records.values().cloned().collect(),
                    tokens: a
                        .tokens
                        .iter()
                        .map(|t| TokenDump {
                            token: t.value.to_vec(),
                            issued_at: t.issued_at,
                            ttl: t.ttl,
                            role: t.role,
                            acl: t.acl.clone(),
                        })
                        .collect(),
                }
            })
            .collect();
        accounts.sort_by(|a, b| a.id.cmp(&b.id));
        Snapshot { version: 1, accounts }
    }

    fn restore(&mut self, snapshot: Snapshot) -> Result<()> {
        let mut reg = Registry::default();
        let mut tokens = HashMap::new();
        for a in snapshot.accounts {
            let mut acct = SssAccount {
                id: a.id.clone(),
                ..Default::default()
            };
            for k in a.keys {
                let public_key = PublicKey::from_bytes(&k.public_key)?;
                if public_key.fingerprint() != k.fingerprint {
                    return Err(Error::Storage("fingerprint mismatch in snapshot".into()));
                }
                reg.keys.insert(k.fingerprint, a.id.clone());
                acct.keys.insert(
                    k.fingerprint,
                    RegisteredKey {
                        public_key,
                        role: k.role,
                        otp: k.otp.map(SecretBytes::new).transpose()?,
                        acl: k.acl,
                    },
                );
            }
            for r in a.records {
                acct.records.insert(r.id, r);
            }
            for t in a.tokens {
                let value: [u8; TOKEN_LEN] = t
                    .token
                    .as_slice()
                    .try_into()
                    .map_err(|_| Error::Storage("bad token length in snapshot".into()))?;
                tokens.insert(value, a.id.clone());
                acct.tokens.push(PendingToken {
                    value,
                    issued_at: t.issued_at,
                    ttl: t.ttl,
                    role: t.role,
                    acl: t.acl,
                });
            }
            reg.accounts.insert(a.id, Arc::new(RwLock::new(acct)));
        }
        self.registry = RwLock::new(reg);
        self.tokens = Mutex::new(tokens);
        Ok(())
    }

    fn persist(&self) -> Result<()> {
        let Some(store) = &self.store else { return Ok(()) };
        let _guard = self.persist_lock.lock();
        store.save(&self.dump())
    }
}

fn normalize_acl(role: Role, acl: Option<AclPolicy>) -> Result<AclPolicy> {
    match (role, acl) {
        (Role::UserDevice, None) => Ok(AclPolicy::full()),
        (Role::UserDevice, Some(acl)) if acl.mode == AclMode::Full => Ok(AclPolicy::full()),
        (Role::UserDevice, Some(_)) => Err(Error::invalid("user-device keys always have full access")),
        (Role::BackupEmergency, Some(acl)) if acl.mode == AclMode::List => Ok(acl),
        (Role::BackupEmergency, _) => Err(Error::invalid("emergency keys require a list-mode ACL")),
        (Role::BackupRestore, None) => Ok(AclPolicy::full()),
        (Role::BackupRestore, Some(acl)) => Ok(match acl.mode {
            AclMode::Full => AclPolicy::full(),
            AclMode::List => acl,
        }),
    }
}

fn parse_body<T: DeserializeOwned>(body: &[u8]) -> Result<T> {
    serde_json::from_slice(body).map_err(|e| Error::invalid(format!("malformed body: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ManualClock;

    struct Fixture {
        clock: ManualClock,
        sss: SssService,
        ud: SigningKeyPair,
    }

    fn fixture() -> Fixture {
        let clock = ManualClock::new(1_700_000_000);
        let sss = SssService::new(Arc::new(clock.clone()), SigningKeyPair::generate());
        let ud = SigningKeyPair::generate();
        sss.create_account(&ud.public()).unwrap();
        Fixture { clock, sss, ud }
    }

    fn record(id: u8) -> EncryptedRecord {
        EncryptedRecord {
            id: AccountId([id; 32]),
            blob: vec![id; 40],
        }
    }

    impl Fixture {
        fn register(&self, role: Role, acl: Option<AclPolicy>, otp: Option<&[u8]>) -> SigningKeyPair {
            let kp = SigningKeyPair::generate();
            let t = self.sss.issue_token(&self.ud.fingerprint(), role, acl).unwrap();
            self.sss
                .register_key(&t.value, &kp.public(), otp.map(|o| SecretBytes::from_slice(o).unwrap()))
                .unwrap();
            kp
        }
    }

    #[test]
    fn create_account_conflicts_on_duplicate_key() {
        let f = fixture();
        assert!(matches!(f.sss.create_account(&f.ud.public()), Err(Error::Conflict(_))));
    }

    #[test]
    fn token_issuance_rules() {
        let f = fixture();
        let t1 = f.sss.issue_token(&f.ud.fingerprint(), Role::BackupRestore, None).unwrap();
        let t2 = f.sss.issue_token(&f.ud.fingerprint(), Role::BackupRestore, None).unwrap();
        assert_eq!(t1.value.len(), 32);
        assert_ne!(t1.value, t2.value);
        assert_eq!(t1.ttl, 300);

        let restore = f.register(Role::BackupRestore, None, Some(&[1; 64]));
        assert!(f.sss.issue_token(&restore.fingerprint(), Role::UserDevice, None).is_ok());
        assert!(matches!(
            f.sss.issue_token(&restore.fingerprint(), Role::BackupRestore, None),
            Err(Error::Forbidden(_))
        ));
        let emergency = f.register(Role::BackupEmergency, Some(AclPolicy::list([])), Some(&[2; 64]));
        assert!(matches!(
            f.sss.issue_token(&emergency.fingerprint(), Role::UserDevice, None),
            Err(Error::Forbidden(_))
        ));
        assert!(matches!(
            f.sss.issue_token(&f.ud.fingerprint(), Role::BackupEmergency, Some(AclPolicy::full())),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn tokens_are_single_use_and_expire() {
        let f = fixture();
        let t = f.sss.issue_token(&f.ud.fingerprint(), Role::UserDevice, None).unwrap();
        let k = SigningKeyPair::generate();
        f.sss.register_key(&t.value, &k.public(), None).unwrap();
        let k2 = SigningKeyPair::generate();
        assert!(matches!(f.sss.register_key(&t.value, &k2.public(), None), Err(Error::Unauthorized(_))));

        let t = f.sss.issue_token(&f.ud.fingerprint(), Role::UserDevice, None).unwrap();
        f.clock.advance(301);
        assert!(matches!(f.sss.register_key(&t.value, &k2.public(), None), Err(Error::Unauthorized(_))));
        assert!(matches!(f.sss.register_key(&[0; 5], &k2.public(), None), Err(Error::Unauthorized(_))));
    }

    #[test]
    fn register_without_otp_and_conflict() {
        let f = fixture();
        let kp = f.register(Role::UserDevice, None, None);
        assert!(matches!(f.sss.fetch_otp(&kp.fingerprint()), Err(Error::Forbidden(_))));
        let t = f.sss.issue_token(&f.ud.fingerprint(), Role::UserDevice, None).unwrap();
        assert!(matches!(f.sss.register_key(&t.value, &kp.public(), None), Err(Error::Conflict(_))));
        // the token survives a conflicting attempt
        assert!(f.sss.register_key(&t.value, &SigningKeyPair::generate().public(), None).is_ok());
    }

    #[test]
    fn acl_enforcement_on_records() {
        let f = fixture();
        let ud = f.ud.fingerprint();
        f.sss.put_record(&ud, record(1)).unwrap();
        f.sss.put_record(&ud, record(2)).unwrap();
        let em = f.register(Role::BackupEmergency, Some(AclPolicy::list([AccountId([1; 32])])), Some(&[3; 64]));
        let em = em.fingerprint();
        assert_eq!(f.sss.get_record(&em, &AccountId([1; 32])).unwrap(), record(1));
        assert!(matches!(f.sss.get_record(&em, &AccountId([2; 32])), Err(Error::Forbidden(_))));
        assert!(matches!(f.sss.put_record(&em, record(3)), Err(Error::Forbidden(_))));
        assert!(matches!(f.sss.delete_record(&em, &AccountId([1; 32])), Err(Error::Forbidden(_))));
        assert!(matches!(f.sss.list_records(&em), Err(Error::Forbidden(_))));
        assert!(matches!(f.sss.get_record(&ud, &AccountId([9; 32])), Err(Error::NotFound(_))));

        f.sss.update_acl(&ud, &em, AclPolicy::list([AccountId([1; 32]), AccountId([2; 32])])).unwrap();
        assert!(f.sss.get_record(&em, &AccountId([2; 32])).is_ok());
        f.sss.update_acl(&ud, &em, AclPolicy::list([AccountId([1; 32])])).unwrap();
        assert!(matches!(f.sss.get_record(&em, &AccountId([2; 32])), Err(Error::Forbidden(_))));
        assert!(matches!(f.sss.update_acl(&ud, &em, AclPolicy::full()), Err(Error::InvalidArgument(_))));
        f.sss.update_acl(&ud, &em, AclPolicy::list([])).unwrap();
        assert!(matches!(f.sss.get_record(&em, &AccountId([1; 32])), Err(Error::Forbidden(_))));
        assert!(matches!(
            f.sss.update_acl(&ud, &Fingerprint([0; 32]), AclPolicy::list([])),
            Err(Error::NotFound(_))
        ));
    }

    #[test]
    fn revocation_erases_key_otp_and_acl() {
        let f = fixture();
        let ud = f.ud.fingerprint();
        let bd = f.register(Role::BackupRestore, None, Some(&[7; 64]));
        assert_eq!(f.sss.fetch_otp(&bd.fingerprint()).unwrap().expose(), &[7; 64]);
        assert!(matches!(f.sss.revoke_key(&bd.fingerprint(), &ud), Err(Error::Forbidden(_))));
        f.sss.revoke_key(&ud, &bd.fingerprint()).unwrap();
        assert!(matches!(f.sss.fetch_otp(&bd.fingerprint()), Err(Error::Unauthorized(_))));
        assert!(matches!(f.sss.revoke_key(&ud, &bd.fingerprint()), Err(Error::NotFound(_))));
        let dump = serde_json::to_string(&f.sss.dump()).unwrap();
        assert!(!dump.contains(&bd.fingerprint().to_hex()));

        // re-registration of the same public key counts as a fresh key
        let t = f.sss.issue_token(&ud, Role::BackupRestore, None).unwrap();
        f.sss
            .register_key(&t.value, &bd.public(), Some(SecretBytes::from_slice(&[8; 64]).unwrap()))
            .unwrap();
        assert_eq!(f.sss.fetch_otp(&bd.fingerprint()).unwrap().expose(), &[8; 64]);
    }

    #[test]
    fn handle_rejects_stale_replayed_and_forged_requests() {
        let f = fixture();
        let clock = f.clock.clone();
        let req = Request::signed(&f.ud, &clock, Method::Get, "/v1/keys", vec![]);
        assert_eq!(f.sss.handle(&req).status, 200);
        assert_eq!(f.sss.handle(&req).status, 401, "replay");

        let mut forged = Request::signed(&f.ud, &clock, Method::Get, "/v1/keys", vec![]);
        forged.path = "/v1/records".into();
        assert_eq!(f.sss.handle(&forged).status, 401);

        let old = Request::signed(&f.ud, &clock, Method::Get, "/v1/keys", vec![]);
        clock.advance(61);
        assert_eq!(f.sss.handle(&old).status, 401);

        let stranger = SigningKeyPair::generate();
        let req = Request::signed(&stranger, &clock, Method::Get, "/v1/keys", vec![]);
        assert_eq!(f.sss.handle(&req).status, 401);

        let unsigned = Request {
            method: Method::Get,
            path: "/v1/keys".into(),
            auth: None,
            body: vec![],
        };
        assert_eq!(f.sss.handle(&unsigned).status, 401);
    }

    #[test]
    fn responses_are_signed_by_the_service() {
        let f = fixture();
        let req = Request::signed(&f.ud, &f.clock, Method::Get, "/v1/nowhere", vec![]);
        let resp = f.sss.handle(&req);
        assert_eq!(resp.status, 404);
        assert!(resp.verify_server(&f.sss.server_public_key(), req.nonce().unwrap()));
        assert!(!resp.verify_server(&f.sss.server_public_key(), "other-nonce"));
    }

    #[test]
    fn create_account_via_handle_validates_key() {
        let f = fixture();
        let kp = SigningKeyPair::generate();
        let body = serde_json::to_vec(&CreateAccountBody { public_key: vec![1, 2, 3] }).unwrap();
        let req = Request::signed(&kp, &f.clock, Method::Post, "/v1/accounts", body);
        assert_eq!(f.sss.handle(&req).status, 400);
        let body = serde_json::to_vec(&CreateAccountBody {
            public_key: kp.public().0.to_vec(),
        })
        .unwrap();
        let req = Request::signed(&kp, &f.clock, Method::Post, "/v1/accounts", body.clone());
        assert_eq!(f.sss.handle(&req).status, 200);
        let req = Request::signed(&kp, &f.clock, Method::Post, "/v1/accounts", body);
        assert_eq!(f.sss.handle(&req).status, 409);
        // signed by a different key than the one in the body
        let other = SigningKeyPair::generate();
        let body = serde_json::to_vec(&CreateAccountBody {
            public_key: other.public().0.to_vec(),
        })
        .unwrap();
        let req = Request::signed(&kp, &f.clock, Method::Post, "/v1/accounts", body);
        assert_eq!(f.sss.handle(&req).status, 401);
    }

    #[test]
    fn snapshot_persistence_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sss.json");
        let clock = Arc::new(ManualClock::new(10_000));
        let server_key = SigningKeyPair::generate();
        let ud = SigningKeyPair::generate();
        let bd_fp;
        {
            let sss = SssService::open(&path, clock.clone(), server_key.clone()).unwrap();
            sss.create_account(&ud.public()).unwrap();
            sss.put_record(&ud.fingerprint(), record(4)).unwrap();
            let t = sss.issue_token(&ud.fingerprint(), Role::BackupRestore, None).unwrap();
            let bd = SigningKeyPair::generate();
            bd_fp = sss
                .register_key(&t.value, &bd.public(), Some(SecretBytes::from_slice(&[5; 64]).unwrap()))
                .unwrap();
            sss.issue_token(&ud.fingerprint(), Role::UserDevice, None).unwrap();
        }
        let sss = SssService::open(&path, clock, server_key).unwrap();
        assert_eq!(sss.get_record(&ud.fingerprint(), &AccountId([4; 32])).unwrap(), record(4));
        assert_eq!(sss.fetch_otp(&bd_fp).unwrap().expose(), &[5; 64]);
        assert_eq!(sss.dump().accounts[0].tokens.len(), 1);
    }
}
