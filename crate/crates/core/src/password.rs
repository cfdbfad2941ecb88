// Copyright 2026 The PASCO Authors
// SPDX-License-Identifier: Apache-2.0

//! Deterministic password generation: a keyed random value from `(seed, salt)`
//! followed by a policy-driven mapping onto characters.
//!
//! The mapping is canonical and must be reproduced bit-exactly by any other
//! implementation:
//!
//! 1. Target length `L = max(min(max_length, max(min_length, 16)), Σ min_per_class)`.
//! 2. The alphabet is the concatenation of the allowed classes in the order
//!    lower, upper, digit, symbol (symbols in the order given by the policy).
//! 3. The random value is split in half. The first half feeds character
//!    selection, the second half feeds the class-minimum fix-up pass.
//! 4. Each selection draws one octet `b` and accepts it iff
//!    `b < 256 - 256 % n`, yielding `b % n`; rejected octets are skipped.
//! 5. For each class in order, the first `min` positions already holding that
//!    class are protected. Remaining deficits are filled, class by class, by
//!    picking an unprotected position (ascending order, index drawn from the
//!    fix-up stream) and replacing it with a class character (also drawn from
//!    the fix-up stream). The replaced position becomes protected.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use zeroize::Zeroize;

use crate::crypto::{self, SecretBytes, PRG_MAX_LEN};
use crate::error::{Error, Result};

pub const SALT_LEN: usize = 32;
pub const MIN_RANDOM_LEN: usize = 64;
pub const MAX_PASSWORD_LEN: usize = 256;
const DEFAULT_TARGET_LEN: usize = 16;
const RANDOM_CONTEXT: &[u8] = b"pw-random";

const LOWER: &str = "abcdefghijklmnopqrstuvwxyz";
const UPPER: &str = "ABCDEFGHIJKLMNOPQRSTUVWXYZ";
const DIGIT: &str = "0123456789";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CharClass {
    Lower,
    Upper,
    Digit,
    Symbol,
}

impl CharClass {
    pub const ALL: [CharClass; 4] = [
        CharClass::Lower,
        CharClass::Upper,
        CharClass::Digit,
        CharClass::Symbol,
    ];
}

/// Machine-readable password requirements of a service.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PasswordPolicy {
    pub min_length: usize,
    pub max_length: usize,
    pub classes: BTreeSet<CharClass>,
    #[serde(default)]
    pub symbols: String,
    #[serde(default)]
    pub min_per_class: BTreeMap<CharClass, usize>,
}

impl Default for PasswordPolicy {
    fn default() -> Self {
        PasswordPolicy {
            min_length: 12,
            max_length: 32,
            classes: CharClass::ALL.into_iter().collect(),
            symbols: "!#$%&*+-=?@^_".to_string(),
            min_per_class: CharClass::ALL.into_iter().map(|c| (c, 1)).collect(),
        }
    }
}

impl PasswordPolicy {
    pub fn new(min_length: usize, max_length: usize, classes: &[CharClass]) -> Self {
        PasswordPolicy {
            min_length,
            max_length,
            classes: classes.iter().copied().collect(),
            symbols: String::new(),
            min_per_class: BTreeMap::new(),
        }
    }

    pub fn with_symbols(mut self, symbols: &str) -> Self {
        self.symbols = symbols.to_string();
        self
    }

    pub fn with_min(mut self, class: CharClass, count: usize) -> Self {
        self.min_per_class.insert(class, count);
        self
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let policy: PasswordPolicy =
            serde_json::from_str(json).map_err(|e| Error::Policy(e.to_string()))?;
        policy.check()?;
        Ok(policy)
    }

    /// Canonical JSON form (fixed field order, sorted classes).
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("policy serialization is infallible")
    }

    /// Checks the structural invariants.
    pub fn check(&self) -> Result<()> {
        if self.min_length == 0 {
            return Err(Error::Policy("min_length must be at least 1".into()));
        }
        if self.min_length > self.max_length {
            return Err(Error::Policy("min_length exceeds max_length".into()));
        }
        if self.max_length > MAX_PASSWORD_LEN {
            return Err(Error::Policy(format!("max_length exceeds {MAX_PASSWORD_LEN}")));
        }
        if self.classes.is_empty() {
            return Err(Error::Policy("no character class allowed".into()));
        }
        for class in self.min_per_class.keys() {
            if !self.classes.contains(class) {
                return Err(Error::Policy(format!("minimum for disallowed class {class:?}")));
            }
        }
        let required: usize = self.min_per_class.values().sum();
        if required > self.max_length {
            return Err(Error::Policy("class minimums exceed max_length".into()));
        }
        if self.classes.contains(&CharClass::Symbol) {
            if self.symbols.is_empty() {
                return Err(Error::Policy("symbol class allowed but no symbols given".into()));
            }
            let mut seen = BTreeSet::new();
            for ch in self.symbols.chars() {
                if ch.is_ascii_alphanumeric() || ch.is_control() || ch.is_whitespace() {
                    return Err(Error::Policy(format!("invalid symbol {ch:?}")));
                }
                if !seen.insert(ch) {
                    return Err(Error::Policy(format!("duplicate symbol {ch:?}")));
                }
            }
        }
        if self.alphabet().len() > 256 {
            return Err(Error::Policy("alphabet larger than 256 characters".into()));
        }
        Ok(())
    }

    pub fn class_chars(&self, class: CharClass) -> Vec<char> {
        match class {
            CharClass::Lower => LOWER.chars().collect(),
            CharClass::Upper => UPPER.chars().collect(),
            CharClass::Digit => DIGIT.chars().collect(),
            CharClass::Symbol => self.symbols.chars().collect(),
        }
    }

    pub fn alphabet(&self) -> Vec<char> {
        self.classes.iter().flat_map(|c| self.class_chars(*c)).collect()
    }

    fn class_of(&self, ch: char) -> Option<CharClass> {
        if ch.is_ascii_lowercase() {
            Some(CharClass::Lower)
        } else if ch.is_ascii_uppercase() {
            Some(CharClass::Upper)
        } else if ch.is_ascii_digit() {
            Some(CharClass::Digit)
        } else if self.symbols.contains(ch) {
            Some(CharClass::Symbol)
        } else {
            None
        }
    }

    /// Length every derived password has under this policy.
    pub fn target_length(&self) -> usize {
        let base = self.max_length.min(self.min_length.max(DEFAULT_TARGET_LEN));
        base.max(self.min_per_class.values().sum())
    }

    /// Random-value length used on the first derivation attempt.
    pub fn random_len(&self) -> usize {
        (8 * self.target_length()).clamp(MIN_RANDOM_LEN, PRG_MAX_LEN)
    }
}

/// A generated password. Zeroed on drop and redacted in debug output.
#[derive(Clone, PartialEq, Eq)]
pub struct Password(String);

impl Password {
    pub fn new(text: impl Into<String>) -> Self {
        Password(text.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl Drop for Password {
    fn drop(&mut self) {
        self.0.zeroize();
    }
}

impl fmt::Debug for Password {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Password([REDACTED; {}])", self.0.chars().count())
    }
}

/// Per-account random salt.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Salt(pub [u8; SALT_LEN]);

impl Salt {
    pub fn random() -> Salt {
        let raw = crypto::random_bytes(SALT_LEN).expect("valid length");
        Salt(raw.try_into().expect("SALT_LEN octets"))
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Salt> {
        bytes
            .try_into()
            .map(Salt)
            .map_err(|_| Error::invalid(format!("salt must be {SALT_LEN} octets")))
    }
}

impl fmt::Debug for Salt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Salt({}..)", hex::encode(&self.0[..4]))
    }
}

/// Keyed random value for one account: `prg(seed, "pw-random" || salt, n)`.
pub fn generate_random(seed: &SecretBytes, salt: &Salt, n: usize) -> Result<Vec<u8>> {
    if n < MIN_RANDOM_LEN {
        return Err(Error::invalid(format!(
            "random value must be at least {MIN_RANDOM_LEN} octets"
        )));
    }
    let mut context = Vec::with_capacity(RANDOM_CONTEXT.len() + SALT_LEN);
    context.extend_from_slice(RANDOM_CONTEXT);
    context.extend_from_slice(&salt.0);
    crypto::prg(seed, &context, n)
}

struct Stream<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Stream<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Stream { bytes, pos: 0 }
    }

    /// Unbiased index in `0..n` by rejection sampling single octets.
    fn draw(&mut self, n: usize) -> Result<usize> {
        debug_assert!((1..=256).contains(&n));
        let limit = 256 - (256 % n);
        loop {
            let b = *self.bytes.get(self.pos).ok_or(Error::EntropyExhausted)? as usize;
            self.pos += 1;
            if b < limit {
                return Ok(b % n);
            }
        }
    }
}

/// Maps a random value onto a policy-compliant password.
pub fn derive_password(random: &[u8], policy: &PasswordPolicy) -> Result<Password> {
    policy.check()?;
    if random.len() < MIN_RANDOM_LEN {
        return Err(Error::invalid(format!(
            "random value must be at least {MIN_RANDOM_LEN} octets"
        )));
    }
    let (select, fixup) = random.split_at(random.len() / 2);
    let mut select = Stream::new(select);
    let mut fixup = Stream::new(fixup);

    let alphabet = policy.alphabet();
    let len = policy.target_length();
    let mut chars = Vec::with_capacity(len);
    for _ in 0..len {
        chars.push(alphabet[select.draw(alphabet.len())?]);
    }

    let mut protected = vec![false; len];
    let mut deficits = Vec::new();
    for (&class, &min) in &policy.min_per_class {
        let mut have = 0;
        for (i, ch) in chars.iter().enumerate() {
            if have == min {
                break;
            }
            if policy.class_of(*ch) == Some(class) {
                protected[i] = true;
                have += 1;
            }
        }
        deficits.push((class, min - have));
    }
    for (class, missing) in deficits {
        let pool = policy.class_chars(class);
        for _ in 0..missing {
            let open: Vec<usize> = (0..len).filter(|&i| !protected[i]).collect();
            // Σ min_per_class <= len <= 256 keeps `open` non-empty and drawable.
            let pos = open[fixup.draw(open.len())?];
            chars[pos] = pool[fixup.draw(pool.len())?];
            protected[pos] = true;
        }
    }

    let password = Password(chars.into_iter().collect());
    debug_assert!(validate(&password, policy));
    Ok(password)
}

/// Full pipeline with deterministic retry: on entropy exhaustion the random
/// value length doubles, so every implementation lands on the same password.
pub fn derive_with<F>(policy: &PasswordPolicy, mut random_for: F) -> Result<Password>
where
    F: FnMut(usize) -> Result<Vec<u8>>,
{
    let mut n = policy.random_len();
    loop {
        let mut random = random_for(n)?;
        let out = derive_password(&random, policy);
        random.zeroize();
        match out {
            Err(Error::EntropyExhausted) if n < PRG_MAX_LEN => n = (n * 2).min(PRG_MAX_LEN),
            other => return other,
        }
    }
}

pub fn password_for(seed: &SecretBytes, salt: &Salt, policy: &PasswordPolicy) -> Result<Password> {
    derive_with(policy, |n| generate_random(seed, salt, n))
}

/// True iff length bounds, class membership and per-class minimums hold.
pub fn validate(password: &Password, policy: &PasswordPolicy) -> bool {
    let len = password.0.chars().count();
    if len < policy.min_length || len > policy.max_length {
        return false;
    }
    let mut counts: BTreeMap<CharClass, usize> = BTreeMap::new();
    for ch in password.0.chars() {
        match policy.class_of(ch) {
            Some(class) if policy.classes.contains(&class) => *counts.entry(class).or_default() += 1,
            _ => return false,
        }
    }
    policy
        .min_per_class
        .iter()
        .all(|(class, min)| counts.get(class).copied().unwrap_or(0) >= *min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use CharClass::*;

    fn lower_digit(min: usize, max: usize) -> PasswordPolicy {
        PasswordPolicy::new(min, max, &[Lower, Digit]).with_min(Digit, 1)
    }

    #[test]
    fn validate_examples() {
        let p = lower_digit(4, 8);
        assert!(validate(&Password::new("abc1"), &p));
        assert!(!validate(&Password::new("abcd"), &p));
        assert!(!validate(&Password::new("ABC1"), &p));
        assert!(!validate(&Password::new("ab1"), &p));
        assert!(!validate(&Password::new("abcdefgh1"), &p));
    }

    #[test]
    fn derive_twelve_lower_digit() {
        let p = lower_digit(12, 12);
        let random = vec![0xA5u8; 64];
        let pw = derive_password(&random, &p).unwrap();
        assert_eq!(pw.as_str().len(), 12);
        assert!(pw.as_str().chars().any(|c| c.is_ascii_digit()));
        assert!(pw.as_str().chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit()));
        assert_eq!(pw, derive_password(&random, &p).unwrap());
    }

    #[test]
    fn fixup_forces_minimums_from_degenerate_stream() {
        // all-zero selection stream yields "aaaa...": every minimum needs the fix-up pass
        let p = PasswordPolicy::new(8, 8, &[Lower, Upper, Digit, Symbol])
            .with_symbols("!@")
            .with_min(Upper, 2)
            .with_min(Digit, 3)
            .with_min(Symbol, 3);
        let pw = derive_password(&[0u8; 64], &p).unwrap();
        assert!(validate(&pw, &p), "{}", pw.as_str());
    }

    #[test]
    fn target_length_rule() {
        assert_eq!(PasswordPolicy::new(8, 64, &[Lower]).target_length(), 16);
        assert_eq!(PasswordPolicy::new(20, 64, &[Lower]).target_length(), 20);
        assert_eq!(PasswordPolicy::new(4, 10, &[Lower]).target_length(), 10);
        let p = PasswordPolicy::new(4, 30, &[Lower, Digit]).with_min(Lower, 10).with_min(Digit, 10);
        assert_eq!(p.target_length(), 20);
    }

    #[test]
    fn exhaustion_is_reported() {
        // 0xFF is always rejected for a 10-symbol alphabet (limit 250)
        let p = PasswordPolicy::new(12, 12, &[Digit]);
        assert_eq!(derive_password(&[0xFF; 64], &p), Err(Error::EntropyExhausted));
        assert!(matches!(derive_password(&[0u8; 63], &p), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn policy_errors() {
        assert!(PasswordPolicy::new(9, 8, &[Lower]).check().is_err());
        assert!(PasswordPolicy::new(0, 8, &[Lower]).check().is_err());
        assert!(PasswordPolicy::new(1, 8, &[]).check().is_err());
        assert!(PasswordPolicy::new(1, 8, &[Lower]).with_min(Digit, 1).check().is_err());
        assert!(PasswordPolicy::new(1, 4, &[Lower, Digit]).with_min(Digit, 5).check().is_err());
        assert!(PasswordPolicy::new(1, 8, &[Symbol]).check().is_err());
        assert!(PasswordPolicy::new(1, 8, &[Symbol]).with_symbols("!!").check().is_err());
        assert!(PasswordPolicy::new(1, 8, &[Symbol]).with_symbols("a!").check().is_err());
        assert!(PasswordPolicy::new(1, 300, &[Lower]).check().is_err());
        assert!(matches!(
            derive_password(&[0u8; 64], &PasswordPolicy::new(3, 2, &[Lower])),
            Err(Error::Policy(_))
        ));
    }

    #[test]
    fn policy_json_schema() {
        let json = r#"{"min_length":8,"max_length":20,"classes":["digit","lower"],"symbols":"","min_per_class":{"digit":2}}"#;
        let p = PasswordPolicy::from_json(json).unwrap();
        assert_eq!(p, lower_digit(8, 20).with_min(Digit, 2));
        assert_eq!(
            p.to_json(),
            r#"{"min_length":8,"max_length":20,"classes":["lower","digit"],"symbols":"","min_per_class":{"digit":2}}"#
        );
        assert!(PasswordPolicy::from_json(r#"{"min_length":8}"#).is_err());
        assert!(PasswordPolicy::from_json(&json.replace("20", "2")).is_err());
    }

    #[test]
    fn generate_random_contract() {
        let seed = SecretBytes::new(vec![1; 32]).unwrap();
        let s1 = Salt([2; 32]);
        let s2 = Salt([3; 32]);
        let a = generate_random(&seed, &s1, 64).unwrap();
        assert_eq!(a, generate_random(&seed, &s1, 64).unwrap());
        assert_ne!(a, generate_random(&seed, &s2, 64).unwrap());
        assert_eq!(generate_random(&seed, &s1, 100).unwrap().len(), 100);
        assert!(generate_random(&seed, &s1, 63).is_err());
    }

    #[test]
    fn retry_doubles_random_length() {
        let p = PasswordPolicy::new(12, 12, &[Digit]);
        let mut asked = Vec::new();
        let pw = derive_with(&p, |n| {
            asked.push(n);
            // first attempt is all-reject, second is usable
            Ok(if asked.len() == 1 { vec![0xFF; n] } else { vec![7; n] })
        })
        .unwrap();
        assert_eq!(asked, vec![p.random_len(), 2 * p.random_len()]);
        assert_eq!(pw.as_str(), "777777777777");
    }

    #[test]
    fn password_debug_redacted() {
        assert!(!format!("{:?}", Password::new("secret")).contains("secret"));
    }
}
