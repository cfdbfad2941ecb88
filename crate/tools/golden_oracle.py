#!/usr/bin/env python3
# Copyright 2026 The PASCO Authors
# SPDX-License-Identifier: Apache-2.0
"""Independent reference for the deterministic primitives.

Regenerates crates/core/tests/data/golden.json using only the Python
standard library. Run from the repository root.
"""

import base64
import hashlib
import hmac
import json
import sys

PRG_MAX_LEN = 8192
MIN_RANDOM_LEN = 64
CLASS_ORDER = ["lower", "upper", "digit", "symbol"]
FIXED = {
    "lower": "abcdefghijklmnopqrstuvwxyz",
    "upper": "ABCDEFGHIJKLMNOPQRSTUVWXYZ",
    "digit": "0123456789",
}


class Exhausted(Exception):
    pass


def b64(b):
    return base64.b64encode(b).decode()


def extract(salt, ikm):
    return hmac.new(salt, ikm, hashlib.sha256).digest()


def prg(key, context, n):
    prk = extract(b"palpas/prg", key)
    out = b""
    i = 1
    while len(out) < n:
        out += hmac.new(prk, i.to_bytes(4, "big") + context, hashlib.sha256).digest()
        i += 1
    return out[:n]


def kdf(key, label):
    prk = extract(b"palpas/kdf", key)
    # One HKDF-Expand block suffices for 32 octets.
    return hmac.new(prk, label.encode() + b"\x01", hashlib.sha256).digest()


def mac(key, msg):
    return hmac.new(extract(b"palpas/mac", key), msg, hashlib.sha256).digest()


def account_id(k_data, canonical_url):
    return mac(kdf(k_data, "mac"), canonical_url.encode())


def generate_random(seed, salt, n):
    return prg(seed, b"pw-random" + salt, n)


def class_chars(policy, cls):
    return policy.get("symbols", "") if cls == "symbol" else FIXED[cls]


def class_of(policy, ch):
    for cls in CLASS_ORDER:
        if ch in class_chars(policy, cls):
            return cls
    return None


def target_length(policy):
    base = min(policy["max_length"], max(policy["min_length"], 16))
    return max(base, sum(policy.get("min_per_class", {}).values()))


def random_len(policy):
    return min(max(8 * target_length(policy), MIN_RANDOM_LEN), PRG_MAX_LEN)


class Stream:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def draw(self, n):
        limit = 256 - 256 % n
        while True:
            if self.pos >= len(self.data):
                raise Exhausted()
            b = self.data[self.pos]
            self.pos += 1
            if b < limit:
                return b % n


def derive_password(random, policy):
    half = len(random) // 2
    select, fixup = Stream(random[:half]), Stream(random[half:])
    classes = [c for c in CLASS_ORDER if c in policy["classes"]]
    alphabet = "".join(class_chars(policy, c) for c in classes)
    length = target_length(policy)
    chars = [alphabet[select.draw(len(alphabet))] for _ in range(length)]

    mins = policy.get("min_per_class", {})
    protected = [False] * length
    deficits = []
    for cls in CLASS_ORDER:
        if cls not in mins:
            continue
        have = 0
        for i, ch in enumerate(chars):
            if have == mins[cls]:
                break
            if class_of(policy, ch) == cls:
                protected[i] = True
                have += 1
        deficits.append((cls, mins[cls] - have))
    for cls, missing in deficits:
        pool = class_chars(policy, cls)
        for _ in range(missing):
            open_ = [i for i in range(length) if not protected[i]]
            pos = open_[fixup.draw(len(open_))]
            chars[pos] = pool[fixup.draw(len(pool))]
            protected[pos] = True
    return "".join(chars)


def password_for(seed, salt, policy):
    n = random_len(policy)
    while True:
        try:
            return derive_password(generate_random(seed, salt, n), policy), n
        except Exhausted:
            if n >= PRG_MAX_LEN:
                raise
            n = min(2 * n, PRG_MAX_LEN)


def det(label, n):
    """Deterministic test bytes."""
    return prg(hashlib.sha256(label.encode()).digest(), b"golden", n)


POLICIES = [
    {"min_length": 12, "max_length": 32, "classes": ["lower", "upper", "digit", "symbol"],
     "symbols": "!#$%&*+-=?@^_", "min_per_class": {"lower": 1, "upper": 1, "digit": 1, "symbol": 1}},
    {"min_length": 4, "max_length": 4, "classes": ["digit"], "symbols": "", "min_per_class": {}},
    {"min_length": 20, "max_length": 64, "classes": ["lower", "digit"], "symbols": "",
     "min_per_class": {"digit": 6}},
    {"min_length": 8, "max_length": 10, "classes": ["upper", "symbol"], "symbols": "~.",
     "min_per_class": {"upper": 3, "symbol": 5}},
    {"min_length": 1, "max_length": 256, "classes": ["lower", "upper", "digit"], "symbols": "",
     "min_per_class": {"lower": 30, "upper": 30, "digit": 40}},
    {"min_length": 16, "max_length": 16, "classes": ["lower"], "symbols": "",
     "min_per_class": {"lower": 16}},
]


# Digits plus 119 arrow and operator symbols give a 129-character alphabet,
# the worst case for rejection sampling.
WIDE_SYMBOLS = "".join(chr(c) for c in range(0x2190, 0x2190 + 119))
WIDE = {"min_length": 16, "max_length": 16, "classes": ["digit", "symbol"],
        "symbols": WIDE_SYMBOLS, "min_per_class": {}}
# Seed index whose first random value runs dry, forcing one doubling.
WIDE_RETRY_SEED = 19080


def vector(op, inputs, output=None, **extra):
    v = {"op": op, "inputs": inputs}
    if output is not None:
        v["output"] = b64(output)
    v.update(extra)
    return v


def password_vector(op, inputs, policy, run):
    inputs = {**inputs, "policy": policy}
    try:
        pw, n = run()
    except Exhausted:
        return vector(op, inputs, error="entropy-exhausted")
    extra = {"random_len": n} if n is not None else {}
    return vector(op, inputs, pw.encode(), **extra)


def build():
    vectors = []
    for i, (klen, ctx, n) in enumerate([(32, b"", 1), (32, b"ctx", 32), (32, b"ctx", 33),
                                        (16, b"pw-random", 200), (64, b"x" * 40, 1000),
                                        (32, b"", PRG_MAX_LEN)]):
        key = det(f"prg-key-{i}", klen)
        vectors.append(vector("prg", {"key": b64(key), "context": b64(ctx), "len": n}, prg(key, ctx, n)))
    for i, label in enumerate(["enc", "mac", "https://sss1.example", "https://sss2.example", "a" * 100]):
        key = det(f"kdf-key-{i}", 32)
        vectors.append(vector("kdf", {"key": b64(key), "label": b64(label.encode())}, kdf(key, label)))
    for i, msg in enumerate([b"", b"abc", b"abc\x00", bytes(range(256))]):
        key = det(f"mac-key-{i}", 32)
        vectors.append(vector("mac", {"key": b64(key), "message": b64(msg)}, mac(key, msg)))
    for i, url in enumerate(["https://example.com", "https://mail.example/login", "http://example.com:8080/a"]):
        k = det(f"acct-key-{i}", 32)
        vectors.append(vector("account_id", {"k_data": b64(k), "url": b64(url.encode())}, account_id(k, url)))
    for i, policy in enumerate(POLICIES):
        for j in range(3):
            random = det(f"derive-{i}-{j}", random_len(policy))
            vectors.append(password_vector("derive_password", {"random": b64(random)}, policy,
                                           lambda: (derive_password(random, policy), None)))
        seed, salt = det(f"seed-{i}", 32), det(f"salt-{i}", 32)
        vectors.append(password_vector("password_for", {"seed": b64(seed), "salt": b64(salt)}, policy,
                                       lambda: password_for(seed, salt, policy)))
    seed, salt = det(f"seed-x-{WIDE_RETRY_SEED}", 32), det(f"salt-x-{WIDE_RETRY_SEED}", 32)
    assert password_for(seed, salt, WIDE)[1] > random_len(WIDE)
    vectors.append(password_vector("password_for", {"seed": b64(seed), "salt": b64(salt)}, WIDE,
                                   lambda: password_for(seed, salt, WIDE)))
    # Drained streams must fail the same way everywhere.
    vectors.append(password_vector("derive_password", {"random": b64(bytes([255] * 64))}, POLICIES[0],
                                   lambda: (derive_password(bytes([255] * 64), POLICIES[0]), None)))
    return vectors


if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else "crates/core/tests/data/golden.json"
    with open(out, "w", encoding="utf-8") as f:
        json.dump(build(), f, indent=1, ensure_ascii=False)
        f.write("\n")
