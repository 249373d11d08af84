"""Primitive-level tests. The threshold-proof grid and Merkle completeness
checks are driven by independent brute-force oracles computed first."""

from __future__ import annotations

import hashlib
import itertools
import random

import pytest
from hypothesis import given, settings, strategies as st

from omicledger import crypto

R = random.Random(0xC0FFEE)


def rand_bytes(n: int) -> bytes:
    return bytes(R.randrange(256) for _ in range(n))


# ---------------------------------------------------------------------------
# hash
# ---------------------------------------------------------------------------

def test_hash_empty_matches_standard_vector():
    assert crypto.sha256(b"").hex() == (
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
    )


def test_hash_deterministic_and_distinct():
    x = rand_bytes(40)
    assert crypto.sha256(x) == crypto.sha256(x)
    assert crypto.sha256(b"a") != crypto.sha256(b"b")
    assert len(crypto.sha256(x)) == 32


# ---------------------------------------------------------------------------
# keys and signatures
# ---------------------------------------------------------------------------

def test_keypair_deterministic_from_seed():
    seed = rand_bytes(32)
    assert crypto.generate_keypair(seed) == crypto.generate_keypair(seed)


def test_keypair_distinct_seeds_distinct_keys():
    a = crypto.generate_keypair(rand_bytes(32))
    b = crypto.generate_keypair(rand_bytes(32))
    assert a.verification_key != b.verification_key


def test_keypair_rejects_short_seed():
    with pytest.raises(crypto.CryptoError):
        crypto.generate_keypair(b"\x00" * 31)


def test_zero_seed_golden_verification_key():
    kp = crypto.generate_keypair(bytes(32))
    assert kp.verification_key.hex() == (
        "3b6a27bcceb6a42d62a3a8d02a6f0d73653215771de243a63ac048a18b59da29"
    )


def test_sign_verify_roundtrip_and_mutations():
    # 1000 random (seed, message) pairs round-trip; a flipped bit in either
    # the message or the signature must fail
    for _ in range(1000):
        kp = crypto.generate_keypair(rand_bytes(32))
        msg = rand_bytes(R.randrange(1, 64))
        sig = crypto.sign(kp.signing_key, msg)
        assert crypto.verify(kp.verification_key, msg, sig)

        bit = R.randrange(len(msg) * 8)
        bad_msg = bytearray(msg)
        bad_msg[bit // 8] ^= 1 << (bit % 8)
        assert not crypto.verify(kp.verification_key, bytes(bad_msg), sig)

        bit = R.randrange(len(sig) * 8)
        bad_sig = bytearray(sig)
        bad_sig[bit // 8] ^= 1 << (bit % 8)
        assert not crypto.verify(kp.verification_key, msg, bytes(bad_sig))


def test_verify_wrong_key_and_garbage_never_trap():
    kp = crypto.generate_keypair(rand_bytes(32))
    other = crypto.generate_keypair(rand_bytes(32))
    sig = crypto.sign(kp.signing_key, b"msg")
    assert not crypto.verify(other.verification_key, b"msg", sig)
    assert not crypto.verify(b"short", b"msg", sig)
    assert not crypto.verify(kp.verification_key, b"msg", b"not a signature")


def test_signature_deterministic():
    kp = crypto.generate_keypair(rand_bytes(32))
    assert crypto.sign(kp.signing_key, b"m") == crypto.sign(kp.signing_key, b"m")


# ---------------------------------------------------------------------------
# commitments
# ---------------------------------------------------------------------------

def test_commit_golden_digest():
    c = crypto.commit_attribute("ldl", "3.1", bytes(16))
    assert c.digest.hex() == (
        "17c1bf127d14485bf141c12436bac984453e0dd26628ff53d894f3e6c7f0dff8"
    )


def test_commit_matches_tag_layout():
    salt = rand_bytes(16)
    c = crypto.commit_attribute("hba1c", "57", salt)
    expected = hashlib.sha256(b"attr" + b"hba1c" + b"\x00" + b"57" + b"\x00" + salt).digest()
    assert c.digest == expected


def test_commit_distinct_salts_distinct_digests():
    a = crypto.commit_attribute("ldl", "3.1", rand_bytes(16))
    b = crypto.commit_attribute("ldl", "3.1", rand_bytes(16))
    assert a.digest != b.digest


def test_commit_wrong_opening_fails():
    salt = rand_bytes(16)
    c = crypto.commit_attribute("ldl", "3.1", salt)
    assert crypto.commit_attribute("ldl", "3.1", rand_bytes(16)).digest != c.digest
    assert crypto.commit_attribute("ldl", "3.2", salt).digest != c.digest


def test_commit_binding_proxy_over_random_fixtures():
    # no altered value reproduces the digest
    for _ in range(50):
        salt = rand_bytes(16)
        value = str(R.randrange(1000))
        c = crypto.commit_attribute("attr", value, salt)
        altered = str((int(value) + 1 + R.randrange(100)) % 100000)
        assert crypto.commit_attribute("attr", altered, salt).digest != c.digest


def test_commit_rejects_empty_name_and_bad_salt():
    with pytest.raises(crypto.CryptoError):
        crypto.commit_attribute("", "v", bytes(16))
    with pytest.raises(crypto.CryptoError):
        crypto.commit_attribute("a", "v", bytes(15))


# ---------------------------------------------------------------------------
# merkle trees
# ---------------------------------------------------------------------------

def test_merkle_single_leaf_rule():
    leaf = bytes(32)
    assert crypto.merkle_root([leaf]) == hashlib.sha256(b"leaf" + leaf).digest()
    assert crypto.merkle_root([leaf]).hex() == (
        "1509f130fe6aa9fb84b8fe6709c70dafa3f1bf81e56d0ce3fba08cda179d3039"
    )


def test_merkle_two_leaf_rule():
    l0, l1 = rand_bytes(32), rand_bytes(32)
    h0 = hashlib.sha256(b"leaf" + l0).digest()
    h1 = hashlib.sha256(b"leaf" + l1).digest()
    assert crypto.merkle_root([l0, l1]) == hashlib.sha256(b"node" + h0 + h1).digest()


def test_merkle_permutation_changes_root():
    leaves = [rand_bytes(32) for _ in range(4)]
    swapped = [leaves[1], leaves[0]] + leaves[2:]
    assert crypto.merkle_root(leaves) != crypto.merkle_root(swapped)


def test_merkle_empty_rejected():
    with pytest.raises(crypto.CryptoError):
        crypto.merkle_root([])
    with pytest.raises(crypto.CryptoError):
        crypto.merkle_prove([rand_bytes(32)], 1)


def test_merkle_completeness_1_to_64_leaves():
    # every (leaf, index) proof verifies; cross-index proofs fail
    for count in range(1, 65):
        leaves = [rand_bytes(32) for _ in range(count)]
        root = crypto.merkle_root(leaves)
        for i in range(count):
            path = crypto.merkle_prove(leaves, i)
            assert len(path.siblings) == (count - 1).bit_length()
            assert crypto.merkle_verify(root, leaves[i], path)
            j = (i + 1) % count
            if j != i:
                assert not crypto.merkle_verify(root, leaves[j], path)


def test_merkle_tampered_sibling_fails():
    leaves = [rand_bytes(32) for _ in range(8)]
    root = crypto.merkle_root(leaves)
    path = crypto.merkle_prove(leaves, 3)
    side, digest = path.siblings[1]
    bad = bytearray(digest)
    bad[0] ^= 0xFF
    tampered = crypto.MerklePath(
        leaf_index=3,
        siblings=(path.siblings[0], (side, bytes(bad)), *path.siblings[2:]),
    )
    assert not crypto.merkle_verify(root, leaves[3], tampered)


# ---------------------------------------------------------------------------
# hash-chain threshold proofs
# ---------------------------------------------------------------------------

def hash_forward(value: bytes, n: int) -> bytes:
    # independent oracle: literal repeated sha256
    for _ in range(n):
        value = hashlib.sha256(value).digest()
    return value


def test_chain_issue_boundaries():
    seed = rand_bytes(32)
    token, anchor = crypto.chain_issue(seed, 3, 3)
    assert token == seed  # value == v_max: token is the seed itself
    assert anchor.anchor == hash_forward(seed, 3)

    token, anchor = crypto.chain_issue(seed, 0, 3)
    assert token == anchor.anchor == hash_forward(seed, 3)


def test_chain_issue_midpoint_oracle():
    seed = rand_bytes(32)
    token, anchor = crypto.chain_issue(seed, 2, 3)
    assert hash_forward(token, 2) == anchor.anchor


def test_chain_issue_range_errors():
    with pytest.raises(crypto.CryptoError):
        crypto.chain_issue(rand_bytes(32), 4, 3)
    with pytest.raises(crypto.CryptoError):
        crypto.chain_issue(rand_bytes(32), -1, 3)
    with pytest.raises(crypto.CryptoError):
        crypto.chain_issue(rand_bytes(31), 0, 3)


def test_threshold_grid_matches_bruteforce_oracle():
    # oracle first: the predicate table for v_max=4, then v_max=16, computed
    # by plain iterated hashing with no calls into threshold_prove/verify
    for v_max in (4, 16):
        seed = rand_bytes(32)
        oracle = {}
        chain = [seed]
        for _ in range(v_max):
            chain.append(hashlib.sha256(chain[-1]).digest())
        anchor_digest = chain[v_max]
        for value in range(v_max + 1):
            for threshold in range(v_max + 1):
                oracle[(value, threshold)] = value >= threshold

        for value in range(v_max + 1):
            token, anchor = crypto.chain_issue(seed, value, v_max)
            assert anchor.anchor == anchor_digest
            for threshold in range(v_max + 1):
                if oracle[(value, threshold)]:
                    proof = crypto.threshold_prove(token, value, threshold)
                    assert crypto.threshold_verify(anchor, threshold, proof)
                else:
                    with pytest.raises(crypto.CryptoError):
                        crypto.threshold_prove(token, value, threshold)
                    # a cheating holder can only hash forward; walking the
                    # token any number of steps never satisfies t > value
                    for steps in range(v_max - value + 1):
                        forged = hash_forward(token, steps)
                        assert not crypto.threshold_verify(anchor, threshold, forged)


def test_threshold_zero_is_vacuous():
    seed = rand_bytes(32)
    token, anchor = crypto.chain_issue(seed, 3, 5)
    proof = crypto.threshold_prove(token, 3, 0)
    assert proof == anchor.anchor
    assert crypto.threshold_verify(anchor, 0, proof)


def test_threshold_verify_rejects_junk_and_overrange():
    _, anchor = crypto.chain_issue(rand_bytes(32), 3, 5)
    assert not crypto.threshold_verify(anchor, 2, rand_bytes(32))
    assert not crypto.threshold_verify(anchor, 6, anchor.anchor)  # t > v_max
    assert not crypto.threshold_verify(anchor, -1, anchor.anchor)


# ---------------------------------------------------------------------------
# secret sharing
# ---------------------------------------------------------------------------

def test_share_single_of_single():
    shares = crypto.share_split(b"s", 1, 1, R)
    assert crypto.share_combine(shares) == b"s"


def test_share_2_of_3_all_subsets():
    secret = rand_bytes(48)
    shares = crypto.share_split(secret, 2, 3, R)
    for subset in itertools.combinations(shares, 2):
        assert crypto.share_combine(list(subset)) == secret
    assert crypto.share_combine(shares) == secret


def test_share_too_few_shares():
    shares = crypto.share_split(b"secret", 2, 3, R)
    with pytest.raises(crypto.CryptoError, match="at least 2"):
        crypto.share_combine([shares[0]])


def test_share_duplicate_indices():
    shares = crypto.share_split(b"secret", 2, 3, R)
    with pytest.raises(crypto.CryptoError, match="duplicate"):
        crypto.share_combine([shares[0], shares[0]])


def test_share_corrupted_payload_fails_checksum():
    shares = crypto.share_split(b"secret", 2, 3, R)
    bad = bytearray(shares[0].payload)
    bad[1] ^= 0x55
    corrupted = crypto.SecretShare(shares[0].index, bytes(bad), shares[0].checksum)
    with pytest.raises(crypto.CryptoError, match="checksum"):
        crypto.share_combine([corrupted, shares[1]])


def test_share_parameter_validation():
    with pytest.raises(crypto.CryptoError):
        crypto.share_split(b"s", 3, 2, R)
    with pytest.raises(crypto.CryptoError):
        crypto.share_split(b"s", 0, 1, R)
    with pytest.raises(crypto.CryptoError):
        crypto.share_split(bytes(65), 1, 1, R)


@settings(max_examples=40, deadline=None)
@given(
    secret=st.binary(min_size=0, max_size=64),
    k=st.integers(min_value=1, max_value=5),
    extra=st.integers(min_value=0, max_value=4),
    seed=st.integers(min_value=0, max_value=2**32 - 1),
)
def test_share_roundtrip_property(secret, k, extra, seed):
    n = k + extra
    rng = random.Random(seed)
    shares = crypto.share_split(secret, k, n, rng)
    picked = rng.sample(shares, k)
    assert crypto.share_combine(picked) == secret


# ---------------------------------------------------------------------------
# sealing (ECDH via converted keys + AEAD)
# ---------------------------------------------------------------------------

def test_converted_ecdh_agreement():
    from cryptography.hazmat.primitives.asymmetric.x25519 import (
        X25519PrivateKey,
        X25519PublicKey,
    )

    for _ in range(20):
        a = crypto.generate_keypair(rand_bytes(32))
        b = crypto.generate_keypair(rand_bytes(32))
        ska = X25519PrivateKey.from_private_bytes(crypto.ed25519_seed_to_x25519_sk(a.signing_key))
        skb = X25519PrivateKey.from_private_bytes(crypto.ed25519_seed_to_x25519_sk(b.signing_key))
        s1 = ska.exchange(X25519PublicKey.from_public_bytes(crypto.ed25519_pk_to_x25519(b.verification_key)))
        s2 = skb.exchange(X25519PublicKey.from_public_bytes(crypto.ed25519_pk_to_x25519(a.verification_key)))
        assert s1 == s2


def test_seal_roundtrip_tamper_and_wrong_recipient():
    recipient = crypto.generate_keypair(rand_bytes(32))
    other = crypto.generate_keypair(rand_bytes(32))
    nonce = rand_bytes(12)
    sealed = crypto.seal_to(recipient.verification_key, b"payload", nonce, rand_bytes(32))
    assert crypto.open_sealed(recipient, sealed, nonce) == b"payload"

    bad = bytearray(sealed)
    bad[40] ^= 1
    with pytest.raises(crypto.CryptoError):
        crypto.open_sealed(recipient, bytes(bad), nonce)
    with pytest.raises(crypto.CryptoError):
        crypto.open_sealed(other, sealed, nonce)
    with pytest.raises(crypto.CryptoError):
        crypto.open_sealed(recipient, sealed[:20], nonce)
