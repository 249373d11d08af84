"""Hash-based primitives: commitments, Merkle proofs, hash-chain threshold
proofs, byte-wise Shamir sharing, and Ed25519 signing/sealing.

Everything here is a pure function of its inputs. Digests are raw 32-byte
SHA-256 outputs; serialized forms are lowercase hex. Domain-separation tags
("leaf", "node", "attr", "revoc") are byte-exact protocol constants — changing
them breaks every fixture downstream.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
from dataclasses import dataclass
from typing import Any

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.asymmetric.x25519 import (
    X25519PrivateKey,
    X25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305

DIGEST_LEN = 32
SALT_LEN = 16

TAG_LEAF = b"leaf"
TAG_NODE = b"node"
TAG_ATTR = b"attr"
TAG_REVOC = b"revoc"

Digest32 = bytes


class CryptoError(ValueError):
    """Precondition violation in a cryptographic operation."""


def sha256(data: bytes) -> Digest32:
    """System hash function: SHA-256, 32 bytes out."""
    return hashlib.sha256(data).digest()


def iterate_hash(value: Digest32, rounds: int) -> Digest32:
    """Apply the system hash `rounds` times (H^rounds)."""
    if rounds < 0:
        raise CryptoError("hash iteration count must be non-negative")
    for _ in range(rounds):
        value = sha256(value)
    return value


def canonical_bytes(obj: Any) -> bytes:
    """Canonical JSON encoding used for all signing and digest inputs.

    Sorted keys, no whitespace, ASCII-escaped — byte-identical across runs
    and implementations of the same wire format.
    """
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("ascii")


# ---------------------------------------------------------------------------
# Signatures (Ed25519: 32-byte seeds/public keys, 64-byte deterministic sigs)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KeyPair:
    signing_key: bytes     # 32-byte seed; never serialized unencrypted
    verification_key: bytes

    def __post_init__(self) -> None:
        if len(self.signing_key) != 32 or len(self.verification_key) != 32:
            raise CryptoError("key material must be 32 bytes")


def generate_keypair(seed: bytes) -> KeyPair:
    """Derive a keypair deterministically from a 32-byte seed."""
    if len(seed) != 32:
        raise CryptoError(f"seed must be 32 bytes, got {len(seed)}")
    sk = Ed25519PrivateKey.from_private_bytes(seed)
    vk = sk.public_key().public_bytes_raw()
    return KeyPair(signing_key=seed, verification_key=vk)


def sign(signing_key: bytes, message: bytes) -> bytes:
    """Deterministic 64-byte signature over message."""
    return Ed25519PrivateKey.from_private_bytes(signing_key).sign(message)


def verify(verification_key: bytes, message: bytes, signature: bytes) -> bool:
    """True iff signature is valid. Malformed inputs return False, never raise."""
    try:
        Ed25519PublicKey.from_public_bytes(verification_key).verify(signature, message)
        return True
    except (InvalidSignature, ValueError, TypeError):
        return False


# ---------------------------------------------------------------------------
# Salted attribute commitments
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Commitment:
    attr_name: str
    digest: Digest32


def commit_attribute(attr_name: str, value: str, salt: bytes) -> Commitment:
    """Binding, hiding (given random salt) commitment to one attribute.

    digest = H("attr" || name || 0x00 || canonical_value || 0x00 || salt).
    """
    if not attr_name:
        raise CryptoError("attr_name must be non-empty")
    if len(salt) != SALT_LEN:
        raise CryptoError(f"salt must be {SALT_LEN} bytes")
    data = TAG_ATTR + attr_name.encode("utf-8") + b"\x00" + value.encode("utf-8") + b"\x00" + salt
    return Commitment(attr_name=attr_name, digest=sha256(data))


# ---------------------------------------------------------------------------
# Merkle trees (selective-disclosure carrier)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MerklePath:
    leaf_index: int
    siblings: tuple[tuple[str, Digest32], ...]  # (side of sibling: "left"|"right", digest)


def _leaf_hash(leaf: Digest32) -> Digest32:
    return sha256(TAG_LEAF + leaf)


def _node_hash(left: Digest32, right: Digest32) -> Digest32:
    return sha256(TAG_NODE + left + right)


def _next_level(level: list[Digest32]) -> list[Digest32]:
    if len(level) % 2 == 1:
        level = level + [level[-1]]  # odd level duplicates last node
    return [_node_hash(level[i], level[i + 1]) for i in range(0, len(level), 2)]


def merkle_root(leaves: list[Digest32]) -> Digest32:
    """Root of the duplication-padded binary tree over leaf digests."""
    if not leaves:
        raise CryptoError("merkle tree needs at least one leaf")
    level = [_leaf_hash(l) for l in leaves]
    while len(level) > 1:
        level = _next_level(level)
    return level[0]


def merkle_prove(leaves: list[Digest32], index: int) -> MerklePath:
    """Inclusion path for leaves[index]; verifies against merkle_root(leaves)."""
    if not leaves:
        raise CryptoError("merkle tree needs at least one leaf")
    if not 0 <= index < len(leaves):
        raise CryptoError(f"leaf index {index} out of range for {len(leaves)} leaves")
    siblings: list[tuple[str, Digest32]] = []
    level = [_leaf_hash(l) for l in leaves]
    i = index
    while len(level) > 1:
        if len(level) % 2 == 1:
            level = level + [level[-1]]
        if i % 2 == 0:
            siblings.append(("right", level[i + 1]))
        else:
            siblings.append(("left", level[i - 1]))
        level = [_node_hash(level[j], level[j + 1]) for j in range(0, len(level), 2)]
        i //= 2
    return MerklePath(leaf_index=index, siblings=tuple(siblings))


def merkle_verify(root: Digest32, leaf: Digest32, path: MerklePath) -> bool:
    """Deterministic path check; malformed paths simply fail."""
    node = _leaf_hash(leaf)
    i = path.leaf_index
    for side, digest in path.siblings:
        if side == "left":
            if i % 2 != 1:
                return False
            node = _node_hash(digest, node)
        elif side == "right":
            if i % 2 != 0:
                return False
            node = _node_hash(node, digest)
        else:
            return False
        i //= 2
    return i == 0 and node == root


# ---------------------------------------------------------------------------
# Hash-chain threshold proofs (v >= t without revealing v)
# ---------------------------------------------------------------------------

V_MAX_CAP = 2 ** 16


@dataclass(frozen=True)
class ChainAnchor:
    attr_name: str
    v_max: int
    anchor: Digest32


def chain_issue(seed: bytes, value: int, v_max: int, attr_name: str = "") -> tuple[Digest32, ChainAnchor]:
    """Issue a hash chain for an integer attribute.

    holder_token = H^(v_max - value)(seed); anchor = H^v_max(seed). The holder
    can walk the token forward but never backward, so it can prove v >= t for
    any t <= value and nothing more.
    """
    if len(seed) != 32:
        raise CryptoError("chain seed must be 32 bytes")
    if not 0 <= v_max <= V_MAX_CAP:
        raise CryptoError(f"v_max must be in [0, {V_MAX_CAP}]")
    if not 0 <= value <= v_max:
        raise CryptoError(f"value {value} out of range [0, {v_max}]")
    holder_token = iterate_hash(seed, v_max - value)
    anchor = iterate_hash(holder_token, value)
    return holder_token, ChainAnchor(attr_name=attr_name, v_max=v_max, anchor=anchor)


def threshold_prove(holder_token: Digest32, value: int, threshold: int) -> Digest32:
    """proof = H^(value - threshold)(holder_token). Requires value >= threshold >= 0."""
    if threshold < 0:
        raise CryptoError("threshold must be non-negative")
    if value < threshold:
        raise CryptoError(f"cannot prove value >= {threshold}: value is smaller")
    return iterate_hash(holder_token, value - threshold)


def threshold_verify(anchor: ChainAnchor, threshold: int, proof: Digest32) -> bool:
    """True iff H^threshold(proof) equals the anchor. Learns only v >= threshold."""
    if threshold < 0 or threshold > anchor.v_max:
        return False
    if len(proof) != DIGEST_LEN:
        return False
    return iterate_hash(proof, threshold) == anchor.anchor


# ---------------------------------------------------------------------------
# k-of-n secret sharing over GF(256), byte-wise
# ---------------------------------------------------------------------------

MAX_SHARES = 16
MAX_SECRET_LEN = 64


@dataclass(frozen=True)
class SecretShare:
    index: int        # x-coordinate, 1..n
    payload: bytes    # threshold byte k, then one share byte per secret byte
    checksum: Digest32


def _gf_mul(a: int, b: int) -> int:
    # carry-less multiply mod the AES polynomial x^8+x^4+x^3+x+1
    p = 0
    while b:
        if b & 1:
            p ^= a
        a <<= 1
        if a & 0x100:
            a ^= 0x11B
        b >>= 1
    return p


def _gf_inv(a: int) -> int:
    if a == 0:
        raise CryptoError("no inverse of 0 in GF(256)")
    # a^254 = a^-1
    result, base, exp = 1, a, 254
    while exp:
        if exp & 1:
            result = _gf_mul(result, base)
        base = _gf_mul(base, base)
        exp >>= 1
    return result


def share_split(secret: bytes, k: int, n: int, rng: random.Random | None = None) -> list[SecretShare]:
    """Split secret into n shares, any k of which reconstruct it.

    Byte-wise polynomial sharing: each secret byte is the constant term of a
    fresh random degree-(k-1) polynomial over GF(256) evaluated at x = 1..n.
    """
    if not 1 <= k <= n <= MAX_SHARES:
        raise CryptoError(f"need 1 <= k <= n <= {MAX_SHARES}, got k={k}, n={n}")
    if len(secret) > MAX_SECRET_LEN:
        raise CryptoError(f"secret must be at most {MAX_SECRET_LEN} bytes")
    rand_byte = rng.randrange if rng is not None else (lambda _: os.urandom(1)[0])
    checksum = sha256(secret)
    share_bytes = [bytearray() for _ in range(n)]
    for byte in secret:
        coeffs = [byte] + [rand_byte(256) for _ in range(k - 1)]
        for x in range(1, n + 1):
            y, xp = 0, 1
            for c in coeffs:
                y ^= _gf_mul(c, xp)
                xp = _gf_mul(xp, x)
            share_bytes[x - 1].append(y)
    return [
        SecretShare(index=x, payload=bytes([k]) + bytes(share_bytes[x - 1]), checksum=checksum)
        for x in range(1, n + 1)
    ]


def share_combine(shares: list[SecretShare]) -> bytes:
    """Lagrange-interpolate at x=0 and validate against the embedded checksum."""
    if not shares:
        raise CryptoError("no shares given")
    k = shares[0].payload[0]
    length = len(shares[0].payload) - 1
    for s in shares:
        if not s.payload or s.payload[0] != k or len(s.payload) - 1 != length:
            raise CryptoError("shares disagree on threshold or secret length")
        if s.checksum != shares[0].checksum:
            raise CryptoError("shares disagree on checksum")
    indices = [s.index for s in shares]
    if len(set(indices)) != len(indices):
        raise CryptoError("duplicate share indices")
    if any(not 1 <= i <= MAX_SHARES for i in indices):
        raise CryptoError("share index out of range")
    if len(shares) < k:
        raise CryptoError(f"need at least {k} shares, got {len(shares)}")
    use = shares[:k]
    secret = bytearray()
    for pos in range(length):
        acc = 0
        for i, si in enumerate(use):
            num, den = 1, 1
            for j, sj in enumerate(use):
                if i == j:
                    continue
                num = _gf_mul(num, sj.index)
                den = _gf_mul(den, si.index ^ sj.index)
            acc ^= _gf_mul(si.payload[1 + pos], _gf_mul(num, _gf_inv(den)))
        secret.append(acc)
    result = bytes(secret)
    if sha256(result) != shares[0].checksum:
        raise CryptoError("reconstruction failed checksum validation")
    return result


# ---------------------------------------------------------------------------
# Ed25519 -> X25519 conversion + anonymous sealing (envelope building block)
# ---------------------------------------------------------------------------

_P = 2 ** 255 - 19


def ed25519_pk_to_x25519(verification_key: bytes) -> bytes:
    """Map an Ed25519 public key to its X25519 (Montgomery u) form.

    The Ed25519 encoding is the Edwards y-coordinate (plus a sign bit);
    u = (1 + y) / (1 - y) mod 2^255 - 19. Same map libsodium uses.
    """
    if len(verification_key) != 32:
        raise CryptoError("verification key must be 32 bytes")
    y = int.from_bytes(verification_key, "little") & ((1 << 255) - 1)
    if y >= _P or y == 1:
        raise CryptoError("invalid Ed25519 public key")
    u = (1 + y) * pow(1 - y, _P - 2, _P) % _P
    return u.to_bytes(32, "little")


def ed25519_seed_to_x25519_sk(seed: bytes) -> bytes:
    """Derive the X25519 private scalar matching ed25519_pk_to_x25519."""
    if len(seed) != 32:
        raise CryptoError("seed must be 32 bytes")
    h = bytearray(hashlib.sha512(seed).digest()[:32])
    h[0] &= 248
    h[31] &= 127
    h[31] |= 64
    return bytes(h)


def _seal_key(shared: bytes, ephemeral_pk: bytes, recipient_u: bytes) -> bytes:
    return sha256(b"seal" + shared + ephemeral_pk + recipient_u)


def seal_to(recipient_vk: bytes, plaintext: bytes, nonce: bytes, ephemeral_seed: bytes) -> bytes:
    """Encrypt to an Ed25519 verification key; sender stays anonymous.

    Output is ephemeral_x25519_pk (32 bytes) || AEAD ciphertext. The caller
    supplies the 12-byte nonce and 32-byte ephemeral seed (RNG is injected
    everywhere for reproducible scenarios).
    """
    if len(nonce) != 12:
        raise CryptoError("nonce must be 12 bytes")
    recipient_u = ed25519_pk_to_x25519(recipient_vk)
    esk = X25519PrivateKey.from_private_bytes(ed25519_seed_to_x25519_sk(ephemeral_seed))
    epk = esk.public_key().public_bytes_raw()
    shared = esk.exchange(X25519PublicKey.from_public_bytes(recipient_u))
    key = _seal_key(shared, epk, recipient_u)
    return epk + ChaCha20Poly1305(key).encrypt(nonce, plaintext, None)


def open_sealed(recipient_keys: KeyPair, sealed: bytes, nonce: bytes) -> bytes:
    """Invert seal_to. Raises CryptoError on any authentication failure."""
    if len(sealed) < 32 + 16:
        raise CryptoError("sealed payload truncated")
    epk, ct = sealed[:32], sealed[32:]
    sk = X25519PrivateKey.from_private_bytes(ed25519_seed_to_x25519_sk(recipient_keys.signing_key))
    recipient_u = sk.public_key().public_bytes_raw()
    try:
        shared = sk.exchange(X25519PublicKey.from_public_bytes(epk))
        return ChaCha20Poly1305(_seal_key(shared, epk, recipient_u)).decrypt(nonce, ct, None)
    except (InvalidTag, ValueError) as exc:
        raise CryptoError("sealed payload failed authentication") from exc
