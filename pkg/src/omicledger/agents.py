"""Peer-to-peer agent runtime: pairwise DIDs, encrypted envelopes, protocol
dispatch, and connection establishment.

Every connection gets a fresh DID and keypair on each side; pairwise material
never touches the ledger. Agents are single inbox consumers — the router (or
the HTTP service's per-agent lock) serializes delivery.
"""

from __future__ import annotations

import base64
import random
from dataclasses import dataclass
from typing import Callable, Optional

from omicledger import crypto
from omicledger.crypto import KeyPair, canonical_bytes, sha256

DID_METHOD = "omic"

_B58_ALPHABET = "123456789ABCDEFGHJKLMNPQRSTUVWXYZabcdefghijkmnopqrstuvwxyz"


def base58_encode(data: bytes) -> str:
    num = int.from_bytes(data, "big")
    out = ""
    while num:
        num, rem = divmod(num, 58)
        out = _B58_ALPHABET[rem] + out
    pad = 0
    for b in data:
        if b == 0:
            pad += 1
        else:
            break
    return "1" * pad + (out or "")


def did_from_verification_key(verification_key: bytes) -> str:
    """did:omic:<base58 of first 16 bytes of H(vk)> — self-certifying."""
    return f"did:{DID_METHOD}:{base58_encode(sha256(verification_key)[:16])}"


class AgentError(Exception):
    """Protocol or wallet precondition violation inside an agent."""


# ---------------------------------------------------------------------------
# Envelopes
# ---------------------------------------------------------------------------

AUTHCRYPT = "authcrypt"
ANONCRYPT = "anoncrypt"

_ENV_SIG_TAG = b"env"


@dataclass(frozen=True)
class Envelope:
    to: str          # recipient verification key, hex
    mode: str
    nonce: bytes
    ciphertext: bytes

    def to_wire(self) -> dict:
        return {
            "to": self.to,
            "mode": self.mode,
            "nonce_b64": base64.b64encode(self.nonce).decode("ascii"),
            "ciphertext_b64": base64.b64encode(self.ciphertext).decode("ascii"),
        }

    @classmethod
    def from_wire(cls, d: dict) -> "Envelope":
        try:
            return cls(
                to=d["to"],
                mode=d["mode"],
                nonce=_b64_canonical(d["nonce_b64"]),
                ciphertext=_b64_canonical(d["ciphertext_b64"]),
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise AgentError(f"malformed envelope: {exc}") from exc


def _b64_canonical(text: str) -> bytes:
    """Strict base64: reject any encoding that does not round-trip byte-exact
    (base64 malleability would otherwise let distinct wire forms alias)."""
    decoded = base64.b64decode(text, validate=True)
    if base64.b64encode(decoded).decode("ascii") != text:
        raise ValueError("non-canonical base64")
    return decoded


def pack(
    sender_keys: Optional[KeyPair],
    recipient_vk: bytes,
    payload: bytes,
    mode: str,
    rng: random.Random,
) -> Envelope:
    """Seal payload to recipient_vk. authcrypt proves the sender key; anoncrypt
    reveals nothing about the sender."""
    nonce = rng.randbytes(12)
    if mode == AUTHCRYPT:
        if sender_keys is None:
            raise AgentError("authcrypt requires sender keys")
        sig = crypto.sign(
            sender_keys.signing_key, _ENV_SIG_TAG + nonce + recipient_vk + payload
        )
        inner = sender_keys.verification_key + sig + payload
    elif mode == ANONCRYPT:
        inner = payload
    else:
        raise AgentError(f"unknown envelope mode {mode}")
    sealed = crypto.seal_to(recipient_vk, inner, nonce, rng.randbytes(32))
    return Envelope(to=recipient_vk.hex(), mode=mode, nonce=nonce, ciphertext=sealed)


def unpack(recipient_keys: KeyPair, envelope: Envelope) -> tuple[Optional[bytes], bytes]:
    """Open an envelope. Returns (sender_vk or None, payload)."""
    inner = crypto.open_sealed(recipient_keys, envelope.ciphertext, envelope.nonce)
    if envelope.mode == ANONCRYPT:
        return None, inner
    if envelope.mode != AUTHCRYPT:
        raise AgentError(f"unknown envelope mode {envelope.mode}")
    if len(inner) < 96:
        raise AgentError("authcrypt envelope too short")
    sender_vk, sig, payload = inner[:32], inner[32:96], inner[96:]
    if not crypto.verify(
        sender_vk,
        _ENV_SIG_TAG + envelope.nonce + recipient_keys.verification_key + payload,
        sig,
    ):
        raise AgentError("authcrypt sender authentication failed")
    return sender_vk, payload


# ---------------------------------------------------------------------------
# Wallet
# ---------------------------------------------------------------------------

WALLET_MAGIC = b"OMICWALLET1"
_KDF_SALT_LEN = 16


def derive_wallet_key(passphrase: str, salt: bytes) -> bytes:
    import hashlib

    return hashlib.scrypt(passphrase.encode("utf-8"), salt=salt, n=2**14, r=8, p=1, dklen=32)


class WalletStore:
    """JSON-serializable agent state: keys, connections, credentials, consents.

    The on-disk form is ciphertext-only after the magic header and KDF salt;
    the sealing key is derived from a passphrase (or restored from guardian
    shares).
    """

    def __init__(self, kdf_salt: bytes | None = None, rng: random.Random | None = None) -> None:
        if kdf_salt is None:
            kdf_salt = (rng.randbytes if rng else random.SystemRandom().randbytes)(_KDF_SALT_LEN)
        self.kdf_salt = kdf_salt
        self.data: dict = {
            "keys": {},            # vk hex -> {signing_key, verification_key, visibility}
            "dids": {},            # did -> {verification_key, visibility}
            "connections": {},     # conn_id -> PairwiseConnection dict
            "credentials": [],     # stored credential records
            "holder_tokens": {},   # credential serial -> {attr -> token hex}
            "consents": [],
            "recovery": None,
            "seen_message_ids": [],
            "used_invitations": [],
            "issued_nonces": {},   # presentation-request nonce hex -> purpose_id
        }

    # -- key management ----------------------------------------------------

    def add_keypair(self, keys: KeyPair, visibility: str) -> None:
        self.data["keys"][keys.verification_key.hex()] = {
            "signing_key": keys.signing_key.hex(),
            "verification_key": keys.verification_key.hex(),
            "visibility": visibility,
        }

    def keypair(self, vk_hex: str) -> KeyPair:
        rec = self.data["keys"].get(vk_hex)
        if rec is None:
            raise AgentError(f"no key {vk_hex[:12]} in wallet")
        return KeyPair(
            signing_key=bytes.fromhex(rec["signing_key"]),
            verification_key=bytes.fromhex(rec["verification_key"]),
        )

    def connection(self, conn_id: str) -> dict:
        conn = self.data["connections"].get(conn_id)
        if conn is None:
            raise AgentError(f"unknown connection {conn_id}")
        return conn

    def connection_by_their_vk(self, their_vk_hex: str) -> Optional[dict]:
        for conn in self.data["connections"].values():
            if conn["their_vk"] == their_vk_hex:
                return conn
        return None

    # -- persistence ----------------------------------------------------

    def serialize(self) -> bytes:
        return canonical_bytes(self.data)

    def equals(self, other: "WalletStore") -> bool:
        return self.serialize() == other.serialize()

    def save(self, passphrase: str, rng: random.Random) -> bytes:
        key = derive_wallet_key(passphrase, self.kdf_salt)
        return self.save_with_key(key, rng)

    def save_with_key(self, key: bytes, rng: random.Random) -> bytes:
        from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305

        nonce = rng.randbytes(12)
        ct = ChaCha20Poly1305(key).encrypt(nonce, self.serialize(), WALLET_MAGIC)
        return WALLET_MAGIC + self.kdf_salt + nonce + ct

    @classmethod
    def load(cls, blob: bytes, passphrase: str) -> "WalletStore":
        salt = cls._split(blob)[0]
        return cls.load_with_key(blob, derive_wallet_key(passphrase, salt))

    @classmethod
    def load_with_key(cls, blob: bytes, key: bytes) -> "WalletStore":
        import json

        from cryptography.exceptions import InvalidTag
        from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305

        salt, nonce, ct = cls._split(blob)
        try:
            plain = ChaCha20Poly1305(key).decrypt(nonce, ct, WALLET_MAGIC)
        except InvalidTag as exc:
            raise AgentError("wallet decryption failed: wrong key or corrupted file") from exc
        wallet = cls(kdf_salt=salt)
        wallet.data = json.loads(plain.decode("ascii"))
        return wallet

    @staticmethod
    def _split(blob: bytes) -> tuple[bytes, bytes, bytes]:
        if not blob.startswith(WALLET_MAGIC) or len(blob) < len(WALLET_MAGIC) + _KDF_SALT_LEN + 12 + 16:
            raise AgentError("not a wallet file")
        off = len(WALLET_MAGIC)
        salt = blob[off : off + _KDF_SALT_LEN]
        nonce = blob[off + _KDF_SALT_LEN : off + _KDF_SALT_LEN + 12]
        return salt, nonce, blob[off + _KDF_SALT_LEN + 12 :]


# ---------------------------------------------------------------------------
# Router (in-process transport with wire capture)
# ---------------------------------------------------------------------------

class MessageRouter:
    """Delivers envelopes to registered recipient keys, one at a time.

    Deliveries are FIFO; the capture hook sees every wire payload, which is
    what the privacy audits scan.
    """

    def __init__(self, capture: Optional[Callable[[dict], None]] = None) -> None:
        self._recipients: dict[str, "Agent"] = {}
        self._queue: list[Envelope] = []
        self.capture = capture

    def register(self, vk_hex: str, agent: "Agent") -> None:
        self._recipients[vk_hex] = agent

    def send(self, envelope: Envelope) -> None:
        if self.capture:
            self.capture(envelope.to_wire())
        self._queue.append(envelope)

    def pump(self, max_steps: int = 10_000) -> None:
        steps = 0
        while self._queue:
            steps += 1
            if steps > max_steps:
                raise AgentError("router did not quiesce")
            envelope = self._queue.pop(0)
            agent = self._recipients.get(envelope.to)
            if agent is None:
                continue  # recipient key unknown or retired; drop
            for out in agent.receive(envelope):
                self.send(out)


# ---------------------------------------------------------------------------
# Agent
# ---------------------------------------------------------------------------

@dataclass
class ProtocolMessage:
    protocol: str
    type: str
    thread_id: str
    id: str
    body: dict

    def to_bytes(self) -> bytes:
        return canonical_bytes(
            {
                "protocol": self.protocol,
                "type": self.type,
                "thread_id": self.thread_id,
                "id": self.id,
                "body": self.body,
            }
        )

    @classmethod
    def from_bytes(cls, raw: bytes) -> "ProtocolMessage":
        import json

        try:
            d = json.loads(raw.decode("utf-8"))
            return cls(d["protocol"], d["type"], d["thread_id"], d["id"], d["body"])
        except (ValueError, KeyError, TypeError) as exc:
            raise AgentError(f"malformed protocol message: {exc}") from exc


Handler = Callable[["Agent", Optional[bytes], ProtocolMessage], list[Envelope]]


class Agent:
    """One actor: a wallet, a router registration, and protocol handlers."""

    def __init__(
        self,
        label: str,
        rng: random.Random,
        router: MessageRouter,
        clock: Callable[[], int] = lambda: 0,
        on_event: Optional[Callable[[str, dict], None]] = None,
    ) -> None:
        self.label = label
        self.rng = rng
        self.router = router
        self.clock = clock
        self.wallet = WalletStore(rng=rng)
        self.handlers: dict[str, Handler] = {"connections": _handle_connection_message}
        self._pending_invitations: dict[str, dict] = {}
        self._on_event = on_event

    def event(self, kind: str, **meta: object) -> None:
        if self._on_event:
            self._on_event(kind, {"actor": self.label, "time": self.clock(), **meta})

    # -- identity ----------------------------------------------------

    def create_did(self, visibility: str) -> tuple[str, KeyPair]:
        """Fresh DID + keypair. Public DIDs still need a NYM tx to resolve."""
        keys = crypto.generate_keypair(self.rng.randbytes(32))
        did = did_from_verification_key(keys.verification_key)
        self.wallet.add_keypair(keys, visibility)
        self.wallet.data["dids"][did] = {
            "verification_key": keys.verification_key.hex(),
            "visibility": visibility,
        }
        self.router.register(keys.verification_key.hex(), self)
        return did, keys

    def new_message_id(self) -> str:
        return self.rng.randbytes(16).hex()

    # -- connections ----------------------------------------------------

    def create_invitation(self) -> dict:
        """Out-of-band invitation carrying a one-time key."""
        keys = crypto.generate_keypair(self.rng.randbytes(32))
        invitation_id = self.rng.randbytes(16).hex()
        self.wallet.add_keypair(keys, "invitation")
        self.router.register(keys.verification_key.hex(), self)
        self._pending_invitations[invitation_id] = {
            "invite_vk": keys.verification_key.hex(),
            "label": self.label,
        }
        return {
            "id": invitation_id,
            "label": self.label,
            "invite_vk": keys.verification_key.hex(),
        }

    def accept_invitation(self, invitation: dict, label: str | None = None) -> str:
        """Start the request half of the exchange; returns the connection id."""
        conn_id = invitation["id"]
        my_did, my_keys = self.create_did("pairwise")
        confirm = sha256(
            b"confirm" + bytes.fromhex(conn_id) + my_keys.verification_key
        ).hex()
        self.wallet.data["connections"][conn_id] = {
            "conn_id": conn_id,
            "my_did": my_did,
            "my_vk": my_keys.verification_key.hex(),
            "their_did": None,
            "their_vk": None,
            "label": label or invitation.get("label", ""),
            "established_at": self.clock(),
            "state": "requested",
        }
        msg = ProtocolMessage(
            protocol="connections",
            type="request",
            thread_id=conn_id,
            id=self.new_message_id(),
            body={"did": my_did, "verification_key": my_keys.verification_key.hex(),
                  "label": self.label, "confirm": confirm},
        )
        env = pack(my_keys, bytes.fromhex(invitation["invite_vk"]), msg.to_bytes(), AUTHCRYPT, self.rng)
        self.router.send(env)
        return conn_id

    def connection_ready(self, conn_id: str) -> bool:
        conn = self.wallet.data["connections"].get(conn_id)
        return bool(conn and conn["state"] == "established")

    # -- messaging ----------------------------------------------------

    def send(self, conn_id: str, protocol: str, type_: str, thread_id: str, body: dict) -> None:
        conn = self.wallet.connection(conn_id)
        if conn["state"] != "established":
            raise AgentError(f"connection {conn_id} not established")
        keys = self.wallet.keypair(conn["my_vk"])
        msg = ProtocolMessage(protocol, type_, thread_id, self.new_message_id(), body)
        env = pack(keys, bytes.fromhex(conn["their_vk"]), msg.to_bytes(), AUTHCRYPT, self.rng)
        self.router.send(env)

    def reply(self, sender_vk: bytes, protocol: str, type_: str, thread_id: str, body: dict) -> Envelope:
        conn = self.wallet.connection_by_their_vk(sender_vk.hex())
        my_keys = self.wallet.keypair(conn["my_vk"]) if conn else None
        msg = ProtocolMessage(protocol, type_, thread_id, self.new_message_id(), body)
        return pack(my_keys, sender_vk, msg.to_bytes(), AUTHCRYPT if my_keys else ANONCRYPT, self.rng)

    def problem_report(self, sender_vk: bytes, thread_id: str, reason: str) -> Envelope:
        self.event("problem-report", thread=thread_id, reason=reason)
        return self.reply(sender_vk, "problem-report", "problem", thread_id, {"reason": reason})

    def receive(self, envelope: Envelope) -> list[Envelope]:
        """Unpack, dedupe, and route one envelope. Never raises on bad input."""
        try:
            keys = self.wallet.keypair(envelope.to)
            sender_vk, payload = unpack(keys, envelope)
            msg = ProtocolMessage.from_bytes(payload)
        except (AgentError, crypto.CryptoError) as exc:
            self.event("undeliverable", reason=str(exc))
            return []
        if msg.id in self.wallet.data["seen_message_ids"]:
            return []  # idempotent delivery
        self.wallet.data["seen_message_ids"].append(msg.id)
        if self._on_event:
            # everything this agent ever learns, for the privacy audits
            self.event(
                "received",
                protocol=msg.protocol,
                type=msg.type,
                sender=sender_vk.hex() if sender_vk else "anonymous",
                payload_b64=base64.b64encode(payload).decode("ascii"),
            )
        handler = self.handlers.get(msg.protocol)
        if handler is None:
            if msg.protocol == "problem-report":
                self.event("problem-received", thread=msg.thread_id, reason=msg.body.get("reason"))
                return []
            return [self.problem_report(sender_vk, msg.thread_id, f"unknown protocol {msg.protocol}")] if sender_vk else []
        try:
            return handler(self, sender_vk, msg)
        except AgentError as exc:
            return [self.problem_report(sender_vk, msg.thread_id, str(exc))] if sender_vk else []


def _handle_connection_message(agent: Agent, sender_vk: Optional[bytes], msg: ProtocolMessage) -> list[Envelope]:
    if msg.type == "request":
        invitation = agent._pending_invitations.pop(msg.thread_id, None)
        if invitation is None:
            if msg.thread_id in agent.wallet.data["used_invitations"]:
                raise AgentError("invitation already used")
            raise AgentError("unknown invitation")
        agent.wallet.data["used_invitations"].append(msg.thread_id)
        expected = sha256(
            b"confirm" + bytes.fromhex(msg.thread_id) + bytes.fromhex(msg.body["verification_key"])
        ).hex()
        if msg.body.get("confirm") != expected or sender_vk.hex() != msg.body["verification_key"]:
            raise AgentError("connection key confirmation failed")
        my_did, my_keys = agent.create_did("pairwise")
        agent.wallet.data["connections"][msg.thread_id] = {
            "conn_id": msg.thread_id,
            "my_did": my_did,
            "my_vk": my_keys.verification_key.hex(),
            "their_did": msg.body["did"],
            "their_vk": msg.body["verification_key"],
            "label": msg.body.get("label", ""),
            "established_at": agent.clock(),
            "state": "established",
        }
        agent.event("connection-established", conn=msg.thread_id, label=msg.body.get("label", ""))
        confirm = sha256(
            b"confirm" + bytes.fromhex(msg.thread_id) + my_keys.verification_key + sender_vk
        ).hex()
        reply = ProtocolMessage(
            protocol="connections",
            type="response",
            thread_id=msg.thread_id,
            id=agent.new_message_id(),
            body={"did": my_did, "verification_key": my_keys.verification_key.hex(),
                  "label": agent.label, "confirm": confirm},
        )
        return [pack(my_keys, sender_vk, reply.to_bytes(), AUTHCRYPT, agent.rng)]

    if msg.type == "response":
        conn = agent.wallet.data["connections"].get(msg.thread_id)
        if conn is None or conn["state"] != "requested":
            raise AgentError("unexpected connection response")
        expected = sha256(
            b"confirm"
            + bytes.fromhex(msg.thread_id)
            + bytes.fromhex(msg.body["verification_key"])
            + bytes.fromhex(conn["my_vk"])
        ).hex()
        if msg.body.get("confirm") != expected or (sender_vk and sender_vk.hex() != msg.body["verification_key"]):
            del agent.wallet.data["connections"][msg.thread_id]
            raise AgentError("connection key confirmation failed")
        conn["their_did"] = msg.body["did"]
        conn["their_vk"] = msg.body["verification_key"]
        conn["label"] = msg.body.get("label", conn["label"])
        conn["state"] = "established"
        agent.event("connection-established", conn=msg.thread_id, label=conn["label"])
        return []

    raise AgentError(f"unknown connections message type {msg.type}")


def connect(inviter: Agent, invitee: Agent, label: str | None = None) -> str:
    """Drive the invitation -> request -> response exchange to completion."""
    invitation = inviter.create_invitation()
    conn_id = invitee.accept_invitation(invitation, label=label)
    invitee.router.pump()
    if not (invitee.connection_ready(conn_id) and inviter.connection_ready(conn_id)):
        raise AgentError("connection establishment failed")
    return conn_id
