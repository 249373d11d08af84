"""Guardian recovery: trade a measured slice of self-sovereignty for the
ability to regain wallet access.

The wallet sealing key is split k-of-n; each guardian receives one share over
an authenticated-encrypted connection. Any k shares reconstruct the key and
decrypt the sealed wallet file directly, bypassing the lost passphrase.
"""

from __future__ import annotations

from omicledger import crypto
from omicledger.agents import Agent, AgentError, Envelope, ProtocolMessage, WalletStore, connect, derive_wallet_key
from omicledger.crypto import SecretShare


def share_to_wire(share: SecretShare) -> dict:
    return {
        "index": share.index,
        "payload": share.payload.hex(),
        "checksum": share.checksum.hex(),
    }


def share_from_wire(d: dict) -> SecretShare:
    return SecretShare(
        index=d["index"],
        payload=bytes.fromhex(d["payload"]),
        checksum=bytes.fromhex(d["checksum"]),
    )


class Guardian:
    """A trusted party (family member) holding one wallet-key share."""

    def __init__(self, agent: Agent) -> None:
        self.agent = agent
        agent.handlers["recovery/1"] = _guardian_handler
        agent.guardian_actor = self

    def share_for(self, owner_label: str) -> SecretShare:
        stored = self.agent.wallet.data.get("guardian_shares", {}).get(owner_label)
        if stored is None:
            raise AgentError(f"no share held for {owner_label}")
        return share_from_wire(stored)


def _guardian_handler(agent: Agent, sender_vk, msg: ProtocolMessage) -> list[Envelope]:
    if msg.type != "share":
        raise AgentError(f"unknown recovery message {msg.type}")
    shares = agent.wallet.data.setdefault("guardian_shares", {})
    shares[msg.body["owner_label"]] = msg.body["share"]
    agent.event("guardian-share-stored", owner=msg.body["owner_label"],
                index=msg.body["share"]["index"])
    return []


def configure_recovery(owner, guardians: list[Guardian], k: int) -> dict:
    """Split the owner's wallet key across guardians; returns the config."""
    n = len(guardians)
    if not 1 <= k <= n:
        raise ValueError(f"threshold k={k} must be in 1..{n}")
    wallet = owner.agent.wallet
    key = derive_wallet_key(owner.passphrase, wallet.kdf_salt)
    shares = crypto.share_split(key, k, n, owner.agent.rng)
    guardian_labels = []
    for guardian, share in zip(guardians, shares):
        conn_id = connect(guardian.agent, owner.agent)
        owner.agent.send(
            conn_id, "recovery/1", "share", owner.agent.new_message_id(),
            {"owner_label": owner.label, "share": share_to_wire(share)},
        )
        guardian_labels.append(guardian.agent.label)
    owner.ctx.router.pump()
    config = {"k": k, "guardians": guardian_labels}
    wallet.data["recovery"] = config
    owner.agent.event("recovery-configured", k=k, guardians=guardian_labels)
    return config


def recover_wallet(shares: list[SecretShare], sealed: bytes) -> WalletStore:
    """Reconstruct the sealing key from >= k shares and open the wallet file."""
    key = crypto.share_combine(shares)
    return WalletStore.load_with_key(sealed, key)
