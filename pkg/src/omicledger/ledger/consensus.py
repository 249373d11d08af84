"""Three-phase BFT replication over a validator set of n = 3f+1.

Round-robin leaders (view v -> validators[v mod n]), timeout-driven view
change. A node locks on the block it COMMIT-votes; view-change votes carry the
lock so the next leader re-proposes any possibly-committed block. Locks are
claims, not signed proof bundles — sound for the crash-fault model this
artifact targets (no equivocation).

Nodes are single logical threads: the host delivers events one at a time and
sends whatever comes back. All randomness and timing live in the host.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from omicledger import crypto
from omicledger.crypto import KeyPair, canonical_bytes
from omicledger.ledger.records import (
    Block,
    GenesisConfig,
    LedgerState,
    LedgerTransaction,
    ValidationResult,
    build_genesis_block,
    validate_transaction,
)

PHASES = ("PRE_PREPARE", "PREPARE", "COMMIT", "VIEW_CHANGE")

BROADCAST = "*"


@dataclass(frozen=True)
class ConsensusMessage:
    phase: str
    view: int
    height: int
    block_hash: str  # hex
    sender: str
    signature: str = ""
    block: Optional[dict] = None  # PRE_PREPARE carries the full block
    lock: Optional[dict] = None   # VIEW_CHANGE carries {"block": dict, "view": int} or None

    def signing_bytes(self) -> bytes:
        return canonical_bytes(
            {
                "phase": self.phase,
                "view": self.view,
                "height": self.height,
                "block_hash": self.block_hash,
                "sender": self.sender,
            }
        )

    def to_dict(self) -> dict:
        d = {
            "phase": self.phase,
            "view": self.view,
            "height": self.height,
            "block_hash": self.block_hash,
            "sender": self.sender,
            "signature": self.signature,
        }
        if self.block is not None:
            d["block"] = self.block
        if self.lock is not None:
            d["lock"] = self.lock
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ConsensusMessage":
        return cls(
            phase=d["phase"],
            view=d["view"],
            height=d["height"],
            block_hash=d["block_hash"],
            sender=d["sender"],
            signature=d.get("signature", ""),
            block=d.get("block"),
            lock=d.get("lock"),
        )


@dataclass
class Outgoing:
    dest: str  # node id or BROADCAST
    message: ConsensusMessage


@dataclass
class ValidatorNode:
    node_id: str
    keys: KeyPair
    genesis: GenesisConfig
    timeout_ticks: int = 12

    def __post_init__(self) -> None:
        self.validator_ids = [v["id"] for v in self.genesis.validators]
        self.validator_keys = self.genesis.validator_keys()
        self.n = len(self.validator_ids)
        self.f = self.genesis.f
        self.quorum = 2 * self.f + 1
        self.chain: list[Block] = []
        self.state = LedgerState()
        genesis_block = build_genesis_block(self.genesis)
        self.state.apply_block(genesis_block)
        self.chain.append(genesis_block)
        self.view = 0
        self.mempool: dict[tuple[str, str], LedgerTransaction] = {}
        self.prepares: dict[tuple[int, int, str], set[str]] = {}
        self.commits: dict[tuple[int, int, str], dict[str, str]] = {}
        self.proposals: dict[tuple[int, int, str], Block] = {}
        self.lock: Optional[tuple[Block, int]] = None
        self.prepare_sent: set[tuple[int, int]] = set()
        self.commit_sent: set[tuple[int, int]] = set()
        self.proposed: set[tuple[int, int]] = set()
        self.vc_sent: set[int] = set()
        self.view_votes: dict[tuple[int, int], dict[str, Optional[dict]]] = {}
        self.ticks_waiting = 0
        self.view_changes_seen = 0  # counts local view advances (for diagnostics)
        self.dropped: list[str] = []

    # -- helpers -------------------------------------------------------------

    @property
    def height(self) -> int:
        """Next height to commit."""
        return self.chain[-1].height + 1

    def leader_of(self, view: int) -> str:
        return self.validator_ids[view % self.n]

    def _sign(self, msg: ConsensusMessage) -> ConsensusMessage:
        sig = crypto.sign(self.keys.signing_key, msg.signing_bytes())
        return ConsensusMessage(
            phase=msg.phase,
            view=msg.view,
            height=msg.height,
            block_hash=msg.block_hash,
            sender=msg.sender,
            signature=sig.hex(),
            block=msg.block,
            lock=msg.lock,
        )

    def _verify_sender(self, msg: ConsensusMessage) -> bool:
        vk = self.validator_keys.get(msg.sender)
        if vk is None:
            return False
        try:
            return crypto.verify(vk, msg.signing_bytes(), bytes.fromhex(msg.signature))
        except ValueError:
            return False

    def _drop(self, msg: ConsensusMessage, why: str) -> list[Outgoing]:
        self.dropped.append(f"{msg.phase} v={msg.view} h={msg.height} from {msg.sender}: {why}")
        return []

    # -- client interface ------------------------------------------------------

    def submit(self, tx: LedgerTransaction) -> ValidationResult:
        """Admit a transaction into the mempool (validated against committed state)."""
        key = tx.dedupe_key()
        if key in self.mempool:
            return ValidationResult(True, "already-pending")
        result = validate_transaction(tx, self.state)
        if result:
            self.mempool[key] = tx
        return result

    def committed_digests(self) -> list[str]:
        return [b.block_hash().hex() for b in self.chain]

    def find_tx(self, digest_hex: str) -> Optional[int]:
        for block in self.chain:
            for tx in block.txs:
                if tx.digest().hex() == digest_hex:
                    return block.height
        return None

    # -- event handlers ---------------------------------------------------------

    def on_tick(self) -> list[Outgoing]:
        out = self._maybe_propose()
        pending = bool(self.mempool) or any(
            h == self.height for (_, h, _) in self.proposals
        )
        if pending:
            self.ticks_waiting += 1
        else:
            self.ticks_waiting = 0
        if self.ticks_waiting > self.timeout_ticks:
            out += self._advance_view(self.view + 1)
        return out

    def on_message(self, msg: ConsensusMessage) -> list[Outgoing]:
        if msg.phase not in PHASES:
            return self._drop(msg, "unknown phase")
        if not self._verify_sender(msg):
            return self._drop(msg, "invalid signature")
        if msg.height < self.height:
            return self._drop(msg, "stale height")
        if msg.phase == "PRE_PREPARE":
            return self._on_pre_prepare(msg)
        if msg.phase == "PREPARE":
            return self._on_prepare(msg)
        if msg.phase == "COMMIT":
            return self._on_commit(msg)
        return self._on_view_change(msg)

    # -- proposal ---------------------------------------------------------------

    def _build_block(self) -> Optional[Block]:
        txs: list[LedgerTransaction] = []
        scratch = self.state.copy()
        for tx in self.mempool.values():
            if validate_transaction(tx, scratch):
                scratch.apply_transaction(tx, self.height)
                txs.append(tx)
        if not txs:
            return None
        return Block(
            height=self.height,
            prev_hash=self.chain[-1].block_hash(),
            txs=txs,
            proposer=self.node_id,
        )

    def _maybe_propose(self) -> list[Outgoing]:
        if self.leader_of(self.view) != self.node_id:
            return []
        if (self.view, self.height) in self.proposed:
            return []
        if self.view > 0 and not self._view_quorum_reached(self.view):
            # a later-view leader only proposes once 2f+1 peers joined the view
            return []
        block = self._locked_block_for_reproposal() or self._build_block()
        if block is None:
            return []
        # the block hash ignores the proposer field, so re-stamping a
        # re-proposed locked block keeps its identity while recording the
        # leader whose view will certify it
        block.proposer = self.node_id
        return self._propose(block)

    def _locked_block_for_reproposal(self) -> Optional[Block]:
        votes = self.view_votes.get((self.view, self.height), {})
        best: Optional[tuple[int, dict]] = None
        for lock in votes.values():
            if lock and (best is None or lock["view"] > best[0]):
                best = (lock["view"], lock["block"])
        if self.lock is not None and (best is None or self.lock[1] > best[0]):
            best = (self.lock[1], self.lock[0].to_dict())
        return Block.from_dict(best[1]) if best else None

    def _view_quorum_reached(self, view: int) -> bool:
        return len(self.view_votes.get((view, self.height), {})) >= self.quorum

    def _propose(self, block: Block) -> list[Outgoing]:
        self.proposed.add((self.view, self.height))
        bh = block.block_hash().hex()
        key = (self.view, self.height, bh)
        self.proposals[key] = block
        pre = self._sign(
            ConsensusMessage(
                phase="PRE_PREPARE",
                view=self.view,
                height=self.height,
                block_hash=bh,
                sender=self.node_id,
                block=block.to_dict(),
            )
        )
        # leader prepares its own proposal
        out = [Outgoing(BROADCAST, pre)]
        out += self._send_prepare(key)
        return out

    # -- phase one: pre-prepare ----------------------------------------------------

    def _validate_proposal(self, block: Block) -> bool:
        if block.height != self.height:
            return False
        if block.prev_hash != self.chain[-1].block_hash():
            return False
        if not block.txs:
            return False
        scratch = self.state.copy()
        for tx in block.txs:
            if not validate_transaction(tx, scratch):
                return False
            scratch.apply_transaction(tx, block.height)
        return True

    def _on_pre_prepare(self, msg: ConsensusMessage) -> list[Outgoing]:
        if msg.view < self.view:
            return self._drop(msg, "stale view")
        if msg.sender != self.leader_of(msg.view):
            return self._drop(msg, "not the leader of its view")
        if msg.block is None:
            return self._drop(msg, "missing block")
        try:
            block = Block.from_dict(msg.block)
        except Exception as exc:
            return self._drop(msg, f"malformed block: {exc}")
        bh = block.block_hash().hex()
        if bh != msg.block_hash:
            return self._drop(msg, "block hash mismatch")
        if msg.height != self.height or not self._validate_proposal(block):
            return self._drop(msg, "invalid block")
        out: list[Outgoing] = []
        if msg.view > self.view:
            # the proposer only reaches view v on a 2f+1 quorum; follow it
            self.view = msg.view
            self.ticks_waiting = 0
        key = (msg.view, msg.height, bh)
        self.proposals[key] = block
        if self.lock is not None:
            locked_block, locked_view = self.lock
            if locked_block.block_hash().hex() != bh and locked_view >= msg.view:
                return self._drop(msg, "conflicts with lock")
        out += self._send_prepare(key)
        out += self._check_quorums(key)
        return out

    def _send_prepare(self, key: tuple[int, int, str]) -> list[Outgoing]:
        view, height, bh = key
        if (view, height) in self.prepare_sent:
            return []
        self.prepare_sent.add((view, height))
        msg = self._sign(
            ConsensusMessage(
                phase="PREPARE", view=view, height=height, block_hash=bh, sender=self.node_id
            )
        )
        self.prepares.setdefault(key, set()).add(self.node_id)
        return [Outgoing(BROADCAST, msg)] + self._check_quorums(key)

    # -- phase two: prepare ----------------------------------------------------

    def _on_prepare(self, msg: ConsensusMessage) -> list[Outgoing]:
        key = (msg.view, msg.height, msg.block_hash)
        self.prepares.setdefault(key, set()).add(msg.sender)
        return self._check_quorums(key)

    def _send_commit(self, key: tuple[int, int, str]) -> list[Outgoing]:
        view, height, bh = key
        if (view, height) in self.commit_sent:
            return []
        self.commit_sent.add((view, height))
        block = self.proposals[key]
        self.lock = (block, view)
        msg = self._sign(
            ConsensusMessage(
                phase="COMMIT", view=view, height=height, block_hash=bh, sender=self.node_id
            )
        )
        self.commits.setdefault(key, {})[self.node_id] = msg.signature
        return [Outgoing(BROADCAST, msg)] + self._check_quorums(key)

    # -- phase three: commit ----------------------------------------------------

    def _on_commit(self, msg: ConsensusMessage) -> list[Outgoing]:
        key = (msg.view, msg.height, msg.block_hash)
        self.commits.setdefault(key, {})[msg.sender] = msg.signature
        return self._check_quorums(key)

    def _check_quorums(self, key: tuple[int, int, str]) -> list[Outgoing]:
        view, height, bh = key
        if height != self.height:
            return []
        out: list[Outgoing] = []
        prepared = self.prepares.get(key, set())
        if (
            len(prepared) >= self.quorum
            and key in self.proposals
            and (view, height) not in self.commit_sent
            and (self.lock is None or self.lock[1] <= view)
        ):
            out += self._send_commit(key)
        votes = self.commits.get(key, {})
        if len(votes) >= self.quorum and key in self.proposals:
            out += self._finalize(key)
        return out

    def _finalize(self, key: tuple[int, int, str]) -> list[Outgoing]:
        view, height, bh = key
        block = self.proposals[key]
        block.quorum_certificate = {
            "view": view,
            "votes": [
                {"sender": s, "signature": sig}
                for s, sig in sorted(self.commits[key].items())
            ],
        }
        self.state.apply_block(block, prev_hash=self.chain[-1].block_hash())
        self.chain.append(block)
        for tx in block.txs:
            self.mempool.pop(tx.dedupe_key(), None)
        committed_height = height
        # reset per-height bookkeeping
        self.lock = None
        self.ticks_waiting = 0
        self.prepares = {k: v for k, v in self.prepares.items() if k[1] > committed_height}
        self.commits = {k: v for k, v in self.commits.items() if k[1] > committed_height}
        self.proposals = {k: v for k, v in self.proposals.items() if k[1] > committed_height}
        self.view_votes = {k: v for k, v in self.view_votes.items() if k[1] > committed_height}
        return self._maybe_propose()

    # -- view change ----------------------------------------------------

    def _advance_view(self, new_view: int) -> list[Outgoing]:
        if new_view <= self.view and new_view in self.vc_sent:
            return []
        self.view = max(self.view, new_view)
        self.ticks_waiting = 0
        self.view_changes_seen += 1
        if self.view in self.vc_sent:
            return []
        self.vc_sent.add(self.view)
        lock_info = (
            {"block": self.lock[0].to_dict(), "view": self.lock[1]} if self.lock else None
        )
        bh = self.lock[0].block_hash().hex() if self.lock else "0" * 64
        msg = self._sign(
            ConsensusMessage(
                phase="VIEW_CHANGE",
                view=self.view,
                height=self.height,
                block_hash=bh,
                sender=self.node_id,
                lock=lock_info,
            )
        )
        self.view_votes.setdefault((self.view, self.height), {})[self.node_id] = lock_info
        return [Outgoing(BROADCAST, msg)] + self._maybe_propose()

    def _on_view_change(self, msg: ConsensusMessage) -> list[Outgoing]:
        if msg.view <= self.view and msg.sender in self.view_votes.get(
            (msg.view, msg.height), {}
        ):
            return []
        self.view_votes.setdefault((msg.view, msg.height), {})[msg.sender] = msg.lock
        out: list[Outgoing] = []
        if msg.view > self.view:
            ahead = {
                sender
                for (v, h), votes in self.view_votes.items()
                if v > self.view and h == self.height
                for sender in votes
            }
            if len(ahead) >= self.f + 1:
                target = max(
                    v for (v, h) in self.view_votes if h == self.height and v > self.view
                )
                out += self._advance_view(target)
        out += self._maybe_propose()
        return out
