"""Deterministic validator-network simulation.

Logical ticks, seeded per-message delays, crash-fault injection. Every
interleaving is a pure function of (genesis, seed, crash plan), which is what
makes the safety/liveness sweeps and transcript-digest determinism testable.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Callable, Optional

from omicledger.crypto import KeyPair
from omicledger.ledger.consensus import BROADCAST, ConsensusMessage, Outgoing, ValidatorNode
from omicledger.ledger.records import (
    GenesisConfig,
    LedgerState,
    LedgerTransaction,
    ValidationResult,
)


class LedgerUnavailable(Exception):
    """The simulated network failed to commit within its tick budget."""


@dataclass(frozen=True)
class LedgerReceipt:
    height: int
    tx_digest: str


class BftNetwork:
    """n validator nodes exchanging consensus messages under a seeded scheduler."""

    def __init__(
        self,
        genesis: GenesisConfig,
        node_keys: dict[str, KeyPair],
        rng: random.Random,
        timeout_ticks: int = 12,
        max_delay: int = 3,
        wire_capture: Optional[Callable[[str, str, dict], None]] = None,
    ) -> None:
        self.genesis = genesis
        self.rng = rng
        self.max_delay = max_delay
        self.nodes: dict[str, ValidatorNode] = {
            v["id"]: ValidatorNode(v["id"], node_keys[v["id"]], genesis, timeout_ticks)
            for v in genesis.validators
        }
        self.order = sorted(self.nodes)
        self.queues: dict[str, list[tuple[int, int, ConsensusMessage]]] = {
            nid: [] for nid in self.order
        }
        self.tick = 0
        self._seq = 0
        self.crashed: set[str] = set()
        self.crash_plan: dict[str, int] = {}  # node -> tick at which it stops
        self.wire_capture = wire_capture

    # -- fault injection ----------------------------------------------------

    def crash_at(self, node_id: str, tick: int) -> None:
        self.crash_plan[node_id] = tick

    def live(self) -> list[str]:
        return [nid for nid in self.order if nid not in self.crashed]

    # -- scheduling ----------------------------------------------------

    def _route(self, sender: str, outgoing: list[Outgoing]) -> None:
        for out in outgoing:
            dests = [n for n in self.order if n != sender] if out.dest == BROADCAST else [out.dest]
            for dest in dests:
                if self.wire_capture:
                    self.wire_capture(sender, dest, out.message.to_dict())
                self._seq += 1
                deliver_at = self.tick + self.rng.randint(1, self.max_delay)
                self.queues[dest].append((deliver_at, self._seq, out.message))

    def step(self) -> None:
        self.tick += 1
        for nid, when in self.crash_plan.items():
            if when <= self.tick:
                self.crashed.add(nid)
        for nid in self.order:
            if nid in self.crashed:
                self.queues[nid].clear()
                continue
            node = self.nodes[nid]
            due = sorted(
                (item for item in self.queues[nid] if item[0] <= self.tick),
                key=lambda item: (item[0], item[1]),
            )
            self.queues[nid] = [item for item in self.queues[nid] if item[0] > self.tick]
            for _, _, msg in due:
                self._route(nid, node.on_message(msg))
            self._route(nid, node.on_tick())

    def run(self, ticks: int) -> None:
        for _ in range(ticks):
            self.step()

    def run_until(self, predicate: Callable[[], bool], max_ticks: int = 600) -> bool:
        for _ in range(max_ticks):
            if predicate():
                return True
            self.step()
        return predicate()

    # -- client interface ----------------------------------------------------

    def submit(self, tx: LedgerTransaction) -> ValidationResult:
        result = ValidationResult(False, "no live validators")
        for nid in self.live():
            result = self.nodes[nid].submit(tx)
        return result

    def submit_and_wait(self, tx: LedgerTransaction, max_ticks: int = 600) -> LedgerReceipt:
        result = self.submit(tx)
        if not result:
            raise LedgerUnavailable(f"rejected: {result.reason}")
        digest = tx.digest().hex()

        def committed() -> bool:
            return all(self.nodes[nid].find_tx(digest) is not None for nid in self.live())

        if not self.run_until(committed, max_ticks):
            raise LedgerUnavailable(f"tx {digest[:12]} not committed within {max_ticks} ticks")
        height = self.nodes[self.live()[0]].find_tx(digest)
        return LedgerReceipt(height=height, tx_digest=digest)

    # -- inspection ----------------------------------------------------

    def reference_node(self) -> ValidatorNode:
        return self.nodes[self.live()[0]]

    @property
    def state(self) -> LedgerState:
        return self.reference_node().state

    def chains_consistent(self) -> bool:
        """Safety: committed chains of live nodes are prefixes of one another."""
        chains = [self.nodes[nid].committed_digests() for nid in self.live()]
        longest = max(chains, key=len)
        return all(longest[: len(c)] == c for c in chains)

    def max_view(self) -> int:
        return max(self.nodes[nid].view for nid in self.live())


class DirectLedger:
    """Single-validator chain committed synchronously — same consensus code,
    no scheduler. Unit-test fixture for everything above the ledger."""

    def __init__(self, genesis: GenesisConfig, node_key: KeyPair) -> None:
        if len(genesis.validators) != 1:
            raise ValueError("DirectLedger needs a single-validator genesis")
        self.node = ValidatorNode(genesis.validators[0]["id"], node_key, genesis)

    def submit_and_wait(self, tx: LedgerTransaction, max_ticks: int = 0) -> LedgerReceipt:
        result = self.node.submit(tx)
        if not result:
            raise LedgerUnavailable(f"rejected: {result.reason}")
        self.node.on_tick()
        digest = tx.digest().hex()
        height = self.node.find_tx(digest)
        if height is None:
            raise LedgerUnavailable("single-node commit failed")
        return LedgerReceipt(height=height, tx_digest=digest)

    def submit(self, tx: LedgerTransaction) -> ValidationResult:
        result = self.node.submit(tx)
        if result:
            self.node.on_tick()
        return result

    @property
    def state(self) -> LedgerState:
        return self.node.state

    @property
    def chain(self):
        return self.node.chain
