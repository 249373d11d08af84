"""Socket transport for validator nodes: length-prefixed JSON frames.

The deterministic in-process bus is the test surface; this transport exists so
the same consensus code can run as separate processes for demos. Frames are a
4-byte big-endian length followed by UTF-8 JSON. Consensus frames carry the
same signed message dicts the simulator exchanges.
"""

from __future__ import annotations

import json
import socket
import threading
import time

from omicledger.crypto import KeyPair
from omicledger.ledger.consensus import BROADCAST, ConsensusMessage, ValidatorNode
from omicledger.ledger.records import GenesisConfig, LedgerTransaction, write_block_log

_MAX_FRAME = 8 * 1024 * 1024


def send_frame(sock: socket.socket, obj: dict) -> None:
    raw = json.dumps(obj, sort_keys=True).encode("utf-8")
    sock.sendall(len(raw).to_bytes(4, "big") + raw)


def recv_frame(sock: socket.socket) -> dict | None:
    header = _recv_exact(sock, 4)
    if header is None:
        return None
    length = int.from_bytes(header, "big")
    if length > _MAX_FRAME:
        raise ValueError(f"frame of {length} bytes exceeds limit")
    raw = _recv_exact(sock, length)
    if raw is None:
        return None
    return json.loads(raw.decode("utf-8"))


def _recv_exact(sock: socket.socket, n: int) -> bytes | None:
    buf = b""
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            return None
        buf += chunk
    return buf


class NodeServer:
    """One validator process: TCP listener + periodic tick driver."""

    def __init__(
        self,
        node_id: str,
        keys: KeyPair,
        genesis: GenesisConfig,
        listen: tuple[str, int],
        peers: dict[str, tuple[str, int]],
        tick_interval: float = 0.05,
        timeout_ticks: int = 12,
    ) -> None:
        self.node = ValidatorNode(node_id, keys, genesis, timeout_ticks=timeout_ticks)
        self.peers = {k: v for k, v in peers.items() if k != node_id}
        self.tick_interval = tick_interval
        self._lock = threading.Lock()
        self._stop = threading.Event()
        self._sock = socket.create_server(listen)
        self.address = self._sock.getsockname()

    def start(self) -> None:
        threading.Thread(target=self._accept_loop, daemon=True).start()
        threading.Thread(target=self._tick_loop, daemon=True).start()

    def stop(self) -> None:
        self._stop.set()
        try:
            self._sock.close()
        except OSError:
            pass

    # -- internals ----------------------------------------------------

    def _accept_loop(self) -> None:
        while not self._stop.is_set():
            try:
                conn, _ = self._sock.accept()
            except OSError:
                return
            threading.Thread(target=self._serve_conn, args=(conn,), daemon=True).start()

    def _serve_conn(self, conn: socket.socket) -> None:
        with conn:
            while not self._stop.is_set():
                try:
                    frame = recv_frame(conn)
                except (ValueError, OSError):
                    return
                if frame is None:
                    return
                reply = self._handle(frame)
                if reply is not None:
                    try:
                        send_frame(conn, reply)
                    except OSError:
                        return

    def _handle(self, frame: dict) -> dict | None:
        kind = frame.get("kind")
        if kind == "consensus":
            with self._lock:
                out = self.node.on_message(ConsensusMessage.from_dict(frame["message"]))
            self._route(out)
            return None
        if kind == "submit":
            tx = LedgerTransaction.from_dict(frame["tx"])
            with self._lock:
                result = self.node.submit(tx)
            return {"ok": bool(result), "reason": result.reason,
                    "tx_digest": tx.digest().hex()}
        if kind == "status":
            with self._lock:
                return {
                    "node": self.node.node_id,
                    "height": self.node.height - 1,
                    "view": self.node.view,
                    "mempool": len(self.node.mempool),
                }
        if kind == "chain":
            with self._lock:
                return {"block_log": write_block_log(self.node.chain)}
        return {"error": f"unknown frame kind {kind!r}"}

    def _tick_loop(self) -> None:
        while not self._stop.is_set():
            time.sleep(self.tick_interval)
            with self._lock:
                out = self.node.on_tick()
            self._route(out)

    def _route(self, outgoing) -> None:
        for item in outgoing:
            targets = list(self.peers) if item.dest == BROADCAST else [item.dest]
            for target in targets:
                addr = self.peers.get(target)
                if addr is None:
                    continue
                try:
                    with socket.create_connection(addr, timeout=1.0) as sock:
                        send_frame(sock, {"kind": "consensus",
                                          "message": item.message.to_dict()})
                except OSError:
                    continue  # peer down; consensus tolerates it


def rpc(addr: tuple[str, int], frame: dict, timeout: float = 2.0) -> dict:
    with socket.create_connection(addr, timeout=timeout) as sock:
        send_frame(sock, frame)
        reply = recv_frame(sock)
    if reply is None:
        raise ConnectionError("no reply")
    return reply


def submit_tx(addr: tuple[str, int], tx: LedgerTransaction) -> dict:
    return rpc(addr, {"kind": "submit", "tx": tx.to_dict()})


def node_status(addr: tuple[str, int]) -> dict:
    return rpc(addr, {"kind": "status"})


def fetch_chain(addr: tuple[str, int]) -> str:
    return rpc(addr, {"kind": "chain"})["block_log"]
