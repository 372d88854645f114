"""Deterministic simulated DHT ring with per-category traffic accounting.

Routing is abstract: no finger tables, a lookup costs ceil(log2 N) messages
(min 1) and the payload is charged once, on the final hop. All constants
are config knobs, not claims about any particular DHT.
"""

from __future__ import annotations

from bisect import bisect_left
from dataclasses import dataclass, field
from math import ceil, log2

CATEGORIES = ("indexMaintenance", "viewMaterialization", "queryExecution", "adaptation")


class OverlayError(ValueError):
    pass


class OversizeEntryError(OverlayError):
    pass


@dataclass(frozen=True, order=True)
class PeerId:
    position: int
    name: str


@dataclass
class OverlayConfig:
    msg_header_bytes: int = 64
    key_overhead_bytes: int = 32
    max_entry_bytes: int = 1 << 20


def fnv1a_32(data: bytes) -> int:
    h = 2166136261
    for b in data:
        h ^= b
        h = (h * 16777619) & 0xFFFFFFFF
    return h


def hash_key(key: str) -> int:
    return fnv1a_32(key.encode("utf-8"))


class NetworkMetrics:
    """Monotone per-peer and global message/byte counters, split by category."""

    def __init__(self, peer_names):
        self.per_peer = {
            name: {cat: {"messages": 0, "bytes": 0} for cat in CATEGORIES} for name in peer_names
        }

    def charge(self, peer_name: str, category: str, messages: int, nbytes: int) -> None:
        slot = self.per_peer[peer_name][category]
        slot["messages"] += messages
        slot["bytes"] += nbytes

    def peer_totals(self, peer_name: str) -> dict:
        return {cat: dict(v) for cat, v in self.per_peer[peer_name].items()}

    def global_totals(self) -> dict:
        out = {cat: {"messages": 0, "bytes": 0} for cat in CATEGORIES}
        for counters in self.per_peer.values():
            for cat, slot in counters.items():
                out[cat]["messages"] += slot["messages"]
                out[cat]["bytes"] += slot["bytes"]
        return out

    def category_bytes(self, category: str) -> int:
        return sum(c[category]["bytes"] for c in self.per_peer.values())

    def snapshot(self) -> dict:
        return {
            "global": self.global_totals(),
            "peers": {name: self.peer_totals(name) for name in sorted(self.per_peer)},
        }


class Network:
    def __init__(self, peer_names, cfg: OverlayConfig | None = None):
        if not peer_names:
            raise OverlayError("ring must have at least one peer")
        self.cfg = cfg or OverlayConfig()
        self.peers: list[PeerId] = []
        taken = set()
        for name in peer_names:
            pos = hash_key(name)
            while pos in taken:  # linear-probe duplicate ring positions
                pos = (pos + 1) & 0xFFFFFFFF
            taken.add(pos)
            self.peers.append(PeerId(pos, name))
        self.peers.sort()
        self._positions = [p.position for p in self.peers]
        self._by_name = {p.name: p for p in self.peers}
        self.storage: dict[str, list[bytes]] = {}
        self.metrics = NetworkMetrics([p.name for p in self.peers])

    def peer(self, name: str) -> PeerId:
        return self._by_name[name]

    def hops(self) -> int:
        return max(1, ceil(log2(len(self.peers)))) if len(self.peers) > 1 else 1

    def responsible_peer(self, key: str) -> PeerId:
        h = hash_key(key)
        i = bisect_left(self._positions, h)
        return self.peers[i % len(self.peers)]

    def _charge_lookup(self, origin: PeerId, category: str, payload: int) -> None:
        hops = self.hops()
        nbytes = payload + self.cfg.key_overhead_bytes + hops * self.cfg.msg_header_bytes
        self.metrics.charge(origin.name, category, hops, nbytes)

    def dht_put(self, origin: PeerId, key: str, entry: bytes, category: str) -> None:
        if len(entry) > self.cfg.max_entry_bytes:
            raise OversizeEntryError(f"entry of {len(entry)} bytes exceeds max_entry_bytes")
        self.storage.setdefault(key, []).append(entry)
        self._charge_lookup(origin, category, len(entry))

    def dht_get(self, origin: PeerId, key: str, category: str) -> list[bytes]:
        entries = list(self.storage.get(key, []))
        self._charge_lookup(origin, category, sum(len(e) for e in entries))
        return entries

    def dht_delete(self, origin: PeerId, key: str, predicate, category: str) -> int:
        """Remove entries matching predicate; charged like a payload-free lookup."""
        entries = self.storage.get(key)
        removed = 0
        if entries is not None:
            kept = [e for e in entries if not predicate(e)]
            removed = len(entries) - len(kept)
            if kept:
                self.storage[key] = kept
            else:
                del self.storage[key]
        self._charge_lookup(origin, category, 0)
        return removed

    def ship(self, frm: PeerId, to: PeerId, payload_bytes: int, category: str) -> None:
        if frm == to:
            return
        self.metrics.charge(frm.name, category, 1, payload_bytes + self.cfg.msg_header_bytes)
