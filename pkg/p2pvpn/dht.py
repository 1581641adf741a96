"""
* SPDX-FileCopyrightText: Copyright (c) 2026 P2P GroupVPN contributors. All rights reserved.
* SPDX-License-Identifier: Apache-2.0
*
* Licensed under the Apache License, Version 2.0 (the "License");
* you may not use this file except in compliance with the License.
* You may obtain a copy of the License at
*
* https://www.apache.org/licenses/LICENSE-2.0
*
* Unless required by applicable law or agreed to in writing, software
* distributed under the License is distributed on an "AS IS" BASIS,
* WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
* See the License for the specific language governing permissions and
* limitations under the License.
"""

import dataclasses
import hashlib
import logging
from collections import Counter

from .constant import (
    DHT_DEFAULT_TTL_MS,
    DHT_REPLICAS,
    GATEWAYS_KEY_PREFIX,
    IP_KEY_PREFIX,
    PRIVATE_KEY_PREFIX,
    REVOKE_KEY_PREFIX,
)
from .overlay import MessageKind, NodeId, Overlay, OverlayMessage, OverlayNode, RingAddress
from .utils import short_id

_logger = logging.getLogger(__name__)

_STORE = "dht"


def key_to_address(raw: bytes) -> RingAddress:
    """SHA-1 of the raw key, read as a big-endian 160-bit integer"""
    return int.from_bytes(hashlib.sha1(raw).digest(), "big")


def ip_key(ip: str) -> bytes:
    return IP_KEY_PREFIX + ip.encode()


def gateways_key(group: str) -> bytes:
    return GATEWAYS_KEY_PREFIX + group.encode()


def private_key(group: str) -> bytes:
    return PRIVATE_KEY_PREFIX + group.encode()


def revoke_key(user_id: str) -> bytes:
    return REVOKE_KEY_PREFIX + user_id.encode()


def encode_node_id(node_id: NodeId) -> bytes:
    return node_id.to_bytes(20, "big")


def decode_node_id(value: bytes) -> NodeId:
    return int.from_bytes(value, "big")


@dataclasses.dataclass(frozen=True)
class DhtKey:
    raw: bytes
    address: RingAddress

    @classmethod
    def of(cls, raw: bytes) -> "DhtKey":
        return cls(raw, key_to_address(raw))


@dataclasses.dataclass
class DhtRecord:
    key: DhtKey
    # value bytes -> expires_at; a re-put of the same value only moves the expiry
    values: dict[bytes, float] = dataclasses.field(default_factory=dict)

    def live_values(self, now: float) -> list[bytes]:
        return sorted(v for v, expires_at in self.values.items() if expires_at > now)

    def purge(self, now: float) -> None:
        self.values = {v: e for v, e in self.values.items() if e > now}

    def merge(self, other: "DhtRecord") -> bool:
        changed = False
        for value, expires_at in other.values.items():
            if self.values.get(value, float("-inf")) < expires_at:
                self.values[value] = expires_at
                changed = True
        return changed


@dataclasses.dataclass(frozen=True)
class DhtConfig:
    replicas: int = DHT_REPLICAS
    default_ttl_ms: float = DHT_DEFAULT_TTL_MS


@dataclasses.dataclass(frozen=True)
class DhtAck:
    owner: NodeId
    hops: int
    holders: tuple[NodeId, ...]


class Dht:
    """
    Multi-value store over an overlay. A key lives at its owner and at the
    owner's first ``replicas`` right neighbors; ``rehome_tick`` runs as an
    overlay tick hook and moves records after membership changes.
    """

    def __init__(self, overlay: Overlay, config: DhtConfig | None = None):
        self.overlay = overlay
        self.config = config or DhtConfig()
        self.stats: Counter = Counter()
        overlay.tick_hooks.append(self.rehome_tick)

    @property
    def now(self) -> float:
        return self.overlay.sim.now

    @staticmethod
    def records(node: OverlayNode) -> dict[bytes, DhtRecord]:
        return node.store.setdefault(_STORE, {})

    def _route(self, via: NodeId, key: DhtKey) -> tuple[NodeId, int]:
        msg = OverlayMessage(src=via, dst=key.address, ttl_hops=self.overlay.config.ttl_hops, kind=MessageKind.DHT)
        trace = self.overlay.route_greedy(via, msg)
        return (trace[-1] if trace else via), len(trace)

    def holders(self, owner: NodeId) -> list[NodeId]:
        table = self.overlay.node(owner).table
        successors = [p for p in table.right_neighbors if self.overlay.is_live(p) and p != owner]
        return [owner, *successors[: self.config.replicas]]

    def put(self, via: NodeId, key: bytes, value: bytes, ttl_ms: float | None = None) -> DhtAck:
        ttl_ms = self.config.default_ttl_ms if ttl_ms is None else ttl_ms
        if ttl_ms <= 0:
            raise ValueError(f"ttl must be positive, got {ttl_ms}")
        dht_key = DhtKey.of(key)
        owner, hops = self._route(via, dht_key)
        holders = self.holders(owner)
        for holder in holders:
            record = self.records(self.overlay.node(holder)).setdefault(key, DhtRecord(dht_key))
            record.merge(DhtRecord(dht_key, {value: self.now + ttl_ms}))
        self.stats["put"] += 1
        _logger.debug(f"put {key!r} via {short_id(via)} -> {short_id(owner)} ({hops} hops)")
        return DhtAck(owner, hops, tuple(holders))

    def get(self, via: NodeId, key: bytes) -> list[bytes]:
        dht_key = DhtKey.of(key)
        owner, _ = self._route(via, dht_key)
        self.stats["get"] += 1
        record = self.records(self.overlay.node(owner)).get(key)
        return record.live_values(self.now) if record is not None else []

    def remove(self, via: NodeId, key: bytes, value: bytes) -> None:
        """Withdraw one value from every holder of the key"""
        dht_key = DhtKey.of(key)
        owner, _ = self._route(via, dht_key)
        for holder in self.holders(owner):
            record = self.records(self.overlay.node(holder)).get(key)
            if record is not None:
                record.values.pop(value, None)
        self.stats["remove"] += 1

    def rehome_tick(self, overlay: Overlay, node: OverlayNode) -> int:
        """Push held records to the holders they belong at, then drop copies this node should not keep"""
        records = self.records(node)
        changes = 0
        for raw in sorted(records):
            record = records[raw]
            record.purge(self.now)
            if not record.values:
                del records[raw]
                continue
            holders = self.holders(overlay.lookup_owner(node, record.key.address))
            for holder in holders:
                if holder == node.id:
                    continue
                target = self.records(overlay.node(holder)).setdefault(raw, DhtRecord(record.key))
                if target.merge(record):
                    self.stats["moves"] += 1
                    changes += 1
            if node.id not in holders:
                del records[raw]
                changes += 1
        return changes

    def copies(self, key: bytes) -> int:
        return sum(
            1
            for node_id in self.overlay.live_ids()
            if (record := self.records(self.overlay.node(node_id)).get(key)) is not None
            and record.live_values(self.now)
        )
