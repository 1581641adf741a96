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
import enum
import hashlib
import logging
import math
import random
from collections.abc import Callable, Iterable
from typing import TYPE_CHECKING

import networkx as nx
import numpy as np

from .constant import (
    DEFAULT_TTL_HOPS,
    FAILURE_DETECT_TICKS,
    FULL_MESH_SIZE,
    JITTER_PING_COUNT,
    MIN_NEIGHBORS,
    RELAY_ACTIVE_K,
    RING_BITS,
    RING_SIZE,
    SHORTCUT_REFRESH_TICKS,
    SIZE_ESTIMATE_SAMPLE,
    STABILIZE_PERIOD_MS,
    STEADY_STATE_MAX_ROUNDS,
)
from .errors import (
    AllBootstrapsUnreachable,
    EmptyCandidates,
    NoCandidateReachable,
    NodeIdCollision,
    NoOverlayPath,
    NoRoute,
    TtlExceeded,
)
from .transport_sim import Simulator
from .utils import short_id

if TYPE_CHECKING:
    from .relays import RelayEdge

_logger = logging.getLogger(__name__)

NodeId = int
RingAddress = int

_SEED_MASK = (1 << 64) - 1


class Direction(str, enum.Enum):
    LEFT = "left"
    RIGHT = "right"


class EdgeCategory(str, enum.Enum):
    NEAR = "near"
    SHORTCUT = "shortcut"
    RELAY = "relay"


class MessageKind(str, enum.Enum):
    ROUTE = "route"
    DHT = "dht"
    RELAY_CONTROL = "relay_control"
    VPN_DATA = "vpn_data"
    REVOCATION_BROADCAST = "revocation_broadcast"


def new_node_id(rng_seed: int) -> NodeId:
    """160-bit identifier derived from a 64-bit seed through SHA-1"""
    digest = hashlib.sha1((rng_seed & _SEED_MASK).to_bytes(8, "big")).digest()
    return int.from_bytes(digest, "big")


def ring_distance(a: int, b: int, dir: Direction | str, bits: int = RING_BITS) -> int:  # noqa: A002
    size = 1 << bits
    if Direction(dir) is Direction.RIGHT:
        return (b - a) % size
    return (a - b) % size


def symmetric_distance(a: int, b: int, bits: int = RING_BITS) -> int:
    return min(ring_distance(a, b, Direction.RIGHT, bits), ring_distance(a, b, Direction.LEFT, bits))


def route_key(node: NodeId, dst: RingAddress) -> tuple[int, int, int]:
    """
    Total order used by greedy routing: closer first, then nodes lying to the
    right of the destination, then lower ids.
    """
    side = 0 if ring_distance(dst, node, Direction.RIGHT) <= ring_distance(dst, node, Direction.LEFT) else 1
    return (symmetric_distance(node, dst), side, node)


def select_shortcut_target(self_id: NodeId, n_estimate: int, rng: random.Random) -> RingAddress:
    """
    Harmonic shortcut target: log2 of the distance is uniform between one expected
    neighbor gap and the full ring, so the distance density is proportional to 1/d.
    """
    if n_estimate < 1:
        raise ValueError(f"n_estimate must be >= 1, got {n_estimate}")
    if n_estimate == 1:
        return rng.randrange(RING_SIZE)
    exponent = rng.uniform(RING_BITS - math.log2(n_estimate), RING_BITS)
    distance = min(max(int(2.0**exponent), 1), RING_SIZE - 1)
    return (self_id + distance) % RING_SIZE


@dataclasses.dataclass
class EdgeMeta:
    created_at: float
    latency_ms: float
    relay: "RelayEdge | None" = None
    outbound: bool = True
    target: RingAddress | None = None
    # why this side keeps the edge open, beyond being a near neighbor
    purposes: set[str] = dataclasses.field(default_factory=set)

    @property
    def via(self) -> tuple[NodeId, ...]:
        if self.relay is None:
            return ()
        return tuple(self.relay.active[:1])


@dataclasses.dataclass
class ConnectionTable:
    left_neighbors: list[NodeId] = dataclasses.field(default_factory=list)
    right_neighbors: list[NodeId] = dataclasses.field(default_factory=list)
    shortcuts: set[NodeId] = dataclasses.field(default_factory=set)
    relay_edges: dict[NodeId, "RelayEdge"] = dataclasses.field(default_factory=dict)
    edge_meta: dict[NodeId, EdgeMeta] = dataclasses.field(default_factory=dict)

    def near(self) -> set[NodeId]:
        return set(self.left_neighbors) | set(self.right_neighbors)

    def category(self, peer: NodeId) -> EdgeCategory | None:
        if peer in self.left_neighbors or peer in self.right_neighbors:
            return EdgeCategory.NEAR
        if peer in self.shortcuts:
            return EdgeCategory.SHORTCUT
        if peer in self.relay_edges:
            return EdgeCategory.RELAY
        return None

    def first(self, direction: Direction, index: int = 0) -> NodeId | None:
        side = self.right_neighbors if direction is Direction.RIGHT else self.left_neighbors
        return side[index] if len(side) > index else None


@dataclasses.dataclass
class OverlayMessage:
    src: NodeId
    dst: RingAddress
    ttl_hops: int = DEFAULT_TTL_HOPS
    kind: MessageKind = MessageKind.ROUTE
    payload: bytes = b""


@dataclasses.dataclass(frozen=True)
class OverlayConfig:
    neighbor_count: int | None = None
    shortcuts: bool = True
    shortcut_count: int | None = None
    shortcut_refresh_ticks: int = SHORTCUT_REFRESH_TICKS
    full_mesh_size: int = FULL_MESH_SIZE
    failure_detect_ticks: int = FAILURE_DETECT_TICKS
    ttl_hops: int = DEFAULT_TTL_HOPS
    stabilize_period_ms: float = STABILIZE_PERIOD_MS
    relays: bool = True
    relay_policy: str = "latency"
    relay_active_k: int = RELAY_ACTIVE_K
    seed: int = 0


class OverlayNode:
    def __init__(self, node_id: NodeId, seed: int):
        self.id = node_id
        self.table = ConnectionTable()
        self.alive = True
        self.joined = False
        self.ticks = 0
        self.mesh = False
        self.rng = random.Random(f"{seed}:{node_id}")
        self.suspects: dict[NodeId, int] = {}
        self.failed: set[NodeId] = set()
        # per-node application state (dht records, vpn endpoint, ...)
        self.store: dict = {}

    def __repr__(self):
        return f"OverlayNode({short_id(self.id)}{'' if self.alive else ', dead'})"


class Overlay:
    """
    A ring overlay: every node keeps ``k`` near neighbors per side, harmonic
    shortcuts and, when NAT forbids a direct link, two-hop relay edges.

    State only changes through ``join``, ``leave``/``fail`` and the periodic
    ``stabilize_tick``, all driven from the simulator's single loop.
    """

    def __init__(
        self,
        sim: Simulator,
        config: OverlayConfig | None = None,
        name: str = "public",
        admit: Callable[[NodeId, NodeId], bool] | None = None,
    ):
        self.sim = sim
        self.config = config or OverlayConfig()
        self.name = name
        self.admit = admit
        self.nodes: dict[NodeId, OverlayNode] = {}
        self.tick_hooks: list[Callable[["Overlay", OverlayNode], int]] = []
        self.rounds = 0

    # membership -----------------------------------------------------------------------------------------------------

    def node(self, node_id: NodeId) -> OverlayNode:
        return self.nodes[node_id]

    def is_live(self, node_id: NodeId) -> bool:
        node = self.nodes.get(node_id)
        return node is not None and node.alive and node.joined

    def live_ids(self) -> list[NodeId]:
        return sorted(n.id for n in self.nodes.values() if n.alive and n.joined)

    def join(self, node_id: NodeId, bootstrap: Iterable[NodeId] = ()) -> OverlayNode:
        bootstrap = list(bootstrap)
        if self.is_live(node_id):
            raise NodeIdCollision(f"node id {short_id(node_id)} is already in use on the {self.name} overlay")
        others = [n for n in self.live_ids() if n != node_id]
        node = OverlayNode(node_id, self.config.seed)

        if not others:
            node.joined = True
            self.nodes[node_id] = node
            _logger.info(f"[{self.name}] {short_id(node_id)} started a new ring")
            return node

        entry = next(
            (b for b in bootstrap if b != node_id and self.is_live(b) and self.sim.policy.can_connect(node_id, b)),
            None,
        )
        if entry is None:
            raise AllBootstrapsUnreachable(
                f"none of {len(bootstrap)} bootstrap endpoint(s) is live and reachable from {short_id(node_id)}"
            )

        self.nodes[node_id] = node
        trace = self.route_greedy(entry, OverlayMessage(src=node_id, dst=node_id, ttl_hops=self.config.ttl_hops))
        owner = self.nodes[trace[-1] if trace else entry]
        node.joined = True

        candidates = {owner.id, *owner.table.near()} - {node_id}
        candidates = {c for c in candidates if self.is_live(c)}
        self._set_near(node, *self._select_near(node, candidates, self.neighbor_count(owner)))
        self._set_near(node, *self._select_near(node, candidates, self.neighbor_count(node)))

        self._connect_pending(node, direct_only=True)
        for peer in sorted(node.table.near()):
            self._consider(self.nodes[peer], node_id)
        self._connect_pending(node)
        self._maintain_shortcuts(node, None)
        _logger.info(f"[{self.name}] {short_id(node_id)} joined via {short_id(entry)}, owner {short_id(owner.id)}")
        return node

    def fail(self, node_id: NodeId) -> None:
        """Departure without warning; neighbors notice after missed pings"""
        self.nodes[node_id].alive = False
        _logger.info(f"[{self.name}] {short_id(node_id)} failed")

    def leave(self, node_id: NodeId) -> None:
        """Departure with a goodbye to every connection and near neighbor"""
        node = self.nodes[node_id]
        node.alive = False
        for peer in sorted(set(node.table.edge_meta) | node.table.near()):
            if self.is_live(peer):
                self._forget(self.nodes[peer], node_id)
        _logger.info(f"[{self.name}] {short_id(node_id)} left")

    # neighbor maintenance -------------------------------------------------------------------------------------------

    def size_estimate(self, node: OverlayNode) -> int:
        sample = node.table.right_neighbors[:SIZE_ESTIMATE_SAMPLE]
        if not sample:
            return 1
        span = ring_distance(node.id, sample[-1], Direction.RIGHT)
        if span == 0:
            return 1
        return max(1, round(RING_SIZE * len(sample) / span))

    def neighbor_count(self, node: OverlayNode) -> int:
        if self.config.neighbor_count is not None:
            return self.config.neighbor_count
        return max(MIN_NEIGHBORS, math.ceil(math.log2(self.size_estimate(node))))

    def shortcut_count(self, node: OverlayNode) -> int:
        if self.config.shortcut_count is not None:
            return self.config.shortcut_count
        n_estimate = self.size_estimate(node)
        return math.ceil(math.log2(n_estimate)) if n_estimate > 1 else 0

    @staticmethod
    def _select_near(node: OverlayNode, candidates: Iterable[NodeId], k: int) -> tuple[list[NodeId], list[NodeId]]:
        candidates = [c for c in candidates if c != node.id]
        left = sorted(candidates, key=lambda c: ring_distance(node.id, c, Direction.LEFT))[:k]
        right = sorted(candidates, key=lambda c: ring_distance(node.id, c, Direction.RIGHT))[:k]
        return left, right

    def _set_near(self, node: OverlayNode, left: list[NodeId], right: list[NodeId]) -> int:
        table = node.table
        if left == table.left_neighbors and right == table.right_neighbors:
            return 0
        previous = table.near()
        table.left_neighbors, table.right_neighbors = left, right
        for peer in table.near() - previous:
            meta = table.edge_meta.get(peer)
            if meta is not None:
                meta.target = None
                meta.purposes.discard("harmonic")
        for peer in previous | table.near():
            if peer in table.edge_meta:
                self._file(node, peer)
        return 1

    def _consider(self, node: OverlayNode, candidate: NodeId) -> int:
        """``candidate`` announced itself to ``node``; adopt it if it falls inside the near window"""
        if not node.alive or not node.joined or candidate == node.id or not self._answering(node, candidate):
            return 0
        if candidate in node.table.near():
            return 0
        pool = node.table.near() | {candidate}
        changed = self._set_near(node, *self._select_near(node, pool, self.neighbor_count(node)))
        if changed:
            self._connect_pending(node)
        return changed

    def _answering(self, node: OverlayNode, peer: NodeId) -> bool:
        """False for a peer ``node`` gave up on, until that id is live again"""
        if peer in node.failed and self.is_live(peer):
            node.failed.discard(peer)
            _logger.debug(f"[{self.name}] {short_id(node.id)} sees {short_id(peer)} back")
        return peer not in node.failed

    def _forget(self, node: OverlayNode, peer: NodeId) -> None:
        table = node.table
        table.left_neighbors = [p for p in table.left_neighbors if p != peer]
        table.right_neighbors = [p for p in table.right_neighbors if p != peer]
        table.shortcuts.discard(peer)
        table.relay_edges.pop(peer, None)
        table.edge_meta.pop(peer, None)
        node.suspects.pop(peer, None)
        node.failed.add(peer)

    def _detect_failures(self, node: OverlayNode) -> int:
        changes = 0
        for peer in sorted(set(node.table.edge_meta) | node.table.near()):
            if self.nodes.get(peer) is not None and self.nodes[peer].alive:
                node.suspects.pop(peer, None)
                continue
            misses = node.suspects.get(peer, 0) + 1
            if misses >= self.config.failure_detect_ticks:
                self._forget(node, peer)
                _logger.debug(f"[{self.name}] {short_id(node.id)} dropped dead peer {short_id(peer)}")
            else:
                node.suspects[peer] = misses
            changes += 1
        return changes

    def _gather_candidates(self, node: OverlayNode) -> set[NodeId]:
        pool = node.table.near() | set(node.table.edge_meta)
        for peer in sorted(node.table.near()):
            neighbor = self.nodes.get(peer)
            if neighbor is not None and neighbor.alive and neighbor.joined:
                pool |= neighbor.table.near()
        return {p for p in pool if p != node.id and p in self.nodes and self._answering(node, p)}

    def _ring_walk(self, node: OverlayNode) -> list[NodeId] | None:
        """Walk first-right pointers; if the ring closes within ``full_mesh_size`` members return them"""
        members = [node.id]
        current = node
        for _ in range(self.config.full_mesh_size):
            nxt = current.table.first(Direction.RIGHT)
            if nxt is None or not self.is_live(nxt):
                return None
            if nxt == node.id:
                return members
            if nxt in members:
                return None
            members.append(nxt)
            current = self.nodes[nxt]
        return None

    # edges ----------------------------------------------------------------------------------------------------------

    def _file(self, node: OverlayNode, peer: NodeId) -> None:
        """Keep every edge in exactly one category"""
        table = node.table
        meta = table.edge_meta[peer]
        if peer in table.left_neighbors or peer in table.right_neighbors:
            table.shortcuts.discard(peer)
            table.relay_edges.pop(peer, None)
        elif meta.relay is not None:
            table.shortcuts.discard(peer)
            table.relay_edges[peer] = meta.relay
        else:
            table.relay_edges.pop(peer, None)
            table.shortcuts.add(peer)

    def measure_rtt(self, a: NodeId, b: NodeId, relay: "RelayEdge | None" = None) -> float:
        """Application-level ping; the median of a few pings once jitter is configured"""
        path = [a, *(relay.active[:1] if relay is not None else ()), b]
        if not self.sim.jitter_ms:
            return sum(self.sim.latency.rtt(x, y) for x, y in zip(path, path[1:]))
        samples = [self.sim.path_delay(path) + self.sim.path_delay(path[::-1]) for _ in range(JITTER_PING_COUNT)]
        return float(np.median(samples))

    def install_edge(
        self,
        a: NodeId,
        b: NodeId,
        relay: "RelayEdge | None" = None,
        purpose: str | None = None,
        target: RingAddress | None = None,
    ) -> None:
        latency = self.measure_rtt(a, b, relay)
        for x, y, outbound in ((a, b, True), (b, a, False)):
            node = self.nodes[x]
            meta = node.table.edge_meta.get(y)
            if meta is None:
                meta = EdgeMeta(created_at=self.sim.now, latency_ms=latency, relay=relay, outbound=outbound)
                node.table.edge_meta[y] = meta
            elif relay is not None and meta.relay is None:
                meta.relay = relay
            if outbound and purpose:
                meta.purposes.add(purpose)
                if target is not None:
                    meta.target = target
            self._file(node, y)

    def connect(
        self, a: NodeId, b: NodeId, purpose: str | None = None, target: RingAddress | None = None
    ) -> bool:
        """Open (or reuse) an edge a<->b: direct when NAT allows, otherwise through a relay"""
        if a == b or not self.is_live(a) or not self.is_live(b):
            return False
        if self.admit is not None and not (self.admit(a, b) and self.admit(b, a)):
            return False
        meta = self.nodes[a].table.edge_meta.get(b)
        if meta is not None:
            if purpose:
                meta.purposes.add(purpose)
                if target is not None:
                    meta.target = target
            return True
        if self.sim.policy.can_connect(a, b):
            self.install_edge(a, b, None, purpose, target)
            return True
        if not self.config.relays:
            return False
        from .relays import request_relay

        try:
            request_relay(self, a, b, purpose=purpose)
        except (NoOverlayPath, NoCandidateReachable, EmptyCandidates) as err:
            _logger.debug(f"[{self.name}] no relay {short_id(a)}<->{short_id(b)}: {err}")
            return False
        return True

    def disconnect(self, a: NodeId, b: NodeId) -> None:
        for x, y in ((a, b), (b, a)):
            node = self.nodes.get(x)
            if node is None:
                continue
            node.table.edge_meta.pop(y, None)
            node.table.shortcuts.discard(y)
            node.table.relay_edges.pop(y, None)

    def direct_peers(self, node_id: NodeId) -> list[NodeId]:
        table = self.nodes[node_id].table
        return sorted(p for p, m in table.edge_meta.items() if m.relay is None and self.is_live(p))

    def usable_peers(self, node_id: NodeId) -> list[NodeId]:
        usable = []
        for peer, meta in self.nodes[node_id].table.edge_meta.items():
            if not self.is_live(peer):
                continue
            if meta.relay is not None and not (meta.via and self.is_live(meta.via[0])):
                continue
            usable.append(peer)
        return usable

    def _relay_legs(self, node: OverlayNode) -> set[NodeId]:
        return {r for m in node.table.edge_meta.values() if m.relay is not None for r in m.relay.active}

    def _wants(self, node: OverlayNode, peer: NodeId, legs: set[NodeId]) -> bool:
        meta = node.table.edge_meta.get(peer)
        return peer in node.table.near() or bool(meta is not None and meta.purposes) or peer in legs

    def _connect_pending(self, node: OverlayNode, direct_only: bool = False) -> int:
        opened = 0
        pending = [p for p in node.table.left_neighbors + node.table.right_neighbors if p not in node.table.edge_meta]
        for peer in dict.fromkeys(pending):
            if not self.is_live(peer):
                continue
            if direct_only and not self.sim.policy.can_connect(node.id, peer):
                continue
            if self.connect(node.id, peer):
                opened += 1
        return opened

    def _prune(self, node: OverlayNode) -> int:
        changes = 0
        legs = self._relay_legs(node)
        for peer in sorted(node.table.edge_meta):
            other = self.nodes.get(peer)
            if other is None:
                continue
            if self._wants(node, peer, legs) or self._wants(other, node.id, self._relay_legs(other)):
                self._file(node, peer)
                continue
            self.disconnect(node.id, peer)
            changes += 1
        return changes

    def _maintain_relays(self, node: OverlayNode) -> int:
        from .relays import relay_maintenance_tick

        changes = 0
        for peer, meta in sorted(node.table.edge_meta.items()):
            if meta.relay is None or node.id > peer or not self.is_live(peer):
                continue
            if relay_maintenance_tick(self, meta.relay):
                changes += 1
            if not meta.relay.overlap:
                self.disconnect(node.id, peer)
                changes += 1
        return changes

    def lookup_owner(self, node: OverlayNode, address: RingAddress) -> NodeId:
        try:
            trace = self.route_greedy(node.id, OverlayMessage(src=node.id, dst=address, ttl_hops=self.config.ttl_hops))
        except (NoRoute, TtlExceeded) as err:
            _logger.debug(f"[{self.name}] owner lookup from {short_id(node.id)} failed: {err}")
            return node.id
        return trace[-1] if trace else node.id

    def _maintain_shortcuts(self, node: OverlayNode, mesh_members: list[NodeId] | None) -> int:
        changes = 0
        table = node.table
        if mesh_members is not None:
            node.mesh = True
            for member in mesh_members:
                if member == node.id:
                    continue
                meta = table.edge_meta.get(member)
                if meta is not None and "mesh" in meta.purposes:
                    continue
                if self.connect(node.id, member, purpose="mesh"):
                    changes += 1
        elif node.mesh:
            node.mesh = False
            for meta in table.edge_meta.values():
                meta.purposes.discard("mesh")
            changes += 1

        if not self.config.shortcuts:
            return changes

        harmonic = {p: m for p, m in table.edge_meta.items() if m.target is not None and "harmonic" in m.purposes}
        if node.ticks and node.ticks % self.config.shortcut_refresh_ticks == 0:
            for peer, meta in sorted(harmonic.items()):
                if self.lookup_owner(node, meta.target) != peer:
                    meta.purposes.discard("harmonic")
                    meta.target = None
                    del harmonic[peer]
                    changes += 1

        desired = self.shortcut_count(node)
        n_estimate = self.size_estimate(node)
        attempts = 0
        while len(harmonic) < desired and attempts < 2 * desired:
            attempts += 1
            target = select_shortcut_target(node.id, n_estimate, node.rng)
            owner = self.lookup_owner(node, target)
            if owner == node.id or owner in table.near() or owner in harmonic:
                continue
            if self.connect(node.id, owner, purpose="harmonic", target=target):
                harmonic[owner] = table.edge_meta[owner]
                changes += 1
        return changes

    def stabilize_tick(self, node_id: NodeId) -> int:
        """One maintenance round for a node; returns the number of table changes"""
        node = self.nodes[node_id]
        if not node.alive or not node.joined:
            return 0
        node.ticks += 1
        changes = self._detect_failures(node)

        candidates = self._gather_candidates(node)
        changes += self._set_near(node, *self._select_near(node, candidates, self.neighbor_count(node)))
        for peer in node.table.left_neighbors + node.table.right_neighbors:
            neighbor = self.nodes.get(peer)
            if neighbor is not None:
                changes += self._consider(neighbor, node.id)

        changes += self._connect_pending(node)
        if self.config.relays:
            changes += self._maintain_relays(node)
        mesh_members = self._ring_walk(node) if self.config.full_mesh_size else None
        changes += self._maintain_shortcuts(node, mesh_members)
        for hook in self.tick_hooks:
            changes += hook(self, node) or 0
        changes += self._prune(node)
        return changes

    def stabilize_round(self) -> int:
        self.sim.run_until(self.sim.now + self.config.stabilize_period_ms)
        self.rounds += 1
        return sum(self.stabilize_tick(node_id) for node_id in self.live_ids())

    def stabilize(self, max_rounds: int = STEADY_STATE_MAX_ROUNDS) -> int:
        """Run rounds until one makes no table change; return the number of rounds run"""
        for rounds in range(1, max_rounds + 1):
            if self.stabilize_round() == 0:
                return rounds
        _logger.warning(f"[{self.name}] no fixed point after {max_rounds} stabilization rounds")
        return max_rounds

    # routing --------------------------------------------------------------------------------------------------------

    def next_hop(self, node: OverlayNode, dst: RingAddress) -> NodeId | None:
        best, best_key = None, route_key(node.id, dst)
        for peer in self.usable_peers(node.id):
            key = route_key(peer, dst)
            if key < best_key:
                best, best_key = peer, key
        return best

    def route_greedy(self, node_id: NodeId, msg: OverlayMessage) -> list[NodeId]:
        """Forward hop by hop to the connection closest to ``msg.dst``; return the hops taken"""
        current = self.nodes[node_id]
        if msg.ttl_hops <= 0:
            raise TtlExceeded(f"message {msg.kind.value} from {short_id(msg.src)} has no hops left")
        if not self.usable_peers(node_id) and msg.dst != node_id and len(self.live_ids()) > 1:
            raise NoRoute(f"{short_id(node_id)} has no usable connection")
        budget = msg.ttl_hops
        trace: list[NodeId] = []
        while True:
            nxt = self.next_hop(current, msg.dst)
            if nxt is None:
                return trace
            if msg.ttl_hops == 0:
                raise TtlExceeded(f"routing to {msg.dst:040x} exceeded {budget} hops")
            msg.ttl_hops -= 1
            trace.append(nxt)
            current = self.nodes[nxt]

    def owner_of(self, address: RingAddress) -> NodeId:
        """Brute-force owner among live nodes"""
        return min(self.live_ids(), key=lambda n: route_key(n, address))

    def transport_path(self, src: NodeId, trace: list[NodeId]) -> list[NodeId]:
        """Expand an overlay trace with the relay nodes its relayed hops pass through"""
        path = [src]
        for hop in trace:
            meta = self.nodes[path[-1]].table.edge_meta.get(hop)
            if meta is not None and meta.via:
                path.extend(meta.via)
            path.append(hop)
        return path

    def path_latency(self, src: NodeId, trace: list[NodeId]) -> float:
        path = self.transport_path(src, trace)
        return sum(self.sim.latency.one_way(a, b) for a, b in zip(path, path[1:]))

    def find_path(self, a: NodeId, b: NodeId) -> list[NodeId] | None:
        """Greedy route toward ``b``; if greedy stalls short of it, finish along usable edges"""
        try:
            trace = self.route_greedy(a, OverlayMessage(src=a, dst=b, ttl_hops=self.config.ttl_hops))
        except (TtlExceeded, NoRoute):
            trace = []
        if trace and trace[-1] == b:
            return [a, *trace]
        start = trace[-1] if trace else a
        graph = self.usable_graph()
        try:
            tail = nx.shortest_path(graph, start, b)
        except (nx.NetworkXNoPath, nx.NodeNotFound):
            return None
        return [a, *trace[:-1], *tail] if trace else tail

    def usable_graph(self) -> nx.Graph:
        """Live nodes joined by every usable connection, direct or relayed"""
        graph = nx.Graph()
        for node_id in self.live_ids():
            graph.add_node(node_id)
            graph.add_edges_from((node_id, peer) for peer in sorted(self.usable_peers(node_id)))
        return graph

    def send(self, msg: OverlayMessage, handler: Callable | None = None, target: object = None):
        """Route ``msg`` and schedule its delivery after the summed one-way latencies"""
        trace = self.route_greedy(msg.src, msg)
        delay = self.path_latency(msg.src, trace)
        owner = trace[-1] if trace else msg.src
        event = self.sim.schedule(delay, target if target is not None else owner, msg, handler)
        return trace, event
