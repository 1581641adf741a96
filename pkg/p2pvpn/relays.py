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
import logging
from collections.abc import Mapping
from typing import TYPE_CHECKING, Any

from .constant import SECOND_MS
from .errors import EmptyCandidates, NoCandidateReachable, NoOverlayPath
from .utils import short_id

if TYPE_CHECKING:
    from .overlay import NodeId, Overlay

_logger = logging.getLogger(__name__)


class RelayPolicy(str, enum.Enum):
    LATENCY = "latency"
    STABILITY = "stability"
    ALL = "all"


@dataclasses.dataclass(frozen=True)
class NeighborAnnotation:
    peer: "NodeId"
    age_s: float
    latency_ms: float
    extra: Mapping[str, Any] = dataclasses.field(default_factory=dict)


@dataclasses.dataclass
class AnnotatedNeighborSet:
    owner: "NodeId"
    entries: list[NeighborAnnotation] = dataclasses.field(default_factory=list)

    def by_peer(self) -> dict["NodeId", NeighborAnnotation]:
        return {entry.peer: entry for entry in self.entries}


@dataclasses.dataclass(frozen=True)
class RelayCandidate:
    peer: "NodeId"
    latency_ms: float
    stability_s: float


@dataclasses.dataclass
class RelayEdge:
    """
    A two-hop tunnel between ``endpoints``. ``overlap`` holds every usable relay,
    active ones first and reserves after.
    """

    endpoints: tuple["NodeId", "NodeId"]
    overlap: list["NodeId"]
    policy: RelayPolicy = RelayPolicy.LATENCY
    active_k: int = 1
    candidates: dict["NodeId", RelayCandidate] = dataclasses.field(default_factory=dict)
    created_at: float = 0.0

    @property
    def active(self) -> list["NodeId"]:
        if self.policy is RelayPolicy.ALL:
            return list(self.overlap)
        return self.overlap[: min(self.active_k, len(self.overlap))]

    @property
    def reserves(self) -> list["NodeId"]:
        return self.overlap[len(self.active) :]


def annotated_neighbor_set(overlay: "Overlay", owner: "NodeId") -> AnnotatedNeighborSet:
    """Directly connected peers of ``owner`` with connection age and measured latency"""
    table = overlay.node(owner).table
    entries = []
    for peer in overlay.direct_peers(owner):
        meta = table.edge_meta[peer]
        entries.append(
            NeighborAnnotation(
                peer=peer,
                age_s=max(0.0, (overlay.sim.now - meta.created_at) / SECOND_MS),
                latency_ms=meta.latency_ms,
                extra={"category": table.category(peer)},
            )
        )
    return AnnotatedNeighborSet(owner, entries)


def compute_overlap(set_a: AnnotatedNeighborSet, set_b: AnnotatedNeighborSet) -> list[RelayCandidate]:
    side_a, side_b = set_a.by_peer(), set_b.by_peer()
    shared = (side_a.keys() & side_b.keys()) - {set_a.owner, set_b.owner}
    candidates = [
        RelayCandidate(
            peer=peer,
            latency_ms=side_a[peer].latency_ms + side_b[peer].latency_ms,
            stability_s=min(side_a[peer].age_s, side_b[peer].age_s),
        )
        for peer in shared
    ]
    return sorted(candidates, key=lambda c: (c.latency_ms, c.peer))


def select_relays(candidates: list[RelayCandidate], policy: RelayPolicy | str, k: int) -> list["NodeId"]:
    """Order candidates by policy; the first ``k`` (or all, under ``ALL``) carry traffic"""
    if not candidates:
        raise EmptyCandidates("no common neighbor to relay through")
    if k < 1:
        raise ValueError(f"active relay count must be >= 1, got {k}")
    if RelayPolicy(policy) is RelayPolicy.STABILITY:
        ordered = sorted(candidates, key=lambda c: (-c.stability_s, c.latency_ms, c.peer))
    else:
        ordered = sorted(candidates, key=lambda c: (c.latency_ms, c.peer))
    return [c.peer for c in ordered]


def proactive_connect(overlay: "Overlay", a: "NodeId", b: "NodeId") -> list["NodeId"]:
    """Connect one endpoint to a neighbor of the other so that the neighbor sets overlap"""
    for src, other in ((a, b), (b, a)):
        for peer in overlay.direct_peers(other):
            if peer in (a, b) or not overlay.sim.policy.can_connect(src, peer):
                continue
            if overlay.connect(src, peer):
                _logger.debug(f"proactive overlap {short_id(src)}<->{short_id(peer)} for {short_id(a)}/{short_id(b)}")
                return [peer]
    raise NoCandidateReachable(f"no neighbor of {short_id(a)} or {short_id(b)} is reachable from the other side")


def _overlap_candidates(overlay: "Overlay", a: "NodeId", b: "NodeId") -> list[RelayCandidate]:
    return compute_overlap(annotated_neighbor_set(overlay, a), annotated_neighbor_set(overlay, b))


def request_relay(
    overlay: "Overlay",
    a: "NodeId",
    b: "NodeId",
    policy: RelayPolicy | str | None = None,
    active_k: int | None = None,
    purpose: str | None = None,
) -> RelayEdge | None:
    """
    Form a two-hop edge a<->b after a failed direct attempt. Returns ``None`` when
    the pair can in fact connect directly; the direct edge is opened instead.
    """
    if overlay.sim.policy.can_connect(a, b):
        overlay.connect(a, b, purpose=purpose)
        return None
    policy = RelayPolicy(policy or overlay.config.relay_policy)
    active_k = active_k or overlay.config.relay_active_k

    if overlay.find_path(a, b) is None:
        raise NoOverlayPath(f"cannot exchange neighbor sets between {short_id(a)} and {short_id(b)}")
    candidates = _overlap_candidates(overlay, a, b)
    if not candidates:
        proactive_connect(overlay, a, b)
        candidates = _overlap_candidates(overlay, a, b)

    edge = RelayEdge(
        endpoints=(a, b),
        overlap=select_relays(candidates, policy, active_k),
        policy=policy,
        active_k=active_k,
        candidates={c.peer: c for c in candidates},
        created_at=overlay.sim.now,
    )
    overlay.install_edge(a, b, edge, purpose)
    _logger.info(
        f"[{overlay.name}] relay {short_id(a)}<->{short_id(b)} via {short_id(edge.active[0])}, "
        f"{len(edge.reserves)} in reserve"
    )
    return edge


def relay_maintenance_tick(overlay: "Overlay", edge: RelayEdge) -> bool:
    """Re-derive the overlap and re-select; returns whether the edge changed"""
    a, b = edge.endpoints
    candidates = _overlap_candidates(overlay, a, b)
    if not candidates:
        try:
            proactive_connect(overlay, a, b)
        except NoCandidateReachable as err:
            _logger.warning(f"[{overlay.name}] relay {short_id(a)}<->{short_id(b)} lost its overlap: {err}")
            edge.overlap = []
            edge.candidates = {}
            return True
        candidates = _overlap_candidates(overlay, a, b)
    overlap = select_relays(candidates, edge.policy, edge.active_k)
    if overlap == edge.overlap:
        return False
    if edge.active != overlap[: len(edge.active)]:
        _logger.debug(f"[{overlay.name}] relay {short_id(a)}<->{short_id(b)} now via {short_id(overlap[0])}")
    edge.overlap = overlap
    edge.candidates = {c.peer: c for c in candidates}
    return True
