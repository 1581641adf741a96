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

import pytest

from p2pvpn.errors import EmptyCandidates, NoCandidateReachable, NoOverlayPath
from p2pvpn.experiments import crawl
from p2pvpn.relays import (
    AnnotatedNeighborSet,
    NeighborAnnotation,
    RelayCandidate,
    RelayEdge,
    RelayPolicy,
    annotated_neighbor_set,
    compute_overlap,
    proactive_connect,
    relay_maintenance_tick,
    request_relay,
    select_relays,
)
from p2pvpn.transport_sim import synthetic_latency_matrix

CANDIDATES = [
    RelayCandidate(peer=1, latency_ms=40.0, stability_s=100.0),
    RelayCandidate(peer=2, latency_ms=20.0, stability_s=5.0),
    RelayCandidate(peer=3, latency_ms=30.0, stability_s=100.0),
]


@pytest.fixture(scope="module")
def blocked_overlay():
    from p2pvpn.experiments import build_overlay, wait_for_steady_state

    overlay = build_overlay(40, 21, latency=synthetic_latency_matrix(40, 21), block_adjacent=True)
    wait_for_steady_state(overlay)
    return overlay


def relayed_edges(overlay):
    return [
        meta.relay
        for node_id in overlay.live_ids()
        for peer, meta in sorted(overlay.node(node_id).table.edge_meta.items())
        if meta.relay is not None and node_id < peer
    ]


def test_latency_policy_orders_by_sum():
    assert select_relays(CANDIDATES, RelayPolicy.LATENCY, 1) == [2, 3, 1]


def test_stability_policy_prefers_old_then_fast():
    assert select_relays(CANDIDATES, "stability", 1) == [3, 1, 2]


def test_empty_overlap_is_an_error():
    with pytest.raises(EmptyCandidates):
        select_relays([], RelayPolicy.LATENCY, 1)


def test_active_count_must_be_positive():
    with pytest.raises(ValueError):
        select_relays(CANDIDATES, RelayPolicy.LATENCY, 0)


@pytest.mark.parametrize(
    "policy, k, active",
    [(RelayPolicy.LATENCY, 1, [2]), (RelayPolicy.LATENCY, 2, [2, 3]), (RelayPolicy.ALL, 1, [2, 3, 1])],
)
def test_active_and_reserve_split(policy, k, active):
    edge = RelayEdge(endpoints=(10, 20), overlap=select_relays(CANDIDATES, policy, k), policy=policy, active_k=k)
    assert edge.active == active
    assert edge.reserves == [p for p in [2, 3, 1] if p not in active]


def test_overlap_excludes_the_endpoints():
    a = AnnotatedNeighborSet(10, [NeighborAnnotation(20, 1.0, 5.0), NeighborAnnotation(30, 9.0, 7.0)])
    b = AnnotatedNeighborSet(20, [NeighborAnnotation(10, 1.0, 5.0), NeighborAnnotation(30, 3.0, 11.0)])
    (only,) = compute_overlap(a, b)
    assert only == RelayCandidate(peer=30, latency_ms=18.0, stability_s=3.0)


def test_annotations_cover_direct_peers(ring32):
    owner = ring32.live_ids()[0]
    annotated = annotated_neighbor_set(ring32, owner)
    assert sorted(e.peer for e in annotated.entries) == ring32.direct_peers(owner)
    assert all(e.age_s >= 0 for e in annotated.entries)


def test_reachable_pair_gets_a_direct_edge(make_overlay):
    overlay = make_overlay(6)
    a, b = overlay.live_ids()[:2]
    overlay.disconnect(a, b)
    assert request_relay(overlay, a, b) is None
    assert b in overlay.direct_peers(a)


def test_proactive_connect_creates_an_overlap(make_overlay):
    overlay = make_overlay(4)
    a, b, c, d = overlay.live_ids()
    for x, y in ((a, b), (a, d), (b, c)):
        overlay.disconnect(x, y)
    assert proactive_connect(overlay, a, b) == [d]
    assert d in overlay.direct_peers(a)


def test_proactive_connect_without_reachable_neighbor(make_overlay):
    overlay = make_overlay(4)
    a, b, c, d = overlay.live_ids()
    for x, y in ((a, b), (a, d), (b, c)):
        overlay.disconnect(x, y)
        overlay.sim.policy.block(x, y)
    with pytest.raises(NoCandidateReachable):
        proactive_connect(overlay, a, b)


def test_isolated_endpoint_has_no_overlay_path(make_overlay):
    overlay = make_overlay(4)
    a, b = overlay.live_ids()[:2]
    overlay.sim.policy.block(a, b)
    for peer in list(overlay.node(a).table.edge_meta):
        overlay.disconnect(a, peer)
    with pytest.raises(NoOverlayPath):
        request_relay(overlay, a, b)


def test_blocked_neighbors_still_form_a_ring(blocked_overlay):
    assert crawl(blocked_overlay, blocked_overlay.live_ids()[0]).consistent
    edges = relayed_edges(blocked_overlay)
    assert edges
    for edge in edges:
        a, b = edge.endpoints
        relay = edge.active[0]
        assert relay in blocked_overlay.direct_peers(a)
        assert relay in blocked_overlay.direct_peers(b)


def test_latency_relay_is_the_exhaustive_argmin(blocked_overlay):
    latency = blocked_overlay.sim.latency
    for edge in relayed_edges(blocked_overlay):
        relay_maintenance_tick(blocked_overlay, edge)
        a, b = edge.endpoints
        common = (set(blocked_overlay.direct_peers(a)) & set(blocked_overlay.direct_peers(b))) - {a, b}
        best = min(common, key=lambda r: (latency.rtt(a, r) + latency.rtt(r, b), r))
        assert edge.active == [best]


def test_dead_relay_fails_over_to_a_reserve():
    from p2pvpn.experiments import build_overlay, wait_for_steady_state

    overlay = build_overlay(40, 22, latency=synthetic_latency_matrix(40, 22), block_adjacent=True)
    wait_for_steady_state(overlay)
    edge = next(e for e in relayed_edges(overlay) if e.reserves)
    dead, reserve = edge.active[0], edge.reserves[0]
    overlay.fail(dead)
    assert relay_maintenance_tick(overlay, edge)
    assert dead not in edge.overlap
    assert edge.active[0] == reserve


def test_maintenance_promotes_a_faster_new_overlap():
    from p2pvpn.experiments import build_overlay, wait_for_steady_state

    overlay = build_overlay(40, 23, latency=synthetic_latency_matrix(40, 23), block_adjacent=True)
    wait_for_steady_state(overlay)
    latency, policy = overlay.sim.latency, overlay.sim.policy

    def via(edge, relay):
        a, b = edge.endpoints
        return latency.rtt(a, relay) + latency.rtt(relay, b)

    def faster_outsider(edge):
        relay_maintenance_tick(overlay, edge)
        if not edge.active:
            return None
        a, b = edge.endpoints
        outsiders = [
            r
            for r in overlay.live_ids()
            if r not in (a, b)
            and r not in edge.candidates
            and policy.can_connect(a, r)
            and policy.can_connect(r, b)
            and via(edge, r) < via(edge, edge.active[0])
        ]
        return min(outsiders, key=lambda r: (via(edge, r), r), default=None)

    edge, relay = next((e, r) for e in relayed_edges(overlay) if (r := faster_outsider(e)) is not None)
    a, b = edge.endpoints
    assert overlay.connect(a, relay) and overlay.connect(relay, b)
    assert relay_maintenance_tick(overlay, edge)
    assert edge.active == [relay]
    assert relay in edge.candidates


@pytest.mark.slow
def test_blocked_hundred_node_overlay_is_consistent_via_relays():
    from p2pvpn.experiments import build_overlay, wait_for_steady_state

    overlay = build_overlay(100, 24, latency=synthetic_latency_matrix(100, 24), block_adjacent=True)
    wait_for_steady_state(overlay)
    assert crawl(overlay, overlay.live_ids()[0]).consistent
    edges = relayed_edges(overlay)
    assert edges
    for edge in edges:
        assert not overlay.sim.policy.can_connect(*edge.endpoints)
        assert edge.active
