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

import math
import random

import networkx as nx
import numpy as np
import pytest

from p2pvpn.constant import RING_SIZE, STEADY_STATE_MAX_ROUNDS
from p2pvpn.errors import AllBootstrapsUnreachable, NodeIdCollision, NoRoute, TtlExceeded
from p2pvpn.experiments import crawl, wait_for_steady_state
from p2pvpn.overlay import (
    Direction,
    EdgeCategory,
    Overlay,
    OverlayConfig,
    OverlayMessage,
    new_node_id,
    ring_distance,
    route_key,
    select_shortcut_target,
    symmetric_distance,
)
from p2pvpn.transport_sim import Simulator

# chi-square critical value, 9 degrees of freedom, p = 0.01
CHI2_DF9_P01 = 21.666


def evenly_spaced_overlay(count, **config):
    ids = [i * (RING_SIZE // count) + 1 for i in range(count)]
    overlay = Overlay(Simulator(), OverlayConfig(**config))
    for index, node_id in enumerate(ids):
        overlay.join(node_id, ids[:index])
    overlay.stabilize()
    return overlay, ids


def usable_graph(overlay):
    graph = nx.Graph()
    graph.add_nodes_from(overlay.live_ids())
    for node_id in overlay.live_ids():
        graph.add_edges_from((node_id, peer) for peer in overlay.usable_peers(node_id))
    return graph


def test_ring_distance_wraps():
    assert ring_distance(RING_SIZE - 1, 1, Direction.RIGHT) == 2
    assert ring_distance(RING_SIZE - 1, 1, Direction.LEFT) == RING_SIZE - 2
    assert symmetric_distance(RING_SIZE - 1, 1) == 2
    assert ring_distance(5, 5, "right") == 0


def test_route_key_prefers_the_right_side_on_ties():
    dst = 100
    assert route_key(110, dst) < route_key(90, dst)
    assert route_key(95, dst) < route_key(110, dst)


def test_node_ids_are_160_bit_and_stable():
    assert new_node_id(1) == new_node_id(1)
    assert new_node_id(1) != new_node_id(2)
    assert 0 <= new_node_id(3) < RING_SIZE


def test_node_ids_are_uniform_over_the_ring():
    counts = np.zeros(10)
    for seed in range(20_000):
        counts[new_node_id(seed) * 10 // RING_SIZE] += 1
    expected = counts.sum() / 10
    assert ((counts - expected) ** 2 / expected).sum() < CHI2_DF9_P01


def test_shortcut_target_rejects_empty_estimate():
    with pytest.raises(ValueError):
        select_shortcut_target(0, 0, random.Random(0))


def test_shortcut_target_single_node_spans_the_ring():
    rng = random.Random(1)
    assert all(0 <= select_shortcut_target(5, 1, rng) < RING_SIZE for _ in range(100))


def test_shortcut_distance_is_log_uniform():
    rng = random.Random(4)
    n_estimate = 1024
    low = math.log2(RING_SIZE) - math.log2(n_estimate)
    counts = np.zeros(10)
    for _ in range(5_000):
        distance = select_shortcut_target(0, n_estimate, rng)
        counts[min(int(math.log2(distance) - low), 9)] += 1
    expected = counts.sum() / 10
    assert ((counts - expected) ** 2 / expected).sum() < CHI2_DF9_P01


def test_first_node_starts_a_ring(sim):
    overlay = Overlay(sim)
    overlay.join(10)
    assert overlay.live_ids() == [10]
    assert crawl(overlay, 10).consistent


def test_duplicate_id_is_rejected(sim):
    overlay = Overlay(sim)
    overlay.join(10)
    with pytest.raises(NodeIdCollision):
        overlay.join(10, [10])


def test_unreachable_bootstrap(sim):
    overlay = Overlay(sim)
    overlay.join(10)
    with pytest.raises(AllBootstrapsUnreachable):
        overlay.join(20, [99])
    sim.policy.block(20, 10)
    with pytest.raises(AllBootstrapsUnreachable):
        overlay.join(20, [10])


@pytest.mark.parametrize("size", [2, 3, 5, 8, 16, 25])
@pytest.mark.parametrize("seed", [0, 1])
def test_stabilized_ring_is_consistent(make_overlay, size, seed):
    overlay = make_overlay(size, seed)
    report = crawl(overlay, overlay.live_ids()[0])
    assert report.inconsistent == []
    assert report.visited == size


@pytest.mark.slow
@pytest.mark.parametrize("size", range(2, 65))
def test_ring_consistency_sweep(make_overlay, size):
    for seed in range(10):
        overlay = make_overlay(size, seed)
        assert crawl(overlay, overlay.live_ids()[-1]).consistent, (size, seed)


def test_categories_are_disjoint(ring32):
    for node_id in ring32.live_ids():
        table = ring32.node(node_id).table
        near = table.near()
        assert not near & table.shortcuts
        assert not near & set(table.relay_edges)
        assert not table.shortcuts & set(table.relay_edges)
        for peer in table.edge_meta:
            assert table.category(peer) in (EdgeCategory.NEAR, EdgeCategory.SHORTCUT, EdgeCategory.RELAY)


def test_greedy_delivers_to_the_owner(ring32):
    rng = random.Random(9)
    live = ring32.live_ids()
    for _ in range(300):
        address = rng.randrange(RING_SIZE)
        src = rng.choice(live)
        trace = ring32.route_greedy(src, OverlayMessage(src=src, dst=address))
        assert (trace[-1] if trace else src) == ring32.owner_of(address)


def test_usable_edges_connect_every_node(ring32):
    assert nx.is_connected(usable_graph(ring32))


def test_routing_to_self_takes_no_hops(ring32):
    node_id = ring32.live_ids()[3]
    assert ring32.route_greedy(node_id, OverlayMessage(src=node_id, dst=node_id)) == []


def test_ring_only_routing_walks_the_neighbors():
    overlay, ids = evenly_spaced_overlay(8, neighbor_count=1, shortcuts=False, full_mesh_size=0)
    trace = overlay.route_greedy(ids[0], OverlayMessage(src=ids[0], dst=ids[4]))
    assert trace == [ids[7], ids[6], ids[5], ids[4]]


def test_routing_spends_one_ttl_hop_per_hop():
    overlay, ids = evenly_spaced_overlay(8, neighbor_count=1, shortcuts=False, full_mesh_size=0)
    msg = OverlayMessage(src=ids[0], dst=ids[4], ttl_hops=10)
    trace = overlay.route_greedy(ids[0], msg)
    assert msg.ttl_hops == 10 - len(trace) == 6


def test_ttl_is_enforced():
    overlay, ids = evenly_spaced_overlay(8, neighbor_count=1, shortcuts=False, full_mesh_size=0)
    with pytest.raises(TtlExceeded):
        overlay.route_greedy(ids[0], OverlayMessage(src=ids[0], dst=ids[4], ttl_hops=2))
    with pytest.raises(TtlExceeded):
        overlay.route_greedy(ids[0], OverlayMessage(src=ids[0], dst=ids[4], ttl_hops=0))


def test_isolated_node_has_no_route(make_overlay):
    overlay = make_overlay(4)
    node_id = overlay.live_ids()[0]
    for peer in list(overlay.node(node_id).table.edge_meta):
        overlay.disconnect(node_id, peer)
    with pytest.raises(NoRoute):
        overlay.route_greedy(node_id, OverlayMessage(src=node_id, dst=overlay.live_ids()[2]))


def test_small_overlay_is_a_full_mesh(make_overlay):
    overlay = make_overlay(10)
    for node_id in overlay.live_ids():
        assert len(overlay.usable_peers(node_id)) == 9


def test_mean_hops_are_logarithmic(make_overlay):
    overlay = make_overlay(64, 3)
    live = overlay.live_ids()
    rng = random.Random(2)
    hops = []
    for _ in range(300):
        src, dst = rng.sample(live, 2)
        hops.append(len(overlay.route_greedy(src, OverlayMessage(src=src, dst=dst))))
    assert np.mean(hops) <= 2 * math.log2(64)


@pytest.mark.slow
@pytest.mark.parametrize("size", [256, 1024])
def test_mean_hops_are_logarithmic_at_scale(make_overlay, size):
    overlay = make_overlay(size, 5)
    live = overlay.live_ids()
    rng = random.Random(size)
    hops = [len(overlay.route_greedy(s, OverlayMessage(src=s, dst=d))) for s, d in (rng.sample(live, 2) for _ in range(1_000))]
    assert np.mean(hops) <= 2 * math.log2(size)


def test_graceful_leave_is_forgotten_at_once(make_overlay):
    overlay = make_overlay(30)
    leaver = overlay.live_ids()[5]
    overlay.leave(leaver)
    for node_id in overlay.live_ids():
        table = overlay.node(node_id).table
        assert leaver not in table.near()
        assert leaver not in table.edge_meta


def test_failure_is_detected_and_repaired(make_overlay):
    overlay = make_overlay(30)
    victim = overlay.live_ids()[5]
    overlay.fail(victim)
    for _ in range(overlay.config.failure_detect_ticks + 6):
        overlay.stabilize_round()
    assert crawl(overlay, overlay.live_ids()[0]).consistent
    assert all(victim not in overlay.node(n).table.edge_meta for n in overlay.live_ids())


def test_send_delivers_after_path_latency(make_overlay):
    overlay = make_overlay(12)
    src, dst = overlay.live_ids()[0], overlay.live_ids()[7]
    trace, event = overlay.send(OverlayMessage(src=src, dst=dst))
    assert trace[-1] == dst
    assert event.fire_at == pytest.approx(overlay.sim.now + overlay.path_latency(src, trace))


def test_find_path_reaches_every_node(ring32):
    live = ring32.live_ids()
    for dst in live[1:]:
        path = ring32.find_path(live[0], dst)
        assert path[0] == live[0] and path[-1] == dst


def test_tick_on_a_settled_ring_changes_nothing(make_overlay):
    overlay = make_overlay(24, 6, shortcuts=False)
    overlay.stabilize()
    before = {n: sorted(overlay.node(n).table.edge_meta) for n in overlay.live_ids()}
    overlay.sim.run_until(overlay.sim.now + overlay.config.stabilize_period_ms)
    assert [overlay.stabilize_tick(n) for n in overlay.live_ids()] == [0] * 24
    assert {n: sorted(overlay.node(n).table.edge_meta) for n in overlay.live_ids()} == before


def test_failed_id_is_taken_back_after_it_rejoins(make_overlay):
    overlay = make_overlay(30, 8)
    victim = overlay.live_ids()[9]
    overlay.fail(victim)
    for _ in range(overlay.config.failure_detect_ticks + 6):
        overlay.stabilize_round()
    assert any(victim in overlay.node(n).failed for n in overlay.live_ids())

    overlay.join(victim, overlay.live_ids())
    wait_for_steady_state(overlay)
    assert crawl(overlay, victim).consistent
    table = overlay.node(victim).table
    for neighbor in (table.left_neighbors[0], table.right_neighbors[0]):
        assert victim not in overlay.node(neighbor).failed
        assert victim in overlay.node(neighbor).table.near()


@pytest.mark.slow
def test_ring_recovers_from_a_fifth_failing_at_once(make_overlay):
    overlay = make_overlay(200, 12)
    dead = random.Random(12).sample(overlay.live_ids(), 40)
    for node_id in dead:
        overlay.fail(node_id)
    assert wait_for_steady_state(overlay) < STEADY_STATE_MAX_ROUNDS
    live = overlay.live_ids()
    assert len(live) == 160
    assert crawl(overlay, live[0]).consistent
    assert all(not set(dead) & overlay.node(n).table.near() for n in live)
