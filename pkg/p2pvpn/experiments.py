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

import csv
import dataclasses
import hashlib
import io
import logging
import random
from collections.abc import Iterable
from typing import IO

import numpy as np

from .constant import (
    BENCH_CSV_HEADER,
    CHURN_CONVERGENCE_ROUNDS,
    CHURN_CSV_HEADER,
    CHURN_REPORT_PERIOD_MS,
    DEFAULT_SIZES,
    DEFAULT_TRIALS,
    MINUTE_MS,
    SNIFFER_CSV_HEADER,
    STEADY_STATE_MAX_ROUNDS,
    SYNTHETIC_HOSTS,
)
from .dht import Dht
from .errors import CrawlStalled, DatasetTooSmall
from .overlay import Direction, NodeId, Overlay, OverlayConfig, OverlayMessage, new_node_id
from .relays import RelayCandidate, RelayPolicy, annotated_neighbor_set, select_relays
from .transport_sim import (
    CapturedFrame,
    ConnectivityPolicy,
    FrameKind,
    LanSegment,
    LatencyModel,
    Simulator,
    load_latency_matrix,
    synthetic_latency_matrix,
)
from .utils import short_id
from .vpn import ClientHost, Proto, VirtualNetwork, VpnMode

_logger = logging.getLogger(__name__)


def derive_seed(*parts: object) -> int:
    """Stable 64-bit seed from any tuple of printable parts"""
    return int.from_bytes(hashlib.sha256(":".join(map(str, parts)).encode()).digest()[:8], "big")


def node_ids(size: int, seed: int) -> list[NodeId]:
    return [new_node_id(derive_seed(seed, "node", index)) for index in range(size)]


def block_ring_adjacent(policy: ConnectivityPolicy, ids: Iterable[NodeId]) -> int:
    """Mutually block every pair of ids adjacent on the ring; return the pairs blocked"""
    ring = sorted(ids)
    if len(ring) < 3:
        return 0
    for a, b in zip(ring, ring[1:] + ring[:1]):
        policy.block(a, b)
    return len(ring)


def build_overlay(
    size: int,
    seed: int,
    latency: LatencyModel | None = None,
    config: OverlayConfig | None = None,
    jitter_ms: float = 0.0,
    block_adjacent: bool = False,
) -> Overlay:
    """Join ``size`` nodes one after another, each bootstrapping through those already in"""
    ids = node_ids(size, seed)
    policy = ConnectivityPolicy()
    if block_adjacent:
        block_ring_adjacent(policy, ids)
    sim = Simulator(latency=latency, policy=policy, jitter_ms=jitter_ms, seed=seed)
    overlay = Overlay(sim, config or OverlayConfig(seed=seed))
    for index, node_id in enumerate(ids):
        if latency is not None:
            sim.latency.assign(node_id, index)
        overlay.join(node_id, ids[:index])
    return overlay


# crawler ------------------------------------------------------------------------------------------------------------


@dataclasses.dataclass
class CrawlReport:
    visited: int
    inconsistent: list[tuple[NodeId, str]] = dataclasses.field(default_factory=list)
    duration_hops: int = 0
    stalled: CrawlStalled | None = None

    @property
    def consistent(self) -> bool:
        return not self.inconsistent

    def flagged(self) -> set[NodeId]:
        return {node for node, _ in self.inconsistent}


def _congruence(overlay: Overlay, node_id: NodeId) -> list[str]:
    """Mutual agreement with the first and second neighbor on each side"""
    table = overlay.node(node_id).table
    reasons = []
    for index in (0, 1):
        for direction, back in ((Direction.RIGHT, Direction.LEFT), (Direction.LEFT, Direction.RIGHT)):
            peer = table.first(direction, index)
            if peer is None:
                continue
            label = f"{direction.value[0]}{index + 1}"
            if not overlay.is_live(peer):
                reasons.append(f"{label} {short_id(peer)} is gone")
            elif overlay.node(peer).table.first(back, index) != node_id:
                reasons.append(f"{label} {short_id(peer)} disagrees")
    return reasons


def crawl(overlay: Overlay, start: NodeId) -> CrawlReport:
    """Walk first-right pointers from ``start`` auditing each node's neighbor agreement"""
    if not overlay.is_live(start):
        raise ValueError(f"crawl must start at a live node, {short_id(start)} is not")
    live = len(overlay.live_ids())
    report = CrawlReport(visited=0)
    seen: set[NodeId] = set()
    current = start
    while True:
        seen.add(current)
        report.visited += 1
        report.inconsistent.extend((current, reason) for reason in _congruence(overlay, current))
        nxt = overlay.node(current).table.first(Direction.RIGHT)
        if nxt is None:
            if live > 1:
                report.inconsistent.append((current, "no right neighbor"))
            break
        if not overlay.is_live(nxt):
            report.stalled = CrawlStalled(f"next hop {short_id(nxt)} after {short_id(current)} is unreachable")
            _logger.warning(f"[{overlay.name}] crawl stalled: {report.stalled}")
            break
        report.duration_hops += 1
        if nxt == start:
            break
        if nxt in seen or report.visited >= live:
            report.inconsistent.append((current, f"walk re-entered the ring at {short_id(nxt)}"))
            break
        current = nxt
    if report.visited != live:
        report.inconsistent.append((start, f"ring covers {report.visited} of {live} live nodes"))
    return report


def wait_for_steady_state(overlay: Overlay, max_rounds: int = STEADY_STATE_MAX_ROUNDS) -> int:
    """Stabilize until two consecutive crawls are fully consistent; return the rounds used"""
    consecutive = 0
    for rounds in range(1, max_rounds + 1):
        overlay.stabilize_round()
        live = overlay.live_ids()
        consecutive = consecutive + 1 if live and crawl(overlay, live[0]).consistent else 0
        if consecutive >= 2:
            return rounds
    _logger.warning(f"[{overlay.name}] not at steady state after {max_rounds} rounds")
    return max_rounds


# relay benchmark ----------------------------------------------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    dataset_path: str | None = None
    sizes: tuple[int, ...] = DEFAULT_SIZES
    trials_per_size: int = DEFAULT_TRIALS
    seed: int = 0
    relay_policy: str = RelayPolicy.LATENCY.value
    relay_side: str = "source"
    jitter_ms: float = 0.0
    output_path: str | None = None
    max_pairs: int = 2_000

    def __post_init__(self):
        if self.trials_per_size < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials_per_size}")
        if not self.sizes or min(self.sizes) < 1:
            raise ValueError(f"sizes must be positive, got {self.sizes}")
        if self.relay_side not in ("source", "destination"):
            raise ValueError(f"relay side must be source or destination, got {self.relay_side}")
        RelayPolicy(self.relay_policy)


@dataclasses.dataclass(frozen=True)
class BenchRow:
    size: int
    trial: int
    pairs: int
    avg_overlay_ms: float | None
    avg_relay_ms: float | None
    avg_direct_ms: float | None

    @property
    def improvement_pct(self) -> float | None:
        if not self.pairs or not self.avg_overlay_ms:
            return None
        return 100.0 * (self.avg_overlay_ms - self.avg_relay_ms) / self.avg_overlay_ms

    @property
    def improvement_ratio_pct(self) -> float | None:
        if not self.pairs or not self.avg_relay_ms:
            return None
        return 100.0 * (self.avg_overlay_ms / self.avg_relay_ms - 1.0)

    def csv_row(self) -> tuple[str, ...]:
        def fmt(value):
            return "" if value is None else f"{value:.3f}"

        return (
            str(self.size),
            str(self.trial),
            str(self.pairs),
            fmt(self.avg_overlay_ms),
            fmt(self.avg_relay_ms),
            fmt(self.avg_direct_ms),
            fmt(self.improvement_pct),
            fmt(self.improvement_ratio_pct),
        )


def load_dataset(config: ExperimentConfig) -> LatencyModel:
    if config.dataset_path:
        return load_latency_matrix(config.dataset_path)
    return synthetic_latency_matrix(max(SYNTHETIC_HOSTS, max(config.sizes)), config.seed)


def _relays_for(overlay: Overlay, src: NodeId, dst: NodeId, policy: RelayPolicy, side: str) -> list[NodeId]:
    """Relays a pair would use: the peers of one endpoint, ordered by the overlay's relay policy"""
    anchor = src if side == "source" else dst
    candidates = [
        RelayCandidate(entry.peer, entry.latency_ms, entry.age_s)
        for entry in annotated_neighbor_set(overlay, anchor).entries
        if entry.peer not in (src, dst)
    ]
    if not candidates:
        return []
    ordered = select_relays(candidates, policy, 1)
    return ordered if policy is RelayPolicy.ALL else ordered[:1]


def benchmark_trial(
    model: LatencyModel, size: int, trial: int, config: ExperimentConfig
) -> BenchRow:
    if size > model.n:
        raise DatasetTooSmall(f"size {size} exceeds the {model.n} hosts in the dataset")
    trial_seed = derive_seed(config.seed, size, trial)
    rng = random.Random(trial_seed)
    rows = rng.sample(range(model.n), size)
    overlay = build_overlay(
        size,
        trial_seed,
        model.subset(rows),
        config=OverlayConfig(seed=trial_seed, relay_policy=config.relay_policy),
        jitter_ms=config.jitter_ms,
    )
    wait_for_steady_state(overlay)

    latency = overlay.sim.latency
    live = overlay.live_ids()
    pairs = [(s, d) for s in live for d in live if s != d]
    if len(pairs) > config.max_pairs:
        pairs = rng.sample(pairs, config.max_pairs)
    policy = RelayPolicy(config.relay_policy)

    overlay_ms, relay_ms, direct_ms = [], [], []
    for src, dst in pairs:
        trace = overlay.route_greedy(src, OverlayMessage(src=src, dst=dst))
        if len(trace) < 2 or trace[-1] != dst:
            continue
        relays = _relays_for(overlay, src, dst, policy, config.relay_side)
        if not relays:
            continue
        overlay_ms.append(overlay.path_latency(src, trace))
        # every active relay carries a copy; the first to arrive counts
        relay_ms.append(min(latency.one_way(src, r) + latency.one_way(r, dst) for r in relays))
        direct_ms.append(latency.one_way(src, dst))

    if not overlay_ms:
        return BenchRow(size, trial, 0, None, None, None)
    row = BenchRow(
        size, trial, len(overlay_ms), float(np.mean(overlay_ms)), float(np.mean(relay_ms)), float(np.mean(direct_ms))
    )
    _logger.info(f"relay-bench size={size} trial={trial} pairs={row.pairs} improvement={row.improvement_pct:.1f}%")
    return row


def relay_benchmark(config: ExperimentConfig, model: LatencyModel | None = None) -> list[BenchRow]:
    model = model or load_dataset(config)
    too_big = [size for size in config.sizes if size > model.n]
    if too_big:
        raise DatasetTooSmall(f"sizes {too_big} exceed the {model.n} hosts in the dataset")
    return [
        benchmark_trial(model, size, trial, config)
        for size in sorted(config.sizes)
        for trial in range(config.trials_per_size)
    ]


def bench_metadata(config: ExperimentConfig) -> list[str]:
    return [
        f"dataset={config.dataset_path or 'synthetic'}",
        f"seed={config.seed} trials={config.trials_per_size} policy={config.relay_policy} relay_side={config.relay_side}",
        "improvement_pct=100*(overlay-relay)/overlay; improvement_ratio_pct=100*(overlay/relay-1)",
    ]


def median_improvement(rows: Iterable[BenchRow]) -> dict[int, float | None]:
    by_size: dict[int, list[float]] = {}
    for row in rows:
        by_size.setdefault(row.size, [])
        if row.improvement_pct is not None:
            by_size[row.size].append(row.improvement_pct)
    return {size: (float(np.median(values)) if values else None) for size, values in sorted(by_size.items())}


def write_csv(stream: IO[str], header: tuple[str, ...], rows: Iterable[tuple[str, ...]], metadata: Iterable[str] = ()):
    for line in metadata:
        stream.write(f"# {line}\n")
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)


def render_csv(header: tuple[str, ...], rows: Iterable[tuple[str, ...]], metadata: Iterable[str] = ()) -> str:
    buffer = io.StringIO()
    write_csv(buffer, header, rows, metadata)
    return buffer.getvalue()


# churn --------------------------------------------------------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class ChurnConfig:
    size: int = 200
    arrival_rate: float = 0.0
    departure_rate: float = 0.0
    duration_ms: float = 5 * MINUTE_MS
    graceful: bool = True
    seed: int = 0
    report_period_ms: float = CHURN_REPORT_PERIOD_MS
    convergence_rounds: int = CHURN_CONVERGENCE_ROUNDS
    relay_policy: str = RelayPolicy.LATENCY.value

    def __post_init__(self):
        if self.arrival_rate < 0 or self.departure_rate < 0:
            raise ValueError("churn rates must be >= 0")
        RelayPolicy(self.relay_policy)


@dataclasses.dataclass(frozen=True)
class ChurnSample:
    time_ms: float
    live: int
    visited: int
    inconsistent: int
    consistency_pct: float

    def csv_row(self) -> tuple[str, ...]:
        return (f"{self.time_ms:.0f}", str(self.live), str(self.visited), str(self.inconsistent), f"{self.consistency_pct:.2f}")


def _sample(overlay: Overlay) -> ChurnSample:
    live = overlay.live_ids()
    report = crawl(overlay, live[0])
    flagged = len(report.flagged())
    return ChurnSample(overlay.sim.now, len(live), report.visited, flagged, 100.0 * (len(live) - flagged) / len(live))


def churn_scenario(config: ChurnConfig) -> list[ChurnSample]:
    """
    Arrivals and departures (fractions of the live population per minute) for
    ``duration_ms``, then a quiet period until two consecutive consistent samples.
    """
    overlay_config = OverlayConfig(seed=config.seed, relay_policy=config.relay_policy)
    overlay = build_overlay(config.size, config.seed, config=overlay_config)
    wait_for_steady_state(overlay)
    rng = random.Random(derive_seed(config.seed, "churn"))
    period = overlay.config.stabilize_period_ms
    start = overlay.sim.now
    next_report = start
    arrivals = departures = 0.0
    joined = config.size
    samples: list[ChurnSample] = []

    while overlay.sim.now - start < config.duration_ms:
        live = overlay.live_ids()
        departures += config.departure_rate * len(live) * period / MINUTE_MS
        arrivals += config.arrival_rate * len(live) * period / MINUTE_MS
        while departures >= 1.0 and len(live) > 1:
            departures -= 1.0
            victim = live.pop(rng.randrange(len(live)))
            (overlay.leave if config.graceful else overlay.fail)(victim)
        while arrivals >= 1.0:
            arrivals -= 1.0
            overlay.join(new_node_id(derive_seed(config.seed, "node", joined)), [rng.choice(live)])
            joined += 1
        if overlay.sim.now >= next_report:
            samples.append(_sample(overlay))
            next_report += config.report_period_ms
        overlay.stabilize_round()

    consecutive = 0
    for _ in range(config.convergence_rounds):
        overlay.stabilize_round()
        if overlay.sim.now >= next_report:
            sample = _sample(overlay)
            samples.append(sample)
            next_report += config.report_period_ms
            consecutive = consecutive + 1 if sample.inconsistent == 0 else 0
            if consecutive >= 2:
                break
    return samples


# full-tunnel demo ---------------------------------------------------------------------------------------------------

DEMO_SUBNET = "10.128.0.0/24"
DEMO_WEB_SERVER = "93.184.216.34"
DEMO_CLIENT_IP = "192.168.1.10"
DEMO_CLIENT_MAC = 0x001B21_3A4F5C
DEMO_LAN_GATEWAY_MAC = 0x001B21_000001


@dataclasses.dataclass
class TunnelVerdict:
    leak: bool
    plaintext_frames: int
    exposed_endpoints: list[str]
    app_packets: int
    replies: int


@dataclasses.dataclass
class TunnelDemoResult:
    frames: list[CapturedFrame]
    verdict: TunnelVerdict

    def csv_rows(self) -> list[tuple[str, ...]]:
        return [frame.csv_row() for frame in self.frames]


def classify_frames(frames: list[CapturedFrame], origin: str) -> tuple[int, list[str]]:
    mine = [f for f in frames if f.origin == origin]
    plaintext = sum(1 for f in mine if f.kind is FrameKind.APPLICATION and not f.secured)
    exposed = sorted({str(f.ip_dst) for f in mine if f.kind is not FrameKind.APPLICATION})
    return plaintext, exposed


def tunnel_demo(
    approach: int, attack: str | None = None, packets: int = 100, seed: int = 0, transport: str = "udp"
) -> TunnelDemoResult:
    """
    A full-tunnel client on a LAN, a VPN gateway and a few peers on the overlay;
    the client browses one web server. With ``attack="spoof"`` an attacker first
    sends a P2P initiation forged from the web server's address.
    """
    if approach not in (1, 2):
        raise ValueError(f"approach must be 1 or 2, got {approach}")
    overlay = build_overlay(6, seed, config=OverlayConfig(seed=seed))
    wait_for_steady_state(overlay)
    sim = overlay.sim
    dht = Dht(overlay)
    vn = VirtualNetwork(overlay, dht, "demo", DEMO_SUBNET)
    client_id, gateway_id, *peer_ids = overlay.live_ids()

    vn.attach(gateway_id, VpnMode.GATEWAY)
    vn.register_gateway(gateway_id)
    for peer in peer_ids:
        vn.attach(peer, VpnMode.SPLIT)
    lan = LanSegment(sim, "client-lan", "lan-gateway", DEMO_LAN_GATEWAY_MAC)
    host = ClientHost("client", lan, DEMO_CLIENT_IP, DEMO_CLIENT_MAC, transport=Proto(transport), seed=seed)
    client = vn.attach(client_id, VpnMode.FULL_TUNNEL_CLIENT, approach=approach, host=host)
    vn.add_internet_host(DEMO_WEB_SERVER)

    if attack == "spoof":
        host.receive_initiation(DEMO_WEB_SERVER)
    elif attack is not None:
        raise ValueError(f"unknown attack {attack}")

    peer_ip = vn.endpoints[peer_ids[0]].state.virtual_ip
    for index in range(packets):
        host.send_application(vn, DEMO_WEB_SERVER, Proto.UDP, 80, f"GET /{index}".encode())
        if index % 10 == 0:
            host.send_application(vn, peer_ip, Proto.UDP, 5000, f"hello {index}".encode())
        sim.run_until(sim.now + 50.0)
    sim.run_until(sim.now + 1_000.0)

    plaintext, exposed = classify_frames(lan.sniffer_log, host.name)
    verdict = TunnelVerdict(plaintext > 0, plaintext, exposed, packets, client.counters["delivered"])
    _logger.info(f"tunnel-demo approach={approach} attack={attack}: leak={verdict.leak} plaintext={plaintext}")
    return TunnelDemoResult(list(lan.sniffer_log), verdict)


def sniffer_csv(result: TunnelDemoResult) -> str:
    verdict = result.verdict
    metadata = [
        f"leak={str(verdict.leak).lower()} plaintext_frames={verdict.plaintext_frames} "
        f"app_packets={verdict.app_packets} replies={verdict.replies}",
        f"exposed_endpoints={' '.join(verdict.exposed_endpoints)}",
    ]
    return render_csv(SNIFFER_CSV_HEADER, result.csv_rows(), metadata)


def bench_csv(config: ExperimentConfig, rows: list[BenchRow]) -> str:
    return render_csv(BENCH_CSV_HEADER, [row.csv_row() for row in rows], bench_metadata(config))


def churn_csv(config: ChurnConfig, samples: list[ChurnSample]) -> str:
    metadata = [
        f"size={config.size} arrival={config.arrival_rate}/min departure={config.departure_rate}/min "
        f"duration_ms={config.duration_ms:.0f} graceful={str(config.graceful).lower()} seed={config.seed}"
    ]
    return render_csv(CHURN_CSV_HEADER, [s.csv_row() for s in samples], metadata)
