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
import ipaddress
import logging
import random
from collections.abc import Callable, Hashable, Iterable
from typing import Any

import numpy as np
import simpy

from .errors import DimensionError, NoLink, ParseError
from .utils import fetch_bytes

_logger = logging.getLogger(__name__)


class NatKind(str, enum.Enum):
    PUBLIC = "public"
    CONE_NAT = "cone_nat"
    SYMMETRIC_NAT = "symmetric_nat"
    FIREWALL_BLOCKED = "firewall_blocked"


@dataclasses.dataclass
class ConnectivityPolicy:
    """Deterministic NAT/firewall reachability between registered endpoints"""

    kinds: dict[Hashable, NatKind] = dataclasses.field(default_factory=dict)
    explicit_block: set[frozenset] = dataclasses.field(default_factory=set)
    default_kind: NatKind = NatKind.PUBLIC

    def register(self, node: Hashable, kind: NatKind = NatKind.PUBLIC) -> None:
        self.kinds[node] = NatKind(kind)

    def kind(self, node: Hashable) -> NatKind:
        return self.kinds.get(node, self.default_kind)

    def block(self, a: Hashable, b: Hashable) -> None:
        self.explicit_block.add(frozenset((a, b)))

    def can_connect(self, a: Hashable, b: Hashable) -> bool:
        return can_connect(a, b, self)


def can_connect(a: Hashable, b: Hashable, policy: ConnectivityPolicy) -> bool:
    if a == b:
        return True
    kind_a, kind_b = policy.kind(a), policy.kind(b)
    if NatKind.FIREWALL_BLOCKED in (kind_a, kind_b):
        return False
    if frozenset((a, b)) in policy.explicit_block:
        return False
    if NatKind.PUBLIC in (kind_a, kind_b):
        return True
    # cone <-> cone punches through; anything involving a symmetric NAT does not
    return kind_a == kind_b == NatKind.CONE_NAT


@dataclasses.dataclass
class LatencyModel:
    """All-to-all RTT matrix (ms) plus the row each simulated endpoint is pinned to"""

    rtt_ms: np.ndarray
    assignment: dict[Hashable, int] = dataclasses.field(default_factory=dict)
    default_rtt_ms: float = 0.0

    @property
    def n(self) -> int:
        return int(self.rtt_ms.shape[0])

    @classmethod
    def constant(cls, rtt_ms: float) -> "LatencyModel":
        return cls(rtt_ms=np.zeros((0, 0)), default_rtt_ms=float(rtt_ms))

    def assign(self, node: Hashable, row: int) -> None:
        if not 0 <= row < self.n:
            raise DimensionError(f"row {row} outside a {self.n}x{self.n} matrix")
        self.assignment[node] = row

    def rtt(self, a: Hashable, b: Hashable) -> float:
        if a == b:
            return 0.0
        row_a, row_b = self.assignment.get(a), self.assignment.get(b)
        if row_a is None or row_b is None:
            return self.default_rtt_ms
        return float(self.rtt_ms[row_a, row_b])

    def one_way(self, a: Hashable, b: Hashable) -> float:
        return self.rtt(a, b) / 2.0

    def subset(self, rows: Iterable[int]) -> "LatencyModel":
        rows = list(rows)
        return LatencyModel(rtt_ms=self.rtt_ms[np.ix_(rows, rows)].copy(), default_rtt_ms=self.default_rtt_ms)


def _repair(matrix: np.ndarray) -> np.ndarray:
    m = matrix.astype(float, copy=True)
    m[m < 0] = np.nan
    mirror = np.isnan(m) & ~np.isnan(m.T)
    m[mirror] = m.T[mirror]
    n = m.shape[0]
    off_diagonal = ~np.eye(n, dtype=bool)
    for i in range(n):
        row = m[i]
        valid = row[off_diagonal[i] & ~np.isnan(row)]
        median = float(np.median(valid)) if valid.size else 0.0
        row[np.isnan(row) & off_diagonal[i]] = median
    np.fill_diagonal(m, 0.0)
    return (m + m.T) / 2.0


def _parse_matrix(lines: list[tuple[int, list[str]]]) -> np.ndarray:
    line_no, header = lines[0]
    try:
        n = int(header[0])
    except ValueError:
        raise ParseError(line_no, f"expected the node count, got {header[0]!r}") from None
    rows = lines[1:]
    if len(rows) != n:
        raise DimensionError(f"header announces {n} rows, file has {len(rows)}")
    m = np.empty((n, n))
    for i, (line_no, tokens) in enumerate(rows):
        if len(tokens) != n:
            raise DimensionError(f"line {line_no}: expected {n} columns, got {len(tokens)}")
        try:
            m[i] = [float(t) for t in tokens]
        except ValueError:
            raise ParseError(line_no, "non-numeric latency") from None
    return m


def _parse_triples(lines: list[tuple[int, list[str]]]) -> np.ndarray:
    triples = []
    for line_no, tokens in lines:
        if len(tokens) != 3:
            raise ParseError(line_no, f"expected 'i j rtt_us', got {len(tokens)} fields")
        try:
            triples.append((int(tokens[0]), int(tokens[1]), float(tokens[2])))
        except ValueError:
            raise ParseError(line_no, "malformed triple") from None
        if triples[-1][0] < 0 or triples[-1][1] < 0:
            raise ParseError(line_no, "negative host index")
    n = max(max(i, j) for i, j, _ in triples) + 1
    m = np.full((n, n), np.nan)
    for i, j, rtt_us in triples:
        m[i, j] = rtt_us / 1000.0
    return m


def parse_latency_text(text: str) -> LatencyModel:
    lines = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        tokens = raw.split()
        if tokens and not tokens[0].startswith("#"):
            lines.append((line_no, tokens))
    if not lines:
        raise ParseError(1, "empty latency file")
    if len(lines[0][1]) == 1:
        m = _parse_matrix(lines)
    elif len(lines[0][1]) == 3:
        m = _parse_triples(lines)
    else:
        raise ParseError(lines[0][0], "unrecognized latency file format")
    return LatencyModel(rtt_ms=_repair(m))


def load_latency_matrix(path: str) -> LatencyModel:
    """Load a matrix-format or King-style triples file (optionally gzip, optionally a URL)"""
    text = fetch_bytes(str(path)).decode("utf-8")
    model = parse_latency_text(text)
    _logger.info(f"Loaded {model.n}x{model.n} latency matrix from {path}")
    return model


def synthetic_latency_matrix(n: int, seed: int, max_rtt_ms: float = 300.0, noise: float = 0.1) -> LatencyModel:
    """Hosts scattered on a plane; RTT proportional to distance with multiplicative noise"""
    rng = np.random.default_rng(seed)
    points = rng.random((n, 2))
    distance = np.sqrt(((points[:, None, :] - points[None, :, :]) ** 2).sum(axis=-1))
    rtt = 5.0 + distance * (max_rtt_ms / np.sqrt(2.0))
    rtt *= rng.uniform(1.0 - noise, 1.0 + noise, size=(n, n))
    rtt = (rtt + rtt.T) / 2.0
    np.fill_diagonal(rtt, 0.0)
    return LatencyModel(rtt_ms=rtt)


class FrameKind(str, enum.Enum):
    CONTROL = "control"
    VPN = "vpn"
    APPLICATION = "application"


@dataclasses.dataclass(frozen=True)
class CapturedFrame:
    time_ms: float
    src_mac: int
    dst_mac: int
    ip_src: ipaddress.IPv4Address
    ip_dst: ipaddress.IPv4Address
    proto: str
    secured: bool
    origin: Hashable
    kind: FrameKind

    def csv_row(self) -> tuple[str, ...]:
        return (
            f"{self.time_ms:.3f}",
            format_mac(self.src_mac),
            format_mac(self.dst_mac),
            str(self.ip_src),
            str(self.ip_dst),
            self.proto,
            "1" if self.secured else "0",
        )


def format_mac(mac: int) -> str:
    return ":".join(f"{b:02x}" for b in mac.to_bytes(6, "big"))


class LanSegment:
    """A broadcast LAN with a single gateway; every frame sent on it is sniffed"""

    def __init__(self, sim: "Simulator", name: str, gateway: Hashable, gateway_mac: int):
        self.sim = sim
        self.name = name
        self.gateway = gateway
        self.gateway_mac = gateway_mac
        self.hosts: set[Hashable] = {gateway}
        self.sniffer_log: list[CapturedFrame] = []

    def attach(self, host: Hashable) -> None:
        self.hosts.add(host)

    def transmit(self, **fields: Any) -> CapturedFrame:
        frame = CapturedFrame(time_ms=self.sim.now, **fields)
        self.sniffer_log.append(frame)
        _logger.debug(f"[{self.name}] {frame.kind.value} {frame.ip_src}->{frame.ip_dst} secured={frame.secured}")
        return frame


@dataclasses.dataclass
class SimEvent:
    fire_at: float
    seq: int
    target: Any = dataclasses.field(compare=False)
    payload: Any = dataclasses.field(compare=False)
    handler: Callable[["SimEvent"], None] | None = dataclasses.field(compare=False, default=None)


class Simulator:
    """
    Single-threaded discrete-event loop on a simpy environment.

    Every scheduled event is a process that waits out its delay and then runs
    its handler. Events due at the same time fire in scheduling order, so two
    runs with the same inputs produce the same event trace.
    """

    def __init__(
        self,
        latency: LatencyModel | None = None,
        policy: ConnectivityPolicy | None = None,
        jitter_ms: float = 0.0,
        seed: int = 0,
    ):
        self.latency = latency or LatencyModel.constant(0.0)
        self.policy = policy or ConnectivityPolicy()
        self.jitter_ms = jitter_ms
        self.rng = random.Random(seed)
        self.env = simpy.Environment()
        self._seq = 0
        self._pending = 0
        self._last: SimEvent | None = None
        self._handlers: dict[Hashable, Callable[[SimEvent], None]] = {}
        self._trace = hashlib.sha256()
        self.fired = 0

    @property
    def now(self) -> float:
        return self.env.now

    def register(self, target: Hashable, handler: Callable[[SimEvent], None]) -> None:
        self._handlers[target] = handler

    def schedule_at(
        self, fire_at: float, target: Any, payload: Any = None, handler: Callable[[SimEvent], None] | None = None
    ) -> SimEvent:
        event = SimEvent(max(fire_at, self.now), self._seq, target, payload, handler)
        self._seq += 1
        self._pending += 1
        self.env.process(self._deliver(event))
        return event

    def schedule(
        self, delay_ms: float, target: Any, payload: Any = None, handler: Callable[[SimEvent], None] | None = None
    ) -> SimEvent:
        return self.schedule_at(self.now + delay_ms, target, payload, handler)

    def link_delay(self, a: Hashable, b: Hashable) -> float:
        delay = self.latency.one_way(a, b)
        if self.jitter_ms:
            delay = max(0.0, delay + self.rng.uniform(-self.jitter_ms, self.jitter_ms))
        return delay

    def path_delay(self, path: list[Hashable]) -> float:
        return sum(self.link_delay(a, b) for a, b in zip(path, path[1:]))

    def send(
        self,
        src: Hashable,
        dst: Hashable,
        msg: Any,
        size_bytes: int = 0,
        via: tuple[Hashable, ...] = (),
        handler: Callable[[SimEvent], None] | None = None,
    ) -> SimEvent:
        """Schedule delivery of ``msg`` over a direct link or a chain of relays"""
        path = [src, *via, dst]
        for a, b in zip(path, path[1:]):
            if not self.policy.can_connect(a, b):
                raise NoLink(f"no usable link {a!r} -> {b!r}")
        _logger.debug(f"send {size_bytes}B over {len(path) - 1} link(s)")
        return self.schedule(self.path_delay(path), dst, msg, handler)

    def _deliver(self, event: SimEvent):
        yield self.env.timeout(max(0.0, event.fire_at - self.env.now))
        self._pending -= 1
        self.fired += 1
        self._last = event
        self._trace.update(f"{event.fire_at:.6f}|{event.seq}|{event.target!r}|{type(event.payload).__name__};".encode())
        handler = event.handler or self._handlers.get(event.target)
        if handler is not None:
            handler(event)

    def step(self) -> SimEvent | None:
        """Advance until the next scheduled event has fired; None once nothing is left"""
        fired = self.fired
        while self.fired == fired:
            try:
                self.env.step()
            except simpy.core.EmptySchedule:
                return None
        return self._last

    def run_until(self, t: float) -> int:
        """Fire every event due at or before ``t`` and leave the clock at ``t``"""
        fired = self.fired
        if t > self.env.now:
            self.env.run(until=t)
        # simpy stops before ordinary events due exactly at ``until``
        while self.env.peek() <= t:
            self.env.step()
        return self.fired - fired

    def run(self, max_events: int | None = None) -> int:
        fired = 0
        while max_events is None or fired < max_events:
            if self.step() is None:
                break
            fired += 1
        return fired

    @property
    def pending(self) -> int:
        return self._pending

    def digest(self) -> str:
        return self._trace.copy().hexdigest()
