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
import ipaddress
import logging
import random
from collections import Counter
from typing import Any

from .constant import (
    DEMAND_SHORTCUT_THRESHOLD,
    GATEWAY_MISSED_PINGS,
    GATEWAY_NAT_FIRST_PORT,
    GATEWAY_NAT_LAST_PORT,
    GATEWAY_PING_PERIOD_MS,
    LEASE_TTL_MS,
    NAT_FLOW_IDLE_MS,
    VPN_APP_PORT,
)
from .dht import Dht, decode_node_id, encode_node_id, gateways_key, ip_key
from .errors import NoGatewayAvailable, NotFound, P2PVpnError, SubnetExhausted, UnsupportedProto
from .overlay import MessageKind, NodeId, Overlay, OverlayMessage
from .transport_sim import CapturedFrame, FrameKind, LanSegment
from .utils import short_id

_logger = logging.getLogger(__name__)

IPv4 = ipaddress.IPv4Address
_MAC_MAX = (1 << 48) - 1
_LOCALLY_ADMINISTERED = 1 << 41
_MULTICAST = 1 << 40
# stand-in public addresses for overlay endpoints and the Internet side of gateways
_PUBLIC_BLOCK = ipaddress.IPv4Network("198.18.0.0/15")
_DEFAULT_ROUTE = ipaddress.IPv4Network("0.0.0.0/0")


class Proto(str, enum.Enum):
    UDP = "udp"
    TCP = "tcp"
    ICMP = "icmp"


class VpnMode(str, enum.Enum):
    SPLIT = "split"
    FULL_TUNNEL_CLIENT = "full_tunnel_client"
    GATEWAY = "gateway"


class RouteVia(str, enum.Enum):
    VN_DEVICE = "vn_device"
    LAN_GATEWAY = "lan_gateway"


@dataclasses.dataclass
class VirtualPacket:
    eth_src: int
    eth_dst: int
    ip_src: IPv4
    ip_dst: IPv4
    proto: Proto = Proto.UDP
    src_port: int = 0
    dst_port: int = 0
    payload: bytes = b""
    secured: bool = False
    # security wrapper, present when secured
    sender: NodeId | None = None
    group: str | None = None
    nonce: int = 0
    certificate: Any = None

    def __post_init__(self):
        self.ip_src = IPv4(self.ip_src)
        self.ip_dst = IPv4(self.ip_dst)
        self.proto = Proto(self.proto)
        for mac in (self.eth_src, self.eth_dst):
            if not 0 <= mac <= _MAC_MAX:
                raise ValueError(f"MAC address out of range: {mac:#x}")
        for port in (self.src_port, self.dst_port):
            if not 0 <= port <= 0xFFFF:
                raise ValueError(f"port out of range: {port}")


@dataclasses.dataclass(frozen=True)
class RouteEntry:
    prefix: ipaddress.IPv4Network
    via: RouteVia


@dataclasses.dataclass
class VpnEndpointState:
    node: NodeId
    virtual_ip: IPv4
    vpn_subnet: ipaddress.IPv4Network
    mode: VpnMode = VpnMode.SPLIT
    approach: int | None = None
    current_gateway: NodeId | None = None
    failed_gateways: set[NodeId] = dataclasses.field(default_factory=set)
    route_table: list[RouteEntry] = dataclasses.field(default_factory=list)

    def check(self) -> None:
        if self.virtual_ip not in self.vpn_subnet:
            raise ValueError(f"{self.virtual_ip} is outside {self.vpn_subnet}")
        if self.current_gateway is not None and self.current_gateway in self.failed_gateways:
            raise ValueError(f"current gateway {short_id(self.current_gateway)} is marked failed")
        if (self.mode is VpnMode.FULL_TUNNEL_CLIENT) != (self.approach in (1, 2)):
            raise ValueError(f"mode {self.mode.value} does not match approach {self.approach}")


@dataclasses.dataclass(frozen=True)
class IpMapping:
    ip: IPv4
    owner: NodeId
    lease_expires: float


@dataclasses.dataclass(frozen=True)
class VpnConfig:
    demand_shortcut_threshold: int = DEMAND_SHORTCUT_THRESHOLD
    gateway_ping_period_ms: float = GATEWAY_PING_PERIOD_MS
    gateway_missed_pings: int = GATEWAY_MISSED_PINGS
    lease_ttl_ms: float = LEASE_TTL_MS
    nat_flow_idle_ms: float = NAT_FLOW_IDLE_MS
    vpn_port: int = VPN_APP_PORT
    seed: int = 0


@dataclasses.dataclass(frozen=True)
class OutgoingAction:
    verdict: str
    peer: NodeId | None = None
    hops: int = 0
    path: tuple[NodeId, ...] = ()


def public_endpoint(node_id: NodeId) -> IPv4:
    """Physical address an overlay endpoint is reachable at"""
    return _PUBLIC_BLOCK[2 + node_id % (_PUBLIC_BLOCK.num_addresses - 4)]


def random_session_mac(rng: random.Random) -> int:
    """Unicast MAC from the locally administered space"""
    return (rng.getrandbits(48) | _LOCALLY_ADMINISTERED) & ~_MULTICAST


class PacketAuthenticator:
    """Models the security wrapper: seals outgoing packets and checks incoming ones"""

    def __init__(self, group: str):
        self.group = group
        self._nonce = 0

    def seal(self, sender: NodeId, pkt: VirtualPacket) -> VirtualPacket:
        self._nonce += 1
        return dataclasses.replace(pkt, secured=True, sender=sender, group=self.group, nonce=self._nonce)

    def verify(self, receiver: NodeId, pkt: VirtualPacket) -> bool:
        return pkt.secured and pkt.sender is not None and pkt.group == self.group


class InternetHost:
    """A host outside every VPN; echoes whatever it receives"""

    def __init__(self, ip: IPv4 | str):
        self.ip = IPv4(ip)
        self.received: list[VirtualPacket] = []

    def reply(self, pkt: VirtualPacket) -> VirtualPacket:
        self.received.append(pkt)
        return dataclasses.replace(
            pkt,
            ip_src=pkt.ip_dst,
            ip_dst=pkt.ip_src,
            src_port=pkt.dst_port,
            dst_port=pkt.src_port,
            payload=b"echo:" + pkt.payload,
            secured=False,
            sender=None,
            group=None,
            certificate=None,
        )


@dataclasses.dataclass
class NatFlow:
    member: NodeId
    member_ip: IPv4
    member_port: int
    remote_ip: IPv4
    remote_port: int
    last_used: float = 0.0

    @property
    def key(self) -> tuple:
        return self.member, self.member_ip, self.member_port, self.remote_ip, self.remote_port


class VpnEndpoint:
    def __init__(self, state: VpnEndpointState, seed: int):
        self.state = state
        self.vn_device: list[VirtualPacket] = []
        self.counters: Counter = Counter()
        self.rng = random.Random(f"{seed}:vpn:{state.node}")
        self.host: "ClientHost | None" = None
        self.running = True
        self.missed_pings = 0
        self.pinging = False
        # gateway side
        self.nat_flows: dict[int, NatFlow] = {}
        self.nat_ports: dict[tuple, int] = {}
        self.next_nat_port = GATEWAY_NAT_FIRST_PORT

    @property
    def node(self) -> NodeId:
        return self.state.node


class VirtualNetwork:
    """
    One VPN group's virtual network over an overlay and its DHT: address
    allocation, resolution, packet handling and gateways.
    """

    def __init__(
        self,
        overlay: Overlay,
        dht: Dht,
        group: str,
        subnet: str,
        config: VpnConfig | None = None,
        authenticator: PacketAuthenticator | None = None,
    ):
        self.overlay = overlay
        self.dht = dht
        self.group = group
        self.subnet = ipaddress.IPv4Network(subnet)
        self.config = config or VpnConfig()
        self.authenticator = authenticator or PacketAuthenticator(group)
        self.endpoints: dict[NodeId, VpnEndpoint] = {}
        self.internet: dict[IPv4, InternetHost] = {}
        self.traffic: Counter = Counter()
        self.demand_shortcuts: set[frozenset] = set()

    @property
    def sim(self):
        return self.overlay.sim

    @property
    def service_address(self) -> IPv4:
        """Virtual service address; full-tunnel clients use it as their default gateway"""
        return self.subnet[1]

    def add_internet_host(self, ip: IPv4 | str) -> InternetHost:
        host = self.internet.setdefault(IPv4(ip), InternetHost(ip))
        return host

    # addressing -----------------------------------------------------------------------------------------------------

    def _claimable(self, subnet: ipaddress.IPv4Network) -> list[IPv4]:
        return [ip for ip in subnet.hosts() if ip != self.service_address]

    def _owners(self, via: NodeId, ip: IPv4) -> list[NodeId]:
        return sorted(decode_node_id(v) for v in self.dht.get(via, ip_key(str(ip))))

    def allocate_addresses(
        self, nodes: list[NodeId], subnet: str | None = None, preferred: IPv4 | str | None = None
    ) -> dict[NodeId, IPv4]:
        """
        DHT-backed DHCP for a batch of simultaneous claimants. Each round every
        pending node checks a free-looking candidate, all claims are written, then
        read back; on a shared candidate the lowest NodeId keeps it and the others
        withdraw and retry.
        """
        subnet = ipaddress.IPv4Network(subnet) if subnet else self.subnet
        pool = self._claimable(subnet)
        orders = {}
        for node in nodes:
            order = list(pool)
            random.Random(f"{self.config.seed}:dhcp:{node}").shuffle(order)
            if preferred is not None:
                order.insert(0, IPv4(preferred))
            orders[node] = order
        tried: dict[NodeId, set[IPv4]] = {node: set() for node in nodes}
        assigned: dict[NodeId, IPv4] = {}
        pending = list(nodes)

        while pending:
            claims: dict[NodeId, IPv4] = {}
            for node in pending:
                candidate = next(
                    (ip for ip in orders[node] if ip not in tried[node] and not self._owners(node, ip)), None
                )
                if candidate is None:
                    raise SubnetExhausted(f"no free address left in {subnet} for {short_id(node)}")
                tried[node].add(candidate)
                claims[node] = candidate
            for node, ip in claims.items():
                self.dht.put(node, ip_key(str(ip)), encode_node_id(node), self.config.lease_ttl_ms)
            pending = []
            for node, ip in claims.items():
                owners = self._owners(node, ip)
                if owners and owners[0] == node:
                    assigned[node] = ip
                    continue
                _logger.info(f"address conflict on {ip}: {short_id(node)} yields to {short_id(owners[0])}")
                self.dht.remove(node, ip_key(str(ip)), encode_node_id(node))
                pending.append(node)
        return assigned

    def allocate_address(self, node: NodeId, subnet: str | None = None, preferred: IPv4 | str | None = None) -> IPv4:
        return self.allocate_addresses([node], subnet, preferred)[node]

    def resolve(self, via: NodeId, ip: IPv4 | str) -> NodeId:
        owners = self._owners(via, IPv4(ip))
        if not owners:
            raise NotFound(f"no live lease for {ip}")
        return owners[0]

    def _renew_lease(self, endpoint: VpnEndpoint) -> None:
        if not endpoint.running or not self.overlay.is_live(endpoint.node):
            return
        key = ip_key(str(endpoint.state.virtual_ip))
        try:
            self.dht.put(endpoint.node, key, encode_node_id(endpoint.node), self.config.lease_ttl_ms)
        except P2PVpnError as err:
            _logger.warning(f"[{self.group}] lease renewal for {endpoint.state.virtual_ip} failed: {err}")
        self.sim.schedule(self.config.lease_ttl_ms / 2, endpoint.node, "lease", lambda _: self._renew_lease(endpoint))

    # endpoints ------------------------------------------------------------------------------------------------------

    def attach(
        self,
        node: NodeId,
        mode: VpnMode | str = VpnMode.SPLIT,
        approach: int | None = None,
        host: "ClientHost | None" = None,
        preferred: IPv4 | str | None = None,
    ) -> VpnEndpoint:
        """Allocate an address for ``node`` and start its VPN endpoint"""
        ip = self.allocate_address(node, preferred=preferred)
        state = VpnEndpointState(node=node, virtual_ip=ip, vpn_subnet=self.subnet, mode=VpnMode(mode), approach=approach)
        state.check()
        endpoint = VpnEndpoint(state, self.config.seed)
        self.endpoints[node] = endpoint
        if host is not None:
            host.bind(endpoint)
        self.sim.schedule(self.config.lease_ttl_ms / 2, node, "lease", lambda _: self._renew_lease(endpoint))
        _logger.info(f"[{self.group}] {short_id(node)} is {ip} ({state.mode.value})")
        return endpoint

    def shutdown(self, node: NodeId) -> None:
        """Stop the endpoint; its lease is left to expire"""
        endpoint = self.endpoints[node]
        endpoint.running = False
        if endpoint.host is not None:
            endpoint.host.shutdown()

    # packet state machine -------------------------------------------------------------------------------------------

    def _path_to(self, src: NodeId, dst: NodeId) -> tuple[str, list[NodeId]]:
        meta = self.overlay.node(src).table.edge_meta.get(dst)
        if meta is not None and self.overlay.is_live(dst):
            if meta.relay is None:
                return "direct", [src, dst]
            if meta.via and self.overlay.is_live(meta.via[0]):
                return "relay", [src, meta.via[0], dst]
        msg = OverlayMessage(src=src, dst=dst, ttl_hops=self.overlay.config.ttl_hops, kind=MessageKind.VPN_DATA)
        trace = self.overlay.route_greedy(src, msg)
        return "overlay", self.overlay.transport_path(src, trace)

    def _transmit(self, endpoint: VpnEndpoint, dst: NodeId, pkt: VirtualPacket) -> OutgoingAction:
        route, path = self._path_to(endpoint.node, dst)
        if path[-1] != dst:
            endpoint.counters["undeliverable"] += 1
            return OutgoingAction("dropped", dst)
        sealed = self.authenticator.seal(endpoint.node, pkt)
        if endpoint.host is not None:
            endpoint.host.emit_tunnel_frame(public_endpoint(path[1]), sealed)
        receiver = self.endpoints.get(dst)
        self.sim.schedule(
            self.sim.path_delay(path),
            dst,
            sealed,
            lambda event: self.handle_incoming(receiver, event.payload) if receiver is not None else None,
        )
        endpoint.counters[f"sent_{route}"] += 1
        return OutgoingAction(f"sent_{route}", dst, len(path) - 1, tuple(path))

    def _note_traffic(self, a: NodeId, b: NodeId, action: OutgoingAction) -> None:
        pair = frozenset((a, b))
        self.traffic[pair] += 1
        if action.verdict != "sent_overlay" or action.hops < 2 or pair in self.demand_shortcuts:
            return
        if self.traffic[pair] >= self.config.demand_shortcut_threshold:
            self.demand_shortcut(a, b)

    def handle_outgoing(self, endpoint: VpnEndpoint, pkt: VirtualPacket) -> OutgoingAction:
        """A packet read from the node's VN device"""
        state = endpoint.state
        if pkt.ip_dst in state.vpn_subnet:
            if pkt.ip_dst == state.virtual_ip:
                endpoint.vn_device.append(pkt)
                return OutgoingAction("loopback", endpoint.node)
            owner = self.resolve(endpoint.node, pkt.ip_dst)
            action = self._transmit(endpoint, owner, pkt)
            self._note_traffic(endpoint.node, owner, action)
            return action
        if state.mode is VpnMode.FULL_TUNNEL_CLIENT:
            gateway = self.select_gateway(endpoint)
            return self._transmit(endpoint, gateway, pkt)
        endpoint.counters["drop_split_internet"] += 1
        _logger.debug(f"[{self.group}] split-tunnel {short_id(endpoint.node)} dropped packet to {pkt.ip_dst}")
        return OutgoingAction("dropped")

    def handle_incoming(self, endpoint: VpnEndpoint, pkt: VirtualPacket) -> str:
        """A packet arriving from the overlay"""
        state = endpoint.state
        if not endpoint.running or not self.overlay.is_live(endpoint.node):
            return "dropped"
        if not self.authenticator.verify(endpoint.node, pkt):
            endpoint.counters["drop_unauthenticated"] += 1
            return "dropped"
        if pkt.ip_src in state.vpn_subnet:
            if state.mode is VpnMode.GATEWAY and pkt.ip_dst not in state.vpn_subnet:
                self._gateway_forward(endpoint, pkt)
                return "forwarded"
            endpoint.vn_device.append(pkt)
            endpoint.counters["delivered"] += 1
            return "delivered"
        if state.current_gateway is not None and pkt.sender == state.current_gateway:
            endpoint.vn_device.append(pkt)
            endpoint.counters["delivered"] += 1
            return "delivered"
        endpoint.counters["drop_not_gateway"] += 1
        return "dropped"

    def demand_shortcut(self, a: NodeId, b: NodeId) -> bool:
        """Open a direct (or relayed) edge between two peers exchanging VPN traffic"""
        pair = frozenset((a, b))
        self.demand_shortcuts.add(pair)
        opened = self.overlay.connect(a, b, purpose="on_demand")
        _logger.info(f"[{self.group}] on-demand shortcut {short_id(a)}<->{short_id(b)}: {'up' if opened else 'failed'}")
        return opened

    # gateways -------------------------------------------------------------------------------------------------------

    def register_gateway(self, node: NodeId, group: str | None = None) -> None:
        """Append ``node`` to the group's gateway list and keep it there while the endpoint runs"""
        endpoint = self.endpoints[node]
        if endpoint.state.mode is not VpnMode.GATEWAY:
            raise ValueError(f"{short_id(node)} is not in gateway mode")
        group = group or self.group
        self.dht.put(node, gateways_key(group), encode_node_id(node), self.config.lease_ttl_ms)
        _logger.info(f"[{self.group}] {short_id(node)} registered as gateway for {group}")
        self.sim.schedule(self.config.lease_ttl_ms / 2, node, "gateway", lambda _: self._refresh_gateway(endpoint, group))

    def _refresh_gateway(self, endpoint: VpnEndpoint, group: str) -> None:
        if not endpoint.running or not self.overlay.is_live(endpoint.node):
            return
        try:
            self.dht.put(endpoint.node, gateways_key(group), encode_node_id(endpoint.node), self.config.lease_ttl_ms)
        except P2PVpnError as err:
            _logger.warning(f"[{self.group}] gateway refresh of {short_id(endpoint.node)} failed: {err}")
        self.sim.schedule(
            self.config.lease_ttl_ms / 2, endpoint.node, "gateway", lambda _: self._refresh_gateway(endpoint, group)
        )

    def select_gateway(self, endpoint: VpnEndpoint, group: str | None = None) -> NodeId:
        state = endpoint.state
        if state.mode is not VpnMode.FULL_TUNNEL_CLIENT:
            raise ValueError(f"{short_id(endpoint.node)} is not a full-tunnel client")
        if state.current_gateway is not None:
            return state.current_gateway
        endpoint.counters["gateway_queries"] += 1
        listed = {decode_node_id(v) for v in self.dht.get(endpoint.node, gateways_key(group or self.group))}
        choices = sorted(listed - state.failed_gateways - {endpoint.node})
        if not choices:
            raise NoGatewayAvailable(f"no usable gateway for group {group or self.group}")
        state.current_gateway = endpoint.rng.choice(choices)
        endpoint.missed_pings = 0
        _logger.info(f"[{self.group}] {short_id(endpoint.node)} selected gateway {short_id(state.current_gateway)}")
        if not endpoint.pinging:
            endpoint.pinging = True
            self.sim.schedule(self.config.gateway_ping_period_ms, endpoint.node, "ping", lambda _: self._ping(endpoint))
        return state.current_gateway

    def _ping(self, endpoint: VpnEndpoint) -> None:
        state = endpoint.state
        gateway = state.current_gateway
        if gateway is None or not endpoint.running:
            endpoint.pinging = False
            return
        if self.overlay.is_live(gateway) and self.endpoints[gateway].running:
            endpoint.missed_pings = 0
        else:
            endpoint.missed_pings += 1
            if endpoint.missed_pings >= self.config.gateway_missed_pings:
                _logger.warning(f"[{self.group}] gateway {short_id(gateway)} stopped answering pings")
                state.failed_gateways.add(gateway)
                state.current_gateway = None
                endpoint.pinging = False
                return
        self.sim.schedule(self.config.gateway_ping_period_ms, endpoint.node, "ping", lambda _: self._ping(endpoint))

    def _gateway_forward(self, gateway: VpnEndpoint, pkt: VirtualPacket) -> None:
        key = (pkt.sender, pkt.ip_src, pkt.src_port, pkt.ip_dst, pkt.dst_port)
        port = gateway.nat_ports.get(key)
        if port is None:
            port = self._open_nat_flow(gateway, NatFlow(*key))
            if port is None:
                gateway.counters["nat_exhausted"] += 1
                return
        gateway.nat_flows[port].last_used = self.sim.now
        outbound = dataclasses.replace(
            pkt, ip_src=public_endpoint(gateway.node), src_port=port, secured=False, sender=None, certificate=None
        )
        remote = self.internet.get(pkt.ip_dst)
        if remote is None:
            gateway.counters["nat_unreachable"] += 1
            return
        gateway.counters["nat_out"] += 1
        rtt = self.sim.latency.rtt(gateway.node, f"inet:{remote.ip}")
        self.sim.schedule(rtt, gateway.node, outbound, lambda event: self._gateway_return(gateway, remote.reply(event.payload)))

    def _open_nat_flow(self, gateway: VpnEndpoint, flow: NatFlow) -> int | None:
        """Bind ``flow`` to the next free public port, wrapping inside the NAT range"""
        self._expire_nat_flows(gateway)
        span = GATEWAY_NAT_LAST_PORT - GATEWAY_NAT_FIRST_PORT + 1
        for offset in range(span):
            port = GATEWAY_NAT_FIRST_PORT + (gateway.next_nat_port - GATEWAY_NAT_FIRST_PORT + offset) % span
            if port not in gateway.nat_flows:
                gateway.nat_flows[port] = flow
                gateway.nat_ports[flow.key] = port
                gateway.next_nat_port = GATEWAY_NAT_FIRST_PORT + (port - GATEWAY_NAT_FIRST_PORT + 1) % span
                return port
        _logger.warning(f"[{self.group}] gateway {short_id(gateway.node)} has no free NAT port")
        return None

    def _expire_nat_flows(self, gateway: VpnEndpoint) -> int:
        idle_since = self.sim.now - self.config.nat_flow_idle_ms
        stale = [port for port, flow in gateway.nat_flows.items() if flow.last_used < idle_since]
        for port in stale:
            del gateway.nat_ports[gateway.nat_flows.pop(port).key]
        return len(stale)

    def _gateway_return(self, gateway: VpnEndpoint, reply: VirtualPacket) -> None:
        flow = gateway.nat_flows.get(reply.dst_port)
        if flow is None or reply.ip_src != flow.remote_ip:
            gateway.counters["nat_no_flow"] += 1
            return
        flow.last_used = self.sim.now
        inbound = dataclasses.replace(reply, ip_dst=flow.member_ip, dst_port=flow.member_port)
        gateway.counters["nat_in"] += 1
        self._transmit(gateway, flow.member, inbound)


class ClientHost:
    """
    The physical host running a full-tunnel VPN client: a NIC on a LAN with a
    route table (approach 1) or a per-session MAC (approach 2).
    """

    def __init__(
        self,
        name: str,
        lan: LanSegment,
        physical_ip: IPv4 | str,
        mac: int,
        vpn_port: int = VPN_APP_PORT,
        transport: Proto | str = Proto.UDP,
        seed: int = 0,
    ):
        self.name = name
        self.lan = lan
        self.physical_ip = IPv4(physical_ip)
        self.mac = mac
        self.vpn_port = vpn_port
        self.transport = Proto(transport)
        self.rng = random.Random(f"{seed}:host:{name}")
        self.session_mac = random_session_mac(self.rng)
        self.endpoint: VpnEndpoint | None = None
        self.vn: VirtualNetwork | None = None
        self.injected: list[ipaddress.IPv4Network] = []
        self.counters: Counter = Counter()
        lan.attach(name)

    @property
    def state(self) -> VpnEndpointState:
        return self.endpoint.state

    def bind(self, endpoint: VpnEndpoint) -> None:
        if endpoint.state.approach == 2 and self.transport is Proto.TCP:
            raise UnsupportedProto("approach 2 carries P2P traffic over UDP only")
        self.endpoint = endpoint
        endpoint.host = self
        state = endpoint.state
        if state.mode is VpnMode.FULL_TUNNEL_CLIENT:
            state.route_table = [RouteEntry(_DEFAULT_ROUTE, RouteVia.VN_DEVICE)]
        else:
            state.route_table = [RouteEntry(state.vpn_subnet, RouteVia.VN_DEVICE), RouteEntry(_DEFAULT_ROUTE, RouteVia.LAN_GATEWAY)]

    def lookup(self, ip: IPv4) -> RouteVia:
        if self.state.approach == 2:
            return RouteVia.VN_DEVICE
        matches = [entry for entry in self.state.route_table if ip in entry.prefix]
        return max(matches, key=lambda entry: entry.prefix.prefixlen).via

    def send_application(
        self, vn: VirtualNetwork, dst_ip: IPv4 | str, proto: Proto | str = Proto.UDP, dst_port: int = 80, payload: bytes = b""
    ) -> str:
        """Application traffic leaving the host; returns where it went"""
        dst_ip = IPv4(dst_ip)
        if self.lookup(dst_ip) is RouteVia.LAN_GATEWAY:
            self.lan.transmit(
                src_mac=self.mac,
                dst_mac=self.lan.gateway_mac,
                ip_src=self.physical_ip,
                ip_dst=dst_ip,
                proto=Proto(proto).value,
                secured=False,
                origin=self.name,
                kind=FrameKind.APPLICATION,
            )
            self.counters["lan_plaintext"] += 1
            return "lan"
        pkt = VirtualPacket(
            eth_src=self.session_mac,
            eth_dst=self.lan.gateway_mac,
            ip_src=self.state.virtual_ip,
            ip_dst=dst_ip,
            proto=proto,
            src_port=self.rng.randrange(49152, 65536),
            dst_port=dst_port,
            payload=payload,
        )
        action = vn.handle_outgoing(self.endpoint, pkt)
        return "tunnel" if action.verdict.startswith("sent") or action.verdict == "loopback" else action.verdict

    def emit_tunnel_frame(self, remote: IPv4, pkt: VirtualPacket) -> CapturedFrame:
        """The physical frame carrying a tunnelled packet to the next overlay hop"""
        p2p = VirtualPacket(
            eth_src=self.mac,
            eth_dst=self.lan.gateway_mac,
            ip_src=self.physical_ip,
            ip_dst=remote,
            proto=self.transport,
            src_port=self.vpn_port,
            dst_port=self.vpn_port,
            payload=b"",
            secured=pkt.secured,
        )
        if self.state.approach == 2:
            return full_tunnel_approach2_emit(self, p2p)
        if self.state.approach == 1:
            full_tunnel_approach1_route_update(self, remote)
        return self.lan.transmit(
            src_mac=self.mac,
            dst_mac=self.lan.gateway_mac,
            ip_src=self.physical_ip,
            ip_dst=remote,
            proto=self.transport.value,
            secured=p2p.secured,
            origin=self.name,
            kind=FrameKind.VPN,
        )

    def receive_initiation(self, src_ip: IPv4 | str) -> CapturedFrame:
        """A P2P link initiation seen on the physical NIC; the source address is not authenticated"""
        src_ip = IPv4(src_ip)
        control = VirtualPacket(
            eth_src=self.mac,
            eth_dst=self.lan.gateway_mac,
            ip_src=self.physical_ip,
            ip_dst=src_ip,
            proto=self.transport,
            src_port=self.vpn_port,
            dst_port=self.vpn_port,
        )
        if self.state.approach == 2:
            return full_tunnel_approach2_emit(self, control)
        if self.state.approach == 1:
            full_tunnel_approach1_route_update(self, src_ip)
        return self.lan.transmit(
            src_mac=self.mac,
            dst_mac=self.lan.gateway_mac,
            ip_src=self.physical_ip,
            ip_dst=src_ip,
            proto=self.transport.value,
            secured=False,
            origin=self.name,
            kind=FrameKind.CONTROL,
        )

    def receive_frame(self, dst_mac: int, proto: Proto | str) -> str:
        if self.state.approach == 2 and dst_mac == self.session_mac and Proto(proto) is Proto.TCP:
            self.counters["tcp_reset"] += 1
            return "reset"
        return "accepted"

    def close_link(self, remote: IPv4 | str) -> None:
        prefix = ipaddress.IPv4Network(f"{remote}/32")
        self.state.route_table = [e for e in self.state.route_table if not (e.prefix == prefix and prefix in self.injected)]
        if prefix in self.injected:
            self.injected.remove(prefix)

    def shutdown(self) -> None:
        injected = set(self.injected)
        self.state.route_table = [e for e in self.state.route_table if e.prefix not in injected]
        self.injected.clear()


def full_tunnel_approach1_route_update(host: ClientHost, remote_public_endpoint: IPv4 | str) -> bool:
    """Pin a /32 route for a P2P peer's public address to the LAN gateway; False if already present"""
    state = host.state
    if state.mode is not VpnMode.FULL_TUNNEL_CLIENT or state.approach != 1:
        raise ValueError(f"{host.name} is not an approach-1 full-tunnel client")
    prefix = ipaddress.IPv4Network(f"{remote_public_endpoint}/32")
    if prefix in host.injected:
        return False
    state.route_table.append(RouteEntry(prefix, RouteVia.LAN_GATEWAY))
    host.injected.append(prefix)
    _logger.debug(f"{host.name}: host route {prefix} -> lan gateway")
    return True


def full_tunnel_approach2_emit(host: ClientHost, p2p_pkt: VirtualPacket) -> CapturedFrame:
    """
    Translate the source to the physical address, wrap it in an Ethernet frame
    from the session MAC to the LAN gateway, and put it on the wire.
    """
    state = host.state
    if state.mode is not VpnMode.FULL_TUNNEL_CLIENT or state.approach != 2:
        raise ValueError(f"{host.name} is not an approach-2 full-tunnel client")
    if p2p_pkt.proto is Proto.TCP:
        raise UnsupportedProto("approach 2 cannot carry TCP P2P transport")
    if p2p_pkt.src_port != host.vpn_port:
        raise ValueError(f"source port {p2p_pkt.src_port} is not the VPN application's port {host.vpn_port}")
    return host.lan.transmit(
        src_mac=host.session_mac,
        dst_mac=host.lan.gateway_mac,
        ip_src=host.physical_ip,
        ip_dst=p2p_pkt.ip_dst,
        proto=p2p_pkt.proto.value,
        secured=p2p_pkt.secured,
        origin=host.name,
        kind=FrameKind.VPN if p2p_pkt.secured else FrameKind.CONTROL,
    )
