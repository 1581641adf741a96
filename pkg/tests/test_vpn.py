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

import ipaddress

import pytest

from p2pvpn.dht import Dht
from p2pvpn.errors import NoGatewayAvailable, NotFound, SubnetExhausted, UnsupportedProto
from p2pvpn.overlay import OverlayMessage
from p2pvpn.transport_sim import FrameKind, LanSegment
from p2pvpn.vpn import (
    ClientHost,
    Proto,
    RouteVia,
    VirtualNetwork,
    VirtualPacket,
    VpnConfig,
    VpnMode,
    full_tunnel_approach1_route_update,
    full_tunnel_approach2_emit,
    public_endpoint,
)

SUBNET = "10.128.0.0/24"
WEB = "93.184.216.34"


def packet(src, dst, **fields):
    return VirtualPacket(eth_src=0x02_0000_0001, eth_dst=0x02_0000_0002, ip_src=src, ip_dst=dst, **fields)


@pytest.fixture
def network(make_overlay):
    overlay = make_overlay(12, 3)
    return VirtualNetwork(overlay, Dht(overlay), "group", SUBNET)


def attach_all(network, mode=VpnMode.SPLIT):
    return [network.attach(node, mode) for node in network.overlay.live_ids()]


def settle(network, ms=2_000.0):
    network.sim.run_until(network.sim.now + ms)


def test_every_member_gets_a_distinct_address(network):
    endpoints = attach_all(network)
    ips = [e.state.virtual_ip for e in endpoints]
    assert len(set(ips)) == len(ips)
    assert all(ip in ipaddress.IPv4Network(SUBNET) for ip in ips)
    assert network.service_address not in ips


def test_resolve_returns_the_lease_holder(network):
    endpoints = attach_all(network)
    via = endpoints[0].node
    for endpoint in endpoints:
        assert network.resolve(via, endpoint.state.virtual_ip) == endpoint.node
    taken = {e.state.virtual_ip for e in endpoints}
    free = next(ip for ip in ipaddress.IPv4Network(SUBNET).hosts() if ip not in taken)
    with pytest.raises(NotFound):
        network.resolve(via, free)


def test_colliding_claims_go_to_the_lowest_id(network):
    nodes = network.overlay.live_ids()
    assigned = network.allocate_addresses(nodes, preferred="10.128.0.7")
    assert assigned[min(nodes)] == ipaddress.IPv4Address("10.128.0.7")
    assert len(set(assigned.values())) == len(nodes)


def test_small_subnet_fills_up(network):
    nodes = network.overlay.live_ids()
    assigned = network.allocate_addresses(nodes[:6], subnet="10.128.0.16/29")
    assert len(set(assigned.values())) == 6
    with pytest.raises(SubnetExhausted):
        network.allocate_addresses(nodes[6:7], subnet="10.128.0.16/29")


@pytest.mark.slow
def test_full_slash24_has_no_duplicates(make_overlay):
    overlay = make_overlay(255, 1)
    network = VirtualNetwork(overlay, Dht(overlay), "group", "10.128.0.0/23")
    nodes = overlay.live_ids()
    assigned = network.allocate_addresses(nodes[:254], subnet="10.128.1.0/24", preferred="10.128.1.1")
    assert len(set(assigned.values())) == 254
    assert assigned[min(nodes[:254])] == ipaddress.IPv4Address("10.128.1.1")
    with pytest.raises(SubnetExhausted):
        network.allocate_addresses(nodes[254:], subnet="10.128.1.0/24")


def test_lease_lapses_after_shutdown(network):
    endpoints = attach_all(network)
    gone = endpoints[4]
    network.shutdown(gone.node)
    network.sim.run_until(network.sim.now + network.config.lease_ttl_ms + 1)
    with pytest.raises(NotFound):
        network.resolve(endpoints[0].node, gone.state.virtual_ip)
    assert network.resolve(endpoints[0].node, endpoints[1].state.virtual_ip) == endpoints[1].node


def test_subnet_packet_is_delivered(network):
    a, b, *_ = attach_all(network)
    action = network.handle_outgoing(a, packet(a.state.virtual_ip, b.state.virtual_ip, payload=b"hi"))
    assert action.verdict == "sent_direct"
    settle(network)
    assert [p.payload for p in b.vn_device] == [b"hi"]
    assert b.vn_device[0].secured


def test_packet_to_self_loops_back(network):
    a = attach_all(network)[0]
    assert network.handle_outgoing(a, packet(a.state.virtual_ip, a.state.virtual_ip)).verdict == "loopback"


def test_split_tunnel_drops_internet_traffic(network):
    a = attach_all(network)[0]
    assert network.handle_outgoing(a, packet(a.state.virtual_ip, WEB)).verdict == "dropped"
    assert a.counters["drop_split_internet"] == 1


def test_unauthenticated_packets_are_dropped(network):
    a, b, *_ = attach_all(network)
    assert network.handle_incoming(b, packet(a.state.virtual_ip, b.state.virtual_ip)) == "dropped"
    assert b.counters["drop_unauthenticated"] == 1


def test_internet_source_accepted_only_from_the_gateway(network):
    gateway_id, client_id, other_id = network.overlay.live_ids()[:3]
    network.attach(gateway_id, VpnMode.GATEWAY)
    network.register_gateway(gateway_id)
    client = network.attach(client_id, VpnMode.FULL_TUNNEL_CLIENT, approach=1)
    network.select_gateway(client)
    forged = network.authenticator.seal(other_id, packet(WEB, client.state.virtual_ip))
    assert network.handle_incoming(client, forged) == "dropped"
    assert client.counters["drop_not_gateway"] == 1
    genuine = network.authenticator.seal(gateway_id, packet(WEB, client.state.virtual_ip))
    assert network.handle_incoming(client, genuine) == "delivered"


def test_multi_hop_traffic_opens_a_demand_shortcut(make_overlay):
    overlay = make_overlay(32, 7)
    network = VirtualNetwork(overlay, Dht(overlay), "group", SUBNET)
    endpoints = {e.node: e for e in attach_all(network)}
    live = overlay.live_ids()
    src, dst = next(
        (s, d)
        for s in live
        for d in live
        if s != d and len(overlay.route_greedy(s, OverlayMessage(src=s, dst=d))) >= 2
    )
    action = network.handle_outgoing(endpoints[src], packet(endpoints[src].state.virtual_ip, endpoints[dst].state.virtual_ip))
    assert action.verdict == "sent_overlay"
    meta = overlay.node(src).table.edge_meta[dst]
    assert "on_demand" in meta.purposes
    again = network.handle_outgoing(endpoints[src], packet(endpoints[src].state.virtual_ip, endpoints[dst].state.virtual_ip))
    assert again.verdict in ("sent_direct", "sent_relay")


def test_only_gateways_can_register(network):
    node = attach_all(network)[0].node
    with pytest.raises(ValueError):
        network.register_gateway(node)


def test_full_tunnel_without_gateway(network):
    client = network.attach(network.overlay.live_ids()[0], VpnMode.FULL_TUNNEL_CLIENT, approach=1)
    with pytest.raises(NoGatewayAvailable):
        network.handle_outgoing(client, packet(client.state.virtual_ip, WEB))


def test_gateway_nats_and_returns_replies(network):
    gateway_id, client_id = network.overlay.live_ids()[:2]
    gateway = network.attach(gateway_id, VpnMode.GATEWAY)
    network.register_gateway(gateway_id)
    client = network.attach(client_id, VpnMode.FULL_TUNNEL_CLIENT, approach=1)
    server = network.add_internet_host(WEB)
    network.handle_outgoing(client, packet(client.state.virtual_ip, WEB, src_port=5555, dst_port=80, payload=b"q"))
    settle(network)
    (seen,) = server.received
    assert seen.ip_src == public_endpoint(gateway_id)
    assert seen.src_port == 40_000
    (reply,) = client.vn_device
    assert reply.payload == b"echo:q"
    assert (reply.ip_dst, reply.dst_port) == (client.state.virtual_ip, 5555)
    assert gateway.counters["nat_out"] == gateway.counters["nat_in"] == 1


@pytest.mark.slow
def test_one_flow_holds_one_nat_port(network):
    gateway_id, client_id = network.overlay.live_ids()[:2]
    gateway = network.attach(gateway_id, VpnMode.GATEWAY)
    network.register_gateway(gateway_id)
    client = network.attach(client_id, VpnMode.FULL_TUNNEL_CLIENT, approach=1)
    server = network.add_internet_host(WEB)
    sent = 0
    for _ in range(31):
        for _ in range(1_000):
            network.handle_outgoing(client, packet(client.state.virtual_ip, WEB, src_port=5555, dst_port=80))
            sent += 1
        settle(network, 100.0)
    assert sent > 30_000
    assert list(gateway.nat_flows) == [40_000]
    assert len(gateway.nat_ports) == 1
    assert {seen.src_port for seen in server.received} == {40_000}
    assert gateway.counters["nat_out"] == gateway.counters["nat_in"] == sent
    assert len(client.vn_device) == client.counters["delivered"] == sent
    assert gateway.counters["nat_exhausted"] == 0


def test_nat_ports_wrap_and_skip_bound_ports(network):
    gateway_id, *clients = network.overlay.live_ids()[:4]
    gateway = network.attach(gateway_id, VpnMode.GATEWAY)
    network.register_gateway(gateway_id)
    endpoints = [network.attach(c, VpnMode.FULL_TUNNEL_CLIENT, approach=1) for c in clients]
    network.add_internet_host(WEB)

    def open_flow(endpoint, src_port):
        network.handle_outgoing(endpoint, packet(endpoint.state.virtual_ip, WEB, src_port=src_port, dst_port=80))
        settle(network, 100.0)

    open_flow(endpoints[0], 7000)
    gateway.next_nat_port = 65_535
    open_flow(endpoints[1], 7000)
    open_flow(endpoints[2], 7000)
    assert sorted(gateway.nat_flows) == [40_000, 40_001, 65_535]
    assert gateway.nat_flows[65_535].member == endpoints[1].node
    assert gateway.nat_flows[40_001].member == endpoints[2].node
    assert gateway.next_nat_port == 40_002


def test_idle_nat_flows_expire(network):
    gateway_id, client_id = network.overlay.live_ids()[:2]
    gateway = network.attach(gateway_id, VpnMode.GATEWAY)
    network.register_gateway(gateway_id)
    client = network.attach(client_id, VpnMode.FULL_TUNNEL_CLIENT, approach=1)
    network.add_internet_host(WEB)
    network.handle_outgoing(client, packet(client.state.virtual_ip, WEB, src_port=5000, dst_port=80))
    settle(network, 100.0)
    settle(network, network.config.nat_flow_idle_ms + 1.0)
    network.handle_outgoing(client, packet(client.state.virtual_ip, WEB, src_port=5001, dst_port=80))
    settle(network, 100.0)
    assert list(gateway.nat_flows) == [40_001]
    assert [key[2] for key in gateway.nat_ports] == [5001]
    assert client.counters["delivered"] == 2


def test_interleaved_flows_return_to_their_members(network):
    g1, g2, *clients = network.overlay.live_ids()[:5]
    gateways = {}
    for gateway_id in (g1, g2):
        gateways[gateway_id] = network.attach(gateway_id, VpnMode.GATEWAY)
        network.register_gateway(gateway_id)
    endpoints = [network.attach(c, VpnMode.FULL_TUNNEL_CLIENT, approach=1) for c in clients]
    for endpoint, gateway_id in zip(endpoints, (g1, g2, g1)):
        endpoint.state.current_gateway = gateway_id
    remotes = [network.add_internet_host(WEB), network.add_internet_host("198.51.100.7")]

    for round_ in range(20):
        for index, endpoint in enumerate(endpoints):
            remote = remotes[(round_ + index) % 2]
            payload = f"{index}:{round_}".encode()
            pkt = packet(endpoint.state.virtual_ip, remote.ip, src_port=7000, dst_port=80, payload=payload)
            network.handle_outgoing(endpoint, pkt)
        settle(network, 50.0)

    for index, endpoint in enumerate(endpoints):
        assert endpoint.counters["delivered"] == len(endpoint.vn_device) == 20
        for reply in endpoint.vn_device:
            assert (reply.ip_dst, reply.dst_port) == (endpoint.state.virtual_ip, 7000)
            assert reply.payload.startswith(f"echo:{index}:".encode())
        assert endpoint.counters["drop_not_gateway"] == 0
    # members 0 and 2 share a gateway and a source port yet hold distinct public ports
    g1_flows = gateways[g1].nat_flows
    assert len(g1_flows) == 4
    assert {flow.member for flow in g1_flows.values()} == {endpoints[0].node, endpoints[2].node}
    assert len(gateways[g2].nat_flows) == 2
    assert gateways[g1].counters["nat_out"] == gateways[g1].counters["nat_in"] == 40


def test_gateway_failover_requeries_once(make_overlay):
    overlay = make_overlay(12, 4)
    network = VirtualNetwork(overlay, Dht(overlay), "group", SUBNET, VpnConfig(gateway_ping_period_ms=1_000.0))
    g1, g2, client_id = overlay.live_ids()[:3]
    for gateway in (g1, g2):
        network.attach(gateway, VpnMode.GATEWAY)
        network.register_gateway(gateway)
    client = network.attach(client_id, VpnMode.FULL_TUNNEL_CLIENT, approach=1)
    network.add_internet_host(WEB)

    def browse():
        network.handle_outgoing(client, packet(client.state.virtual_ip, WEB, src_port=6000, dst_port=80))
        settle(network, 500.0)

    browse()
    first = client.state.current_gateway
    assert client.counters["gateway_queries"] == 1
    overlay.fail(first)
    for _ in range(3):
        overlay.stabilize_round()
    assert client.state.current_gateway is None
    assert first in client.state.failed_gateways
    assert client.counters["gateway_queries"] == 1

    browse()
    assert client.counters["gateway_queries"] == 2
    assert client.state.current_gateway == ({g1, g2} - {first}).pop()
    assert client.counters["delivered"] == 2
    assert client.counters["drop_not_gateway"] == 0


def lan_client(network, approach, transport=Proto.UDP):
    lan = LanSegment(network.sim, "lan", "router", 0x00_1B21_000001)
    host = ClientHost("laptop", lan, "192.168.1.10", 0x00_1B21_3A4F5C, transport=transport, seed=1)
    network.attach(network.overlay.live_ids()[0], VpnMode.FULL_TUNNEL_CLIENT, approach=approach, host=host)
    return host, lan


def test_approach1_routes(network):
    host, _ = lan_client(network, 1)
    assert host.lookup(ipaddress.IPv4Address(WEB)) is RouteVia.VN_DEVICE
    assert full_tunnel_approach1_route_update(host, "203.0.113.5")
    assert not full_tunnel_approach1_route_update(host, "203.0.113.5")
    assert host.lookup(ipaddress.IPv4Address("203.0.113.5")) is RouteVia.LAN_GATEWAY
    host.close_link("203.0.113.5")
    assert host.lookup(ipaddress.IPv4Address("203.0.113.5")) is RouteVia.VN_DEVICE


def test_approach1_spoofed_initiation_leaks(network):
    host, lan = lan_client(network, 1)
    host.receive_initiation(WEB)
    assert host.send_application(network, WEB) == "lan"
    assert any(f.kind is FrameKind.APPLICATION and not f.secured for f in lan.sniffer_log)


def test_approach2_ignores_spoofed_initiation(network):
    host, lan = lan_client(network, 2)
    frame = host.receive_initiation(WEB)
    assert frame.src_mac == host.session_mac
    assert host.lookup(ipaddress.IPv4Address(WEB)) is RouteVia.VN_DEVICE
    assert not any(f.kind is FrameKind.APPLICATION for f in lan.sniffer_log)


def test_approach2_emit_checks_the_packet(network):
    host, _ = lan_client(network, 2)
    good = packet(host.physical_ip, "203.0.113.9", src_port=host.vpn_port, dst_port=host.vpn_port)
    frame = full_tunnel_approach2_emit(host, good)
    assert (frame.src_mac, frame.dst_mac, frame.ip_src) == (host.session_mac, host.lan.gateway_mac, host.physical_ip)
    with pytest.raises(ValueError):
        full_tunnel_approach2_emit(host, packet(host.physical_ip, "203.0.113.9", src_port=1234))
    with pytest.raises(UnsupportedProto):
        full_tunnel_approach2_emit(host, packet(host.physical_ip, "203.0.113.9", proto=Proto.TCP, src_port=host.vpn_port))


def test_approach2_refuses_tcp_transport(network):
    with pytest.raises(UnsupportedProto):
        lan_client(network, 2, transport=Proto.TCP)


def test_approach2_resets_tcp_to_the_session_mac(network):
    host, _ = lan_client(network, 2)
    assert host.receive_frame(host.session_mac, "tcp") == "reset"
    assert host.receive_frame(host.mac, "tcp") == "accepted"
    assert host.counters["tcp_reset"] == 1
