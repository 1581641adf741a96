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

import abc
import dataclasses
import enum
import hashlib
import hmac
import ipaddress
import logging
import random
import shlex
import struct
from collections import Counter
from collections.abc import Callable

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey, Ed25519PublicKey
import networkx as nx

from .constant import CRL_POLL_PERIOD_MS, SHARED_KEY_BYTES
from .dht import Dht, decode_node_id, encode_node_id, private_key, revoke_key
from .errors import (
    BadSharedKey,
    CertRejected,
    InsecureTransport,
    NameTaken,
    NoMembersFound,
    NoOverlayPath,
    NotAdmin,
    NotApproved,
    P2PVpnError,
    Revoked,
    UnknownUser,
)
from .overlay import MessageKind, NodeId, Overlay, OverlayMessage
from .transport_sim import Simulator
from .utils import check_reply, short_id
from .vpn import PacketAuthenticator, VirtualNetwork, VirtualPacket, VpnConfig

_logger = logging.getLogger(__name__)

_LENGTH = struct.Struct(">I")
_TIME = struct.Struct(">d")


def _pack(*fields: bytes) -> bytes:
    return b"".join(_LENGTH.pack(len(field)) + field for field in fields)


def _unpack(data: bytes, count: int) -> tuple[list[bytes], bytes]:
    fields, offset = [], 0
    for _ in range(count):
        if offset + _LENGTH.size > len(data):
            raise ValueError("truncated length prefix")
        (size,) = _LENGTH.unpack_from(data, offset)
        offset += _LENGTH.size
        if offset + size > len(data):
            raise ValueError("truncated field")
        fields.append(data[offset : offset + size])
        offset += size
    return fields, data[offset:]


# signatures ---------------------------------------------------------------------------------------------------------


class SignatureScheme(abc.ABC):
    """keygen / sign / verify; certificates only ever see this interface"""

    name: str

    @abc.abstractmethod
    def keygen(self, seed: bytes) -> tuple[bytes, bytes]:
        """Return (signing_key, verification_key)"""

    @abc.abstractmethod
    def sign(self, signing_key: bytes, data: bytes) -> bytes:
        pass

    @abc.abstractmethod
    def verify(self, verification_key: bytes, data: bytes, signature: bytes) -> bool:
        pass


class HmacSignatureScheme(SignatureScheme):
    """
    Deterministic keyed-MAC stand-in. The verification key equals the signing
    key, so it only models who may sign, not public-key secrecy.
    """

    name = "hmac"

    def keygen(self, seed: bytes) -> tuple[bytes, bytes]:
        key = hashlib.sha256(b"hmac-ca:" + seed).digest()
        return key, key

    def sign(self, signing_key: bytes, data: bytes) -> bytes:
        return hmac.new(signing_key, data, hashlib.sha256).digest()

    def verify(self, verification_key: bytes, data: bytes, signature: bytes) -> bool:
        return hmac.compare_digest(self.sign(verification_key, data), signature)


class Ed25519SignatureScheme(SignatureScheme):
    name = "ed25519"

    def keygen(self, seed: bytes) -> tuple[bytes, bytes]:
        private = Ed25519PrivateKey.from_private_bytes(hashlib.sha256(b"ed25519-ca:" + seed).digest())
        public = private.public_key().public_bytes(serialization.Encoding.Raw, serialization.PublicFormat.Raw)
        raw = private.private_bytes(
            serialization.Encoding.Raw, serialization.PrivateFormat.Raw, serialization.NoEncryption()
        )
        return raw, public

    def sign(self, signing_key: bytes, data: bytes) -> bytes:
        return Ed25519PrivateKey.from_private_bytes(signing_key).sign(data)

    def verify(self, verification_key: bytes, data: bytes, signature: bytes) -> bool:
        try:
            Ed25519PublicKey.from_public_bytes(verification_key).verify(signature, data)
        except (InvalidSignature, ValueError):
            return False
        return True


SIGNATURE_SCHEMES: dict[str, type[SignatureScheme]] = {
    HmacSignatureScheme.name: HmacSignatureScheme,
    Ed25519SignatureScheme.name: Ed25519SignatureScheme,
}


# records ------------------------------------------------------------------------------------------------------------


class MemberStatus(str, enum.Enum):
    PENDING = "pending"
    APPROVED = "approved"
    REVOKED = "revoked"


@dataclasses.dataclass
class MemberRecord:
    user: str
    info: str = ""
    status: MemberStatus = MemberStatus.PENDING
    shared_key: bytes | None = None


@dataclasses.dataclass
class GroupConfig:
    name: str
    subnet: ipaddress.IPv4Network
    admin_users: set[str]
    ca_public_key: bytes
    member_records: dict[str, MemberRecord] = dataclasses.field(default_factory=dict)


@dataclasses.dataclass(frozen=True)
class Certificate:
    subject_node: NodeId
    group: str
    user: str
    issued_at: float
    signature: bytes = b""

    def tbs(self) -> bytes:
        """Canonical signed bytes"""
        return _pack(
            encode_node_id(self.subject_node), self.group.encode(), self.user.encode(), _TIME.pack(self.issued_at)
        )

    def to_bytes(self) -> bytes:
        return _pack(self.tbs(), self.signature)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Certificate":
        (tbs, signature), _ = _unpack(data, 2)
        (node, group, user, issued_at), _ = _unpack(tbs, 4)
        return cls(decode_node_id(node), group.decode(), user.decode(), _TIME.unpack(issued_at)[0], signature)

    def verify(self, scheme: SignatureScheme, ca_public_key: bytes) -> bool:
        return scheme.verify(ca_public_key, self.tbs(), self.signature)


@dataclasses.dataclass(frozen=True)
class ConfigBlob:
    group: str
    subnet: str
    shared_key: bytes
    ca_public_key: bytes

    def to_bytes(self) -> bytes:
        return _pack(self.group.encode(), self.subnet.encode(), self.shared_key, self.ca_public_key)

    @classmethod
    def from_bytes(cls, data: bytes) -> "ConfigBlob":
        (group, subnet, shared_key, ca_public_key), rest = _unpack(data, 4)
        if rest:
            raise ValueError(f"{len(rest)} trailing bytes after config blob")
        return cls(group.decode(), subnet.decode(), shared_key, ca_public_key)


@dataclasses.dataclass
class RevocationState:
    crl: list[tuple[str, float]] = dataclasses.field(default_factory=list)
    dht_subscribers: dict[str, list[NodeId]] = dataclasses.field(default_factory=dict)
    broadcast_log: list[tuple[float, str, int]] = dataclasses.field(default_factory=list)

    def revoked_users(self) -> set[str]:
        return {user for user, _ in self.crl}


@dataclasses.dataclass(frozen=True)
class GroupPolicy:
    crl_poll_period_ms: float = CRL_POLL_PERIOD_MS
    shared_key_bytes: int = SHARED_KEY_BYTES
    signature_scheme: str = HmacSignatureScheme.name


@dataclasses.dataclass
class Session:
    user: str
    group: str = ""
    secure: bool = True


# group server -------------------------------------------------------------------------------------------------------


class GroupServer:
    """
    In-process stand-in for the group web service: accounts, approval workflow,
    blob download and certificate signing. Reachable either through its methods
    or through ``handle`` with one request line per call.
    """

    def __init__(self, sim: Simulator, policy: GroupPolicy | None = None, seed: int = 0):
        self.sim = sim
        self.policy = policy or GroupPolicy()
        self.scheme = SIGNATURE_SCHEMES[self.policy.signature_scheme]()
        self.seed = seed
        self.rng = random.Random(f"{seed}:group-server")
        self.groups: dict[str, GroupConfig] = {}
        self.revocations: dict[str, RevocationState] = {}
        self.request_log: list[str] = []
        self._signing_keys: dict[str, bytes] = {}

    def _group(self, name: str) -> GroupConfig:
        try:
            return self.groups[name]
        except KeyError:
            raise UnknownUser(f"no group named {name}") from None

    def _record(self, group: GroupConfig, user: str) -> MemberRecord:
        try:
            return group.member_records[user]
        except KeyError:
            raise UnknownUser(f"{user} is not known to group {group.name}") from None

    def _require_admin(self, group: GroupConfig, admin: str) -> None:
        if admin not in group.admin_users:
            raise NotAdmin(f"{admin} does not administer {group.name}")

    def _mint_key(self, group: GroupConfig) -> bytes:
        taken = {r.shared_key for r in group.member_records.values()}
        while (key := self.rng.randbytes(self.policy.shared_key_bytes)) in taken:
            pass
        return key

    def create_group(self, admin: str, name: str, subnet: str) -> GroupConfig:
        self.request_log.append(f"create_group {admin} {name}")
        if name in self.groups:
            raise NameTaken(f"group {name} already exists")
        signing_key, ca_public_key = self.scheme.keygen(f"{self.seed}:{name}".encode())
        group = GroupConfig(name, ipaddress.IPv4Network(subnet), {admin}, ca_public_key)
        group.member_records[admin] = MemberRecord(admin, "administrator", MemberStatus.APPROVED, self._mint_key(group))
        self.groups[name] = group
        self.revocations[name] = RevocationState()
        self._signing_keys[name] = signing_key
        _logger.info(f"group {name} ({subnet}) created by {admin}")
        return group

    def request_join(self, user: str, group: str, info: str = "") -> MemberRecord:
        self.request_log.append(f"request_join {user} {group}")
        config = self._group(group)
        record = config.member_records.get(user)
        if record is not None and record.status is MemberStatus.APPROVED:
            raise ValueError(f"{user} is already a member of {group}")
        if record is not None and record.status is MemberStatus.REVOKED:
            raise Revoked(f"{user} was revoked from {group}")
        record = config.member_records[user] = MemberRecord(user, info)
        return record

    def approve(self, admin: str, group: str, user: str) -> MemberRecord:
        self.request_log.append(f"approve {admin} {group} {user}")
        config = self._group(group)
        self._require_admin(config, admin)
        record = self._record(config, user)
        if record.status is not MemberStatus.PENDING:
            raise ValueError(f"{user} is {record.status.value}, not pending")
        record.status = MemberStatus.APPROVED
        record.shared_key = self._mint_key(config)
        return record

    def deny(self, admin: str, group: str, user: str) -> None:
        self.request_log.append(f"deny {admin} {group} {user}")
        config = self._group(group)
        self._require_admin(config, admin)
        record = self._record(config, user)
        if record.status is not MemberStatus.PENDING:
            raise ValueError(f"{user} is {record.status.value}, not pending")
        del config.member_records[user]

    def issue_blob(self, user: str, group: str, secure_channel: bool = True) -> ConfigBlob:
        self.request_log.append(f"issue_blob {user} {group}")
        if not secure_channel:
            raise InsecureTransport("configuration blobs are only served over a secure channel")
        config = self._group(group)
        record = config.member_records.get(user)
        if record is None or record.status is not MemberStatus.APPROVED:
            raise NotApproved(f"{user} is not an approved member of {group}")
        return ConfigBlob(config.name, str(config.subnet), record.shared_key, config.ca_public_key)

    def prove(self, group: str, challenge: bytes) -> bytes:
        """Server half of the mutual authentication preceding a signing request"""
        self.request_log.append(f"prove {group}")
        self._group(group)
        return self.scheme.sign(self._signing_keys[group], b"challenge:" + challenge)

    def sign_csr(self, group: str, shared_key: bytes, node_id: NodeId) -> Certificate:
        self.request_log.append(f"sign_csr {group} {short_id(node_id)}")
        config = self._group(group)
        record = next((r for r in config.member_records.values() if r.shared_key == shared_key), None)
        if record is None:
            raise BadSharedKey(f"shared key not recognized by {group}")
        if record.status is MemberStatus.REVOKED:
            raise Revoked(f"{record.user} was revoked from {group}")
        if record.status is not MemberStatus.APPROVED:
            raise NotApproved(f"{record.user} is not approved in {group}")
        unsigned = Certificate(node_id, group, record.user, self.sim.now)
        return dataclasses.replace(unsigned, signature=self.scheme.sign(self._signing_keys[group], unsigned.tbs()))

    def revoke(self, group: str, user: str) -> tuple[str, float]:
        self.request_log.append(f"revoke {group} {user}")
        config = self._group(group)
        record = self._record(config, user)
        state = self.revocations[group]
        if record.status is MemberStatus.REVOKED:
            return next(entry for entry in state.crl if entry[0] == user)
        if record.status is not MemberStatus.APPROVED:
            raise NotApproved(f"{user} is not an approved member of {group}")
        record.status = MemberStatus.REVOKED
        entry = (user, self.sim.now)
        state.crl.append(entry)
        _logger.info(f"{user} revoked from {group}")
        return entry

    def crl(self, group: str) -> tuple[tuple[str, float], ...]:
        self.request_log.append(f"crl {group}")
        return tuple(self.revocations[self._group(group).name].crl)

    def handle(self, line: str, session: Session) -> str:
        """
        Line API. Requests: ``CREATE <group> <subnet>``, ``JOIN <user> <group> <info>``,
        ``APPROVE <user>``, ``DENY <user>``, ``BLOB``, ``PROVE <challenge_hex>``,
        ``SIGN <shared_key_hex> <node_id_hex>``, ``CRL?``. Replies are ``OK [payload]``
        or ``ERR <ErrorName> <message>``.
        """
        try:
            verb, *args = shlex.split(line)
            if verb == "CREATE":
                self.create_group(session.user, args[0], args[1])
                return "OK"
            if verb == "JOIN":
                self.request_join(args[0], args[1], " ".join(args[2:]))
                return "OK"
            if verb == "APPROVE":
                record = self.approve(session.user, session.group, args[0])
                return f"OK {record.status.value}"
            if verb == "DENY":
                self.deny(session.user, session.group, args[0])
                return "OK"
            if verb == "BLOB":
                return f"OK {self.issue_blob(session.user, session.group, session.secure).to_bytes().hex()}"
            if verb == "PROVE":
                return f"OK {self.prove(session.group, bytes.fromhex(args[0])).hex()}"
            if verb == "SIGN":
                cert = self.sign_csr(session.group, bytes.fromhex(args[0]), int(args[1], 16))
                return f"OK {cert.to_bytes().hex()}"
            if verb == "CRL?":
                return "OK " + "\n".join(user for user, _ in self.crl(session.group))
            return f"ERR ValueError unknown request {verb}"
        except P2PVpnError as err:
            return f"ERR {type(err).__name__} {err}"
        except (ValueError, IndexError) as err:
            return f"ERR ValueError malformed request: {err}"


# broadcast ----------------------------------------------------------------------------------------------------------


@dataclasses.dataclass
class BroadcastResult:
    delivered: int
    duplicates_suppressed: int
    max_hops: int
    arrival_ms: dict[NodeId, float]
    hops: dict[NodeId, int]


def broadcast(
    overlay: Overlay, msg: OverlayMessage, on_deliver: Callable[[NodeId, OverlayMessage], None] | None = None
) -> BroadcastResult:
    """
    Flood ``msg`` from ``msg.src`` over every usable edge. Each node handles the
    first copy to arrive and forwards it once; later copies are suppressed.
    Delivery callbacks are scheduled at the simulated arrival times.
    """
    now = overlay.sim.now
    graph = nx.DiGraph()
    for node in overlay.live_ids():
        graph.add_node(node)
        for peer in sorted(overlay.usable_peers(node)):
            graph.add_edge(node, peer, latency=overlay.path_latency(node, [peer]))
    # the first copy to arrive travels the lowest-latency path
    arrival, paths = nx.single_source_dijkstra(graph, msg.src, weight="latency")
    hops = {node: len(path) - 1 for node, path in paths.items() if len(path) - 1 <= msg.ttl_hops}
    arrival = {node: arrival[node] for node in hops}
    copies = 0
    for node, hop in hops.items():
        if hop >= msg.ttl_hops:
            continue
        parent = paths[node][-2] if hop else None
        copies += sum(1 for peer in graph.successors(node) if peer != parent)
    if on_deliver is not None:
        for node, elapsed in sorted(arrival.items(), key=lambda item: (item[1], item[0])):
            overlay.sim.schedule_at(now + elapsed, node, msg, lambda _, node=node: on_deliver(node, msg))
    return BroadcastResult(len(arrival), copies - (len(arrival) - 1), max(hops.values()), arrival, hops)


# member side --------------------------------------------------------------------------------------------------------


@dataclasses.dataclass
class Member:
    node: NodeId
    user: str
    blob: ConfigBlob
    certificate: Certificate
    revoked_users: set[str] = dataclasses.field(default_factory=set)
    learned: dict[str, tuple[float, str]] = dataclasses.field(default_factory=dict)
    subscribed: set[str] = dataclasses.field(default_factory=set)
    polling: bool = False


class CertificateAuthenticator(PacketAuthenticator):
    """Packets carry the sender's group certificate; receivers check it offline"""

    def __init__(self, network: "GroupNetwork"):
        super().__init__(network.group)
        self.network = network

    def seal(self, sender: NodeId, pkt: VirtualPacket) -> VirtualPacket:
        sealed = super().seal(sender, pkt)
        member = self.network.members.get(sender)
        return dataclasses.replace(sealed, certificate=member.certificate if member else None)

    def verify(self, receiver: NodeId, pkt: VirtualPacket) -> bool:
        if not super().verify(receiver, pkt) or pkt.certificate is None:
            return False
        member = self.network.members.get(receiver)
        if member is None:
            return False
        return self.network.accepts(member, pkt.certificate, pkt.sender)


@dataclasses.dataclass(frozen=True)
class RevocationReport:
    user: str
    revoked_at: float
    channels: tuple[str, ...]
    dht_notified: int
    broadcast: BroadcastResult | None


class GroupNetwork:
    """
    One group's members on a shared public overlay: enrollment, private-overlay
    bootstrap with certificate checks, and revocation over the CRL, DHT
    notifications and a private-overlay broadcast.
    """

    CHANNELS = ("crl", "dht", "broadcast")

    def __init__(
        self,
        server: GroupServer,
        public: Overlay,
        public_dht: Dht,
        group: str,
        vpn_config: VpnConfig | None = None,
    ):
        self.server = server
        self.public = public
        self.public_dht = public_dht
        self.group = group
        self.config = server.groups[group]
        self.members: dict[NodeId, Member] = {}
        self.channels: set[str] = set(self.CHANNELS)
        self.stats: Counter = Counter()
        self.private = Overlay(public.sim, public.config, name=f"private:{group}", admit=self.admits)
        self.private_dht = Dht(self.private)
        self.vpn = VirtualNetwork(
            self.private, self.private_dht, group, str(self.config.subnet), vpn_config, CertificateAuthenticator(self)
        )

    @property
    def sim(self) -> Simulator:
        return self.public.sim

    @property
    def scheme(self) -> SignatureScheme:
        return self.server.scheme

    def session(self, user: str, secure: bool = True) -> Session:
        return Session(user, self.group, secure)

    def request(self, line: str, session: Session) -> str:
        return check_reply(line, self.server.handle(line, session))

    # enrollment -----------------------------------------------------------------------------------------------------

    def download_blob(self, user: str, secure: bool = True) -> ConfigBlob:
        return ConfigBlob.from_bytes(bytes.fromhex(self.request("BLOB", self.session(user, secure))))

    def enroll(self, node: NodeId, user: str, blob: ConfigBlob | None = None) -> Certificate:
        """Authenticate the server against the blob's CA key, then have it sign this node's id"""
        blob = blob or self.download_blob(user)
        session = self.session(user)
        challenge = random.Random(f"{self.server.seed}:challenge:{node}").randbytes(16)
        proof = bytes.fromhex(self.request(f"PROVE {challenge.hex()}", session))
        if not self.scheme.verify(blob.ca_public_key, b"challenge:" + challenge, proof):
            raise CertRejected(f"group server failed to authenticate for {self.group}")
        line = f"SIGN {blob.shared_key.hex()} {node:040x}"
        certificate = Certificate.from_bytes(bytes.fromhex(self.request(line, session)))
        if not certificate.verify(self.scheme, blob.ca_public_key):
            raise CertRejected("issued certificate does not verify")
        member = Member(node, user, blob, certificate)
        self.members[node] = member
        if not member.polling:
            member.polling = True
            self.sim.schedule(self.server.policy.crl_poll_period_ms, node, "crl", lambda _: self.poll_crl(node))
        _logger.info(f"[{self.group}] {user} enrolled node {short_id(node)}")
        return certificate

    # verification ---------------------------------------------------------------------------------------------------

    def accepts(self, member: Member, certificate: Certificate, claimed_node: NodeId | None = None) -> bool:
        """Offline check by ``member``: CA signature, group, subject binding and its own revocation knowledge"""
        if certificate.group != self.group or certificate.user in member.revoked_users:
            return False
        if claimed_node is not None and certificate.subject_node != claimed_node:
            return False
        return certificate.verify(self.scheme, member.blob.ca_public_key)

    def admits(self, a: NodeId, b: NodeId) -> bool:
        member, peer = self.members.get(a), self.members.get(b)
        if member is None or peer is None or not self.accepts(member, peer.certificate, b):
            return False
        if peer.user not in member.subscribed and self.public.is_live(a):
            try:
                self.public_dht.put(a, revoke_key(peer.user), encode_node_id(a))
                member.subscribed.add(peer.user)
            except P2PVpnError as err:
                _logger.warning(f"[{self.group}] {short_id(a)} could not subscribe to {peer.user}: {err}")
        return True

    # private overlay ------------------------------------------------------------------------------------------------

    def find_private_members(self, node: NodeId) -> list[NodeId]:
        listed = {decode_node_id(v) for v in self.public_dht.get(node, private_key(self.group))}
        members = sorted(m for m in listed - {node} if self.public.is_live(m))
        if not members:
            raise NoMembersFound(f"no live member listed under private:{self.group}")
        return members

    def bootstrap_private_overlay(self, node: NodeId):
        """Join the members-only overlay through members found in the public DHT"""
        member = self.members.get(node)
        if member is None:
            raise CertRejected(f"{short_id(node)} holds no certificate for {self.group}")
        if self.private.is_live(node):
            self.private.leave(node)
        try:
            candidates = self.find_private_members(node)
        except NoMembersFound:
            candidates = []

        accepted, rejected, reached = [], 0, 0
        for peer in candidates:
            other = self.members.get(peer)
            if other is None or self.public.find_path(node, peer) is None:
                continue
            reached += 1
            if not self.accepts(other, member.certificate, node):
                self.stats["bootstrap_rejected"] += 1
                rejected += 1
                _logger.warning(f"[{self.group}] {short_id(peer)} rejected certificate of {member.user}")
                continue
            if self.accepts(member, other.certificate, peer):
                accepted.append(peer)
        if candidates and not accepted:
            if rejected:
                raise CertRejected(f"{rejected} of {reached} reachable members of {self.group} rejected {member.user}")
            if not reached:
                raise NoOverlayPath(f"none of {len(candidates)} listed members of {self.group} is reachable")
            raise CertRejected(f"{member.user} accepted none of the {reached} reachable members of {self.group}")

        joined = self.private.join(node, [p for p in accepted if self.private.is_live(p)])
        self.public_dht.put(node, private_key(self.group), encode_node_id(node))
        _logger.info(f"[{self.group}] {short_id(node)} joined the private overlay ({len(accepted)} bootstrap peers)")
        return joined

    # revocation -----------------------------------------------------------------------------------------------------

    def learn_revocation(self, node: NodeId, user: str, channel: str) -> bool:
        member = self.members.get(node)
        if member is None or user in member.revoked_users:
            return False
        member.revoked_users.add(user)
        member.learned[user] = (self.sim.now, channel)
        self.stats[f"learned_{channel}"] += 1
        if self.private.is_live(node):
            table = self.private.node(node).table
            for peer in sorted(table.edge_meta):
                other = self.members.get(peer)
                if other is not None and other.user == user:
                    self.private.disconnect(node, peer)
        _logger.debug(f"[{self.group}] {short_id(node)} learned of {user}'s revocation via {channel}")
        return True

    def poll_crl(self, node: NodeId) -> None:
        member = self.members.get(node)
        if member is None or not self.public.is_live(node):
            return
        if "crl" in self.channels:
            payload = self.request("CRL?", self.session(member.user))
            for user in filter(None, payload.split("\n")):
                self.learn_revocation(node, user, "crl")
        self.sim.schedule(self.server.policy.crl_poll_period_ms, node, "crl", lambda _: self.poll_crl(node))

    def _origin(self, user: str) -> NodeId | None:
        live = [m for m in sorted(self.members.values(), key=lambda m: m.node) if self.private.is_live(m.node)]
        admins = [m for m in live if m.user in self.config.admin_users and m.user != user]
        others = [m for m in live if m.user != user]
        chosen = (admins or others or [None])[0]
        return chosen.node if chosen is not None else None

    def revoke(self, user: str) -> RevocationReport:
        """Revoke at the server, then notify DHT subscribers and flood the private overlay"""
        if user not in self.config.member_records:
            raise UnknownUser(f"{user} is not known to group {self.group}")
        _, revoked_at = self.server.revoke(self.group, user)
        state = self.server.revocations[self.group]
        origin = self._origin(user)
        if origin is not None:
            self.learn_revocation(origin, user, "origin")

        notified = 0
        if "dht" in self.channels and origin is not None and self.public.is_live(origin):
            subscribers = sorted(decode_node_id(v) for v in self.public_dht.get(origin, revoke_key(user)))
            state.dht_subscribers[user] = subscribers
            for subscriber in subscribers:
                if not self.public.is_live(subscriber):
                    continue
                msg = OverlayMessage(src=origin, dst=subscriber, kind=MessageKind.REVOCATION_BROADCAST)
                self.public.send(
                    msg, lambda _, s=subscriber: self.learn_revocation(s, user, "dht"), target=subscriber
                )
                notified += 1

        flood = None
        if "broadcast" in self.channels and origin is not None:
            msg = OverlayMessage(
                src=origin, dst=origin, kind=MessageKind.REVOCATION_BROADCAST, payload=user.encode()
            )
            flood = broadcast(self.private, msg, lambda n, _: self.learn_revocation(n, user, "broadcast"))
            state.broadcast_log.append((self.sim.now, user, flood.delivered))
        return RevocationReport(user, revoked_at, tuple(sorted(self.channels)), notified, flood)
