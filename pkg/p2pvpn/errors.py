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


class P2PVpnError(Exception):
    """Base class for every error raised by the library"""


# overlay
class AllBootstrapsUnreachable(P2PVpnError, ConnectionError):
    pass


class NodeIdCollision(P2PVpnError, ValueError):
    pass


class TtlExceeded(P2PVpnError, TimeoutError):
    pass


class NoRoute(P2PVpnError, LookupError):
    pass


# transport
class ParseError(P2PVpnError, ValueError):
    def __init__(self, line: int, message: str = ""):
        super().__init__(f"line {line}: {message}" if message else f"line {line}")
        self.line = line


class DimensionError(P2PVpnError, ValueError):
    pass


class NoLink(P2PVpnError, ConnectionError):
    pass


# relays
class NoOverlayPath(P2PVpnError, ConnectionError):
    pass


class EmptyCandidates(P2PVpnError, ValueError):
    pass


class NoCandidateReachable(P2PVpnError, ConnectionError):
    pass


# vpn
class SubnetExhausted(P2PVpnError, RuntimeError):
    pass


class NotFound(P2PVpnError, LookupError):
    pass


class NoGatewayAvailable(P2PVpnError, LookupError):
    pass


class UnsupportedProto(P2PVpnError, ValueError):
    pass


# groups
class NameTaken(P2PVpnError, ValueError):
    pass


class NotAdmin(P2PVpnError, PermissionError):
    pass


class NotApproved(P2PVpnError, PermissionError):
    pass


class BadSharedKey(P2PVpnError, PermissionError):
    pass


class Revoked(P2PVpnError, PermissionError):
    pass


class UnknownUser(P2PVpnError, LookupError):
    pass


class NoMembersFound(P2PVpnError, LookupError):
    pass


class CertRejected(P2PVpnError, PermissionError):
    pass


class InsecureTransport(P2PVpnError, PermissionError):
    pass


# experiments
class DatasetTooSmall(P2PVpnError, ValueError):
    pass


class CrawlStalled(P2PVpnError, RuntimeError):
    pass


ERRORS_BY_NAME: dict[str, type[P2PVpnError]] = {
    cls.__name__: cls for cls in P2PVpnError.__subclasses__()  # noqa
}
