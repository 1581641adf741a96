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

PREFIX_MENU = "p2pvpn"
CONTEXT_TYPE = "RUN_CONTEXT"

# ring
RING_BITS = 160
RING_SIZE = 1 << RING_BITS
MIN_NEIGHBORS = 2
SIZE_ESTIMATE_SAMPLE = 4
FULL_MESH_SIZE = 20
SHORTCUT_REFRESH_TICKS = 10
FAILURE_DETECT_TICKS = 2
DEFAULT_TTL_HOPS = 255
STABILIZE_PERIOD_MS = 5_000.0

# time
SECOND_MS = 1_000.0
MINUTE_MS = 60 * SECOND_MS

# dht
DHT_REPLICAS = 2
DHT_DEFAULT_TTL_MS = 60 * MINUTE_MS
REHOME_TRANSFER_TICKS = 3

# well-known dht keys, bit-exact
IP_KEY_PREFIX = b"ipop:ip:"
GATEWAYS_KEY_PREFIX = b"ipop:gateways:"
PRIVATE_KEY_PREFIX = b"private:"
REVOKE_KEY_PREFIX = b"ipop:revoke:"

# relays
RELAY_ACTIVE_K = 1
JITTER_PING_COUNT = 3

# vpn
GATEWAY_PING_PERIOD_MS = 15 * SECOND_MS
GATEWAY_MISSED_PINGS = 2
DEMAND_SHORTCUT_THRESHOLD = 1
VPN_APP_PORT = 15_000
GATEWAY_NAT_FIRST_PORT = 40_000
GATEWAY_NAT_LAST_PORT = 65_535
NAT_FLOW_IDLE_MS = 2 * MINUTE_MS
LEASE_TTL_MS = DHT_DEFAULT_TTL_MS

# groups
CRL_POLL_PERIOD_MS = 10 * MINUTE_MS
SHARED_KEY_BYTES = 32

# experiments
DEFAULT_TRIALS = 20
DEFAULT_SIZES = (25, 50, 100, 200, 400)
SYNTHETIC_HOSTS = 1_740
STEADY_STATE_MAX_ROUNDS = 200
CHURN_REPORT_PERIOD_MS = 30 * SECOND_MS
CHURN_CONVERGENCE_ROUNDS = 60
MIN_PAIRS_FOR_ORDERING = 10
MIN_SIZE_FOR_RELAY_ORDERING = 50

BENCH_CSV_HEADER = (
    "size",
    "trial",
    "pairs",
    "avg_overlay_ms",
    "avg_relay_ms",
    "avg_direct_ms",
    "improvement_pct",
    "improvement_ratio_pct",
)
SNIFFER_CSV_HEADER = ("time_ms", "src_mac", "dst_mac", "ip_src", "ip_dst", "proto", "secured")
CHURN_CSV_HEADER = ("time_ms", "live", "visited", "inconsistent", "consistency_pct")
CRAWL_CSV_HEADER = ("visited", "inconsistent", "duration_hops")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INVARIANT_VIOLATION = 2
