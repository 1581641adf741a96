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

from p2pvpn.experiments import build_overlay, wait_for_steady_state
from p2pvpn.overlay import OverlayConfig
from p2pvpn.transport_sim import Simulator


@pytest.fixture
def sim():
    return Simulator(seed=0)


@pytest.fixture
def make_overlay():
    """Factory for stabilized overlays: ``make_overlay(size, seed=0, **config)``"""

    def factory(size, seed=0, latency=None, block_adjacent=False, **config):
        overlay = build_overlay(
            size, seed, latency=latency, config=OverlayConfig(seed=seed, **config), block_adjacent=block_adjacent
        )
        wait_for_steady_state(overlay)
        return overlay

    return factory


@pytest.fixture(scope="module")
def ring32():
    overlay = build_overlay(32, 7)
    wait_for_steady_state(overlay)
    return overlay
