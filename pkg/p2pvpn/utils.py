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

import gzip
import logging

import numpy as np
import requests

from .errors import ERRORS_BY_NAME, P2PVpnError

_logger = logging.getLogger(__name__)

_GZIP_MAGIC = b"\x1f\x8b"


def merge_dict(source: dict, destination: dict) -> dict:
    """
    Deep-merge ``source`` into ``destination`` and return ``destination``.

    Examples:
        >>> a = {"overlay": {"shortcuts": True, "neighbors": 2}}
        >>> b = {"overlay": {"neighbors": 5}, "seed": 7}
        >>> merge_dict(b, a) == {"overlay": {"shortcuts": True, "neighbors": 5}, "seed": 7}
        True
    """
    for key, value in source.items():
        if isinstance(value, dict):
            # get node or create one
            node = destination.setdefault(key, {})
            merge_dict(value, node)
        else:
            destination[key] = value

    return destination


def check_response_status_code(response: requests.Response) -> None:
    try:
        response.raise_for_status()
    except requests.exceptions.HTTPError as err:
        _logger.error(f"Requested URL: {response.url}\nStatus: {response.status_code} {response.reason}")
        raise err


def check_reply(request: str, reply: str) -> str:
    """
    Return the payload of an ``OK`` group-server reply or raise the error it carries.

    Examples:
        >>> check_reply("CRL?", "OK alice")
        'alice'
    """
    if reply == "OK" or reply.startswith("OK "):
        return reply[3:]
    _logger.error(f"Request: {request}\nRaw Reply: {reply}")
    _status, _, rest = reply.partition(" ")
    name, _, message = rest.partition(" ")
    raise ERRORS_BY_NAME.get(name, P2PVpnError)(message or reply)


def fetch_bytes(location: str) -> bytes:
    """Read a local path or an http(s) URL, transparently un-gzipping"""
    if location.startswith(("http://", "https://")):
        r = requests.get(location, timeout=60)
        check_response_status_code(r)
        data = r.content
    else:
        with open(location, "rb") as f:
            data = f.read()
    if data[:2] == _GZIP_MAGIC:
        data = gzip.decompress(data)
    return data


def rank_correlation(xs: list[float], ys: list[float]) -> float:
    """Spearman rank correlation, average ranks for ties"""
    if len(xs) != len(ys) or len(xs) < 2:
        raise ValueError("need two equally long series of at least 2 points")

    def ranks(values):
        arr = np.asarray(values, dtype=float)
        order = np.argsort(arr, kind="stable")
        result = np.empty(len(arr))
        i = 0
        while i < len(arr):
            j = i
            while j + 1 < len(arr) and arr[order[j + 1]] == arr[order[i]]:
                j += 1
            result[order[i : j + 1]] = (i + j) / 2.0
            i = j + 1
        return result

    rx, ry = ranks(xs), ranks(ys)
    if rx.std() == 0 or ry.std() == 0:
        return 0.0
    return float(np.corrcoef(rx, ry)[0, 1])


def short_id(node_id: int) -> str:
    return f"{node_id:040x}"[:8]
