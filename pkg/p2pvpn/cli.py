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

import argparse
import logging
import sys

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .commands import COMMAND_CLASS_MAPPINGS
from .constant import EXIT_ERROR, EXIT_INVARIANT_VIOLATION, EXIT_OK
from .errors import P2PVpnError
from .utils import merge_dict

_logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with 1; 2 is reserved for invariant violations"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def convert(name: str, spec: tuple, value):
    """Coerce ``value`` to the declared input type and enforce min/max/choices"""
    kind, options = spec[0], spec[1] if len(spec) > 1 else {}
    if isinstance(kind, list):
        if value not in kind:
            raise ValueError(f"{name} must be one of {', '.join(kind)}, got {value!r}")
        return value
    if kind == "BOOLEAN":
        if isinstance(value, str):
            return value.lower() in ("1", "true", "yes", "on")
        return bool(value)
    if kind == "STRING":
        return str(value)
    value = int(value) if kind == "INT" else float(value)
    if "min" in options and value < options["min"]:
        raise ValueError(f"{name} must be >= {options['min']}, got {value}")
    if "max" in options and value > options["max"]:
        raise ValueError(f"{name} must be <= {options['max']}, got {value}")
    return value


def _arg_type(name: str, spec: tuple):
    def parse(text):
        try:
            return convert(name, spec, text)
        except ValueError as err:
            raise argparse.ArgumentTypeError(str(err)) from err

    return parse


def declared_inputs(command_cls) -> dict[str, tuple]:
    inputs = command_cls.INPUT_TYPES()
    return {**inputs.get("required", {}), **inputs.get("optional", {})}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="p2pvpn", description="P2P group VPN simulator experiments")
    parser.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, command_cls in COMMAND_CLASS_MAPPINGS.items():
        doc = (command_cls.__doc__ or "").strip().split("\n")[0]
        sub = commands.add_parser(name, help=doc, description=(command_cls.__doc__ or "").strip())
        for input_name, spec in declared_inputs(command_cls).items():
            options = spec[1] if len(spec) > 1 else {}
            flag = f"--{input_name.replace('_', '-')}"
            # defaults are applied after the config file so explicit flags can be told apart
            if spec[0] == "BOOLEAN":
                sub.add_argument(flag, dest=input_name, action=argparse.BooleanOptionalAction, default=None,
                                 help=options.get("help"))
            else:
                sub.add_argument(
                    flag,
                    *options.get("aliases", ()),
                    dest=input_name,
                    type=_arg_type(input_name, spec),
                    default=None,
                    metavar="{" + ",".join(spec[0]) + "}" if isinstance(spec[0], list) else spec[0],
                    help=options.get("help", f"default: {options.get('default')}"),
                )
    return parser


def load_config(path: str, command: str) -> dict:
    """Top-level keys apply to every command; a ``[command]`` table to that command only"""
    with open(path, "rb") as f:
        data = tomllib.load(f)
    values = {k: v for k, v in data.items() if not isinstance(v, dict)}
    return merge_dict(data.get(command, {}), values)


def resolve_inputs(command_cls, command: str, explicit: dict) -> dict:
    inputs = declared_inputs(command_cls)
    values = {name: (spec[1] if len(spec) > 1 else {}).get("default") for name, spec in inputs.items()}
    explicit = {k: v for k, v in explicit.items() if v is not None and k in inputs}
    config_path = explicit.get("config") or values.get("config")
    if config_path:
        layered = load_config(config_path, command)
        unknown = sorted(set(layered) - set(inputs))
        if unknown:
            raise ValueError(f"{config_path}: unknown settings for {command}: {', '.join(unknown)}")
        merge_dict({k: convert(k, inputs[k], v) for k, v in layered.items()}, values)
    return merge_dict(explicit, values)


def run(command: str, values: dict) -> int:
    command_cls = COMMAND_CLASS_MAPPINGS[command]
    instance = command_cls()
    context, text, invariants_hold = getattr(instance, command_cls.FUNCTION)(**values)
    if context.out:
        with open(context.out, "w", newline="") as f:
            f.write(text)
        _logger.info(f"wrote {context.out}")
    else:
        sys.stdout.write(text)
    if not invariants_hold:
        _logger.error(f"{command}: invariant violated")
        return EXIT_INVARIANT_VIOLATION
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = vars(build_parser().parse_args(argv))
    logging.basicConfig(stream=sys.stderr, level=args.pop("log_level"), format=LOG_FORMAT)
    command = args.pop("command")
    try:
        values = resolve_inputs(COMMAND_CLASS_MAPPINGS[command], command, args)
        return run(command, values)
    except (P2PVpnError, OSError, ValueError, tomllib.TOMLDecodeError) as err:
        _logger.error(f"{command}: {type(err).__name__}: {err}")
        return EXIT_ERROR
