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

from collections import namedtuple

from .constant import CONTEXT_TYPE, PREFIX_MENU
from .utils import merge_dict

RunContext = namedtuple("RunContext", ["seed", "out", "config"])


def get_seed_inputs() -> dict[str, dict[str, tuple[str, dict]]]:
    return {"required": {"seed": ("INT", {"default": 0, "min": 0, "max": (1 << 64) - 1})}}


def get_output_inputs() -> dict[str, dict[str, tuple[str, dict]]]:
    return {
        "optional": {
            "out": ("STRING", {"default": "", "help": "write CSV here instead of stdout"}),
            "config": ("STRING", {"default": "", "help": "TOML file merged under explicit flags"}),
        }
    }


def wrap_input_types_with(func, input_fn):
    """Decorator to wrap the INPUT_TYPES classmethod and add shared inputs"""

    def wrapper(*args, **kwargs):
        return merge_dict(input_fn(), func())

    return wrapper


class RunContextExecutionFuncWrapper:
    """Decorator to wrap the execution function, collecting the shared inputs into a RunContext"""

    def __init__(self, func):
        self.func = func

    def __get__(self, instance, owner):
        def wrapper(*args, **kwargs):
            # store on instance in case the command needs access
            instance.context: RunContext = RunContext(  # noqa
                kwargs.pop("seed"), kwargs.pop("out", "") or None, kwargs.pop("config", "") or None
            )
            return (instance.context,) + self.func(instance, *args, **kwargs)

        return wrapper


def add_run_context_outputs(cls):
    """Command class decorator for adding the run context output"""
    cls.RETURN_TYPES = (CONTEXT_TYPE,) + getattr(cls, "RETURN_TYPES", ())
    cls.RETURN_NAMES = ("context",) + getattr(cls, "RETURN_NAMES", ())
    return cls


def add_run_context(cls):
    """
    Command class decorator for the inputs every command shares.

    Adds ``seed``, ``out`` and ``config`` to INPUT_TYPES and hands them to the
    execution function as ``self.context``; the context is returned first.
    """
    add_run_context_outputs(cls)

    setattr(cls, "INPUT_TYPES", wrap_input_types_with(cls.INPUT_TYPES, get_output_inputs))  # noqa
    setattr(cls, "INPUT_TYPES", wrap_input_types_with(cls.INPUT_TYPES, get_seed_inputs))  # noqa

    function_name = getattr(cls, "FUNCTION")  # noqa
    func = getattr(cls, function_name)
    setattr(cls, function_name, RunContextExecutionFuncWrapper(func))

    return cls


def category(name: str) -> str:
    return f"{PREFIX_MENU}/{name}"
