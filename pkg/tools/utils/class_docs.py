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
import importlib
import pathlib
import re
import sys

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


def update_p2pvpn_readme(module, readme_path, section_header):
    """Generate docs for command types"""
    output = []
    for name, command in module.COMMAND_CLASS_MAPPINGS.items():
        display_name = module.COMMAND_DISPLAY_NAME_MAPPINGS[name]
        if command.__doc__:
            # first sentence only
            doc = " ".join(command.__doc__.split())
            end = doc.find(". ")
            if end > 0:
                doc = doc[: end + 1]
            output.append(f"- **{display_name}** (`{name}`): {doc}\n")
        else:
            output.append(f"- **{display_name}** (`{name}`)\n")

    output.append("\n")

    replace_section(readme_path, section_header, output)


def replace_section(readme_path, section_header, contents):
    """Replace a section under a specific markdown header with new contents"""
    section_header_style = section_header.split(" ")[0]
    with open(readme_path, "r") as f:
        data = f.readlines()

    start = -1
    end = None
    found = False
    for i, line in enumerate(data):
        # search for the first occurence of the special section header string
        if not found:
            if line.strip() == section_header:
                found = True
                start = i + 1
        # search for the next header of the same magnitude
        elif re.match(f"{section_header_style}[^#].*", line):
            end = i
            break

    if not found:
        raise ValueError(f"{readme_path} has no '{section_header}' section")

    final = data[:start] + contents
    if end:
        final += data[end:]
    with open(readme_path, "w") as f:
        f.writelines(final)


def main(argv=None):
    parser = argparse.ArgumentParser(prog="class_docs", description="Regenerate the README command summary")
    parser.add_argument("--config", default="repo.toml", help="reads the [repo_class_docs] table")
    options = parser.parse_args(argv)

    with open(options.config, "rb") as f:
        settings = tomllib.load(f)["repo_class_docs"]
    # the package sits at the repository root, next to tools/
    sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[2]))
    module = importlib.import_module(settings["module_name"])
    update_p2pvpn_readme(module, settings["file_path"], settings["section_header"])
    print("Success!")


if __name__ == "__main__":
    sys.exit(main())
