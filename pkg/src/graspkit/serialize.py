"""Small JSON helpers shared by the file formats.

Every on-disk format carries an integer ``version``; readers reject
unknown major versions with a precise message.
"""

from __future__ import annotations

import json


def load_json(path):
    with open(path) as f:
        return json.load(f)


def save_json(path, payload):
    with open(path, "w") as f:
        json.dump(payload, f, indent=2)
        f.write("\n")


def check_version(payload, expected: int, kind: str):
    found = payload.get("version")
    if found is None:
        raise ValueError(f"{kind} file has no 'version' field")
    if int(found) != expected:
        raise ValueError(f"unsupported {kind} file version {found} (expected {expected})")
