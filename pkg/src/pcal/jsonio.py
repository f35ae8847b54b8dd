"""Canonical JSON helpers.

All documents the package emits go through dumps_canonical so that identical
inputs produce identical bytes (sorted keys, fixed separators, trailing
newline).  Floats rely on repr round-tripping, which is exact for float64.
"""

import hashlib
import json

from .errors import IoError


def dumps_canonical(obj):
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def write_json(path, obj):
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(dumps_canonical(obj))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_json(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc


def sha256_file(path):
    h = hashlib.sha256()
    try:
        with open(path, "rb") as fh:
            for chunk in iter(lambda: fh.read(65536), b""):
                h.update(chunk)
    except OSError as exc:
        raise IoError(f"cannot hash {path}: {exc}") from exc
    return h.hexdigest()
