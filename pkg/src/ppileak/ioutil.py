"""Deterministic serialization helpers and content fingerprints."""
from __future__ import annotations

import dataclasses
import datetime as dt
import hashlib
import json
import math
from pathlib import Path

from . import __version__


def format_float(x: float) -> str:
    """17 significant digits; always carries a decimal point or exponent."""
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"cannot serialize non-finite number {x!r}")
    s = "%.17g" % x
    if "." not in s and "e" not in s:
        s += ".0"
    return s


def to_plain(obj):
    """Convert dataclasses, dates, tuples and numpy scalars to JSON-ready values."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, (dt.date, dt.datetime)):
        return obj.isoformat()
    if hasattr(obj, "tolist"):
        return to_plain(obj.tolist())
    return obj


def dumps_json(obj, indent: int = 2) -> str:
    """JSON text with floats rendered at 17 significant digits.

    Parsing the output and dumping it again reproduces it byte for byte.
    """
    out = []

    def emit(value, level):
        pad = " " * (indent * (level + 1))
        end = " " * (indent * level)
        if value is None:
            out.append("null")
        elif value is True:
            out.append("true")
        elif value is False:
            out.append("false")
        elif isinstance(value, int):
            out.append(str(value))
        elif isinstance(value, float):
            out.append(format_float(value))
        elif isinstance(value, str):
            out.append(json.dumps(value))
        elif isinstance(value, dict):
            if not value:
                out.append("{}")
                return
            out.append("{\n")
            for k, (key, item) in enumerate(value.items()):
                out.append(pad + json.dumps(str(key)) + ": ")
                emit(item, level + 1)
                out.append(",\n" if k < len(value) - 1 else "\n")
            out.append(end + "}")
        elif isinstance(value, list):
            if not value:
                out.append("[]")
                return
            if all(isinstance(v, (str, int, float)) and not isinstance(v, bool) for v in value):
                out.append("[")
                for k, item in enumerate(value):
                    emit(item, level + 1)
                    if k < len(value) - 1:
                        out.append(", ")
                out.append("]")
                return
            out.append("[\n")
            for k, item in enumerate(value):
                out.append(pad)
                emit(item, level + 1)
                out.append(",\n" if k < len(value) - 1 else "\n")
            out.append(end + "]")
        else:
            raise TypeError(f"cannot serialize {type(value).__name__}")

    emit(to_plain(obj), 0)
    return "".join(out) + "\n"


def canonical_json(obj) -> str:
    return json.dumps(to_plain(obj), sort_keys=True, separators=(",", ":"))


def fingerprint(obj) -> str:
    """Stable hash of the canonicalized content of ``obj``."""
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()[:16]


def file_fingerprint(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()[:16]


def provenance(config_fingerprint: str, inputs: dict) -> dict:
    return {
        "tool": "ppileak",
        "tool_version": __version__,
        "config_fingerprint": config_fingerprint,
        "inputs": dict(sorted(inputs.items())),
    }


def write_text(path, text: str) -> None:
    Path(path).write_text(text)
