"""JSON value helpers shared across the package.

Values are whatever json.loads produces: None, bool, int, float, str,
list, dict. Equality is canonical: object key order is irrelevant, array
order matters, and there is no type coercion (True != 1, 1 != "1",
1 != 1.0).
"""

from __future__ import annotations

import json
from typing import Any

JsonValue = Any


class _Absent:
    """Sentinel for "no value was recorded here", distinct from JSON null."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "<absent>"


ABSENT = _Absent()


def is_absent(v) -> bool:
    return v is ABSENT


def is_int(v) -> bool:
    """True for ints that are not bools (Python bools subclass int)."""
    return isinstance(v, int) and not isinstance(v, bool)


def canonical_eq(a, b) -> bool:
    """Structural JSON equality with strict types.

    Dict key order is ignored; list order is significant; bool, int,
    float and str never compare equal across types.
    """
    if a is ABSENT or b is ABSENT:
        return a is b
    if isinstance(a, bool) or isinstance(b, bool):
        return isinstance(a, bool) and isinstance(b, bool) and a == b
    if is_int(a) or is_int(b):
        return is_int(a) and is_int(b) and a == b
    if isinstance(a, float) or isinstance(b, float):
        return isinstance(a, float) and isinstance(b, float) and a == b
    if isinstance(a, str) or isinstance(b, str):
        return isinstance(a, str) and isinstance(b, str) and a == b
    if a is None or b is None:
        return a is None and b is None
    if isinstance(a, list) or isinstance(b, list):
        if not (isinstance(a, list) and isinstance(b, list)):
            return False
        return len(a) == len(b) and all(canonical_eq(x, y) for x, y in zip(a, b))
    if isinstance(a, dict) and isinstance(b, dict):
        if set(a.keys()) != set(b.keys()):
            return False
        return all(canonical_eq(a[k], b[k]) for k in a)
    return False


def _tag(v):
    if v is ABSENT:
        return "<absent>"
    if isinstance(v, bool):
        return ("b", v)
    if is_int(v):
        return ("i", v)
    if isinstance(v, float):
        return ("f", v)
    if isinstance(v, str):
        return ("s", v)
    if v is None:
        return "n"
    if isinstance(v, list):
        return ["l"] + [_tag(x) for x in v]
    if isinstance(v, dict):
        return ["d"] + sorted(([k, _tag(x)] for k, x in v.items()), key=lambda p: p[0])
    raise TypeError(f"not a JSON value: {v!r}")


def canonical_dumps(v) -> str:
    """Deterministic string key for a value; equal iff canonical_eq."""
    return json.dumps(_tag(v), sort_keys=False, separators=(",", ":"))


def structural_size(v) -> int:
    """Node count of a JSON value: scalars 1, containers 1 + members."""
    if isinstance(v, list):
        return 1 + sum(structural_size(x) for x in v)
    if isinstance(v, dict):
        return 1 + sum(structural_size(x) for x in v.values())
    return 1


def dumps_pretty(v) -> str:
    """Literal syntax used by the program printer (insertion order kept)."""
    return json.dumps(v, separators=(", ", ": "), sort_keys=False)
