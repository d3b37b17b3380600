"""Canonical text encodings shared by the KB, trace, and wire layers.

Everything the engine writes out (fact lines, trace records, planner
requests) must be byte-identical across runs, so all float formatting and
JSON emission goes through this module instead of repr()/json.dumps().
"""

from __future__ import annotations

import json
import math

FLOAT_DECIMALS = 6


def fmt_float(value: float) -> str:
    """Render a float with exactly six decimals, normalizing -0.0."""
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"cannot canonicalize non-finite float {value!r}")
    text = format(value, f".{FLOAT_DECIMALS}f")
    if text == f"-0.{'0' * FLOAT_DECIMALS}":
        return text[1:]
    return text


def fmt_literal(value: object) -> str:
    """Canonical token for a fact object: symbol, int, or float."""
    if isinstance(value, bool):
        raise TypeError("bool is not a valid fact literal")
    if isinstance(value, float):
        return fmt_float(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, str):
        if not value or any(c in value for c in "|\n\r "):
            raise ValueError(f"invalid symbol token: {value!r}")
        return value
    raise TypeError(f"unsupported literal type: {type(value).__name__}")


def dumps(value: object) -> str:
    """Canonical JSON: insertion-ordered keys, floats at six decimals.

    json.dumps renders floats with repr(), which is not stable enough for
    byte-exact replay, hence this small hand-rolled emitter.
    """
    parts: list[str] = []
    _emit(value, parts)
    return "".join(parts)


def _emit(value: object, out: list[str]) -> None:
    if value is None:
        out.append("null")
    elif value is True:
        out.append("true")
    elif value is False:
        out.append("false")
    elif isinstance(value, float):
        out.append(fmt_float(value))
    elif isinstance(value, int):
        out.append(str(value))
    elif isinstance(value, str):
        out.append(json.dumps(value, ensure_ascii=False))
    elif isinstance(value, (list, tuple)):
        out.append("[")
        for i, item in enumerate(value):
            if i:
                out.append(",")
            _emit(item, out)
        out.append("]")
    elif isinstance(value, dict):
        out.append("{")
        for i, (key, item) in enumerate(value.items()):
            if not isinstance(key, str):
                raise TypeError("canonical JSON keys must be strings")
            if i:
                out.append(",")
            out.append(json.dumps(key, ensure_ascii=False))
            out.append(":")
            _emit(item, out)
        out.append("}")
    else:
        raise TypeError(f"cannot canonicalize {type(value).__name__}")
