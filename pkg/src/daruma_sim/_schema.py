"""Small helpers for strict JSON document parsing with error paths."""
from __future__ import annotations

import math
from typing import Any, Iterable, Mapping, Optional

from .errors import SchemaError

_MISSING = object()


def require_mapping(d: Any, path: str) -> Mapping[str, Any]:
    if not isinstance(d, Mapping):
        raise SchemaError(path, f"expected an object, got {type(d).__name__}")
    return d


def check_keys(d: Mapping[str, Any], allowed: Iterable[str], path: str, required: Iterable[str] = ()) -> None:
    allowed = set(allowed)
    for k in d:
        if k not in allowed:
            raise SchemaError(f"{path}.{k}" if path else k, "unknown key")
    for k in required:
        if k not in d:
            raise SchemaError(f"{path}.{k}" if path else k, "missing required key")


def _join(path: str, key: str) -> str:
    return f"{path}.{key}" if path else key


def get_number(
    d: Mapping[str, Any],
    key: str,
    path: str,
    default: Any = _MISSING,
    *,
    allow_inf: bool = False,
) -> float:
    if key not in d:
        if default is _MISSING:
            raise SchemaError(_join(path, key), "missing required key")
        return default
    return as_number(d[key], _join(path, key), allow_inf=allow_inf)


def as_number(v: Any, path: str, *, allow_inf: bool = False) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise SchemaError(path, f"expected a number, got {v!r}")
    v = float(v)
    if math.isnan(v) or (math.isinf(v) and not allow_inf):
        raise SchemaError(path, f"expected a finite number, got {v!r}")
    return v


def get_int(d: Mapping[str, Any], key: str, path: str, default: Any = _MISSING) -> int:
    if key not in d:
        if default is _MISSING:
            raise SchemaError(_join(path, key), "missing required key")
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise SchemaError(_join(path, key), f"expected an integer, got {v!r}")
    return v


def get_bool(d: Mapping[str, Any], key: str, path: str, default: Any = _MISSING) -> bool:
    if key not in d:
        if default is _MISSING:
            raise SchemaError(_join(path, key), "missing required key")
        return default
    v = d[key]
    if not isinstance(v, bool):
        raise SchemaError(_join(path, key), f"expected a boolean, got {v!r}")
    return v


def get_str(d: Mapping[str, Any], key: str, path: str, default: Any = _MISSING) -> str:
    if key not in d:
        if default is _MISSING:
            raise SchemaError(_join(path, key), "missing required key")
        return default
    v = d[key]
    if not isinstance(v, str):
        raise SchemaError(_join(path, key), f"expected a string, got {v!r}")
    return v


def get_list(d: Mapping[str, Any], key: str, path: str, default: Any = _MISSING) -> list:
    if key not in d:
        if default is _MISSING:
            raise SchemaError(_join(path, key), "missing required key")
        return default
    v = d[key]
    if not isinstance(v, list):
        raise SchemaError(_join(path, key), f"expected a list, got {type(v).__name__}")
    return v


def as_point(v: Any, path: str) -> tuple[float, float]:
    if not isinstance(v, list) or len(v) != 2:
        raise SchemaError(path, f"expected [x, y], got {v!r}")
    return as_number(v[0], f"{path}[0]"), as_number(v[1], f"{path}[1]")


def positive(v: float, path: str, *, strict: bool = True) -> float:
    if (strict and not v > 0) or (not strict and not v >= 0):
        raise SchemaError(path, f"must be {'>' if strict else '>='} 0, got {v}")
    return v


def in_unit(v: float, path: str) -> float:
    if not 0.0 <= v <= 1.0:
        raise SchemaError(path, f"must lie in [0, 1], got {v}")
    return v


def optional(d: Mapping[str, Any], key: str) -> Optional[Any]:
    return d.get(key)
