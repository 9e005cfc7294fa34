"""Unit-suffixed key handling for JSON presets, run specs and reports.

Keys look like ``L_r_pH`` or ``T_r_mK``: a field name followed by a unit
suffix.  Dimensionless numbers use the suffix ``dimless`` and integer counts
use ``count``.
"""

from __future__ import annotations

import math

# suffix -> (dimension, scale to SI)
UNITS: dict[str, tuple[str, float]] = {
    "F": ("capacitance", 1.0),
    "nF": ("capacitance", 1e-9),
    "pF": ("capacitance", 1e-12),
    "fF": ("capacitance", 1e-15),
    "aF": ("capacitance", 1e-18),
    "H": ("inductance", 1.0),
    "uH": ("inductance", 1e-6),
    "nH": ("inductance", 1e-9),
    "pH": ("inductance", 1e-12),
    "K": ("temperature", 1.0),
    "mK": ("temperature", 1e-3),
    "Hz": ("frequency", 1.0),
    "kHz": ("frequency", 1e3),
    "MHz": ("frequency", 1e6),
    "GHz": ("frequency", 1e9),
    "rad_per_s": ("angular_frequency", 1.0),
    "per_s": ("rate", 1.0),
    "s": ("time", 1.0),
    "ms": ("time", 1e-3),
    "us": ("time", 1e-6),
    "ns": ("time", 1e-9),
    "V": ("voltage", 1.0),
    "mV": ("voltage", 1e-3),
    "uV": ("voltage", 1e-6),
    "A": ("current", 1.0),
    "mA": ("current", 1e-3),
    "uA": ("current", 1e-6),
    "nA": ("current", 1e-9),
    "C": ("charge", 1.0),
    "Wb": ("flux", 1.0),
    "ohm": ("impedance", 1.0),
    "S": ("admittance", 1.0),
    "rad": ("angle", 1.0),
    "dimless": ("dimensionless", 1.0),
    "count": ("count", 1.0),
}

# canonical suffix used when writing each dimension
CANONICAL = {dim: suffix for suffix, (dim, scale) in UNITS.items() if scale == 1.0}


class UnitError(ValueError):
    """A key has a missing or wrong unit suffix."""


def split_key(key: str) -> tuple[str, str]:
    """Split ``name_unit`` into ``(name, unit)``, preferring the longest unit."""
    best = None
    for suffix in UNITS:
        tail = "_" + suffix
        if key.endswith(tail) and len(key) > len(tail):
            if best is None or len(suffix) > len(best):
                best = suffix
    if best is None:
        raise UnitError(f"key {key!r} has no recognised unit suffix")
    return key[: -len(best) - 1], best


def to_si(key: str, value, expected: str) -> tuple[str, float]:
    """Return ``(field_name, SI value)`` after checking the unit dimension."""
    name, suffix = split_key(key)
    dim, scale = UNITS[suffix]
    if dim != expected:
        raise UnitError(
            f"field {name!r} expects a {expected} unit but {key!r} has {dim} units"
        )
    if isinstance(value, str) and value in ("inf", "Infinity"):
        value = math.inf
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise UnitError(f"field {key!r} must be numeric, got {value!r}")
    return name, float(value) * scale


def from_si(name: str, value: float, dimension: str, suffix: str | None = None) -> tuple[str, float]:
    """Return ``(key, value)`` expressed in ``suffix`` (canonical SI by default)."""
    if suffix is None:
        suffix = CANONICAL[dimension]
    dim, scale = UNITS[suffix]
    if dim != dimension:
        raise UnitError(f"suffix {suffix!r} is not a {dimension} unit")
    return f"{name}_{suffix}", value / scale
