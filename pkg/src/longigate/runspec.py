"""Declarative run specifications for the command-line runner.

A run spec is a JSON object.  Every numeric key carries a unit suffix
(see :mod:`longigate.units`); strings and booleans do not.  Errors are
collected rather than raised one at a time, and each carries the line of
the offending key in the source file.

Example::

    {
      "command": "budget",
      "preset": "flux_q25k",
      "overrides": {"Q_dimless": 1e5}
    }
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field

import numpy as np

from . import units
from .circuit_model import ConfigError, circuit_from_json, circuit_to_json, list_presets

COMMANDS = ("reduce", "design", "simulate", "budget", "table1", "mc", "sweep")
FORMATS = ("json", "csv", "table")
MAX_GRID_POINTS = 1_000_000

# numeric fields per section: name -> dimension
NUMERIC_FIELDS: dict[str, dict[str, str]] = {
    "drive": {
        "delta_m": "dimensionless",
        "m": "count",
        "k": "count",
        "eta_minus": "dimensionless",
        "eta_plus": "dimensionless",
    },
    "overrides": {
        "Q": "dimensionless",
        "dispersive_shift": "dimensionless",
        "T_r": "temperature",
        "f_r": "frequency",
        "n_bar": "dimensionless",
        "tau_c": "dimensionless",
        "dephasing_weight": "dimensionless",
        "eta_max": "dimensionless",
        "m_min": "count",
        "m_max": "count",
    },
    "mc": {
        "replicas": "count",
        "steps_per_cycle": "count",
        "noise_scale": "dimensionless",
    },
    "simulate": {
        "samples_per_cycle": "count",
    },
}

# string (or boolean) fields per section: name -> allowed values (None = free text)
TEXT_FIELDS: dict[str, dict[str, tuple | None]] = {
    "drive": {"echo": ("none", "force", "pi_pulse")},
    "mc": {"estimator": ("gate_phase_error", "dephasing", "equilibrium_variance")},
    "simulate": {"frame": ("lab", "drive", "resonator"), "method": ("exact", "ode"),
                 "plots": (True, False)},
    "output": {"dir": None, "format": FORMATS},
}

TOP_LEVEL = ("command", "preset", "circuit", "seed_count", "threads_count", "sweep") + tuple(
    sorted(set(NUMERIC_FIELDS) | set(TEXT_FIELDS)))

# fields that a sweep may vary, with their section
SWEEPABLE = {name: section for section in ("drive", "overrides")
             for name in NUMERIC_FIELDS[section]}


class SpecError(ConfigError):
    """One or more problems in a run spec, each with a source line."""

    def __init__(self, problems: list[tuple[int | None, str]]):
        self.problems = problems
        super().__init__("\n".join(_format_problem(line, msg) for line, msg in problems))


def _format_problem(line: int | None, message: str) -> str:
    return f"line {line}: {message}" if line else message


@dataclass
class RunSpec:
    """A validated run specification with all values in SI or dimensionless units.

    ``sections`` maps section name to ``{field: value}``; ``sweep`` maps a
    sweepable field to its list of grid values.
    """

    command: str
    preset: str | None = None
    circuit: dict | None = None
    sections: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    seed: int = 0
    threads: int | None = None

    def get(self, section: str, name: str, default=None):
        return self.sections.get(section, {}).get(name, default)

    def with_value(self, section: str, name: str, value) -> "RunSpec":
        sections = {k: dict(v) for k, v in self.sections.items()}
        sections.setdefault(section, {})[name] = value
        return RunSpec(self.command, self.preset, self.circuit, sections, dict(self.sweep),
                       self.seed, self.threads)

    def grid_size(self) -> int:
        size = 1
        for values in self.sweep.values():
            size *= len(values)
        return size

    def to_json(self) -> dict:
        """Unit-suffixed JSON object that :func:`parse_runspec_text` reads back."""
        out: dict = {"command": self.command}
        if self.preset is not None:
            out["preset"] = self.preset
        if self.circuit is not None:
            out["circuit"] = self.circuit
        out["seed_count"] = self.seed
        if self.threads is not None:
            out["threads_count"] = self.threads
        for section in sorted(self.sections):
            body = {}
            for name, value in sorted(self.sections[section].items()):
                dim = NUMERIC_FIELDS.get(section, {}).get(name)
                if dim is None:
                    body[name] = value
                else:
                    key, v = units.from_si(name, value, dim)
                    body[key] = _json_number(v, dim)
            out[section] = body
        if self.sweep:
            body = {}
            for name, values in sorted(self.sweep.items()):
                dim = NUMERIC_FIELDS[SWEEPABLE[name]][name]
                key, _ = units.from_si(name, 0.0, dim)
                body[key] = [_json_number(v, dim) for v in values]
            out["sweep"] = body
        return out


def _json_number(value: float, dim: str):
    if dim == "count":
        return int(round(value))
    if not math.isfinite(value):
        return "inf" if value > 0 else "nan"
    return float(value)


def _key_lines(text: str) -> dict[str, int]:
    """First line on which each JSON key appears."""
    lines: dict[str, int] = {}
    for match in re.finditer(r'"((?:[^"\\]|\\.)*)"\s*:', text):
        key = match.group(1)
        if key not in lines:
            lines[key] = text.count("\n", 0, match.start()) + 1
    return lines


def parse_runspec(path) -> RunSpec:
    """Read and validate a run spec file; see :func:`parse_runspec_text`."""
    try:
        with open(path, encoding="utf-8") as handle:
            text = handle.read()
    except OSError as exc:
        raise SpecError([(None, f"cannot read run spec {str(path)!r}: {exc.strerror}")]) from exc
    return parse_runspec_text(text)


def parse_runspec_text(text: str) -> RunSpec:
    """Validate a run spec document, collecting every problem found.

    A report written by the runner is also accepted: its echoed
    ``inputs`` object is used, so reports can be re-executed.
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError([(exc.lineno, f"invalid JSON: {exc.msg}")]) from exc
    if not isinstance(raw, dict):
        raise SpecError([(1, "run spec must be a JSON object")])
    if "schema_version" in raw and isinstance(raw.get("inputs"), dict):
        raw = raw["inputs"]
    return runspec_from_json(raw, _key_lines(text))


def runspec_from_json(raw: dict, lines: dict[str, int] | None = None) -> RunSpec:
    lines = lines or {}
    problems: list[tuple[int | None, str]] = []

    def fail(key: str, message: str) -> None:
        problems.append((lines.get(key), message))

    for key in raw:
        if key not in TOP_LEVEL:
            fail(key, f"unknown key {key!r}")

    command = raw.get("command")
    if command is None:
        problems.append((None, "missing required field 'command'"))
    elif command not in COMMANDS:
        fail("command", f"unknown command {command!r}; expected one of {', '.join(COMMANDS)}")

    preset = raw.get("preset")
    circuit = raw.get("circuit")
    if preset is not None and circuit is not None:
        fail("circuit", "give either 'preset' or 'circuit', not both")
    if preset is not None and preset not in list_presets():
        fail("preset", f"unknown preset {preset!r}")
    if circuit is not None:
        try:
            circuit_from_json(circuit)
        except (ConfigError, units.UnitError) as exc:
            # point at the offending circuit field when the message names it
            named = [k for k in circuit if f"'{k}'" in str(exc)] if isinstance(circuit, dict) else []
            fail(named[0] if named else "circuit", f"circuit: {exc}")
    if preset is None and circuit is None and command not in (None, "table1"):
        problems.append((None, "one of 'preset' or 'circuit' is required"))

    seed = _integer(raw, "seed_count", 0, fail)
    threads = _integer(raw, "threads_count", None, fail)
    if threads is not None and threads < 1:
        fail("threads_count", "threads_count must be at least 1")

    sections: dict[str, dict] = {}
    for section in sorted(set(NUMERIC_FIELDS) | set(TEXT_FIELDS)):
        body = raw.get(section)
        if body is None:
            continue
        if not isinstance(body, dict):
            fail(section, f"section {section!r} must be an object")
            continue
        sections[section] = _parse_section(section, body, fail)

    sweep: dict[str, list] = {}
    body = raw.get("sweep")
    if body is not None:
        if not isinstance(body, dict):
            fail("sweep", "'sweep' must be an object")
        else:
            sweep = _parse_sweep(body, fail)
    if command == "sweep" and not sweep and not problems:
        problems.append((lines.get("sweep"), "sweep command needs a nonempty 'sweep' grid"))

    spec = RunSpec(command or "", preset, circuit, sections, sweep, seed or 0, threads)
    if sweep and spec.grid_size() > MAX_GRID_POINTS:
        fail("sweep", f"sweep grid has {spec.grid_size()} points; the limit is {MAX_GRID_POINTS}")
    if problems:
        raise SpecError(problems)
    return spec


def _integer(raw: dict, key: str, default, fail):
    value = raw.get(key)
    if value is None:
        return default
    if isinstance(value, bool) or not isinstance(value, int):
        fail(key, f"{key!r} must be an integer, got {value!r}")
        return default
    return value


def _parse_section(section: str, body: dict, fail) -> dict:
    numeric = NUMERIC_FIELDS.get(section, {})
    text = TEXT_FIELDS.get(section, {})
    out: dict = {}
    for key, value in body.items():
        if key in text:
            allowed = text[key]
            if allowed is None:
                if not isinstance(value, str):
                    fail(key, f"{section}.{key} must be a string")
                    continue
            elif value not in allowed or isinstance(value, bool) != isinstance(allowed[0], bool):
                fail(key, f"{section}.{key} must be one of {list(allowed)}, got {value!r}")
                continue
            out[key] = value
            continue
        try:
            name, suffix = units.split_key(key)
        except units.UnitError:
            fail(key, f"unknown key {section}.{key}")
            continue
        if name not in numeric:
            fail(key, f"unknown key {section}.{key}")
            continue
        try:
            _, si = units.to_si(key, value, numeric[name])
        except units.UnitError as exc:
            fail(key, f"{section}.{key}: {exc}")
            continue
        if numeric[name] == "count":
            if si != int(si):
                fail(key, f"{section}.{key} must be an integer")
                continue
            si = int(si)
        out[name] = si
    return out


def _grid_values(key: str, value, fail) -> list | None:
    if isinstance(value, list):
        return value
    if isinstance(value, dict) and len(value) == 1:
        (kind, args), = value.items()
        if kind in ("linspace", "logspace") and isinstance(args, list) and len(args) == 3:
            lo, hi, num = args
            if isinstance(num, int) and num >= 1 and all(isinstance(v, (int, float)) for v in (lo, hi)):
                if kind == "logspace" and (lo <= 0 or hi <= 0):
                    fail(key, f"sweep.{key}: logspace bounds must be positive")
                    return None
                return _spaced(kind, float(lo), float(hi), num)
    fail(key, f"sweep.{key} must be a list or {{'linspace'|'logspace': [start, stop, count]}}")
    return None


def _spaced(kind: str, lo: float, hi: float, num: int) -> list[float]:
    space = np.linspace if kind == "linspace" else np.geomspace
    return [float(v) for v in space(lo, hi, num)]


def _parse_sweep(body: dict, fail) -> dict[str, list]:
    out: dict[str, list] = {}
    for key, value in body.items():
        try:
            name, _ = units.split_key(key)
        except units.UnitError:
            fail(key, f"unknown sweep key {key!r}")
            continue
        if name not in SWEEPABLE:
            fail(key, f"field {name!r} cannot be swept; sweepable: {', '.join(sorted(SWEEPABLE))}")
            continue
        values = _grid_values(key, value, fail)
        if values is None:
            continue
        if not values:
            fail(key, f"sweep.{key} is empty")
            continue
        dim = NUMERIC_FIELDS[SWEEPABLE[name]][name]
        converted = []
        for v in values:
            try:
                converted.append(units.to_si(key, v, dim)[1])
            except units.UnitError as exc:
                fail(key, f"sweep.{key}: {exc}")
                break
        else:
            if dim == "count":
                if any(v != int(v) for v in converted):
                    fail(key, f"sweep.{key} values must be integers")
                    continue
                converted = [int(v) for v in converted]
            out[name] = converted
    return out


def default_spec(command: str, preset: str = "flux_q25k") -> RunSpec:
    """Fully populated spec for ``command`` with the runner's defaults spelled out."""
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    sections: dict[str, dict] = {"output": {"format": "table"}}
    sweep: dict = {}
    if command == "simulate":
        sections["drive"] = {"echo": "none"}
        sections["simulate"] = {"samples_per_cycle": 64, "frame": "resonator", "method": "exact",
                                "plots": True}
    if command == "mc":
        sections["mc"] = {"replicas": 1000, "estimator": "gate_phase_error", "steps_per_cycle": 200,
                          "noise_scale": 1.0}
    if command == "design":
        sections["overrides"] = {"m_min": 1, "m_max": 100}
    if command == "budget":
        sections["overrides"] = {"dephasing_weight": 2.0}
    if command == "sweep":
        sweep = {"Q": _spaced("logspace", 1e4, 1e6, 10)}
    return RunSpec(command, None if command == "table1" else preset, None, sections, sweep, 0, None)


def inline_circuit(preset_name: str) -> dict:
    """Unit-suffixed circuit object of a preset, for hand-edited specs."""
    from .circuit_model import load_preset

    return circuit_to_json(load_preset(preset_name).circuit)


__all__ = [
    "COMMANDS", "FORMATS", "MAX_GRID_POINTS", "RunSpec", "SpecError", "parse_runspec",
    "parse_runspec_text", "runspec_from_json", "default_spec", "inline_circuit", "SWEEPABLE",
]
