"""Reduction of qubit-resonator coupling circuits to effective parameters.

Two circuit families are handled with one code path:

* ``electric``: resonator capacitance loaded through a coupling capacitor by
  the qubit's dynamic capacitance, force from a qubit voltage source.
* ``magnetic``: the dual circuit, with inductances in place of capacitances
  and a qubit current source.

A circuit whose coupling element is infinite (``coupling = inf``) is biased
directly: the qubit's dynamic element loads the resonator on its own and the
source values are read as the displacement itself (charge for electric,
flux for magnetic) instead of a voltage or current.

All quantities are SI.  Dynamic qubit elements are per-state curvature
values and may be negative or infinite.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np
from scipy import constants as sc

from . import units

HBAR = sc.hbar
K_B = sc.k
PHI_0 = sc.h / (2 * sc.e)
R_Q = sc.h / (4 * sc.e**2)

KINDS = ("electric", "magnetic")


class ConfigError(ValueError):
    """Invalid circuit or preset configuration."""


@dataclass(frozen=True)
class CircuitSpec:
    """Raw circuit element values.

    Parameters
    ----------
    kind : {"electric", "magnetic"}
    resonator_inductance, resonator_capacitance : float
        ``L_r`` [H] and ``C_r`` [F].
    quality : float
        Resonator quality factor.
    temperature : float
        Effective mode temperature [K].
    coupling : float
        ``C_c`` [F] (electric) or ``L_c`` [H] (magnetic); ``inf`` for direct bias.
    source_g, source_e : tuple of float
        Per-qubit source in the ground/excited state: ``V_q`` [V] or ``I_q`` [A];
        for direct bias the displacement ``dE/dV`` [C] or ``dE/dI`` [Wb].
    dynamic_g, dynamic_e : tuple of float
        Per-qubit dynamic element ``C_q`` [F] or ``L_q`` [H] per state.
    bias_swing : float
        Full bias swing at the qubit [C or Wb], used for the photon-equivalent drive.
    higher_modes : tuple of (f_k, r_k)
        Higher resonator modes as frequency ratio and force ratio.
    """

    kind: str
    resonator_inductance: float
    resonator_capacitance: float
    quality: float
    temperature: float
    coupling: float
    source_g: tuple[float, ...]
    source_e: tuple[float, ...]
    dynamic_g: tuple[float, ...]
    dynamic_e: tuple[float, ...]
    bias_swing: float = 0.0
    higher_modes: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        for name in ("source_g", "source_e", "dynamic_g", "dynamic_e"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        object.__setattr__(
            self, "higher_modes", tuple((float(f), float(r)) for f, r in self.higher_modes)
        )

    @property
    def n_qubits(self) -> int:
        return len(self.source_g)

    @property
    def direct_bias(self) -> bool:
        return math.isinf(self.coupling)

    @property
    def loaded_element(self) -> float:
        """The resonator element the qubits load (C_r electric, L_r magnetic)."""
        if self.kind == "electric":
            return self.resonator_capacitance
        return self.resonator_inductance

    @property
    def other_element(self) -> float:
        if self.kind == "electric":
            return self.resonator_inductance
        return self.resonator_capacitance

    def validate(self) -> None:
        """Raise :class:`ConfigError` listing every problem found."""
        problems = []
        if self.kind not in KINDS:
            problems.append(f"kind must be one of {KINDS}, got {self.kind!r}")
        for name in ("resonator_inductance", "resonator_capacitance", "coupling", "temperature"):
            value = getattr(self, name)
            if not (value > 0) and not (name == "temperature" and value == 0):
                problems.append(f"{name} must be positive, got {value!r}")
        if math.isinf(self.resonator_inductance) or math.isinf(self.resonator_capacitance):
            problems.append("resonator elements must be finite")
        if not (self.quality >= 1):
            problems.append(f"quality must be >= 1, got {self.quality!r}")
        n = len(self.source_g)
        if n == 0:
            problems.append("at least one qubit is required")
        for name in ("source_e", "dynamic_g", "dynamic_e"):
            if len(getattr(self, name)) != n:
                problems.append(f"{name} must list one value per qubit ({n})")
        for name in ("dynamic_g", "dynamic_e"):
            if any(v == 0 or math.isnan(v) for v in getattr(self, name)):
                problems.append(f"{name} values must be nonzero")
        if self.bias_swing < 0:
            problems.append("bias_swing must be non-negative")
        last = 1.0
        for f_k, r_k in self.higher_modes:
            if not f_k > last:
                problems.append("higher mode ratios must exceed 1 and increase strictly")
            last = f_k
        if problems:
            raise ConfigError("; ".join(problems))


@dataclass(frozen=True)
class DerivedResonator:
    """Resonator parameters after loading by the qubits (state-averaged)."""

    kind: str
    loaded_element: float  # C_r' [F] electric, L_r' [H] magnetic
    mean_frequency: float  # rad/s
    impedance: float  # ohm
    thermal_occupation: float
    tau_c: float
    state_frequencies: tuple[tuple[float, float], ...]  # per qubit (omega_g, omega_e) rad/s

    @property
    def admittance(self) -> float:
        return 1.0 / self.impedance

    @property
    def frequency_hz(self) -> float:
        return self.mean_frequency / (2 * math.pi)


@dataclass(frozen=True)
class CouplingDerived:
    """Dimensionless coupling parameters, one entry per qubit."""

    eta_plus: tuple[float, ...]
    eta_minus: tuple[float, ...]
    dispersive_shift: tuple[float, ...]
    beta_r: float
    beta_q_g: tuple[float, ...]
    beta_q_e: tuple[float, ...]

    @property
    def n_qubits(self) -> int:
        return len(self.eta_minus)

    @classmethod
    def uniform(cls, n_qubits, eta_minus, eta_plus=0.0, dispersive_shift=0.0, beta_r=0.0):
        """Identical qubits, for driving the dynamics without a circuit."""
        return cls(
            eta_plus=(float(eta_plus),) * n_qubits,
            eta_minus=(float(eta_minus),) * n_qubits,
            dispersive_shift=(float(dispersive_shift),) * n_qubits,
            beta_r=float(beta_r),
            beta_q_g=(0.0,) * n_qubits,
            beta_q_e=(0.0,) * n_qubits,
        )

    def with_values(self, **kw) -> "CouplingDerived":
        """Replace scalar-per-qubit fields by uniform values."""
        n = self.n_qubits
        out = {}
        for key, value in kw.items():
            out[key] = tuple(float(value) for _ in range(n)) if np.isscalar(value) else tuple(value)
        return replace(self, **out)


@dataclass(frozen=True)
class DriveHints:
    delta_m: float
    m: int
    eta_minus: float


@dataclass(frozen=True)
class ModalityPreset:
    """One Table-style parameter row with its circuit."""

    name: str
    label: str
    circuit: CircuitSpec
    drive_hints: DriveHints
    nominal_frequency_hz: float
    table: dict = field(default_factory=dict)
    platform_constants: dict = field(default_factory=dict)
    notes: str = ""


@dataclass(frozen=True)
class AuxEstimates:
    squid_leakage_probability: float
    residual_jc_g: float
    photon_equivalent: float


# ---------------------------------------------------------------------------
# duality


def dualize(spec: CircuitSpec) -> CircuitSpec:
    """Swap the electric and magnetic descriptions (Q<->Phi, C<->L, V<->I).

    Element values keep their numeric magnitude in the dual unit, so applying
    the map twice is the identity.
    """
    kind = "magnetic" if spec.kind == "electric" else "electric"
    return replace(
        spec,
        kind=kind,
        resonator_inductance=spec.resonator_capacitance,
        resonator_capacitance=spec.resonator_inductance,
    )


# ---------------------------------------------------------------------------
# reduction


def _series_load(coupling: float, dynamic: float) -> float:
    """Element seen by the resonator through the coupling element.

    Series capacitors (electric) and parallel inductors (magnetic) share the
    form ``X_c X_q / (X_c + X_q)``.
    """
    if math.isinf(coupling):
        return dynamic
    if math.isinf(dynamic):
        return coupling
    return coupling * dynamic / (coupling + dynamic)


def thermal_stats(omega: float, temperature: float) -> tuple[float, float]:
    """Bose-Einstein occupation and ``tau_c = hbar omega / k_B T``.

    Returns ``(n_bar, tau_c)``; zero temperature gives ``(0, inf)``.
    """
    if omega <= 0:
        raise ConfigError("frequency must be positive")
    if temperature < 0:
        raise ConfigError("temperature must be non-negative")
    if temperature == 0:
        return 0.0, math.inf
    tau_c = (HBAR * omega / K_B) / temperature
    # written in exp(-tau_c) so very cold modes underflow to zero instead of overflowing
    return math.exp(-tau_c) / -math.expm1(-tau_c), tau_c


def reduce(spec: CircuitSpec) -> DerivedResonator:
    """Reduce a circuit to its loaded resonator.

    Each qubit loads the resonator with the state average of its series
    combination with the coupling element.  The per-state frequencies are
    computed with the other qubits at their average loading.
    """
    spec.validate()
    loads = [
        (_series_load(spec.coupling, g), _series_load(spec.coupling, e))
        for g, e in zip(spec.dynamic_g, spec.dynamic_e)
    ]
    mean_loads = [0.5 * (g + e) for g, e in loads]
    base = spec.loaded_element + sum(mean_loads)
    other = spec.other_element
    if base <= 0:
        raise ConfigError("loaded resonator element is not positive")
    omega = 1.0 / math.sqrt(base * other)
    state_freqs = []
    for (g, e), mean in zip(loads, mean_loads):
        rest = base - mean
        pair = []
        for load in (g, e):
            total = rest + load
            if total <= 0:
                raise ConfigError("a qubit state drives the loaded element negative")
            pair.append(1.0 / math.sqrt(total * other))
        state_freqs.append(tuple(pair))
    # Z = sqrt(L/C); the loaded element sits on top for magnetic circuits
    impedance = math.sqrt(other / base) if spec.kind == "electric" else math.sqrt(base / other)
    n_bar, tau_c = thermal_stats(omega, spec.temperature)
    return DerivedResonator(
        kind=spec.kind,
        loaded_element=base,
        mean_frequency=omega,
        impedance=impedance,
        thermal_occupation=n_bar,
        tau_c=tau_c,
        state_frequencies=tuple(state_freqs),
    )


def _force_scale(spec: CircuitSpec, res: DerivedResonator) -> float:
    """sqrt(hbar Y) for electric circuits, sqrt(hbar Z) for magnetic."""
    k = res.admittance if spec.kind == "electric" else res.impedance
    return math.sqrt(HBAR * k)


def coupling_coefficients(spec: CircuitSpec, res: DerivedResonator) -> CouplingDerived:
    """Force amplitudes, dispersive shift and participation ratios.

    ``eta^± = X_c s^± / (2 sqrt(hbar K))`` with ``s^± = s_e ± s_g`` and ``K``
    the admittance (electric) or impedance (magnetic).  The dispersive shift
    is the exact half-difference of the two loaded frequencies in units of
    the mean frequency, which reduces to ``beta_r beta_q^- / 4`` for weak
    coupling.
    """
    if not (spec.source_g and spec.source_e and spec.dynamic_g and spec.dynamic_e):
        raise ConfigError("per-state source and dynamic values are required")
    scale = 2.0 * _force_scale(spec, res)
    if spec.direct_bias:
        beta_r = 1.0
        lever = 1.0
    else:
        beta_r = spec.coupling / (spec.coupling + spec.loaded_element)
        lever = spec.coupling
    eta_p, eta_m, shift, bq_g, bq_e = [], [], [], [], []
    for i in range(spec.n_qubits):
        s_g, s_e = spec.source_g[i], spec.source_e[i]
        eta_p.append(lever * (s_e + s_g) / scale)
        eta_m.append(lever * (s_e - s_g) / scale)
        w_g, w_e = res.state_frequencies[i]
        shift.append((w_e - w_g) / (2.0 * res.mean_frequency))
        bq_g.append(_participation(spec.coupling, spec.dynamic_g[i]))
        bq_e.append(_participation(spec.coupling, spec.dynamic_e[i]))
    return CouplingDerived(
        eta_plus=tuple(eta_p),
        eta_minus=tuple(eta_m),
        dispersive_shift=tuple(shift),
        beta_r=beta_r,
        beta_q_g=tuple(bq_g),
        beta_q_e=tuple(bq_e),
    )


def _participation(coupling: float, dynamic: float) -> float:
    if math.isinf(coupling):
        return 1.0
    if math.isinf(dynamic):
        return 0.0
    return coupling / (coupling + dynamic)


# ---------------------------------------------------------------------------
# auxiliary estimators


def squid_asymmetry_leakage(asymmetry: float, flux_swing: float, omega_p: float, omega_m: float) -> float:
    """Maximal plasma-mode excitation from SQUID junction asymmetry.

    ``(pi/4) (dPhi/Phi_0)^2 A_J^2 (omega_p / (omega_p - omega_m))^2``.
    """
    if omega_m >= omega_p:
        raise ValueError("modulation frequency must lie below the plasma frequency")
    ratio = omega_p / (omega_p - omega_m)
    return math.pi / 4 * (flux_swing / PHI_0) ** 2 * asymmetry**2 * ratio**2


def residual_jc_coupling(omega_p: float, beta_r: float, asymmetry: float, impedance: float) -> float:
    """Residual transverse coupling ``omega_p beta_r A_J sqrt(Z / 8 R_Q)`` [rad/s]."""
    return omega_p * beta_r * asymmetry * math.sqrt(impedance / (8 * R_Q))


def photon_equivalent_drive(bias_swing: float, beta_r: float, impedance_or_admittance: float) -> float:
    """Photon number equivalent of the full bias swing.

    ``(dp / beta_r)^2 / (hbar K)`` with ``K = Z`` for magnetic circuits and
    ``K = Y`` for electric ones.
    """
    return (bias_swing / beta_r) ** 2 / (HBAR * impedance_or_admittance)


def aux_estimates(spec: CircuitSpec, res: DerivedResonator, coupling: CouplingDerived,
                  asymmetry: float = 0.0, omega_p: float | None = None) -> AuxEstimates:
    k = res.admittance if spec.kind == "electric" else res.impedance
    n_gamma = photon_equivalent_drive(spec.bias_swing, coupling.beta_r, k)
    if omega_p is None or asymmetry == 0.0:
        return AuxEstimates(0.0, 0.0, n_gamma)
    leak = squid_asymmetry_leakage(asymmetry, spec.bias_swing, omega_p, res.mean_frequency)
    g = residual_jc_coupling(omega_p, coupling.beta_r, asymmetry, res.impedance)
    return AuxEstimates(leak, g, n_gamma)


# ---------------------------------------------------------------------------
# presets

_ELEMENT_UNITS = {
    "electric": {"coupling": "capacitance", "source": "voltage", "direct_source": "charge",
                 "dynamic": "capacitance", "bias_swing": "charge"},
    "magnetic": {"coupling": "inductance", "source": "current", "direct_source": "flux",
                 "dynamic": "inductance", "bias_swing": "flux"},
}


def _load_catalog() -> dict:
    text = resources.files("longigate.data").joinpath("presets.json").read_text()
    return json.loads(text)


def list_presets() -> list[str]:
    return [entry["name"] for entry in _load_catalog()["presets"]]


def circuit_from_json(entry: dict) -> CircuitSpec:
    """Build a :class:`CircuitSpec` from a unit-suffixed JSON object."""
    kind = entry.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"kind must be one of {KINDS}")
    dims = _element_dims(kind, entry)
    values: dict[str, object] = {"kind": kind}
    lists: dict[str, list] = {}
    for key, raw in entry.items():
        if key in ("kind", "direct_bias", "higher_modes"):
            continue
        name, _ = units.split_key(key)
        if name not in dims:
            raise ConfigError(f"unknown circuit field {key!r}")
        if isinstance(raw, list):
            lists[name] = [units.to_si(key, v, dims[name])[1] for v in raw]
        else:
            values[name] = units.to_si(key, raw, dims[name])[1]
    for name in ("source_g", "source_e", "dynamic_g", "dynamic_e"):
        if name not in lists:
            raise ConfigError(f"missing circuit field {name!r}")
    spec = CircuitSpec(
        kind=kind,
        resonator_inductance=values.get("L_r", float("nan")),
        resonator_capacitance=values.get("C_r", float("nan")),
        quality=values.get("Q", float("nan")),
        temperature=values.get("T_r", float("nan")),
        coupling=math.inf if entry.get("direct_bias") else values.get("coupling", float("nan")),
        source_g=tuple(lists["source_g"]),
        source_e=tuple(lists["source_e"]),
        dynamic_g=tuple(lists["dynamic_g"]),
        dynamic_e=tuple(lists["dynamic_e"]),
        bias_swing=values.get("bias_swing", 0.0),
        higher_modes=tuple(tuple(pair) for pair in entry.get("higher_modes", [])),
    )
    spec.validate()
    return spec


def _element_dims(kind: str, entry: dict) -> dict[str, str]:
    u = _ELEMENT_UNITS[kind]
    source_dim = u["direct_source"] if entry.get("direct_bias") else u["source"]
    return {
        "L_r": "inductance",
        "C_r": "capacitance",
        "Q": "dimensionless",
        "T_r": "temperature",
        "coupling": u["coupling"],
        "source_g": source_dim,
        "source_e": source_dim,
        "dynamic_g": u["dynamic"],
        "dynamic_e": u["dynamic"],
        "bias_swing": u["bias_swing"],
    }


def circuit_to_json(spec: CircuitSpec) -> dict:
    """Inverse of :func:`circuit_from_json` using canonical SI suffixes."""
    dims = _element_dims(spec.kind, {"direct_bias": spec.direct_bias})
    out: dict[str, object] = {"kind": spec.kind}
    if spec.direct_bias:
        out["direct_bias"] = True
    scalars = {
        "L_r": spec.resonator_inductance,
        "C_r": spec.resonator_capacitance,
        "Q": spec.quality,
        "T_r": spec.temperature,
        "coupling": spec.coupling,
        "bias_swing": spec.bias_swing,
    }
    for name, value in scalars.items():
        if name == "coupling" and spec.direct_bias:
            continue
        key, v = units.from_si(name, value, dims[name])
        out[key] = v
    for name in ("source_g", "source_e", "dynamic_g", "dynamic_e"):
        key, _ = units.from_si(name, 0.0, dims[name])
        out[key] = [v if math.isfinite(v) else "inf" for v in getattr(spec, name)]
    out["higher_modes"] = [list(pair) for pair in spec.higher_modes]
    return out


def load_preset(name: str) -> ModalityPreset:
    """Load a named parameter row from the shipped catalog."""
    catalog = _load_catalog()
    for entry in catalog["presets"]:
        if entry["name"] == name:
            return _preset_from_entry(entry)
    valid = ", ".join(e["name"] for e in catalog["presets"])
    raise KeyError(f"unknown preset {name!r}; valid names: {valid}")


def _preset_from_entry(entry: dict) -> ModalityPreset:
    hints = entry["drive"]
    return ModalityPreset(
        name=entry["name"],
        label=entry["label"],
        circuit=circuit_from_json(entry["circuit"]),
        drive_hints=DriveHints(
            delta_m=float(hints["delta_m_dimless"]),
            m=int(hints["m_count"]),
            eta_minus=float(hints["eta_minus_dimless"]),
        ),
        nominal_frequency_hz=units.to_si("f_nominal_GHz", entry["f_nominal_GHz"], "frequency")[1],
        table=dict(entry.get("table", {})),
        platform_constants=dict(entry.get("platform_constants", {})),
        notes=entry.get("notes", ""),
    )


def all_presets() -> list[ModalityPreset]:
    return [_preset_from_entry(e) for e in _load_catalog()["presets"]]
