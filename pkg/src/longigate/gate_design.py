"""Scheduling controlled-phase gates from closed phase-space loops."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy import constants as sc
from scipy.optimize import brentq

from .branch_dynamics import GateOutcome
from .circuit_model import HBAR, R_Q, ConfigError


@dataclass(frozen=True)
class ClosureSolution:
    """Integers ``(m, k)`` closing every loop after ``tau_pi = pi k``."""

    delta_m: float
    m: int
    k: int
    tau_pi: float
    t_pi: float = math.nan

    @classmethod
    def from_integers(cls, m: int, k: int, omega_r: float | None = None) -> "ClosureSolution":
        if m < 1 or k <= 2 * m:
            raise ConfigError(f"closure needs m >= 1 and k > 2m, got m={m}, k={k}")
        tau = math.pi * k
        t_pi = tau / omega_r if omega_r else math.nan
        return cls(2.0 * m / k, m, k, tau, t_pi)


def closure_solutions(delta_hint: float, m_range, omega_r: float | None = None) -> list[ClosureSolution]:
    """Nearest exact closure for each ``m`` in ``m_range`` (inclusive pair or iterable)."""
    if not 0 < delta_hint < 1:
        raise ConfigError("detuning hint must lie in (0, 1)")
    ms = _as_range(m_range)
    if not ms:
        raise ConfigError("empty m range")
    out = []
    for m in ms:
        if m < 1:
            continue
        k = max(int(math.floor(2.0 * m / delta_hint + 0.5)), 2 * m + 1)
        out.append(ClosureSolution.from_integers(m, k, omega_r))
    if not out:
        raise ConfigError("m range contains no positive integers")
    return out


def _as_range(m_range) -> list[int]:
    if isinstance(m_range, tuple) and len(m_range) == 2:
        lo, hi = m_range
        return list(range(int(lo), int(hi) + 1))
    return [int(m) for m in m_range]


def amplitude_for_cphase(delta_m: float, m: int, target_phase: float = math.pi / 2) -> float:
    """Force amplitude giving conditional phase ``target_phase`` after ``m`` loops.

    For ``pi/2`` this is ``delta_m sqrt((2 + delta_m) / 4m)``.
    """
    return delta_m * math.sqrt(target_phase * (2.0 + delta_m) / (2.0 * math.pi * m))


def conditional_phase_closed_form(delta_m: float, m: int, eta_minus: float) -> float:
    return 2.0 * math.pi * m * eta_minus**2 / (delta_m**2 * (2.0 + delta_m))


def single_qubit_phase_closed_form(delta_m: float, m: int, eta_minus: float, eta_plus: float) -> float:
    return 2.0 * math.pi * m * 2.0 * eta_minus * eta_plus / (delta_m**2 * (2.0 + delta_m))


def gate_time(delta_m: float, eta_minus: float, omega_r: float) -> float:
    """Leading-order gate time ``(2 pi / omega_r) delta_m / (2 eta^2)`` [s]."""
    if delta_m <= 0 or eta_minus <= 0 or omega_r <= 0:
        raise ConfigError("gate time needs positive detuning, amplitude and frequency")
    return 2.0 * math.pi / omega_r * delta_m / (2.0 * eta_minus**2)


# ---------------------------------------------------------------------------
# phase decomposition


@dataclass(frozen=True)
class PhaseDecomposition:
    """Walsh coefficients of the branch phases.

    ``coefficients[S]`` multiplies ``prod_{i in S} sigma_i^z``; the empty
    tuple is the identity.
    """

    coefficients: dict
    n_qubits: int

    @property
    def identity(self) -> float:
        return self.coefficients[()]

    @property
    def single(self) -> tuple[float, ...]:
        return tuple(self.coefficients[(i,)] for i in range(self.n_qubits))

    @property
    def pairs(self) -> dict:
        return {key: v for key, v in self.coefficients.items() if len(key) == 2}

    @property
    def conditional_phase(self) -> float:
        if self.n_qubits < 2:
            raise ConfigError("conditional phase needs at least two qubits")
        return self.coefficients[(0, 1)]

    def reconstruct(self, signs) -> float:
        signs = np.asarray(signs)
        return float(sum(c * np.prod(signs[list(key)]) for key, c in self.coefficients.items()))


def walsh_coefficients(signs: np.ndarray, phases: np.ndarray) -> dict:
    """Coefficients of every qubit subset from phases on all ``2^N`` branches."""
    signs = np.asarray(signs, dtype=float)
    phases = np.asarray(phases, dtype=float)
    n_branch, n = signs.shape
    if n_branch != 2**n or phases.shape[0] != n_branch:
        raise ConfigError("branch count must be 2^N with one phase per branch")
    out = {}
    for order in range(n + 1):
        for subset in combinations(range(n), order):
            parity = np.prod(signs[:, list(subset)], axis=1) if subset else np.ones(n_branch)
            out[subset] = float(parity @ phases / n_branch)
    return out


def phase_decomposition(outcome: GateOutcome | None = None, *, signs=None, phases=None) -> PhaseDecomposition:
    """Split per-branch phases into identity, single-qubit and pair terms."""
    if outcome is not None:
        signs = np.array([b.signs for b in outcome.branches])
        phases = outcome.final_phi
    coeffs = walsh_coefficients(np.asarray(signs), np.asarray(phases))
    return PhaseDecomposition(coeffs, np.asarray(signs).shape[1])


# ---------------------------------------------------------------------------
# optimizer


@dataclass(frozen=True)
class DesignConstraints:
    """Bounds and fixed hardware values for the parameter scan."""

    eta_max: float
    quality: float
    n_bar: float
    dispersive_shift: float
    omega_r: float
    tau_c: float = math.inf
    m_range: tuple = (1, 100)
    target_phase: float = math.pi / 2
    echo: bool = False

    def __post_init__(self):
        if self.eta_max <= 0 or self.omega_r <= 0 or self.quality <= 0:
            raise ConfigError("constraint bounds must be positive")
        if self.m_range[0] < 1 or self.m_range[1] < self.m_range[0]:
            raise ConfigError("m range must be a nonempty range of positive integers")


@dataclass
class DesignResult:
    feasible: bool
    closure: ClosureSolution | None = None
    eta_minus: float = math.nan
    budget: object = None
    message: str = ""
    scanned: int = 0
    candidates: list = field(default_factory=list)


def detuning_for_amplitude(eta: float, m: int, target_phase: float = math.pi / 2) -> float:
    """Detuning at which ``eta`` produces ``target_phase`` in ``m`` loops."""
    rhs = 2.0 * math.pi * m * eta**2 / target_phase

    def f(d):
        return d * d * (2.0 + d) - rhs

    return brentq(f, 0.0, max(1.0, rhs), xtol=1e-15, rtol=1e-14)


def _candidate(m: int, constraints: DesignConstraints):
    delta = detuning_for_amplitude(constraints.eta_max, m, constraints.target_phase)
    if constraints.echo:
        if m % 2:
            return None
        k_half = int(math.ceil(m / delta - 1e-12))
        k = 2 * k_half
    else:
        k = int(math.ceil(2.0 * m / delta - 1e-12))
    if k <= 2 * m:
        return None
    closure = ClosureSolution.from_integers(m, k, constraints.omega_r)
    eta = amplitude_for_cphase(closure.delta_m, m, constraints.target_phase)
    if eta > constraints.eta_max * (1 + 1e-12):
        return None
    return closure, eta


def optimize(constraints: DesignConstraints, budget=None) -> DesignResult:
    """Exhaustive scan over ``m``; minimise the total error.

    For each ``m`` the detuning is taken where the amplitude bound just
    yields the target phase, then ``k`` is rounded up so the snapped
    amplitude stays within the bound.  Ties go to shorter gates, then to
    smaller ``m``.
    """
    from . import error_budget as eb

    evaluate = budget or (lambda inputs: eb.compute_budget(inputs))
    lo, hi = constraints.m_range
    scored = []
    for m in range(int(lo), int(hi) + 1):
        cand = _candidate(m, constraints)
        if cand is None:
            continue
        closure, eta = cand
        inputs = eb.BudgetInputs(
            delta_m=closure.delta_m, m=m, eta_minus=eta, quality=constraints.quality,
            n_bar=constraints.n_bar, tau_c=constraints.tau_c,
            dispersive_shift=constraints.dispersive_shift, omega_r=constraints.omega_r,
        )
        result = evaluate(inputs)
        scored.append((result.eps_total, result.t_pi, m, closure, eta, result))
    if not scored:
        return DesignResult(False, message="no m in range keeps the amplitude within its bound",
                            scanned=int(hi - lo + 1))
    scored.sort(key=lambda item: (item[0], item[1], item[2]))
    best = scored[0]
    return DesignResult(True, best[3], best[4], best[5], "ok", len(scored),
                        [(s[2], s[0]) for s in sorted(scored, key=lambda s: s[2])])


# ---------------------------------------------------------------------------
# comparison with dispersive coupling


@dataclass(frozen=True)
class CqedComparisonInput:
    """Ours: ``beta_r, delta_m, C_r [F], V_minus [V]`` (or the dual ``L_r, I_minus``).

    Dispersive: ``beta_r_cqed, delta_q, omega_r [rad/s], Z_r [ohm]``.
    """

    beta_r: float
    delta_m: float
    resonator_element: float
    source_minus: float
    beta_r_cqed: float
    delta_q: float
    omega_r: float
    impedance: float
    r_q: float = R_Q


def cqed_comparison(inp: CqedComparisonInput) -> tuple[float, float]:
    """Conditional-phase rates [rad/s] for longitudinal and dispersive coupling."""
    if inp.delta_m == 0 or inp.delta_q == 0:
        raise ConfigError("detunings must be nonzero")
    energy = 0.5 * inp.resonator_element * inp.source_minus**2
    ours = inp.beta_r**2 / (2.0 * inp.delta_m) * energy / HBAR
    cqed = inp.beta_r_cqed**2 / (2.0 * inp.delta_q) * inp.omega_r * inp.impedance / inp.r_q
    return ours, cqed


__all__ = [
    "ClosureSolution", "closure_solutions", "amplitude_for_cphase", "gate_time",
    "PhaseDecomposition", "phase_decomposition", "walsh_coefficients", "DesignConstraints",
    "DesignResult", "optimize", "CqedComparisonInput", "cqed_comparison",
    "detuning_for_amplitude", "conditional_phase_closed_form", "single_qubit_phase_closed_form",
]
