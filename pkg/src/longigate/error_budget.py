"""Closed-form gate error budget and its numerical cross-checks.

Dimensionless quantities follow the resonator conventions of
:mod:`longigate.branch_dynamics`: time in units of ``1/omega_r`` and force
amplitudes ``eta`` as displacements of the dimensionless coordinate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from . import branch_dynamics as bd
from .circuit_model import ConfigError, ModalityPreset, aux_estimates, coupling_coefficients, \
    reduce, thermal_stats


class ConvergenceError(RuntimeError):
    """Number-basis truncation too small for the requested accuracy."""


class InfeasibleError(ValueError):
    """Requested target cannot be met by any parameter value."""


# ---------------------------------------------------------------------------
# displacement error


def residual_displacement_sq(x: float, m: int, dispersive_shift: float) -> float:
    """Leading-order echoed residual ``m x^4 [1 + 2m (2 pi domega / x)^2]``.

    ``x = pi / (Q eta_minus)``; ``m`` counts both echo halves.
    """
    if x == 0:
        return 0.0
    return m * x**4 * (1.0 + 2.0 * m * (2.0 * math.pi * dispersive_shift / x) ** 2)


def displacement_error(dalpha_sq: float, n_bar: float) -> float:
    """Leading-order infidelity ``|dalpha|^2 (1 + 2 n_bar) / 4``."""
    return 0.25 * dalpha_sq * (1.0 + 2.0 * n_bar)


def _ladder(n: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, n, dtype=float)), 1)


def _displacement(beta: complex, n: int, pad: int = 40) -> np.ndarray:
    """``exp(beta a^dag - conj(beta) a)`` computed in a padded basis and cropped."""
    a = _ladder(n + pad)
    gen = beta * a.conj().T - np.conj(beta) * a
    return linalg.expm(gen)[:n, :n]


def _thermal(n_bar: float, n: int) -> np.ndarray:
    if n_bar == 0:
        rho = np.zeros((n, n))
        rho[0, 0] = 1.0
        return rho
    ratio = n_bar / (1.0 + n_bar)
    probs = ratio ** np.arange(n) / (1.0 + n_bar)
    return np.diag(probs)


def _fidelity_at(dalpha: complex, n_bar: float, common: complex, n: int) -> float:
    rho = _thermal(n_bar, n)
    shift = _displacement(common, n)
    sigma = shift @ rho @ shift.conj().T
    d_gg = _displacement(0.5 * dalpha, n)
    d_ee = _displacement(-0.5 * dalpha, n)
    coherence = 0.5 * np.trace(d_gg @ sigma @ d_ee.conj().T)
    qubits = np.array([[0.5, coherence], [np.conj(coherence), 0.5]])
    # align the target's relative phase with the coherence: a deterministic
    # phase is a correctable qubit rotation, not an entanglement error
    phase = coherence / abs(coherence) if abs(coherence) > 0 else 1.0
    target_vec = np.array([1.0, np.conj(phase)]) / math.sqrt(2.0)
    # Uhlmann fidelity with a pure target reduces to <psi|rho|psi>
    return float(np.real(target_vec.conj() @ qubits @ target_vec))


def fidelity_exact(dalpha: complex, n_bar: float, truncation: int = 60,
                   common: complex = 0.0, tolerance: float = 1e-10) -> float:
    """Fidelity of the Bell-like target after a branch-dependent displacement.

    The state ``(|gg> + |ee>)/sqrt(2)`` with a thermal resonator is
    displaced by ``+dalpha/2`` (``gg``) or ``-dalpha/2`` (``ee``) on top of
    a common displacement; the resonator is traced out in a truncated
    number basis.  ``dalpha`` is read as a shift of the mode amplitude
    ``<a>``.  Raises :class:`ConvergenceError` when enlarging the basis by
    ten states changes the result by more than ``tolerance``.
    """
    if truncation < 2:
        raise ConfigError("truncation must be at least 2")
    tail = (n_bar / (1.0 + n_bar)) ** truncation if n_bar > 0 else 0.0
    if tail > 1e-12:
        raise ConvergenceError(f"thermal tail {tail:.2e} exceeds 1e-12 at truncation {truncation}")
    first = _fidelity_at(complex(dalpha), n_bar, complex(common), truncation)
    second = _fidelity_at(complex(dalpha), n_bar, complex(common), truncation + 10)
    if abs(first - second) > tolerance:
        raise ConvergenceError(
            f"fidelity changed by {abs(first - second):.2e} between truncation "
            f"{truncation} and {truncation + 10}"
        )
    return first


def fidelity_closed_form(dalpha_sq: float, n_bar: float) -> float:
    """Exact value of :func:`fidelity_exact` for a thermal state."""
    return 0.5 * (1.0 + math.exp(-dalpha_sq * (n_bar + 0.5)))


# ---------------------------------------------------------------------------
# resonator force noise


def thermal_force_error(quality: float, eta_minus: float, m: int, tau_c: float) -> float:
    """Per-qubit error from thermal force noise, ``pi coth(tau_c/2) / (sqrt(2m) Q eta)``."""
    coth = 1.0 if math.isinf(tau_c) else 1.0 / math.tanh(0.5 * tau_c)
    return math.pi * coth / (math.sqrt(2.0 * m) * quality * eta_minus)


def noise_psd(omega, quality: float, tau_c: float):
    """One-sided thermal force spectrum ``(2 Omega / Q) coth(Omega tau_c / 2)``."""
    omega_arr = np.asarray(omega, dtype=float)
    if np.any(omega_arr <= 0):
        raise ConfigError("noise spectrum is defined for positive frequencies")
    out = bd.thermal_psd(omega_arr, quality, tau_c)
    return float(out) if np.ndim(omega) == 0 else out


@dataclass(frozen=True)
class SpectralDensity:
    """One-sided force spectrum: thermal by default, tabulated if ``table`` is set."""

    quality: float = math.inf
    tau_c: float = math.inf
    table: tuple | None = None

    def as_noise(self) -> bd.NoiseSpec:
        if self.table is None:
            return bd.NoiseSpec("thermal", self.quality, self.tau_c)
        return bd.NoiseSpec("tabulated", table=self.table)

    def __call__(self, omega) -> np.ndarray:
        return self.as_noise().one_sided(omega)


@dataclass(frozen=True)
class DriveSpectrum:
    """Kernel mapping force noise onto a single-qubit phase.

    A force fluctuation ``d eta(tau)`` shifts the qubit phase by
    ``int K(tau) d eta(tau) d tau`` with ``K = 2 eta_minus u_unit`` and
    ``u_unit`` the resonator response to a unit force amplitude.
    """

    program: bd.DriveProgram
    quality: float
    eta_minus: float
    domega: float = 0.0

    @property
    def duration(self) -> float:
        return self.program.total_duration

    def kernel(self, omega) -> np.ndarray:
        return 2.0 * self.eta_minus * bd.phase_kernel_spectrum(
            self.program, self.quality, omega, self.domega
        )

    def default_grid(self, omega_max: float = 3.0) -> np.ndarray:
        """Fine near the resonance and drive lines, coarser elsewhere."""
        T = self.duration
        lines = (1.0 + self.domega, self.program.omega_m)
        lo = max(min(lines) - 40.0 / T, 0.0)
        hi = max(lines) + 40.0 / T
        dense = np.arange(lo, hi, 1.0 / (8.0 * T))
        coarse_step = max(1.0 / (2.0 * T), 1e-4)
        left = np.arange(0.0, lo, coarse_step)
        right = np.arange(hi, omega_max, coarse_step)
        return np.unique(np.concatenate([left, dense, right, [omega_max]]))


def phase_variance(drive: DriveSpectrum, psd, omega=None) -> float:
    """``(1/2pi) int_0^inf S(Omega) |K(Omega)|^2 d Omega`` by trapezoid rule.

    Raises :class:`~longigate.branch_dynamics.ResolutionError` when the
    grid is coarser than ``1 / (2 T)`` around the drive lines.
    """
    grid = drive.default_grid() if omega is None else np.asarray(omega, dtype=float)
    T = drive.duration
    lines = (1.0 + drive.domega, drive.program.omega_m)
    near = (grid > min(lines) - 5.0 / T) & (grid < max(lines) + 5.0 / T)
    if np.count_nonzero(near) < 2 or np.max(np.diff(grid[near])) > 1.0 / (2.0 * T):
        raise bd.ResolutionError("frequency grid does not resolve the gate spectrum")
    spectrum = psd(grid) if callable(psd) else np.asarray(psd, dtype=float)
    if np.all(spectrum == 0):
        return 0.0
    weight = spectrum * np.abs(drive.kernel(grid)) ** 2
    return float(np.trapezoid(weight, grid) / (2.0 * math.pi))


# ---------------------------------------------------------------------------
# photon-number dephasing and higher modes


def photon_dephasing_rate(omega_r: float, n_bar: float, quality: float,
                          dispersive_shift: float) -> float:
    """``16 omega_r n_bar Q domega^2`` [1/s]."""
    return 16.0 * omega_r * n_bar * quality * dispersive_shift**2


def higher_mode_error(eta_k: float, f_k: float, n_bar: float, n_qubits: int = 1,
                      drive_frequency: float = 1.0) -> float:
    """Off-resonant displacement error of a mode at ``f_k`` times the fundamental.

    ``n_qubits eta_k^2 (1 + 2 n_bar) / (2 (1 - (Omega / f_k)^2)^2)`` where
    ``Omega`` is the drive frequency in units of the fundamental.
    """
    if f_k <= drive_frequency:
        raise ConfigError("higher mode must lie above the drive frequency")
    return n_qubits * eta_k**2 * (1.0 + 2.0 * n_bar) / (2.0 * (1.0 - (drive_frequency / f_k) ** 2) ** 2)


def min_higher_mode_detuning(eta_minus: float, n_bar: float, eps_target: float, omega_r: float,
                             n_qubits: int = 2, drive_frequency: float = 1.0) -> float:
    """Smallest detuning (rad/s) of the next mode keeping its error below target.

    Inverts :func:`higher_mode_error` for ``f_k`` and returns
    ``(f_k - 1) omega_r``.  A target equal to the ``f_k -> inf`` floor gives
    ``inf``; a lower target raises :class:`InfeasibleError`.
    """
    if eps_target <= 0:
        raise InfeasibleError("target error must be positive")
    ratio = n_qubits * eta_minus**2 * (1.0 + 2.0 * n_bar) / (2.0 * eps_target)
    if ratio > 1.0 * (1 + 1e-15):
        raise InfeasibleError(
            f"target {eps_target:.3e} is below the floor {eps_target * ratio:.3e}"
        )
    gap = 1.0 - math.sqrt(min(ratio, 1.0))
    if gap <= 0:
        return math.inf
    f_k = drive_frequency / math.sqrt(gap)
    return (f_k - 1.0) * omega_r


def total_error(dephasing_rate: float, t_pi: float, eps_dalpha: float, eps_force: float,
                dephasing_weight: float = 2.0) -> float:
    """``weight * Gamma t_pi + eps_dalpha + eps_force`` (weight 2: two qubits)."""
    return dephasing_weight * dephasing_rate * t_pi + eps_dalpha + eps_force


# ---------------------------------------------------------------------------
# assembly


@dataclass(frozen=True)
class BudgetInputs:
    """Everything the closed forms need for one gate."""

    delta_m: float
    m: int
    eta_minus: float
    quality: float
    n_bar: float
    tau_c: float
    dispersive_shift: float
    omega_r: float  # rad/s
    higher_modes: tuple = ()
    n_gamma: float = math.nan


@dataclass(frozen=True)
class ErrorBudget:
    eps_dalpha: float
    eps_force: float
    dephasing_rate: float
    t_pi: float
    eps_hm: tuple
    delta_hm: float
    n_gamma: float
    eps_total: float
    x: float
    dalpha_sq: float

    @property
    def dephasing_time(self) -> float:
        return math.inf if self.dephasing_rate == 0 else 1.0 / self.dephasing_rate


def compute_budget(inputs: BudgetInputs, dephasing_weight: float = 2.0, hm_qubits: int = 2,
                   hm_fraction: float = 0.1) -> ErrorBudget:
    """Evaluate every closed-form error term for one parameter set."""
    from .gate_design import gate_time

    eta = inputs.eta_minus
    x = math.pi / (inputs.quality * eta) if math.isfinite(inputs.quality) else 0.0
    dalpha_sq = residual_displacement_sq(x, inputs.m, inputs.dispersive_shift)
    eps_dalpha = displacement_error(dalpha_sq, inputs.n_bar)
    eps_force = (0.0 if math.isinf(inputs.quality)
                 else thermal_force_error(inputs.quality, eta, inputs.m, inputs.tau_c))
    rate = (0.0 if math.isinf(inputs.quality)
            else photon_dephasing_rate(inputs.omega_r, inputs.n_bar, inputs.quality,
                                       inputs.dispersive_shift))
    t_pi = gate_time(inputs.delta_m, eta, inputs.omega_r)
    eps_total = total_error(rate, t_pi, eps_dalpha, eps_force, dephasing_weight)
    omega_m = 1.0 + inputs.delta_m
    eps_hm = tuple(
        higher_mode_error(r_k * eta, f_k, inputs.n_bar, hm_qubits, omega_m)
        for f_k, r_k in inputs.higher_modes
    )
    try:
        delta_hm = min_higher_mode_detuning(eta, inputs.n_bar, hm_fraction * eps_total,
                                            inputs.omega_r, hm_qubits, omega_m)
    except InfeasibleError:
        delta_hm = math.nan
    return ErrorBudget(
        eps_dalpha=eps_dalpha,
        eps_force=eps_force,
        dephasing_rate=rate,
        t_pi=t_pi,
        eps_hm=eps_hm,
        delta_hm=delta_hm,
        n_gamma=inputs.n_gamma,
        eps_total=eps_total,
        x=x,
        dalpha_sq=dalpha_sq,
    )


def budget_inputs_from_preset(preset: ModalityPreset, use_nominal_frequency: bool = True,
                              **overrides) -> BudgetInputs:
    """Budget inputs from a catalog row: drive hints plus circuit-derived shift.

    With ``use_nominal_frequency`` the row's quoted frequency sets
    ``omega_r``, ``n_bar`` and ``tau_c``; otherwise the reduced circuit does.
    """
    circuit = preset.circuit
    res = reduce(circuit)
    coupling = coupling_coefficients(circuit, res)
    aux = aux_estimates(circuit, res, coupling)
    omega = 2 * math.pi * preset.nominal_frequency_hz if use_nominal_frequency else res.mean_frequency
    n_bar, tau_c = thermal_stats(omega, circuit.temperature)
    hints = preset.drive_hints
    values = dict(
        delta_m=hints.delta_m,
        m=hints.m,
        eta_minus=hints.eta_minus,
        quality=circuit.quality,
        n_bar=n_bar,
        tau_c=tau_c,
        dispersive_shift=coupling.dispersive_shift[0],
        omega_r=omega,
        higher_modes=circuit.higher_modes,
        n_gamma=aux.photon_equivalent,
    )
    values.update(overrides)
    return BudgetInputs(**values)


# ---------------------------------------------------------------------------
# table regression

TABLE_COLUMNS = (
    # (column key, budget accessor, tolerance kind, tolerance)
    ("Gamma_phi_inv_s", lambda b: b.dephasing_time, "relative", 0.20),
    ("t_pi_s", lambda b: b.t_pi, "relative", 0.20),
    ("eps_dalpha_dimless", lambda b: b.eps_dalpha, "relative", 0.20),
    ("eps_force_dimless", lambda b: b.eps_force, "relative", 0.20),
    ("eps_2qb_dimless", lambda b: b.eps_total, "relative", 0.20),
    ("delta_hm_Hz", lambda b: b.delta_hm / (2 * math.pi), "factor", 2.0),
    ("n_gamma_dimless", lambda b: b.n_gamma, "relative", 0.25),
)

# the tabulated total charges photon dephasing once per gate
TABLE_DEPHASING_WEIGHT = 1.0


@dataclass
class TableCell:
    row: str
    column: str
    computed: float
    reference: float
    kind: str
    tolerance: float

    @property
    def ok(self) -> bool:
        if not (math.isfinite(self.computed) and self.reference > 0 and self.computed > 0):
            return False
        if self.kind == "factor":
            ratio = self.computed / self.reference
            return 1.0 / self.tolerance <= ratio <= self.tolerance
        return abs(self.computed - self.reference) <= self.tolerance * self.reference


@dataclass
class TableRow:
    name: str
    label: str
    budget: ErrorBudget
    cells: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.cells)


def table_row(preset: ModalityPreset) -> TableRow:
    budget = compute_budget(budget_inputs_from_preset(preset),
                            dephasing_weight=TABLE_DEPHASING_WEIGHT)
    row = TableRow(preset.name, preset.label, budget)
    for key, getter, kind, tol in TABLE_COLUMNS:
        if key in preset.table:
            row.cells.append(TableCell(preset.name, key, float(getter(budget)),
                                       float(preset.table[key]), kind, tol))
    return row


def table_rows(presets=None) -> list[TableRow]:
    from .circuit_model import all_presets

    return [table_row(p) for p in (presets if presets is not None else all_presets())]
