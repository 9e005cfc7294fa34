"""Classical resonator trajectories for each qubit-basis branch.

Every joint sigma^z eigenstate of the qubits (a *branch*) drives the
resonator with its own force and shifts its frequency by its own amount.
In dimensionless time ``tau = omega_r t`` the complex amplitude obeys

    d alpha / d tau = -i (1 + domega) (alpha - eta(tau)) - (alpha - alpha*) / (2 Q)

with ``eta(tau) = eta_dc + sign * eta_ac * sin(Omega_m tau)``.  The drive is
global in time, so consecutive segments of a gate program keep their phase.

Three solvers are provided: the undamped closed form in the drive frame, an
adaptive Runge-Kutta integrator (compiled), and an exact modal solution
that handles damping and frequency shifts.  Gate programs run on the modal
solution by default.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sp_fft

from . import _kernels
from .circuit_model import ConfigError, CouplingDerived

FRAMES = ("lab", "drive", "resonator")
MAX_QUBITS = 16


class NumericalError(RuntimeError):
    """Integrator failure (step underflow, singular resonance, non-finite values)."""


class ResolutionError(ValueError):
    """A sampled quantity is too coarse to be meaningful."""


# ---------------------------------------------------------------------------
# branches


@dataclass(frozen=True)
class BranchLabel:
    """One joint qubit eigenstate.

    ``signs[i] = +1`` is the ground state ``g`` of qubit ``i``.
    """

    signs: tuple[int, ...]
    modulated: tuple[bool, ...]

    def __post_init__(self):
        if len(self.signs) != len(self.modulated) or not self.signs:
            raise ConfigError("signs and modulated mask must have equal, nonzero length")
        if any(s not in (1, -1) for s in self.signs):
            raise ConfigError("branch signs must be +1 or -1")

    @property
    def name(self) -> str:
        return "".join("g" if s > 0 else "e" for s in self.signs)

    def flipped(self) -> "BranchLabel":
        """Branch after a pi pulse on every modulated qubit."""
        signs = tuple(-s if mod else s for s, mod in zip(self.signs, self.modulated))
        return BranchLabel(signs, self.modulated)


def enumerate_branches(n_qubits: int, modulated=None) -> list[BranchLabel]:
    """All ``2**n`` branches, ``+1`` before ``-1`` in lexicographic order."""
    if not 1 <= n_qubits <= MAX_QUBITS:
        raise ConfigError(f"number of qubits must be in [1, {MAX_QUBITS}], got {n_qubits}")
    mask = (True,) * n_qubits if modulated is None else tuple(bool(v) for v in modulated)
    if len(mask) != n_qubits:
        raise ConfigError("modulated mask length must equal the number of qubits")
    return [BranchLabel(tuple(s), mask) for s in itertools.product((1, -1), repeat=n_qubits)]


@dataclass(frozen=True)
class BranchParams:
    """Force and frequency shift seen by the resonator in one branch."""

    eta_dc: float
    eta_ac: float
    domega: float

    @property
    def w(self) -> float:
        return 1.0 + self.domega


def branch_params(coupling: CouplingDerived, label: BranchLabel) -> BranchParams:
    """Sum per-qubit contributions for one branch.

    Modulated qubits contribute ``eta_minus s + eta_plus`` to the oscillating
    amplitude.  Unmodulated qubits contribute the same combination as a
    static offset.  Every coupled qubit shifts the frequency.
    """
    if coupling.n_qubits != len(label.signs):
        raise ConfigError("coupling and branch label disagree on the number of qubits")
    eta_ac = 0.0
    eta_dc = 0.0
    domega = 0.0
    for i, (s, mod) in enumerate(zip(label.signs, label.modulated)):
        force = coupling.eta_minus[i] * s + coupling.eta_plus[i]
        if mod:
            eta_ac += force
        else:
            eta_dc += force
        domega += coupling.dispersive_shift[i] * s
    return BranchParams(eta_dc=eta_dc, eta_ac=eta_ac, domega=domega)


# ---------------------------------------------------------------------------
# drive programs


@dataclass(frozen=True)
class Segment:
    duration: float
    force_sign: int = 1
    pi_pulse_before: bool = False


@dataclass(frozen=True)
class DriveProgram:
    """Hard-switched sinusoidal modulation split into segments."""

    delta_m: float
    m: int
    k: int
    segments: tuple[Segment, ...]

    def __post_init__(self):
        if not self.segments:
            raise ConfigError("a drive program needs at least one segment")
        if any(seg.duration <= 0 for seg in self.segments):
            raise ConfigError("segment durations must be positive")

    @property
    def omega_m(self) -> float:
        return 1.0 + self.delta_m

    @property
    def total_duration(self) -> float:
        return float(sum(seg.duration for seg in self.segments))

    @classmethod
    def single(cls, m: int, k: int) -> "DriveProgram":
        """One segment closing after ``m`` detuning periods: ``delta_m = 2m/k``."""
        _check_integers(m, k)
        return cls(2.0 * m / k, m, k, (Segment(math.pi * k),))

    @classmethod
    def echo(cls, m_segment: int, k_segment: int, variant: str = "force") -> "DriveProgram":
        """Two closed segments; the second reverses the force or flips the qubits.

        ``m`` and ``k`` of the returned program count both halves.
        """
        _check_integers(m_segment, k_segment)
        duration = math.pi * k_segment
        if variant == "force":
            second = Segment(duration, force_sign=-1)
        elif variant == "pi_pulse":
            second = Segment(duration, force_sign=1, pi_pulse_before=True)
        else:
            raise ConfigError(f"unknown echo variant {variant!r}")
        return cls(
            2.0 * m_segment / k_segment,
            2 * m_segment,
            2 * k_segment,
            (Segment(duration), second),
        )


def _check_integers(m: int, k: int) -> None:
    if m < 1 or k <= 2 * m:
        raise ConfigError(f"closure integers need m >= 1 and k > 2m, got m={m}, k={k}")


# ---------------------------------------------------------------------------
# trajectories


@dataclass(frozen=True)
class OdeOptions:
    """Adaptive integrator settings.

    ``method`` is ``"dopri5"`` (embedded 5(4) pair) or ``"dop853"``
    (8th order with 5/3 error estimate).
    """

    method: str = "dopri5"
    rtol: float = 1e-10
    atol: float = 1e-12
    max_step: float = math.inf
    max_steps: int = 100_000_000
    samples_per_cycle: int = 64

    def __post_init__(self):
        if self.method not in ("dopri5", "dop853"):
            raise ConfigError(f"unknown integration method {self.method!r}")
        if self.samples_per_cycle < 64:
            raise ConfigError("at least 64 samples per drive cycle are required")


@dataclass
class Trajectory:
    """Sampled branch amplitudes in a stated frame.

    Rotating frames are taken about each branch's static center:
    ``center + (alpha_lab - center) exp(i nu tau)`` with ``nu = Omega_m``
    (drive) or ``1`` (resonator).
    """

    tau: np.ndarray
    alpha: np.ndarray  # (branches, samples)
    phi_g: np.ndarray  # (branches, samples)
    frame: str
    branches: tuple[str, ...]
    center: np.ndarray
    omega_m: float = 1.0
    seed: int | None = None

    CSV_HEADER = ("tau", "branch", "re_alpha", "im_alpha", "phi_g", "frame", "seed")

    def write_csv(self, handle, index: int) -> None:
        """Write one branch as CSV rows under :attr:`CSV_HEADER`."""
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(self.CSV_HEADER)
        name = self.branches[index]
        seed = "" if self.seed is None else str(self.seed)
        for t, a, p in zip(self.tau, self.alpha[index], self.phi_g[index]):
            writer.writerow((repr(float(t)), name, repr(float(a.real)), repr(float(a.imag)),
                             repr(float(p)), self.frame, seed))

    def write_phase_plot(self, handle, index: int) -> None:
        """Whitespace-separated ``u v`` columns for a phase-space plot."""
        for a in self.alpha[index]:
            handle.write(f"{float(a.real)!r} {float(a.imag)!r}\n")


def frame_rate(frame: str, omega_m: float) -> float:
    if frame == "lab":
        return 0.0
    if frame == "drive":
        return omega_m
    if frame == "resonator":
        return 1.0
    raise ConfigError(f"unknown frame {frame!r}; expected one of {FRAMES}")


def to_frame(tau, alpha_lab, frame: str, omega_m: float, center=0.0) -> np.ndarray:
    nu = frame_rate(frame, omega_m)
    if nu == 0.0:
        return np.asarray(alpha_lab, dtype=complex)
    return center + (alpha_lab - center) * np.exp(1j * nu * np.asarray(tau))


def geometric_phase(traj: Trajectory) -> np.ndarray:
    """Running ``Im sum conj(a_k) a_{k+1}`` of each branch about its center."""
    alpha = np.atleast_2d(traj.alpha)
    if alpha.shape[-1] < 3:
        raise ResolutionError("geometric phase needs at least three samples")
    center = np.broadcast_to(np.asarray(traj.center, dtype=complex), alpha.shape[:1])
    return np.stack(
        [_kernels.shoelace(np.ascontiguousarray(a - c)) for a, c in zip(alpha, center)]
    )


def _finish(tau, alpha_lab, frame, omega_m, centers, names, seed=None) -> Trajectory:
    alpha_lab = np.atleast_2d(alpha_lab)
    if not np.all(np.isfinite(alpha_lab)):
        raise NumericalError("trajectory contains non-finite values")
    centers = np.asarray(centers, dtype=complex).reshape(-1)
    framed = np.stack(
        [to_frame(tau, a, frame, omega_m, c) for a, c in zip(alpha_lab, centers)]
    )
    traj = Trajectory(np.asarray(tau, float), framed, np.zeros(framed.shape), frame,
                      tuple(names), centers, omega_m, seed)
    if framed.shape[-1] >= 3:
        traj.phi_g = geometric_phase(traj)
    return traj


def _check_grid(tau_grid) -> np.ndarray:
    tau = np.asarray(tau_grid, dtype=float)
    if tau.ndim != 1 or tau.size < 2 or np.any(np.diff(tau) <= 0):
        raise ConfigError("time grid must be strictly increasing with at least two points")
    return tau


# ---------------------------------------------------------------------------
# exact modal solution


@dataclass(frozen=True)
class ModalPiece:
    """``alpha(t0 + s) = sum_j c_j exp(mu_j s)`` for ``0 <= s <= duration``."""

    t0: float
    duration: float
    mu: np.ndarray
    c: np.ndarray

    def evaluate(self, s) -> np.ndarray:
        return np.exp(np.multiply.outer(np.asarray(s, float), self.mu)) @ self.c

    def final(self) -> complex:
        return complex(self.evaluate(np.array([self.duration]))[0])


def _expm1_ratio(z, length):
    """``(exp(z L) - 1) / z`` with the ``z -> 0`` limit ``L``."""
    z = np.asarray(z, dtype=complex)
    zl = z * length
    small = np.abs(zl) < 1e-8
    safe = np.where(small, 1.0, z)
    return np.where(small, length * (1.0 + 0.5 * zl), np.expm1(zl) / safe)


def modal_piece(alpha0: complex, t0: float, duration: float, w: float, g: float,
                f_dc: float, f_ac: float, omega_m: float) -> ModalPiece:
    """Exact solution of the linear equation over one segment."""
    a_mat = np.array([[0.0, w], [-w, -g]], dtype=complex)
    drive = np.array([0.0, w * f_ac], dtype=complex)
    try:
        z = np.linalg.solve(1j * omega_m * np.eye(2) - a_mat, drive)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("undamped resonator driven exactly on resonance") from exc
    if not np.all(np.isfinite(z)):
        raise NumericalError("undamped resonator driven exactly on resonance")
    lam, vec = np.linalg.eig(a_mat)
    phase0 = np.exp(1j * omega_m * t0)
    particular0 = np.array([f_dc, 0.0]) + np.imag(z * phase0)
    x0 = np.array([alpha0.real, alpha0.imag], dtype=complex)
    d = np.linalg.solve(vec, x0 - particular0)
    z_alpha = z[0] + 1j * z[1]
    z_conj_alpha = np.conj(z[0]) + 1j * np.conj(z[1])
    mu = np.array([0.0, 1j * omega_m, -1j * omega_m, lam[0], lam[1]])
    c = np.array([
        f_dc,
        z_alpha * phase0 / 2j,
        -z_conj_alpha * np.conj(phase0) / 2j,
        (vec[0, 0] + 1j * vec[1, 0]) * d[0],
        (vec[0, 1] + 1j * vec[1, 1]) * d[1],
    ])
    return ModalPiece(float(t0), float(duration), mu, c)


def modal_area(piece: ModalPiece, nu: float, center: complex = 0.0) -> float:
    """``Im int conj(a) da`` of ``(alpha - center) exp(i nu tau)`` over the piece."""
    c = piece.c.copy()
    c[0] -= center
    mu = piece.mu + 1j * nu
    pair = np.conj(mu)[:, None] + mu[None, :]
    integral = _expm1_ratio(pair, piece.duration)
    total = np.sum(np.conj(c)[:, None] * (c * mu)[None, :] * integral)
    return float(total.imag)


def _damping(quality: float) -> float:
    if quality <= 0:
        raise ConfigError("quality factor must be positive")
    return 0.0 if math.isinf(quality) else 1.0 / quality


def evolve_exact(bp: BranchParams, delta_m: float, quality: float, alpha0: complex, tau_grid,
                 frame: str = "lab", force_sign: int = 1, name: str = "branch") -> Trajectory:
    """Exact damped, shifted solution sampled on ``tau_grid`` (drive starts at ``tau_grid[0]``)."""
    tau = _check_grid(tau_grid)
    omega_m = 1.0 + delta_m
    piece = modal_piece(complex(alpha0), tau[0], tau[-1] - tau[0], bp.w, _damping(quality),
                        bp.eta_dc, force_sign * bp.eta_ac, omega_m)
    alpha = piece.evaluate(tau - tau[0])
    return _finish(tau, alpha, frame, omega_m, [bp.eta_dc], [name])


def evolve_analytic(bp: BranchParams, delta_m: float, alpha0: complex, tau_grid,
                    name: str = "branch") -> Trajectory:
    """Undamped, unshifted closed form in the frame rotating at ``Omega_m``.

    Includes the counter-rotating response.  Any static offset is carried by
    working about the branch center.
    """
    tau = _check_grid(tau_grid)
    denom = delta_m * (2.0 + delta_m)
    if denom == 0:
        raise ConfigError("drive detuning makes the closed form singular")
    omega_m = 1.0 + delta_m
    eta_eff = bp.eta_ac / denom
    beat = np.exp(1j * delta_m * tau)
    rel = (complex(alpha0) - bp.eta_dc) * beat + 1j * eta_eff * (
        (omega_m * beat - 1.0) - 0.5 * delta_m * (np.exp(2j * omega_m * tau) + 1.0)
    )
    traj = Trajectory(tau, (bp.eta_dc + rel)[None, :], np.zeros((1, tau.size)), "drive",
                      (name,), np.array([bp.eta_dc], dtype=complex), omega_m)
    if tau.size >= 3:
        traj.phi_g = geometric_phase(traj)
    return traj


# ---------------------------------------------------------------------------
# adaptive Runge-Kutta


def _rk_run(tau, alpha0, w, g, f_dc, f_ac, omega_m, opts: OdeOptions):
    high = opts.method == "dop853"
    if high:
        a, b, c = _kernels.D8_A, _kernels.D8_B, _kernels.D8_C
        e, e3, e5 = np.zeros(b.size + 1), _kernels.D8_E3, _kernels.D8_E5
    else:
        a, b, c, e = _kernels.DP5_A, _kernels.DP5_B, _kernels.DP5_C, _kernels.DP5_E
        e3 = e5 = np.zeros(b.size + 1)
    u, v, status, steps = _kernels.rk_integrate(
        tau, alpha0.real, alpha0.imag, w, g, f_dc, f_ac, omega_m, a, b, c, e, e3, e5,
        high, opts.rtol, opts.atol, opts.max_step, opts.max_steps,
    )
    if status == _kernels.STATUS_UNDERFLOW:
        raise NumericalError(f"step size underflow after {steps} steps (rtol={opts.rtol})")
    if status == _kernels.STATUS_MAX_STEPS:
        raise NumericalError(f"step budget of {opts.max_steps} exhausted")
    return u + 1j * v


def evolve_ode(bp: BranchParams, delta_m: float, quality: float, alpha0: complex, tau_grid,
               opts: OdeOptions | None = None, frame: str = "lab", force_sign: int = 1,
               name: str = "branch") -> Trajectory:
    """Integrate the lab-frame equation and transform the samples to ``frame``."""
    opts = opts or OdeOptions()
    tau = _check_grid(tau_grid)
    omega_m = 1.0 + delta_m
    alpha = _rk_run(tau, complex(alpha0), bp.w, _damping(quality), bp.eta_dc,
                    force_sign * bp.eta_ac, omega_m, opts)
    return _finish(tau, alpha, frame, omega_m, [bp.eta_dc], [name])


def cycle_grid(t0: float, duration: float, omega_m: float, samples_per_cycle: int) -> np.ndarray:
    """Uniform grid with at least ``samples_per_cycle`` points per drive period."""
    cycles = duration * max(omega_m, 1.0) / (2 * math.pi)
    n = max(3, int(math.ceil(cycles * samples_per_cycle)) + 1)
    return t0 + np.linspace(0.0, duration, n)


# ---------------------------------------------------------------------------
# noise


@dataclass(frozen=True)
class NoiseSpec:
    """Force noise with a one-sided spectral density ``S(Omega)``.

    ``kind="thermal"`` uses ``(2 Omega / Q) coth(Omega tau_c / 2)``;
    ``kind="tabulated"`` interpolates ``table = (omega, S)`` linearly and is
    zero outside the table.  ``applies_to="plus"`` acts identically on all
    branches, ``"minus"`` is weighted by the sum of modulated-qubit signs.
    """

    kind: str = "thermal"
    quality: float = math.inf
    tau_c: float = math.inf
    table: tuple | None = None
    applies_to: str = "plus"
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("thermal", "tabulated"):
            raise ConfigError(f"unknown noise kind {self.kind!r}")
        if self.applies_to not in ("plus", "minus"):
            raise ConfigError(f"noise applies_to must be 'plus' or 'minus', got {self.applies_to!r}")
        if self.kind == "tabulated":
            if self.table is None:
                raise ConfigError("tabulated noise needs a table")
            omega, spec = (np.asarray(x, float) for x in self.table)
            if omega.shape != spec.shape or omega.ndim != 1 or np.any(np.diff(omega) <= 0):
                raise ConfigError("noise table must be increasing frequencies with matching values")

    def one_sided(self, omega) -> np.ndarray:
        omega = np.abs(np.asarray(omega, dtype=float))
        if self.kind == "thermal":
            values = thermal_psd(omega, self.quality, self.tau_c)
        else:
            grid, spec = (np.asarray(x, float) for x in self.table)
            values = np.interp(omega, grid, spec, left=0.0, right=0.0)
        values = self.scale**2 * values
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise ConfigError("noise spectral density must be finite and non-negative on the band")
        return values

    def branch_weight(self, label: BranchLabel) -> float:
        if self.applies_to == "plus":
            return 1.0
        return float(sum(s for s, mod in zip(label.signs, label.modulated) if mod))


def thermal_psd(omega, quality: float, tau_c: float) -> np.ndarray:
    """One-sided ``(2 Omega / Q) coth(Omega tau_c / 2)``, continuous at ``Omega = 0``."""
    omega = np.abs(np.asarray(omega, dtype=float))
    if math.isinf(quality):
        return np.zeros_like(omega)
    if math.isinf(tau_c):
        return 2.0 * omega / quality
    x = 0.5 * omega * tau_c
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(x > 1e-8, x / np.tanh(np.where(x > 0, x, 1.0)), 1.0 + x * x / 3.0)
    return 4.0 * ratio / (quality * tau_c)


class NoiseSynthesizer:
    """Stationary Gaussian samples with a target spectrum (circulant embedding).

    The embedding period exceeds the record by twice the lag at which the
    autocovariance falls below ``tolerance`` of its peak, so the periodic
    wrap-around does not correlate the ends.  Spectral amplitudes are
    computed once and reused for every draw.
    """

    def __init__(self, noise: NoiseSpec, n: int, dt: float, tolerance: float = 1e-6):
        eig = self._eigenvalues(noise, _even_fast_len(2 * n), dt)
        cov = sp_fft.irfft(eig)[: n + 1]
        above = np.nonzero(np.abs(cov) > tolerance * abs(cov[0]))[0]
        lag = int(above[-1]) + 1 if above.size else 1
        m = _even_fast_len(n + 2 * lag) if lag < n // 2 else _even_fast_len(2 * n)
        eig = self._eigenvalues(noise, m, dt)
        amp = np.sqrt(0.5 * eig * m)
        amp[0] = math.sqrt(eig[0] * m)
        amp[-1] = math.sqrt(eig[-1] * m)
        self.n = n
        self.m = m
        self.amplitude = amp

    @staticmethod
    def _eigenvalues(noise: NoiseSpec, m: int, dt: float) -> np.ndarray:
        freqs = 2 * math.pi * np.arange(m // 2 + 1) / (m * dt)
        return 0.5 * noise.one_sided(freqs) / dt

    def draw(self, rng: np.random.Generator) -> np.ndarray:
        size = self.amplitude.size
        normals = rng.standard_normal(2 * size)
        coeff = np.empty(size, dtype=complex)
        coeff.real = normals[:size]
        coeff.imag = normals[size:]
        coeff[0] = coeff[0].real
        coeff[-1] = coeff[-1].real
        coeff *= self.amplitude
        return sp_fft.irfft(coeff, n=self.m)[: self.n]


def _even_fast_len(n: int) -> int:
    m = sp_fft.next_fast_len(n, real=True)
    while m % 2:
        m = sp_fft.next_fast_len(m + 1, real=True)
    return m


def synthesize_noise(noise: NoiseSpec, n: int, dt: float, rng: np.random.Generator) -> np.ndarray:
    """One draw of ``n`` noise samples spaced ``dt``; see :class:`NoiseSynthesizer`."""
    return NoiseSynthesizer(noise, n, dt).draw(rng)


def step_propagator(w: float, g: float, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Flow ``Phi`` over one step and the response ``psi`` to a held unit force."""
    from scipy.linalg import expm

    a_mat = np.array([[0.0, w], [-w, -g]])
    phi = expm(a_mat * dt)
    psi = np.linalg.solve(a_mat, (phi - np.eye(2)) @ np.array([0.0, w]))
    return phi, psi


def noise_response(forcing: np.ndarray, w: float, g: float, dt: float) -> np.ndarray:
    """Displacement driven by piecewise-constant forcing, starting at rest."""
    phi, psi = step_propagator(w, g, dt)
    return _kernels.exp_euler(phi, psi, 0.0, 0.0, np.ascontiguousarray(forcing, dtype=float))


def evolve_langevin(bp: BranchParams, delta_m: float, quality: float, alpha0: complex, tau_grid,
                    noise: NoiseSpec, seed, frame: str = "lab", force_sign: int = 1,
                    weight: float = 1.0, name: str = "branch") -> Trajectory:
    """One noisy realization on a uniform grid.

    The deterministic part is exact; the noise response uses the exact flow
    with the force held over each step, which stays stable for weak damping.
    """
    tau = _check_grid(tau_grid)
    steps = np.diff(tau)
    dt = float(steps[0])
    if not np.allclose(steps, dt, rtol=1e-9, atol=0.0):
        raise ConfigError("Langevin integration needs a uniform grid")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    forcing = weight * synthesize_noise(noise, tau.size - 1, dt, rng)
    g = _damping(quality)
    omega_m = 1.0 + delta_m
    piece = modal_piece(complex(alpha0), tau[0], tau[-1] - tau[0], bp.w, g, bp.eta_dc,
                        force_sign * bp.eta_ac, omega_m)
    alpha = piece.evaluate(tau - tau[0]) + noise_response(forcing, bp.w, g, dt)
    seed_tag = seed if isinstance(seed, int) else None
    return _finish(tau, alpha, frame, omega_m, [bp.eta_dc], [name], seed_tag)


# ---------------------------------------------------------------------------
# gates


@dataclass
class GateOutcome:
    """Final state of every branch after a gate program.

    ``final_phi`` is the geometric phase in the resonator frame about each
    branch's center.  ``residual_minus`` is the difference of the
    all-ground and all-excited residual displacements, ``residual_plus``
    their mean.
    """

    branches: tuple[BranchLabel, ...]
    final_alpha: np.ndarray
    free_alpha: np.ndarray
    final_phi: np.ndarray
    residual_minus: complex
    residual_plus: complex
    closure_defect: float
    tau_final: float
    method: str = "exact"

    @property
    def residual_sq(self) -> float:
        return abs(self.residual_minus) ** 2

    @property
    def components(self) -> dict[str, float]:
        return {
            "du_plus": self.residual_plus.real,
            "du_minus": self.residual_minus.real,
            "dv_minus": self.residual_minus.imag,
        }


def _segment_labels(program: DriveProgram, label: BranchLabel) -> list[BranchLabel]:
    labels = []
    current = label
    for seg in program.segments:
        if seg.pi_pulse_before:
            current = current.flipped()
        labels.append(current)
    return labels


def gate_pieces(program: DriveProgram, label: BranchLabel, coupling: CouplingDerived,
                quality: float, alpha0: complex | None = None, drive: bool = True):
    """Modal pieces of one branch over the whole program."""
    g = _damping(quality)
    pieces = []
    t0 = 0.0
    labels = _segment_labels(program, label)
    bp0 = branch_params(coupling, labels[0])
    alpha = complex(bp0.eta_dc if alpha0 is None else alpha0)
    for seg, lab in zip(program.segments, labels):
        bp = branch_params(coupling, lab)
        f_ac = seg.force_sign * bp.eta_ac if drive else 0.0
        piece = modal_piece(alpha, t0, seg.duration, bp.w, g, bp.eta_dc, f_ac, program.omega_m)
        pieces.append((piece, bp))
        alpha = piece.final()
        t0 += seg.duration
    return pieces


def _ode_branch(program, label, coupling, quality, alpha0, opts, drive=True):
    g = _damping(quality)
    t0 = 0.0
    labels = _segment_labels(program, label)
    alpha = complex(branch_params(coupling, labels[0]).eta_dc if alpha0 is None else alpha0)
    phase = 0.0
    for seg, lab in zip(program.segments, labels):
        bp = branch_params(coupling, lab)
        tau = cycle_grid(t0, seg.duration, program.omega_m, opts.samples_per_cycle)
        f_ac = seg.force_sign * bp.eta_ac if drive else 0.0
        lab_alpha = _rk_run(tau, alpha, bp.w, g, bp.eta_dc, f_ac, program.omega_m, opts)
        rel = (lab_alpha - bp.eta_dc) * np.exp(1j * tau)
        phase += _kernels.shoelace(rel)[-1]
        alpha = complex(lab_alpha[-1])
        t0 += seg.duration
    return alpha, phase


def run_gate(program: DriveProgram, branches, coupling: CouplingDerived, quality: float,
             opts: OdeOptions | None = None, method: str = "exact",
             alpha0: complex | None = None) -> GateOutcome:
    """Run every branch through the program and collect residuals and phases.

    Each branch starts at its own static center unless ``alpha0`` is given.
    ``method="ode"`` integrates adaptively and sums the sampled phase.
    """
    branches = tuple(branches)
    finals, frees, phis = [], [], []
    for label in branches:
        if method == "exact":
            pieces = gate_pieces(program, label, coupling, quality, alpha0)
            final = pieces[-1][0].final()
            phi = sum(modal_area(p, 1.0, bp.eta_dc) for p, bp in pieces)
            free = gate_pieces(program, label, coupling, quality, alpha0, drive=False)[-1][0].final()
        elif method == "ode":
            opts = opts or OdeOptions()
            final, phi = _ode_branch(program, label, coupling, quality, alpha0, opts)
            free = gate_pieces(program, label, coupling, quality, alpha0, drive=False)[-1][0].final()
        else:
            raise ConfigError(f"unknown gate method {method!r}")
        finals.append(final)
        frees.append(free)
        phis.append(phi)
    finals = np.array(finals, dtype=complex)
    frees = np.array(frees, dtype=complex)
    resid = finals - frees
    if not np.all(np.isfinite(finals)):
        raise NumericalError("gate evolution produced non-finite amplitudes")
    return GateOutcome(
        branches=branches,
        final_alpha=finals,
        free_alpha=frees,
        final_phi=np.array(phis),
        residual_minus=complex(resid[0] - resid[-1]),
        residual_plus=complex(0.5 * (resid[0] + resid[-1])),
        closure_defect=float(np.max(np.abs(resid))),
        tau_final=program.total_duration,
        method=method,
    )


def gate_trajectory(program: DriveProgram, branches, coupling: CouplingDerived, quality: float,
                    frame: str = "resonator", samples_per_cycle: int = 64) -> Trajectory:
    """Sampled exact trajectories of every branch across the program."""
    if samples_per_cycle < 64:
        raise ConfigError("at least 64 samples per drive cycle are required")
    branches = tuple(branches)
    taus, rows, centers = None, [], []
    for label in branches:
        pieces = gate_pieces(program, label, coupling, quality)
        parts_t, parts_a = [], []
        for i, (piece, _) in enumerate(pieces):
            grid = cycle_grid(piece.t0, piece.duration, program.omega_m, samples_per_cycle)
            if i:
                grid = grid[1:]
            parts_t.append(grid)
            parts_a.append(piece.evaluate(grid - piece.t0))
        taus = np.concatenate(parts_t)
        rows.append(np.concatenate(parts_a))
        centers.append(pieces[0][1].eta_dc)
    return _finish(taus, np.stack(rows), frame, program.omega_m, centers,
                   [b.name for b in branches])


def phase_kernel_spectrum(program: DriveProgram, quality: float, omega, domega: float = 0.0):
    """Fourier transform of the lab-frame ``u`` response to a unit force amplitude.

    Returns ``int u_unit(tau) exp(-i Omega tau) d tau`` over the program,
    with each segment's force sign applied.
    """
    omega = np.asarray(omega, dtype=float)
    g = _damping(quality)
    out = np.zeros(omega.shape, dtype=complex)
    alpha = 0.0j
    t0 = 0.0
    for seg in program.segments:
        piece = modal_piece(alpha, t0, seg.duration, 1.0 + domega, g, 0.0,
                            float(seg.force_sign), program.omega_m)
        shift = np.exp(-1j * omega * t0)
        for mu, c in zip(piece.mu, piece.c):
            # u = (alpha + conj(alpha)) / 2
            term = 0.5 * c * _expm1_ratio(mu - 1j * omega, seg.duration)
            term += 0.5 * np.conj(c) * _expm1_ratio(np.conj(mu) - 1j * omega, seg.duration)
            out += shift * term
        alpha = piece.final()
        t0 += seg.duration
    return out


# ---------------------------------------------------------------------------
# readout


@dataclass(frozen=True)
class ReadoutResult:
    tau: np.ndarray
    separation: np.ndarray
    state_separation: float
    thermal_std: float


def simulate_readout(coupling: CouplingDerived, quality: float, tau_meas: float,
                     n_bar: float = 0.0, qubit: int = 0, samples: int = 2001) -> ReadoutResult:
    """Resonant modulation of one qubit: ring-up of its two branches.

    Returns the separation ``|alpha_e - alpha_g|`` along the ring-up and the
    thermal spread ``sqrt(n_bar + 1/2)`` of either pointer state.
    """
    if math.isinf(quality):
        raise ConfigError("resonant readout needs a finite quality factor")
    tau = np.linspace(0.0, tau_meas, samples)
    result = []
    for s in (1, -1):
        eta = coupling.eta_minus[qubit] * s + coupling.eta_plus[qubit]
        shift = coupling.dispersive_shift[qubit] * s
        piece = modal_piece(0.0j, 0.0, tau_meas, 1.0 + shift, 1.0 / quality, 0.0, eta, 1.0)
        result.append(piece.evaluate(tau))
    sep = np.abs(result[1] - result[0])
    return ReadoutResult(tau, sep, float(sep[-1]), math.sqrt(n_bar + 0.5))
