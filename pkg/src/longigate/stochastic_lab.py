"""Monte Carlo checks of the closed-form error expressions.

Each replica draws from its own stream, seeded by
``SeedSequence([master_seed, replica])``, so results do not depend on
scheduling or thread count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from . import branch_dynamics as bd
from . import error_budget as eb
from .circuit_model import ConfigError, CouplingDerived

ESTIMATORS = ("gate_phase_error", "dephasing", "equilibrium_variance")


@dataclass(frozen=True)
class EnsembleConfig:
    """Replica count, seeding, and the physical setup shared by the estimators.

    ``steps_per_cycle`` sets the Langevin step ``2 pi / steps_per_cycle``.
    """

    replicas: int = 1000
    master_seed: int = 0
    estimator: str = "gate_phase_error"
    program: bd.DriveProgram | None = None
    coupling: CouplingDerived | None = None
    quality: float = 25000.0
    tau_c: float = math.inf
    noise_scale: float = 1.0
    steps_per_cycle: int = 200
    threads: int | None = None
    # photon-number dephasing
    omega_r: float = 2 * math.pi * 10e9
    n_bar: float = 0.0
    dispersive_shift: float = 0.0
    # equilibrium variance
    duration: float | None = None

    def __post_init__(self):
        if self.replicas < 2:
            raise ConfigError("at least two replicas are needed for an error bar")
        if self.estimator not in ESTIMATORS:
            raise ConfigError(f"unknown estimator {self.estimator!r}")
        if self.steps_per_cycle < 200:
            raise ConfigError("Langevin step must be at most 2 pi / 200")


@dataclass
class McResult:
    estimate: float
    standard_error: float
    replicas: int
    reference: float
    samples: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))
    seeds: list = field(repr=False, default_factory=list)
    extra: dict = field(default_factory=dict)
    inconclusive: bool = False

    @property
    def agreement(self) -> bool:
        """``|estimate - reference| <= max(3 SE, 0.25 reference)``."""
        if self.inconclusive:
            return False
        return abs(self.estimate - self.reference) <= max(3 * self.standard_error,
                                                          0.25 * abs(self.reference))


def replica_seed(master_seed: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(master_seed), int(index)])


def _thread_count(threads: int | None) -> int:
    if threads:
        return max(1, int(threads))
    env = os.environ.get("LONGIGATE_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _map_replicas(fn, replicas: int, threads: int | None) -> np.ndarray:
    n = _thread_count(threads)
    if n == 1:
        return np.array([fn(i) for i in range(replicas)])
    with ThreadPoolExecutor(max_workers=n) as pool:
        return np.array(list(pool.map(fn, range(replicas))))


def _summary(samples: np.ndarray) -> tuple[float, float]:
    samples = np.asarray(samples, dtype=float)
    # pairwise summation via numpy keeps the reduction order fixed
    mean = float(np.mean(samples))
    se = float(np.std(samples, ddof=1) / math.sqrt(samples.size))
    return mean, se


# ---------------------------------------------------------------------------
# gate phase error from thermal force noise


def _uniform_gate_grid(program: bd.DriveProgram, steps_per_cycle: int) -> tuple[np.ndarray, float]:
    dt = 2 * math.pi / steps_per_cycle
    n = int(math.ceil(program.total_duration / dt))
    dt = program.total_duration / n
    return np.arange(n + 1) * dt, dt


def _deterministic_paths(program, branches, coupling, quality, tau):
    """Exact lab-frame branch amplitudes on ``tau`` plus per-segment frequency data."""
    paths, weights = [], []
    for label in branches:
        pieces = bd.gate_pieces(program, label, coupling, quality)
        alpha = np.empty(tau.size, dtype=complex)
        for piece, _ in pieces:
            mask = (tau >= piece.t0 - 1e-12) & (tau <= piece.t0 + piece.duration + 1e-9)
            alpha[mask] = piece.evaluate(tau[mask] - piece.t0)
        paths.append(alpha)
        weights.append([bp.w for _, bp in pieces])
    return paths, weights


def gate_noise_setup(cfg: EnsembleConfig):
    """Quantities shared by every replica: grid, deterministic loops, propagators."""
    program, coupling = cfg.program, cfg.coupling
    if program is None or coupling is None:
        raise ConfigError("gate phase error needs a drive program and a coupling")
    branches = bd.enumerate_branches(coupling.n_qubits)
    tau, dt = _uniform_gate_grid(program, cfg.steps_per_cycle)
    paths, _ = _deterministic_paths(program, branches, coupling, cfg.quality, tau)
    centers = [bd.branch_params(coupling, b).eta_dc for b in branches]
    rotor = np.exp(1j * tau)
    signs = np.array([b.signs for b in branches], dtype=float)
    noise = bd.NoiseSpec("thermal", cfg.quality, cfg.tau_c, scale=cfg.noise_scale)
    g = 0.0 if math.isinf(cfg.quality) else 1.0 / cfg.quality
    bounds = _segment_bounds(program, tau)
    keys, propagators = [], {}
    for label in branches:
        # the frequency shift may change at pi pulses, so the noise is integrated per segment
        key = tuple(bd.branch_params(coupling, lab).w for lab in bd._segment_labels(program, label))
        keys.append(key)
        for w in key:
            if w not in propagators:
                propagators[w] = bd.step_propagator(w, g, dt)
    rotated = [np.ascontiguousarray((p - c) * rotor) for p, c in zip(paths, centers)]
    return dict(program=program, coupling=coupling, branches=branches, tau=tau, dt=dt,
                rotor=rotor, signs=signs, rotated=rotated, keys=keys, bounds=bounds,
                propagators=propagators,
                synthesizer=bd.NoiseSynthesizer(noise, tau.size - 1, dt))


def _segment_bounds(program: bd.DriveProgram, tau: np.ndarray) -> list[int]:
    edges = np.cumsum([0.0] + [s.duration for s in program.segments])
    return [int(np.argmin(np.abs(tau - e))) for e in edges]


def _noise_path(setup: dict, forcing: np.ndarray, key: tuple) -> np.ndarray:
    bounds = setup["bounds"]
    if len(key) == 1:
        phi, psi = setup["propagators"][key[0]]
        return _kernels.exp_euler(phi, psi, 0.0, 0.0, forcing)
    response = np.empty(forcing.size + 1, dtype=complex)
    state = 0.0j
    for (start, stop), w in zip(zip(bounds[:-1], bounds[1:]), key):
        phi, psi = setup["propagators"][w]
        part = _kernels.exp_euler(phi, psi, state.real, state.imag, forcing[start:stop])
        response[start:stop + 1] = part
        state = part[-1]
    return response


def gate_replica(setup: dict, cfg: EnsembleConfig, index: int) -> float:
    """Per-qubit mean of ``sin^2`` of the noise-induced single-qubit phase.

    Only the part of the enclosed area linear in the noise is kept.  The
    noise-noise area is a branch-dependent offset from the classical
    zero-point fluctuations; its fluctuating part belongs to photon-number
    dephasing, which is estimated separately.
    """
    rng = np.random.default_rng(replica_seed(cfg.master_seed, index))
    forcing = setup["synthesizer"].draw(rng)
    responses: dict = {}
    delta = np.empty(len(setup["branches"]))
    for j, key in enumerate(setup["keys"]):
        if key not in responses:
            responses[key] = _noise_path(setup, forcing, key)
        delta[j] = _kernels.cross_area(setup["rotated"][j], responses[key], setup["rotor"])
    n = setup["signs"].shape[1]
    single = setup["signs"].T @ delta / len(delta)
    return float(np.mean(np.sin(single[:n]) ** 2))


def mc_gate_error(cfg: EnsembleConfig) -> McResult:
    """Langevin gate runs with thermal force noise against the closed form."""
    setup = gate_noise_setup(cfg)
    samples = _map_replicas(lambda i: gate_replica(setup, cfg, i), cfg.replicas, cfg.threads)
    mean, se = _summary(samples)
    program, coupling = cfg.program, cfg.coupling
    eta = abs(coupling.eta_minus[0])
    reference = cfg.noise_scale**2 * eb.thermal_force_error(cfg.quality, eta, program.m, cfg.tau_c)
    drive = eb.DriveSpectrum(program, cfg.quality, eta)
    spectral = cfg.noise_scale**2 * eb.phase_variance(drive, eb.SpectralDensity(cfg.quality, cfg.tau_c))
    return McResult(mean, se, cfg.replicas, reference, samples,
                    [replica_seed(cfg.master_seed, i).entropy for i in range(cfg.replicas)],
                    {"spectral_reference": spectral},
                    inconclusive=not np.isfinite(se))


# ---------------------------------------------------------------------------
# photon-number dephasing


def _telegraph_phase(rng, n_bar, kappa, shift_rate, times, n0):
    """Phase ``shift_rate * int n dt`` sampled at ``times`` for a birth-death path."""
    out = np.empty(times.size)
    t = 0.0
    n = n0
    phase = 0.0
    idx = 0
    up = kappa * n_bar
    down = kappa * (n_bar + 1.0)
    t_end = times[-1]
    while idx < times.size:
        rate = up * (n + 1) + down * n
        wait = rng.exponential(1.0 / rate) if rate > 0 else math.inf
        t_next = min(t + wait, t_end + 1.0)
        while idx < times.size and times[idx] <= t_next:
            out[idx] = phase + shift_rate * n * (times[idx] - t)
            idx += 1
        if idx >= times.size:
            break
        phase += shift_rate * n * (t_next - t)
        t = t_next
        if rng.random() * rate < up * (n + 1):
            n += 1
        else:
            n -= 1
    return out


def telegraph_dephasing_rate(kappa: float, n_bar: float, shift_rate: float) -> float:
    """Long-time dephasing rate of the thermal birth-death process.

    ``Re[(kappa/2)(sqrt((1 + i chi/kappa)^2 + 4 i chi n_bar/kappa) - 1)]`` with
    ``chi`` the phase rate per photon; tends to ``n_bar (n_bar + 1) chi^2 / kappa``
    for ``chi << kappa`` and to ``kappa n_bar`` for ``chi >> kappa``.
    """
    chi = shift_rate
    base = 1 + 1j * chi / kappa
    root = np.sqrt(base**2 + 4j * chi * n_bar / kappa)
    # rationalized so that small chi does not cancel
    return float(np.real(2j * chi * n_bar / (root + base)))


def mc_photon_dephasing(cfg: EnsembleConfig) -> McResult:
    """Qubit coherence under a thermal photon-number telegraph process.

    Photons enter at ``kappa n_bar (n + 1)`` and leave at
    ``kappa (n_bar + 1) n`` with ``kappa = omega_r / Q``; the qubit phase
    advances at ``2 domega omega_r n``.  The decay rate is fitted to
    ``-ln |<exp(i phi)>|`` past the photon correlation time.
    """
    kappa = cfg.omega_r / cfg.quality
    shift_rate = 2.0 * cfg.dispersive_shift * cfg.omega_r
    reference = eb.photon_dephasing_rate(cfg.omega_r, cfg.n_bar, cfg.quality, cfg.dispersive_shift)
    if cfg.n_bar == 0:
        return McResult(0.0, 0.0, cfg.replicas, reference, np.zeros(cfg.replicas),
                        extra={"telegraph_rate": 0.0})
    exact = telegraph_dephasing_rate(kappa, cfg.n_bar, shift_rate)
    guess = max(min(x for x in (reference, exact, kappa * cfg.n_bar) if x > 0), 1e-300)
    t_max = 2.0 / guess + 10.0 / kappa
    times = np.linspace(0.0, t_max, 201)
    fit_mask = times >= 5.0 / kappa
    if np.count_nonzero(fit_mask) < 10:
        fit_mask = times >= times[times.size // 2]

    ratio = cfg.n_bar / (1.0 + cfg.n_bar)

    def replica(i):
        rng = np.random.default_rng(replica_seed(cfg.master_seed, i))
        n0 = int(rng.geometric(1.0 - ratio)) - 1
        return np.exp(1j * _telegraph_phase(rng, cfg.n_bar, kappa, shift_rate, times, n0))

    paths = _map_replicas(replica, cfg.replicas, cfg.threads)
    batches = np.array_split(np.arange(cfg.replicas), min(20, cfg.replicas))

    def fit(rows):
        coherence = np.abs(np.mean(paths[rows], axis=0))
        y = -np.log(np.clip(coherence[fit_mask], 1e-300, None))
        slope = np.polyfit(times[fit_mask], y, 1)[0]
        return slope

    estimate = float(fit(np.arange(cfg.replicas)))
    batch_rates = np.array([fit(rows) for rows in batches])
    se = float(np.std(batch_rates, ddof=1) / math.sqrt(len(batches)))
    coherence = np.abs(np.mean(paths, axis=0))
    inconclusive = not np.isfinite(estimate) or coherence[fit_mask][-1] < 3.0 / math.sqrt(cfg.replicas)
    return McResult(estimate, se, cfg.replicas, reference, batch_rates,
                    extra={"telegraph_rate": exact, "kappa": kappa, "t_max": t_max},
                    inconclusive=inconclusive)


# ---------------------------------------------------------------------------
# equilibrium


def equilibrium_check(quality: float, tau_c: float, cfg: EnsembleConfig | None = None) -> McResult:
    """Undriven oscillator with thermal force noise: ``<u^2>`` against ``coth(tau_c/2)/2``."""
    cfg = cfg or EnsembleConfig(estimator="equilibrium_variance")
    duration = cfg.duration if cfg.duration is not None else 8.0 * quality
    dt = 2 * math.pi / cfg.steps_per_cycle
    n = int(math.ceil(duration / dt))
    noise = bd.NoiseSpec("thermal", quality, tau_c, scale=cfg.noise_scale)
    phi, psi = bd.step_propagator(1.0, 1.0 / quality, dt)
    synthesizer = bd.NoiseSynthesizer(noise, n, dt)

    def replica(i):
        rng = np.random.default_rng(replica_seed(cfg.master_seed, i))
        forcing = synthesizer.draw(rng)
        path = _kernels.exp_euler(phi, psi, 0.0, 0.0, forcing)
        return path[-1].real ** 2

    samples = _map_replicas(replica, cfg.replicas, cfg.threads)
    mean, se = _summary(samples)
    reference = cfg.noise_scale**2 * (0.5 if math.isinf(tau_c) else 0.5 / math.tanh(0.5 * tau_c))
    return McResult(mean, se, cfg.replicas, reference, samples)
