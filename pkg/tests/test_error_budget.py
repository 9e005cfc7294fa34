import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from longigate import branch_dynamics as bd
from longigate import circuit_model as cm
from longigate import error_budget as eb
from longigate import gate_design as gd
from longigate.circuit_model import ConfigError

OMEGA_10GHZ = 2 * math.pi * 10e9


def flux_inputs(**kw):
    base = dict(delta_m=0.064, m=100, eta_minus=4.5e-3, quality=25000.0, n_bar=6e-6, tau_c=12.0,
                dispersive_shift=3.57e-5, omega_r=OMEGA_10GHZ)
    base.update(kw)
    return eb.BudgetInputs(**base)


def test_residual_flux_row():
    assert eb.residual_displacement_sq(0.02793, 100, 3.57e-5) == pytest.approx(6.16e-5, rel=5e-3)
    assert eb.residual_displacement_sq(0.0, 100, 0.0) == 0.0


def test_displacement_error_flux_row():
    budget = eb.compute_budget(flux_inputs())
    assert budget.x == pytest.approx(math.pi / (25000 * 4.5e-3))
    assert budget.eps_dalpha == pytest.approx(1.5e-5, rel=0.05)
    assert eb.displacement_error(0.0, 0.3) == 0.0


def test_fidelity_of_undisplaced_state_is_one():
    assert eb.fidelity_exact(0.0, 0.2) == pytest.approx(1.0, abs=1e-12)


def test_fidelity_small_displacement():
    f = eb.fidelity_exact(0.1, 0.0)
    assert 1 - f == pytest.approx(2.5e-3, rel=0.05)


@settings(max_examples=25, deadline=None)
@given(dalpha_sq=st.floats(1e-6, 1e-2), n_bar=st.floats(0.0, 0.5), angle=st.floats(0, 2 * math.pi))
def test_leading_order_matches_number_basis(dalpha_sq, n_bar, angle):
    dalpha = math.sqrt(dalpha_sq) * complex(math.cos(angle), math.sin(angle))
    exact = 1.0 - eb.fidelity_exact(dalpha, n_bar)
    assert eb.displacement_error(dalpha_sq, n_bar) == pytest.approx(exact, rel=0.05)


@settings(max_examples=10, deadline=None)
@given(re=st.floats(-1.5, 1.5), im=st.floats(-1.5, 1.5))
def test_fidelity_ignores_common_displacement(re, im):
    base = eb.fidelity_exact(0.08, 0.1)
    assert eb.fidelity_exact(0.08, 0.1, common=complex(re, im)) == pytest.approx(base, abs=1e-9)


def test_fidelity_closed_form_agrees():
    assert eb.fidelity_exact(0.3 + 0.2j, 0.4) == pytest.approx(
        eb.fidelity_closed_form(abs(0.3 + 0.2j) ** 2, 0.4), abs=1e-12)


def test_fidelity_truncation_checked():
    with pytest.raises(eb.ConvergenceError):
        eb.fidelity_exact(0.1, 5.0, truncation=20)
    with pytest.raises(eb.ConvergenceError):
        eb.fidelity_exact(4.0, 0.0, truncation=10)


def test_thermal_force_examples():
    assert eb.thermal_force_error(25000, 4.5e-3, 100, 12) == pytest.approx(1.97e-3, rel=5e-3)
    assert eb.thermal_force_error(50000, 1.4e-3, 50, 12) == pytest.approx(4.5e-3, rel=5e-3)
    cold = eb.thermal_force_error(25000, 4.5e-3, 100, math.inf)
    assert cold == pytest.approx(math.pi / (math.sqrt(200) * 25000 * 4.5e-3))


def test_noise_psd_examples():
    assert eb.noise_psd(1.0, 25000, 12) == pytest.approx(8.0e-5, rel=1e-4)
    assert eb.noise_psd(1e-6, 100.0, 2.0) == pytest.approx(4 / (100 * 2), rel=1e-9)
    with pytest.raises(ConfigError):
        eb.noise_psd(0.0, 100.0, 2.0)


@settings(max_examples=50, deadline=None)
@given(omega=st.floats(1e-6, 10), quality=st.floats(1, 1e7), tau_c=st.floats(1e-3, 100))
def test_noise_psd_positive_and_above_cold_floor(omega, quality, tau_c):
    value = eb.noise_psd(omega, quality, tau_c)
    assert value >= 2 * omega / quality * (1 - 1e-12)
    assert eb.noise_psd(omega, quality, math.inf) == pytest.approx(2 * omega / quality)


@pytest.fixture(scope="module")
def flux_spectrum():
    return eb.DriveSpectrum(bd.DriveProgram.single(100, 3125), 25000.0, 4.5e-3)


def test_phase_variance_zero_spectrum(flux_spectrum):
    assert eb.phase_variance(flux_spectrum, lambda w: np.zeros_like(w)) == 0.0


def test_phase_variance_thermal_flux_row(flux_spectrum):
    var = eb.phase_variance(flux_spectrum, eb.SpectralDensity(25000.0, 12.0))
    assert var == pytest.approx(eb.thermal_force_error(25000, 4.5e-3, 100, 12), rel=0.30)
    # frozen quadrature value
    assert var == pytest.approx(1.8231e-3, rel=1e-3)


def test_low_frequency_noise_barely_couples(flux_spectrum):
    thermal = eb.phase_variance(flux_spectrum, eb.SpectralDensity(25000.0, 12.0))
    grid = np.array([0.0, 0.49, 0.5, 10.0])
    table = (tuple(grid), (1e-4, 1e-4, 0.0, 0.0))
    low = eb.phase_variance(flux_spectrum, eb.SpectralDensity(table=table))
    assert low < 1e-2 * thermal


def test_phase_variance_needs_resolution(flux_spectrum):
    with pytest.raises(bd.ResolutionError):
        eb.phase_variance(flux_spectrum, eb.SpectralDensity(25000.0, 12.0),
                          omega=np.linspace(0, 3, 100))


def test_dephasing_rate():
    # 16 omega n Q domega^2 evaluated directly
    rate = eb.photon_dephasing_rate(OMEGA_10GHZ, 6e-6, 25000, 3.57e-5)
    assert 1 / rate == pytest.approx(5.20e-3, rel=2e-3)
    # with the row's own occupation at 38.4 mK the tabulated 8.4 ms is reproduced
    n_bar, _ = cm.thermal_stats(OMEGA_10GHZ, 0.0384)
    row = 1 / eb.photon_dephasing_rate(OMEGA_10GHZ, n_bar, 25000, 3.57e-5)
    assert row == pytest.approx(8.4e-3, rel=0.15)
    assert eb.photon_dephasing_rate(OMEGA_10GHZ, 0.0, 25000, 3.57e-5) == 0.0


def test_higher_mode_examples():
    assert eb.higher_mode_error(4.5e-3, 1.23, 0.0) == pytest.approx(8.8e-5, rel=5e-3)
    assert eb.higher_mode_error(0.0, 1.5, 0.1) == 0.0
    far = eb.higher_mode_error(4.5e-3, 1e9, 0.1)
    assert far == pytest.approx((4.5e-3) ** 2 * 1.2 / 2)
    with pytest.raises(ConfigError):
        eb.higher_mode_error(1e-3, 1.0, 0.0)


def test_min_detuning_flux_row():
    delta = eb.min_higher_mode_detuning(4.5e-3, 6e-6, 2.0e-4, OMEGA_10GHZ)
    assert 0.5 <= delta / (2 * math.pi * 2.3e9) <= 2.0


def test_min_detuning_floor_and_infeasible():
    floor = 2 * (4.5e-3) ** 2 / 2
    assert eb.min_higher_mode_detuning(4.5e-3, 0.0, floor, OMEGA_10GHZ) == math.inf
    with pytest.raises(eb.InfeasibleError):
        eb.min_higher_mode_detuning(4.5e-3, 0.0, 0.5 * floor, OMEGA_10GHZ)


def test_min_detuning_monotone_in_amplitude():
    values = [eb.min_higher_mode_detuning(eta, 6e-6, 2e-4, OMEGA_10GHZ)
              for eta in (4.5e-3, 3e-3, 1e-3)]
    assert values == sorted(values, reverse=True)


@settings(max_examples=60, deadline=None)
@given(eta=st.floats(1e-4, 1e-2), n_bar=st.floats(0, 0.5), f_k=st.floats(1.01, 20),
       drive=st.floats(1.0, 1.005), n_q=st.integers(1, 4))
def test_min_detuning_inverts_mode_error(eta, n_bar, f_k, drive, n_q):
    if f_k <= drive:
        f_k = drive + 0.5
    target = eb.higher_mode_error(eta, f_k, n_bar, n_q, drive)
    delta = eb.min_higher_mode_detuning(eta, n_bar, target, 1.0, n_q, drive)
    round_trip = eb.higher_mode_error(eta, delta + 1.0, n_bar, n_q, drive)
    assert round_trip == pytest.approx(target, rel=1e-9)


def test_total_error_assembly():
    assert eb.total_error(0.0, 1e-7, 0.0, 0.0) == 0.0
    budget = eb.compute_budget(flux_inputs())
    expected = 2 * budget.dephasing_rate * budget.t_pi + budget.eps_dalpha + budget.eps_force
    assert budget.eps_total == expected


def test_transmon_high_q_total():
    row = eb.table_row(cm.load_preset("transmon_q1m_10ghz"))
    assert row.budget.eps_total == pytest.approx(0.53e-3, rel=0.20)


@settings(max_examples=50, deadline=None)
@given(quality=st.floats(1e3, 1e7), eta=st.floats(1e-4, 1e-2), m=st.integers(1, 500),
       n_bar=st.floats(0, 0.5), tau_c=st.floats(0.5, 50), shift=st.floats(0, 1e-4))
def test_budget_terms_are_probabilities(quality, eta, m, n_bar, tau_c, shift):
    delta = gd.closure_solutions(0.05, [m])[0].delta_m
    budget = eb.compute_budget(flux_inputs(quality=quality, eta_minus=eta, m=m, n_bar=n_bar,
                                           tau_c=tau_c, dispersive_shift=shift, delta_m=delta))
    for value in (budget.eps_dalpha, budget.eps_force, budget.dephasing_rate * budget.t_pi):
        assert value >= 0
    assert budget.eps_total >= budget.eps_force


@settings(max_examples=40, deadline=None)
@given(q1=st.floats(1e3, 1e7), q2=st.floats(1e3, 1e7))
def test_force_error_falls_with_quality(q1, q2):
    lo, hi = sorted((q1, q2))
    assert eb.thermal_force_error(hi, 4.5e-3, 100, 12) <= eb.thermal_force_error(lo, 4.5e-3, 100, 12)


def test_lossless_budget_vanishes():
    budget = eb.compute_budget(flux_inputs(quality=math.inf, n_bar=0.0, dispersive_shift=0.0))
    assert budget.eps_total == 0.0


def test_echo_simulation_suppresses_single_segment_residual():
    coupling = cm.CouplingDerived.uniform(2, 4.5e-3, dispersive_shift=3.57e-5)
    branches = bd.enumerate_branches(2)
    echo = bd.run_gate(bd.DriveProgram.echo(50, 1562), branches, coupling, 25000.0)
    single = bd.run_gate(bd.DriveProgram.single(100, 3125), branches, coupling, 25000.0)
    assert single.residual_sq >= 10 * echo.residual_sq


def echo_ratio(name):
    inputs = eb.budget_inputs_from_preset(cm.load_preset(name))
    half = gd.closure_solutions(inputs.delta_m, [max(inputs.m // 2, 1)])[0]
    coupling = cm.CouplingDerived.uniform(2, inputs.eta_minus,
                                          dispersive_shift=inputs.dispersive_shift)
    outcome = bd.run_gate(bd.DriveProgram.echo(half.m, half.k), bd.enumerate_branches(2),
                          coupling, inputs.quality)
    return outcome.residual_sq / eb.compute_budget(inputs).dalpha_sq


@pytest.mark.xfail(strict=True, reason="the echoed residual closed form drops terms of order "
                   "(domega tau)^2, which are not small for the catalog rows")
def test_echo_residual_matches_closed_form_for_all_rows():
    rows = [p for p in cm.list_presets() if cm.load_preset(p).circuit.quality <= 1e6]
    ratios = {name: echo_ratio(name) for name in rows}
    print({k: round(v, 4) for k, v in ratios.items()})
    assert all(abs(r - 1) <= 0.10 for r in ratios.values())
