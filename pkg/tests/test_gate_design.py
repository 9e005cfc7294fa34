import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from longigate import branch_dynamics as bd
from longigate import circuit_model as cm
from longigate import gate_design as gd
from longigate.circuit_model import ConfigError, CouplingDerived

OMEGA_10GHZ = 2 * math.pi * 10e9


def ideal_gate(delta_hint, m, eta_plus=0.0, quality=math.inf):
    closure = gd.closure_solutions(delta_hint, [m])[0]
    program = bd.DriveProgram.single(closure.m, closure.k)
    eta = gd.amplitude_for_cphase(closure.delta_m, closure.m)
    coupling = CouplingDerived.uniform(2, eta, eta_plus=eta_plus)
    outcome = bd.run_gate(program, bd.enumerate_branches(2), coupling, quality)
    return closure, eta, outcome


def test_closure_small_example():
    (sol,) = gd.closure_solutions(0.1, [1])
    assert (sol.m, sol.k) == (1, 20)
    assert sol.delta_m == 0.1
    assert sol.tau_pi == pytest.approx(20 * math.pi)
    assert sol.delta_m * sol.tau_pi / (2 * math.pi) == pytest.approx(1.0)


def test_closure_flux_row():
    (sol,) = gd.closure_solutions(0.064, [100])
    assert sol.k == 3125
    assert sol.delta_m == pytest.approx(0.064, abs=1e-15)


def test_closure_range_skips_nonpositive_m():
    sols = gd.closure_solutions(0.2, (0, 3))
    assert [s.m for s in sols] == [1, 2, 3]
    with pytest.raises(ConfigError):
        gd.closure_solutions(0.2, [0])
    with pytest.raises(ConfigError):
        gd.closure_solutions(1.5, [1])


@settings(max_examples=100, deadline=None)
@given(hint=st.floats(1e-3, 0.99), m=st.integers(1, 10_000))
def test_closure_identities_exact(hint, m):
    (sol,) = gd.closure_solutions(hint, [m])
    assert sol.k > 2 * sol.m
    assert sol.delta_m == 2 * sol.m / sol.k
    assert sol.tau_pi == math.pi * sol.k
    assert sol.delta_m * sol.tau_pi == pytest.approx(2 * math.pi * sol.m, rel=1e-14)


def test_amplitude_examples():
    assert gd.amplitude_for_cphase(0.064, 100) == pytest.approx(4.60e-3, rel=5e-3)
    # 0.014 sqrt(2.014 / 200) = 1.405e-3
    assert gd.amplitude_for_cphase(0.014, 50) == pytest.approx(1.405e-3, rel=1e-3)
    assert gd.amplitude_for_cphase(1e-9, 10) < 1e-9


def test_amplitude_gives_target_in_closed_form():
    for delta, m in [(0.064, 100), (0.014, 50), (0.3, 2)]:
        eta = gd.amplitude_for_cphase(delta, m)
        assert gd.conditional_phase_closed_form(delta, m, eta) == pytest.approx(math.pi / 2)


def test_gate_time_examples():
    assert gd.gate_time(0.064, 4.5e-3, OMEGA_10GHZ) == pytest.approx(158e-9, rel=5e-3)
    assert gd.gate_time(0.014, 1.4e-3, OMEGA_10GHZ) == pytest.approx(357e-9, rel=5e-3)
    ratio = gd.gate_time(0.064, 2.25e-3, OMEGA_10GHZ) / gd.gate_time(0.064, 4.5e-3, OMEGA_10GHZ)
    assert ratio == pytest.approx(4.0)
    with pytest.raises(ConfigError):
        gd.gate_time(0.0, 1e-3, OMEGA_10GHZ)


def test_closure_time_matches_simulated_program():
    sol = gd.ClosureSolution.from_integers(100, 3125, OMEGA_10GHZ)
    program = bd.DriveProgram.single(100, 3125)
    assert sol.t_pi * OMEGA_10GHZ == pytest.approx(math.pi * 3125, rel=1e-15)
    assert program.total_duration == pytest.approx(sol.tau_pi, rel=1e-15)


def test_equal_phases_have_no_structure():
    signs = np.array(list(itertools.product((1, -1), repeat=3)))
    dec = gd.phase_decomposition(signs=signs, phases=np.full(8, 0.7))
    assert dec.identity == pytest.approx(0.7)
    assert all(abs(v) < 1e-15 for key, v in dec.coefficients.items() if key)


@settings(max_examples=50, deadline=None)
@given(n=st.integers(1, 4), data=st.data())
def test_walsh_round_trip(n, data):
    signs = np.array(list(itertools.product((1, -1), repeat=n)))
    phases = np.array(data.draw(st.lists(st.floats(-10, 10), min_size=2**n, max_size=2**n)))
    dec = gd.phase_decomposition(signs=signs, phases=phases)
    rebuilt = [dec.reconstruct(s) for s in signs]
    np.testing.assert_allclose(rebuilt, phases, atol=1e-12)


def test_walsh_rejects_bad_branch_count():
    with pytest.raises(ConfigError):
        gd.walsh_coefficients(np.ones((3, 2)), np.zeros(3))


@pytest.mark.parametrize("name", [p for p in cm.list_presets()
                                  if cm.load_preset(p).drive_hints.delta_m <= 0.1])
def test_ideal_gate_conditional_phase(name):
    hints = cm.load_preset(name).drive_hints
    _, _, outcome = ideal_gate(hints.delta_m, hints.m)
    dec = gd.phase_decomposition(outcome)
    # the enclosed-area orientation gives a negative coefficient; magnitude is what is pinned
    assert abs(dec.conditional_phase) == pytest.approx(math.pi / 2, rel=5e-3)
    assert outcome.closure_defect < 1e-9


def test_single_qubit_terms_from_common_force():
    eta_plus = 7e-4
    closure, eta, outcome = ideal_gate(0.1, 1, eta_plus=eta_plus)
    dec = gd.phase_decomposition(outcome)
    expected = gd.single_qubit_phase_closed_form(closure.delta_m, 1, eta, eta_plus)
    assert expected == pytest.approx(2 * math.pi * 2 * eta * eta_plus
                                     / (closure.delta_m**2 * (2 + closure.delta_m)))
    for value in dec.single:
        assert abs(value) == pytest.approx(expected, rel=5e-3)
    assert abs(dec.conditional_phase) == pytest.approx(math.pi / 2, rel=5e-3)


def test_bystander_leaves_conditional_phase():
    closure = gd.closure_solutions(0.1, [1])[0]
    program = bd.DriveProgram.single(closure.m, closure.k)
    eta = gd.amplitude_for_cphase(closure.delta_m, 1)
    pair = bd.run_gate(program, bd.enumerate_branches(2), CouplingDerived.uniform(2, eta), math.inf)
    trio_coupling = CouplingDerived.uniform(3, eta, eta_plus=3e-4)
    trio_coupling = trio_coupling.with_values(eta_plus=(0.0, 0.0, 3e-4))
    trio = bd.run_gate(program, bd.enumerate_branches(3, modulated=(True, True, False)),
                       trio_coupling, math.inf)
    c_pair = gd.phase_decomposition(pair).conditional_phase
    c_trio = gd.phase_decomposition(trio).conditional_phase
    assert c_trio == pytest.approx(c_pair, rel=1e-9)


def flux_constraints(**kw):
    base = dict(eta_max=4.6e-3, quality=25000.0, n_bar=6e-6, dispersive_shift=3.6e-5,
                omega_r=OMEGA_10GHZ, tau_c=13.1)
    base.update(kw)
    return gd.DesignConstraints(**base)


def test_optimizer_flux_row():
    result = gd.optimize(flux_constraints())
    assert result.feasible
    assert result.budget.eps_total == pytest.approx(2.0e-3, rel=0.25)
    assert result.eta_minus <= 4.6e-3
    assert result.closure.delta_m == 2 * result.closure.m / result.closure.k


def test_optimizer_picks_the_best_scored_candidate():
    result = gd.optimize(flux_constraints(m_range=(1, 40)))
    assert result.candidates == sorted(result.candidates)
    assert min(e for _, e in result.candidates) == result.budget.eps_total
    again = gd.optimize(flux_constraints(m_range=(1, 40)))
    assert again.closure == result.closure


def test_optimizer_lossless_limit_prefers_fastest_gate():
    result = gd.optimize(flux_constraints(quality=math.inf, n_bar=0.0, dispersive_shift=0.0,
                                          tau_c=math.inf, eta_max=1e-3))
    assert result.budget.eps_total == 0.0
    assert result.closure.m == 1


def test_tighter_amplitude_bound_never_speeds_gate():
    times = [gd.optimize(flux_constraints(eta_max=e, m_range=(1, 60))).budget.t_pi
             for e in (4.6e-3, 3e-3, 2e-3, 1e-3)]
    assert times == sorted(times)


def test_optimizer_reports_infeasible():
    result = gd.optimize(flux_constraints(eta_max=0.9, m_range=(1, 1)))
    assert not result.feasible
    assert "bound" in result.message


def test_constraints_validated():
    with pytest.raises(ConfigError):
        flux_constraints(eta_max=-1.0)
    with pytest.raises(ConfigError):
        flux_constraints(m_range=(5, 2))


def flux_comparison(source_minus=7.865e-9):
    return gd.CqedComparisonInput(
        beta_r=25 / 275, delta_m=0.064, resonator_element=275e-12, source_minus=source_minus,
        beta_r_cqed=0.1, delta_q=0.1, omega_r=OMEGA_10GHZ, impedance=18.1,
    )


def test_cqed_rates_scale():
    ours, cqed = gd.cqed_comparison(flux_comparison())
    ours2, cqed2 = gd.cqed_comparison(flux_comparison(2 * 7.865e-9))
    assert ours2 == pytest.approx(4 * ours)
    assert cqed2 == cqed
    with pytest.raises(ConfigError):
        gd.cqed_comparison(gd.CqedComparisonInput(1, 0.0, 1, 1, 1, 1, 1, 1))


def test_cqed_rate_consistent_with_full_gate():
    ours, _ = gd.cqed_comparison(flux_comparison())
    closure = gd.ClosureSolution.from_integers(100, 3125, OMEGA_10GHZ)
    full = (math.pi / 2) / closure.t_pi
    assert 0.5 <= ours / full <= 2.0
