import math

import numpy as np
import pytest
from conftest import experiment, preset_run

from viscowell import runner
from viscowell.diag import (
    EnergyTrace,
    TRACE_COLUMNS,
    alpha_bounds,
    blowup_functional,
    choose_alpha_eps,
    concave_decreasing,
    decay_envelope,
    detect_blowup,
    dissipation_D,
    energy_identity_residual,
    fit_decay,
    identity_residuals,
    initial_energies,
    invert_identity_plus,
    resolved_length,
)
from viscowell.errors import InsufficientDecay, NotInBlowupRegime
from viscowell.model import HistoryProfile, SourceSpec, SpatialGrid, make_kernel, sine_field
from viscowell.sim import Problem, SolverConfig, run

EXP = make_kernel({"family": "exponential_sum", "terms": [[1.0, 1.0]]})
CUBIC = SourceSpec(((1.0, 3.0),))


def _synthetic(t, E):
    return EnergyTrace.from_arrays(t=t, total_energy=E, quad_energy=E)


def test_fit_exponential_exact():
    t = np.linspace(0.0, 5.0, 101)
    fit = fit_decay(_synthetic(t, 3.0 * np.exp(-2.0 * t)), "exponential")
    assert fit.rate == pytest.approx(2.0, abs=1e-12)
    assert fit.amplitude == pytest.approx(3.0, rel=1e-10)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-10)


def test_fit_power_exact():
    t = np.linspace(0.0, 50.0, 201)
    fit = fit_decay(_synthetic(t, 1.0 / (1.0 + t)), "power")
    assert fit.rate == pytest.approx(-1.0, abs=1e-12)


def test_fit_window_and_failures():
    t = np.linspace(0.0, 5.0, 101)
    E = 3.0 * np.exp(-2.0 * t)
    assert fit_decay(_synthetic(t, E), "exponential", window=(0.0, 1.0)).n_points == 21
    with pytest.raises(InsufficientDecay):
        fit_decay(_synthetic(t, E), "exponential", window=(0.0, 0.1))
    with pytest.raises(InsufficientDecay):
        fit_decay(_synthetic(t, 1.0 + 0.5 * np.sin(5 * t)), "exponential")


def test_fit_default_window_stops_at_floor():
    t = np.linspace(0.0, 100.0, 1001)
    E = np.exp(-t)
    fit = fit_decay(_synthetic(t, E), "exponential")
    assert fit.rate == pytest.approx(1.0, abs=1e-10)
    assert fit.n_points < 200


def test_blowup_time_of_exact_power():
    t = np.linspace(0.0, 0.99, 991)
    trace = EnergyTrace.from_arrays("BlowupThreshold", t=t, grad_norm=1.0 / (1.0 - t))
    det = detect_blowup(trace)
    assert det.blew_up
    assert det.T_est == pytest.approx(1.0, abs=0.01)
    assert det.beta == pytest.approx(1.0, abs=0.01)


def test_bounded_run_is_not_blowup():
    t = np.linspace(0.0, 1.0, 11)
    det = detect_blowup(EnergyTrace.from_arrays("Completed", t=t, grad_norm=np.ones_like(t)))
    assert (det.blew_up, det.T_est, det.concavity_ok) == (False, math.inf, None)


def test_concave_decreasing():
    t = np.linspace(0.0, 1.0, 50)
    assert concave_decreasing(t, 1.0 - t**2)
    assert not concave_decreasing(t, np.exp(-t))
    assert not concave_decreasing(t, t)


@pytest.mark.parametrize("pr, m, bounds, alpha", [(3.0, 1.0, (0.25, 0.25), 0.125), (5.0, 2.0, (1 / 6, 1 / 3), 1 / 12)])
def test_alpha_choices(pr, m, bounds, alpha):
    assert alpha_bounds(pr, m) == pytest.approx(bounds, abs=1e-15)
    a, eps = choose_alpha_eps(SourceSpec(((1.0, pr),)), m, 1.0, 0.5)
    assert a == pytest.approx(alpha, abs=1e-15)
    assert eps == 1.0


def test_eps_bound_for_negative_n_prime():
    a, eps = choose_alpha_eps(CUBIC, 1.0, 4.0, -10.0)
    assert eps == pytest.approx(4.0 ** (1 - a) / 20.0)


def test_blowup_functional_needs_positive_h():
    t = np.linspace(0.0, 1.0, 5)
    trace = EnergyTrace.from_arrays(t=t, total_energy=np.full(5, 0.1))
    with pytest.raises(NotInBlowupRegime):
        blowup_functional(trace, CUBIC, 1.0)
    with pytest.raises(NotInBlowupRegime):
        choose_alpha_eps(SourceSpec(((1.0, 1.5),)), 2.0, 1.0, 0.0)
    bf = blowup_functional(trace, CUBIC, 1.0, M=0.5)
    np.testing.assert_allclose(bf.H, 0.4)


def test_envelope_without_phi_is_exponential():
    t = np.linspace(0.0, 3.0, 7)
    S = decay_envelope(2.0, (0.0, 1.0), t)
    np.testing.assert_allclose(S, 2.0 * np.exp(-t), rtol=2e-3)


def test_envelope_linear_case_closed_form():
    C1 = 0.5
    t = np.linspace(0.0, 4.0, 9)
    S = decay_envelope(1.0, (C1, 1.0), t)
    np.testing.assert_allclose(S, np.exp(-t / (1 + 2 * C1)), atol=1e-4)
    assert np.all(np.diff(S) <= 0) and np.all(S >= 0)


def test_envelope_cubic_damping_slope():
    t = np.array([200.0, 400.0, 800.0])
    S = decay_envelope(1.0, (1.0, 3.0), t, dt=0.05)
    slope = np.polyfit(np.log(t), np.log(S), 1)[0]
    assert slope == pytest.approx(-1.0, abs=0.05)


def test_invert_identity_plus():
    x = invert_identity_plus(lambda y: 2.0 * y, 3.0)
    assert x == pytest.approx(1.0, rel=1e-14)
    assert invert_identity_plus(lambda y: y, 0.0) == 0.0


def test_trace_csv_round_trip(tmp_path):
    grid = SpatialGrid((math.pi,), (31,))
    p = Problem(grid, HistoryProfile("constant", sine_field(grid, 0.3), grid.zeros()), EXP, CUBIC, 1.0)
    trace, _, _ = run(p, SolverConfig(0.02, 1.0, sample_every=5))
    trace.to_csv(tmp_path / "trace.csv")
    header = (tmp_path / "trace.csv").read_text().splitlines()[0]
    assert header == ",".join(TRACE_COLUMNS)
    back = EnergyTrace.from_csv(tmp_path / "trace.csv")
    for c in TRACE_COLUMNS:
        np.testing.assert_array_equal(getattr(back, c), getattr(trace, c))


def test_csv_missing_columns(tmp_path):
    (tmp_path / "bad.csv").write_text("t,total_energy\n0,1\n")
    with pytest.raises(ValueError):
        EnergyTrace.from_csv(tmp_path / "bad.csv")


def test_dissipation_matches_trapezoid_and_identity():
    grid = SpatialGrid((math.pi,), (31,))
    p = Problem(grid, HistoryProfile("constant", sine_field(grid, 0.5), grid.zeros()), EXP, CUBIC, 2.0)
    trace, _, _ = run(p, SolverConfig(0.01, 2.0))
    D = dissipation_D(trace)
    np.testing.assert_allclose(D, trace.dissipation, rtol=1e-12, atol=1e-16)
    assert np.all(np.diff(D) >= 0)
    res, _ = energy_identity_residual(trace)
    np.testing.assert_allclose(trace.total_energy[0] - trace.total_energy, D, atol=res * (1 + 1e-9))


def test_zero_data_residual():
    grid = SpatialGrid((math.pi,), (31,))
    p = Problem(grid, HistoryProfile("constant", grid.zeros(), grid.zeros()), EXP, CUBIC, 1.0)
    trace, _, _ = run(p, SolverConfig(0.02, 1.0))
    assert energy_identity_residual(trace)[0] == 0.0
    assert np.all(dissipation_D(trace) == 0.0)


def test_conservative_residual_is_second_order():
    grid = SpatialGrid((math.pi,), (31,))
    p = Problem(grid, HistoryProfile("constant", sine_field(grid, 1.0), grid.zeros()), None, None, None)
    coarse, _, _ = run(p, SolverConfig(0.02, 2.0))
    fine, _, _ = run(p, SolverConfig(0.01, 2.0))
    res, order = energy_identity_residual(coarse, fine)
    assert res > 0
    assert order == pytest.approx(2.0, abs=0.1)


def test_resolved_length_cuts_garbage():
    t = np.linspace(0.0, 1.0, 11)
    E = -np.ones(11)
    E[8:] = 5.0
    trace = EnergyTrace.from_arrays(t=t, total_energy=E, quad_energy=np.ones(11))
    assert resolved_length(trace) == 8
    assert len(identity_residuals(trace)) == 11


def test_initial_energy_of_sine_data():
    # E = c^2 pi/4 - (c^4/4)(3 pi/8) + O(h^2), no memory for a constant history
    grid = SpatialGrid((math.pi,), (400,))
    for c in (0.5, 2.0):
        p = Problem(grid, HistoryProfile("constant", sine_field(grid, c), grid.zeros()), EXP, CUBIC, 1.0)
        e = initial_energies(p)
        exact = c * c * math.pi / 4 - c**4 / 4 * 3 * math.pi / 8
        assert e.E0 == pytest.approx(exact, abs=1e-4 * max(1.0, abs(exact)))
        assert e.memory_norm == 0.0


def test_separable_history_quadratic_energy():
    grid = SpatialGrid((math.pi,), (63,))
    u0 = sine_field(grid, 0.3)
    p = Problem(grid, HistoryProfile("separable", u0, grid.zeros(), profile="exp", rate=1.0), EXP, CUBIC, 1.0)
    e = initial_energies(p)
    assert e.quad0 == pytest.approx(0.5 * float(grid.grad_sq(u0)) * (1 + 1 / 3), rel=1e-9)


def test_classify_examples():
    assert "GlobalByTheorem4.2" in runner.classify_report(experiment("sink-dominant"))["verdicts"]
    small = runner.classify_report(experiment("decay-m1-expkernel"))
    assert small["verdicts"] == ["GlobalByTheorem4.3", "DecayCaseI"]
    neg = runner.classify_report(experiment("blowup-negE"))
    assert neg["verdicts"] == ["BlowupByTheorem6.1"]
    clauses = {c["clause"]: c["pass"] for c in neg["hypotheses"]["Theorem6.1"]}
    assert clauses["E(0) < 0"] and clauses["p_r > m"]


def test_w2_invariance_before_blowup():
    _, trace, _ = preset_run("blowup-negE")
    n = resolved_length(trace)
    assert np.all(trace.I0[:n] < 0)


def test_power_law_classified_as_case_iii():
    report = runner.classify_report(experiment("decay-powerlaw"))
    assert "DecayCaseIII" in report["verdicts"]
