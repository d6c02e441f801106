import math

import numpy as np
import pytest
from scipy import optimize

from viscowell.errors import Inapplicable, ZeroField
from viscowell.model import HistoryProfile, SourceSpec, SpatialGrid, make_kernel, sine_field
from viscowell.sim import Problem, SolverConfig, init_state
from viscowell.well import (
    big_g,
    classify_membership,
    compute_constants,
    compute_d0,
    compute_l0,
    estimate_d,
    find_y0,
    find_y_star,
    i0_value,
    i_value,
    j_functional,
    lambda_star,
    membership_label,
)

CUBIC = SourceSpec(((1.0, 3.0),))
EXP = make_kernel({"family": "exponential_sum", "terms": [[1.0, 1.0]]})


@pytest.fixture(scope="module")
def grid():
    return SpatialGrid((math.pi,), (100,))


def test_cubic_constants_by_hand():
    # G(y) = y - y^2 for gamma = 1
    y0 = find_y0(CUBIC, [1.0])
    assert y0 == pytest.approx(0.5, abs=1e-10)
    assert compute_d0(CUBIC, [1.0], y0) == pytest.approx(0.25, abs=1e-10)
    l0 = compute_l0(CUBIC, 2.0)
    assert l0 == math.sqrt(2.0)
    y_star, M = find_y_star(CUBIC, [1.0], l0)
    assert y_star == pytest.approx((1 + math.sqrt(2)) / 4, abs=1e-10)
    assert M == pytest.approx(y_star * (3 - math.sqrt(2)) / 4, abs=1e-8)


def test_two_term_maximiser_matches_scalar_optimiser():
    src = SourceSpec(((0.7, 2.5), (0.3, 4.0)))
    gammas = [0.9, 0.6]
    y0 = find_y0(src, gammas)
    res = optimize.minimize_scalar(lambda y: -big_g(y, src, gammas), bounds=(0.0, 10.0), method="bounded",
                                   options={"xatol": 1e-12})
    assert y0 == pytest.approx(res.x, abs=1e-6)
    assert compute_d0(src, gammas, y0) == pytest.approx(-res.fun, rel=1e-10)


def test_g_maximum_dominates():
    src = SourceSpec(((1.0, 3.0), (2.0, 5.0)))
    gammas = [0.8, 0.5]
    y0 = find_y0(src, gammas)
    ys = np.linspace(0.0, 5 * y0, 2001)
    assert np.all(big_g(ys, src, gammas) <= big_g(y0, src, gammas) + 1e-15)


def test_y_star_inapplicable_below_l0():
    src = SourceSpec(((1.0, 1.2),))
    with pytest.raises(Inapplicable):
        find_y_star(src, [1.0], compute_l0(src, 2.0))
    c = compute_constants(SpatialGrid((math.pi,), (20,)), src, EXP, gamma_override=[1.0], estimate_depth=False)
    assert c.y_star is None and c.M_threshold is None


def test_l0_uses_largest_sink():
    src = SourceSpec(((1.0, 3.0),), ((1.0, 2.5),))
    assert compute_l0(src, 2.0) == 2.5


def test_lambda_star_is_on_nehari_manifold(grid):
    u = sine_field(grid, 0.3) + sine_field(grid, 0.1, 3)
    src = SourceSpec(((1.0, 3.0), (0.5, 4.0)), ((2.0, 2.0),))
    lam = lambda_star(grid, u, src)
    v = lam * u
    assert i0_value(grid, v, 0.0, src) == pytest.approx(0.0, abs=1e-10 * float(grid.grad_sq(v)))
    # J along the ray peaks at lam
    js = [j_functional(grid, s * v, src) for s in (0.9, 1.0, 1.1)]
    assert js[1] >= max(js[0], js[2])


def test_lambda_star_zero_field(grid):
    with pytest.raises(ZeroField):
        lambda_star(grid, grid.zeros(), CUBIC)


def test_depth_estimate_between_bounds(grid):
    c = compute_constants(grid, CUBIC, EXP, estimate_depth=True, n_starts=2)
    e1 = sine_field(grid, 1.0)
    ray = j_functional(grid, lambda_star(grid, e1, CUBIC) * e1, CUBIC)
    assert c.d >= c.d0 - 1e-6
    assert c.d <= ray + 1e-12
    # for a single power the lower bound is attained by the ground state
    assert abs(c.d - c.d0) / c.d0 < 1e-6


def test_sink_raises_depth(grid):
    src = SourceSpec(((1.0, 3.0),), ((1.0, 2.0),))
    est = estimate_d(grid, src, n_starts=2)
    plain = estimate_d(grid, CUBIC, n_starts=2)
    assert est.d > plain.d


def test_i_and_i0_relation(grid):
    u = sine_field(grid, 0.7)
    mem = 0.05
    g2 = float(grid.grad_sq(u))
    l4 = float(grid.lp_pow(u, 4.0))
    assert i_value(grid, u, mem, CUBIC) == pytest.approx(0.5 * (g2 + mem) - 0.25 * l4, rel=1e-14)
    assert i0_value(grid, u, mem, CUBIC) == pytest.approx(g2 + mem - l4, rel=1e-14)


@pytest.mark.parametrize(
    "I, I0, depth, zero, label",
    [
        (0.1, 0.5, 0.25, False, "W1"),
        (0.1, -0.5, 0.25, False, "W2"),
        (0.3, 0.5, 0.25, False, "OutsideWell"),
        (0.1, 1e-12, 0.25, False, "Boundary"),
        (0.0, 0.0, 0.25, True, "W1"),
    ],
)
def test_membership_labels(I, I0, depth, zero, label):
    assert membership_label(I, I0, 1.0, depth, zero) == label


def test_classify_membership_of_state(grid):
    c = compute_constants(grid, CUBIC, EXP, gamma_override=[1.0], estimate_depth=False)
    hist = HistoryProfile("constant", sine_field(grid, 0.3), grid.zeros())
    state = init_state(Problem(grid, hist, EXP, CUBIC, 1.0), SolverConfig(0.01, 1.0))
    m = classify_membership(state, c, CUBIC)
    assert m.label == "W1"
    assert m.I0_value > 0
