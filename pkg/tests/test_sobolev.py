import math

import numpy as np
import pytest

from viscowell.model import SpatialGrid, sine_field
from viscowell.sobolev import estimate_gamma, seed_fields, sphere_ascent


@pytest.fixture(scope="module")
def grid():
    return SpatialGrid((math.pi,), (100,))


def test_p1_is_inverse_sqrt_of_first_discrete_eigenvalue(grid):
    # ||u||_2 <= gamma ||grad u||_2 is sharp at the ground state
    h = grid.h[0]
    lam1 = 2.0 * (1.0 - math.cos(h)) / h**2
    est = estimate_gamma(grid, 1.0)
    assert est.gamma == pytest.approx(1.0 / math.sqrt(lam1), rel=1e-8)
    assert est.converged


def test_gamma_is_norm_of_maximizer(grid):
    est = estimate_gamma(grid, 3.0)
    u = est.maximizer
    assert float(grid.grad_sq(u)) == pytest.approx(1.0, rel=1e-12)
    assert est.gamma == pytest.approx(float(grid.lp_norm(u, 4.0)), rel=1e-14)


def test_gamma_bounds_random_fields(grid):
    est = estimate_gamma(grid, 3.0)
    rng = np.random.default_rng(3)
    for _ in range(20):
        u = grid.solve_poisson(rng.standard_normal(grid.shape))
        ratio = float(grid.lp_norm(u, 4.0) / math.sqrt(grid.grad_sq(u)))
        assert ratio <= est.gamma * (1 + 1e-9)


def test_seed_fields_are_deterministic(grid):
    a = seed_fields(grid, 4, seed=7)
    b = seed_fields(grid, 4, seed=7)
    assert len(a) == 4
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)


def test_sphere_ascent_stays_on_sphere(grid):
    def value_and_grad(u):
        n = float(grid.lp_pow(u, 4.0))
        return n, 4.0 * u**3

    u, val, it, res, conv = sphere_ascent(grid, sine_field(grid, 1.0) + 0.1 * sine_field(grid, 1.0, 2), value_and_grad)
    assert float(grid.grad_sq(u)) == pytest.approx(1.0, rel=1e-12)
    assert val == pytest.approx(float(grid.lp_pow(u, 4.0)), rel=1e-12)


def test_p_below_one_rejected(grid):
    with pytest.raises(ValueError):
        estimate_gamma(grid, 0.5)
