"""Discrete sharp embedding constants ``sup ||u||_{p+1} / ||grad u||_2``.

The supremum is taken over grid fields with homogeneous Dirichlet data, so
every number produced here is relative to the grid it was computed on.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .model import SpatialGrid

log = logging.getLogger(__name__)


@dataclass
class EmbeddingEstimate:
    p: float
    gamma: float
    maximizer: np.ndarray
    iterations: int
    residual: float
    converged: bool

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "gamma": self.gamma,
            "iterations": self.iterations,
            "residual": self.residual,
            "converged": self.converged,
        }


def seed_fields(grid: SpatialGrid, n_starts: int = 8, seed: int = 0) -> list[np.ndarray]:
    """Ground state of ``-Lap_h`` followed by smooth random perturbations of it."""
    rng = np.random.default_rng(seed)
    e1 = grid.first_eigenvector()
    e1 = e1 / np.sqrt(grid.grad_sq(e1))
    fields = [e1]
    for k in range(1, n_starts):
        noise = grid.solve_poisson(rng.standard_normal(grid.shape))
        noise /= np.sqrt(grid.grad_sq(noise))
        fields.append(e1 + (0.2 + 0.1 * k) * noise)
    return fields


def _normalize(grid: SpatialGrid, u: np.ndarray) -> np.ndarray:
    return u / np.sqrt(grid.grad_sq(u))


def sphere_ascent(grid, u, value_and_grad, max_iter=100_000, tol=1e-10, window=50):
    """Monotone ascent of a 0-homogeneous objective on ``||grad u|| = 1``.

    ``value_and_grad(u)`` returns the objective and its Euclidean gradient
    (with respect to the ``h``-weighted L2 inner product). The gradient is
    mapped to ``H^1_0`` by a Poisson solve, projected onto the tangent space
    and the step is backtracked so accepted values never decrease.

    Returns ``(u, value, iterations, residual, converged)``.
    """
    u = _normalize(grid, u)
    val, egrad = value_and_grad(u)
    history = [val]
    eta = 1.0
    residual = np.inf
    it = 0
    converged = False
    for it in range(1, max_iter + 1):
        g = grid.solve_poisson(egrad)
        g = g - grid.grad_inner(g, u) * u
        gnorm = float(np.sqrt(grid.grad_sq(g)))
        residual = gnorm / max(abs(val), 1e-300)
        if residual < 1e-14:
            converged = True
            break
        direction = g / gnorm
        accepted = False
        for _ in range(60):
            trial = _normalize(grid, u + eta * direction)
            tval, tgrad = value_and_grad(trial)
            if tval >= val:
                accepted = True
                break
            eta *= 0.5
        if not accepted:
            # no ascent direction left at machine precision
            converged = True
            break
        u, val, egrad = trial, tval, tgrad
        eta = min(eta * 1.5, 1.0)
        history.append(val)
        if len(history) > window:
            old = history[-window - 1]
            if abs(val - old) <= tol * abs(val):
                converged = True
                break
    return u, val, it, residual, converged


def estimate_gamma(
    grid: SpatialGrid,
    p: float,
    n_starts: int = 8,
    max_iter: int = 100_000,
    tol: float = 1e-10,
    seed: int = 0,
    starts: list[np.ndarray] | None = None,
) -> EmbeddingEstimate:
    """Best constant in ``||u||_{p+1} <= gamma ||grad u||_2`` on ``grid``.

    Runs :func:`sphere_ascent` on ``R(u) = ||u||_{p+1}`` from ``n_starts``
    deterministic seeds and keeps the best result. ``NoConvergence`` is
    reported through ``converged=False`` with the best field found so far.
    """
    if p < 1:
        raise ValueError(f"embedding exponent p must be >= 1, got {p}")
    q = p + 1.0

    def value_and_grad(u):
        n = grid.lp_pow(u, q)
        r = n ** (1.0 / q)
        # d r = r / (q n) * q |u|^{q-2} u
        return r, r / n * np.abs(u) ** (q - 2.0) * u

    fields = starts if starts is not None else seed_fields(grid, n_starts, seed)
    best = None
    for u0 in fields:
        u0 = grid.check(u0)
        if not np.any(u0):
            u0 = grid.first_eigenvector()
        u, val, it, res, conv = sphere_ascent(grid, u0, value_and_grad, max_iter, tol)
        if best is None or val > best.gamma:
            best = EmbeddingEstimate(float(p), float(val), u, it, float(res), conv)
    # report gamma exactly as the norm of the returned maximizer
    best.gamma = float(grid.lp_norm(best.maximizer, q))
    if not best.converged:
        log.warning("gamma estimate for p=%g did not converge in %d iterations", p, max_iter)
    return best
