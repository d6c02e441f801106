"""Potential-well constants and well membership.

The scalar function ``G(y) = y - sum a_i/(p_i+1) (2 gamma_i^2 y)^((p_i+1)/2)``
bounds the total energy from below in terms of the quadratic energy ``y``.
Its maximiser ``y0`` and maximum ``d0`` give a certified lower bound for the
well depth ``d``; ``y_star`` and ``M = G(y_star)`` are the positive-energy
blow-up threshold. Every root is found by bisection on a monotone function.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import Inapplicable, InconsistentG, ZeroField
from .model import RelaxationKernel, SourceSpec, SpatialGrid
from .sobolev import EmbeddingEstimate, estimate_gamma, seed_fields, sphere_ascent

log = logging.getLogger(__name__)


def bisect_increasing(fn: Callable[[float], float], target: float, rtol: float = 1e-12) -> float:
    """Positive root of ``fn(y) = target`` for ``fn`` increasing with ``fn(0) < target``."""
    lo, hi = 0.0, 1.0
    while fn(hi) <= target:
        lo, hi = hi, 2.0 * hi
        if hi > 1e300:
            raise ArithmeticError("bracket expansion overflowed")
    while hi - lo > rtol * (1.0 + lo):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if fn(mid) <= target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def big_g(y: float, source: SourceSpec, gammas: Sequence[float]) -> float:
    y = np.asarray(y, dtype=float)
    out = y.copy()
    for (a, p), g in zip(source.positive_terms, gammas):
        out = out - a / (p + 1.0) * (2.0 * g * g * y) ** ((p + 1.0) / 2.0)
    return out if out.ndim else float(out)


def _weighted_power_sum(source, gammas, y, weights=None):
    total = 0.0
    for i, ((a, p), g) in enumerate(zip(source.positive_terms, gammas)):
        w = 1.0 if weights is None else weights[i]
        total += w * a * (2.0 * g * g) ** ((p + 1.0) / 2.0) * y ** ((p - 1.0) / 2.0)
    return total


def find_y0(source: SourceSpec, gammas: Sequence[float]) -> float:
    """Maximiser of ``G``: root of ``sum a_i (2 gamma_i^2)^((p_i+1)/2) y^((p_i-1)/2) = 2``."""
    return bisect_increasing(lambda y: _weighted_power_sum(source, gammas, y), 2.0)


def compute_d0(source: SourceSpec, gammas: Sequence[float], y0: float) -> float:
    d0 = sum(
        (0.5 - 1.0 / (p + 1.0)) * a * (2.0 * g * g * y0) ** ((p + 1.0) / 2.0)
        for (a, p), g in zip(source.positive_terms, gammas)
    )
    if abs(d0 - big_g(y0, source, gammas)) > 1e-10 * max(1.0, abs(d0)):
        raise InconsistentG(f"d0={d0!r} but G(y0)={big_g(y0, source, gammas)!r}")
    return float(d0)


def compute_l0(source: SourceSpec, k0: float) -> float:
    return max(source.qs or 0.0, math.sqrt(k0))


def find_y_star(source: SourceSpec, gammas: Sequence[float], l0: float) -> tuple[float, float]:
    """Return ``(y_star, M)``; raises :class:`Inapplicable` when ``p_1 <= l0``."""
    p1 = source.p1
    if not p1 > l0:
        raise Inapplicable(f"p_1={p1} <= l0={l0}: positive-energy blow-up threshold undefined")
    weights = [(p1 + 1.0) / (p + 1.0) for p in source.p]
    y_star = bisect_increasing(lambda y: _weighted_power_sum(source, gammas, y, weights), l0 + 1.0)
    M = big_g(y_star, source, gammas)
    if y_star <= find_y0(source, gammas):
        raise InconsistentG("y_star must exceed y0")
    if abs(M - y_star * (p1 - l0) / (p1 + 1.0)) > 1e-8:
        raise InconsistentG("G(y_star) disagrees with y_star (p_1 - l0) / (p_1 + 1)")
    return y_star, float(M)


# ---------------------------------------------------------------------------
# functionals on grid fields
# ---------------------------------------------------------------------------


def _sinks_below(source: SourceSpec):
    return source.negative_terms[: source.s0]


def j_functional(grid: SpatialGrid, u: np.ndarray, source: SourceSpec) -> float:
    """``1/2 |grad u|^2 - sum a_i/(p_i+1) |u|^(p_i+1) + sum_{j<=s0} b_j/(q_j+1) |u|^(q_j+1)``."""
    return i_value(grid, u, 0.0, source)


def i_value(grid: SpatialGrid, u: np.ndarray, memory_norm: float, source: SourceSpec) -> float:
    val = 0.5 * (grid.grad_sq(u) + memory_norm)
    for a, p in source.positive_terms:
        val -= a / (p + 1.0) * grid.lp_pow(u, p + 1.0)
    for b, q in _sinks_below(source):
        val += b / (q + 1.0) * grid.lp_pow(u, q + 1.0)
    return float(val)


def i0_value(grid: SpatialGrid, u: np.ndarray, memory_norm: float, source: SourceSpec) -> float:
    val = grid.grad_sq(u) + memory_norm
    for a, p in source.positive_terms:
        val -= a * grid.lp_pow(u, p + 1.0)
    for b, q in _sinks_below(source):
        val += b * grid.lp_pow(u, q + 1.0)
    return float(val)


def lambda_star(grid: SpatialGrid, u: np.ndarray, source: SourceSpec, memory_quadratic: float = 0.0) -> float:
    """Unique ``lam > 0`` where ``lam -> I(lam v)`` is stationary.

    Solves ``lam Q = sum a_i lam^p_i |u|^(p_i+1) - sum_{j<=s0} b_j lam^q_j |u|^(q_j+1)``
    with ``Q = |grad u|^2 + memory_quadratic``, after division by
    ``lam^q_{s0}`` so that one side increases and the other decreases.
    """
    Q = float(grid.grad_sq(u)) + memory_quadratic
    pos = [(a, p, float(grid.lp_pow(u, p + 1.0))) for a, p in source.positive_terms]
    if not any(n > 0 for _, _, n in pos):
        raise ZeroField("lambda_star is undefined for the zero field")
    sinks = [(b, q, float(grid.lp_pow(u, q + 1.0))) for b, q in _sinks_below(source)]
    qstar = sinks[-1][1] if sinks else 1.0

    def h(log_lam):
        lam = math.exp(log_lam)
        up = sum(a * n * lam ** (p - qstar) for a, p, n in pos)
        down = Q * lam ** (1.0 - qstar) + sum(b * n * lam ** (q - qstar) for b, q, n in sinks)
        return up - down

    lo, hi = -1.0, 1.0
    while h(lo) > 0:
        lo -= 2.0 * (1.0 + abs(lo))
    while h(hi) < 0:
        hi += 2.0 * (1.0 + abs(hi))
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if h(mid) < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15:
            break
    return math.exp(0.5 * (lo + hi))


@dataclass
class NehariEstimate:
    d: float
    minimizer: np.ndarray
    iterations: int
    converged: bool


def estimate_d(
    grid: SpatialGrid,
    source: SourceSpec,
    n_starts: int = 8,
    max_iter: int = 100_000,
    tol: float = 1e-10,
    seed: int = 0,
    d0: float | None = None,
    starts: list[np.ndarray] | None = None,
) -> NehariEstimate:
    """Mountain-pass level ``inf_u sup_lam J(lam u)`` over nonzero grid fields.

    ``u -> J(lam0(u) u)`` is 0-homogeneous, so it is minimised on the unit
    sphere of ``H^1_0``; by stationarity in ``lam`` its gradient is
    ``lam0 * J'(lam0 u)``. If ``d0`` is given the result is checked against
    the lower bound ``d >= d0``.
    """
    sinks = _sinks_below(source)

    def value_and_grad(u):
        lam = lambda_star(grid, u, source)
        v = lam * u
        grad = -grid.laplacian(v)
        for a, p in source.positive_terms:
            grad -= a * np.abs(v) ** (p - 1.0) * v
        for b, q in sinks:
            grad += b * np.abs(v) ** (q - 1.0) * v
        return -j_functional(grid, v, source), -lam * grad

    fields = starts if starts is not None else seed_fields(grid, n_starts, seed)
    best = None
    for u0 in fields:
        u, val, it, _, conv = sphere_ascent(grid, grid.check(u0), value_and_grad, max_iter, tol)
        if best is None or -val < best.d:
            lam = lambda_star(grid, u, source)
            best = NehariEstimate(-float(val), lam * u, it, conv)
    if d0 is not None and best.d < d0 - 1e-6:
        raise InconsistentG(f"well depth estimate {best.d!r} fell below its lower bound d0={d0!r}")
    return best


# ---------------------------------------------------------------------------
# aggregate constants and membership
# ---------------------------------------------------------------------------


@dataclass
class WellConstants:
    gammas: list[float]
    y0: float
    d0: float
    l0: float
    y_star: float | None
    M_threshold: float | None
    d: float | None
    d_lower: float
    grid: dict
    gamma_source: str = "estimated"
    estimates: list[EmbeddingEstimate] = field(default_factory=list, repr=False)
    depth: NehariEstimate | None = field(default=None, repr=False)

    @property
    def depth_value(self) -> float:
        """``d`` when estimated, otherwise its lower bound ``d0``."""
        return self.d if self.d is not None else self.d0

    def to_dict(self) -> dict:
        return {
            "gammas": list(self.gammas),
            "y0": self.y0,
            "d0": self.d0,
            "l0": self.l0,
            "y_star": self.y_star,
            "M": self.M_threshold,
            "d": self.d,
            "d_lower": self.d_lower,
            "grid": self.grid,
            "gamma_source": self.gamma_source,
        }


def compute_constants(
    grid: SpatialGrid,
    source: SourceSpec,
    kernel: RelaxationKernel | None,
    gamma_override: Sequence[float] | None = None,
    estimate_depth: bool = True,
    n_starts: int = 8,
    seed: int = 0,
) -> WellConstants:
    estimates: list[EmbeddingEstimate] = []
    if gamma_override is not None:
        if len(gamma_override) != source.r:
            raise ValueError(f"need {source.r} gamma values, got {len(gamma_override)}")
        gammas = [float(g) for g in gamma_override]
    else:
        estimates = [estimate_gamma(grid, p, n_starts=n_starts, seed=seed) for p in source.p]
        gammas = [e.gamma for e in estimates]
    y0 = find_y0(source, gammas)
    d0 = compute_d0(source, gammas, y0)
    k0 = kernel.k0 if kernel is not None else 1.0
    l0 = compute_l0(source, k0)
    try:
        y_star, M = find_y_star(source, gammas, l0)
    except Inapplicable:
        y_star, M = None, None
    depth = None
    if estimate_depth:
        # the d >= d0 check only means something when gamma is this grid's constant
        depth = estimate_d(grid, source, n_starts=n_starts, seed=seed, d0=None if gamma_override else d0)
    return WellConstants(
        gammas=gammas,
        y0=y0,
        d0=d0,
        l0=l0,
        y_star=y_star,
        M_threshold=M,
        d=depth.d if depth else None,
        d_lower=d0,
        grid=grid.to_dict(),
        gamma_source="override" if gamma_override is not None else "estimated",
        estimates=estimates,
        depth=depth,
    )


@dataclass(frozen=True)
class WellMembership:
    I0_value: float
    I_value: float
    J_value: float
    label: str

    def to_dict(self) -> dict:
        return {"I0": self.I0_value, "I": self.I_value, "J": self.J_value, "label": self.label}


def membership_label(I: float, I0: float, quad_scale: float, depth: float, is_zero: bool = False) -> str:
    """W1 / W2 / Boundary / OutsideWell.

    ``quad_scale`` is the quadratic part ``|grad v(0)|^2 + memory``; ``I0``
    within ``1e-9 * quad_scale`` of zero is reported as Boundary.
    """
    if is_zero:
        return "W1"
    if not I < depth:
        return "OutsideWell"
    if abs(I0) <= 1e-9 * quad_scale:
        return "Boundary"
    return "W1" if I0 > 0 else "W2"


def i_functional(history, source: SourceSpec, kernel: RelaxationKernel | None = None) -> float:
    """``I`` of a discrete state; its memory norm comes from the state's backend."""
    return i_value(history.grid, history.u, history.memory_norm(), source)


def i0(history, source: SourceSpec, kernel: RelaxationKernel | None = None) -> float:
    return i0_value(history.grid, history.u, history.memory_norm(), source)


def classify_membership(history, constants: WellConstants, source: SourceSpec) -> WellMembership:
    return classify_fields(history.grid, history.u, history.memory_norm(), source, constants)


def classify_fields(
    grid: SpatialGrid,
    u: np.ndarray,
    memory_norm: float,
    source: SourceSpec,
    constants: WellConstants,
) -> WellMembership:
    I = i_value(grid, u, memory_norm, source)
    I0 = i0_value(grid, u, memory_norm, source)
    J = j_functional(grid, u, source)
    quad = float(grid.grad_sq(u)) + memory_norm
    is_zero = not np.any(u) and memory_norm == 0.0
    return WellMembership(I0, I, J, membership_label(I, I0, quad, constants.depth_value, is_zero))
