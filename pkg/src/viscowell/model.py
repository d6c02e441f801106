"""Problem data: relaxation kernels, source nonlinearities, grids and histories.

Everything here is immutable after construction. Two kernel families are
supported: finite exponential sums ``mu(s) = sum c_k exp(-lam_k s)`` and the
power law ``mu(s) = a (1 + s)**(-beta)`` with ``beta > 1``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    AssumptionViolated,
    InvalidSource,
    NonIntegrableKernel,
    NonPositiveParameter,
    ShapeMismatch,
    UnclassifiableKernel,
)

log = logging.getLogger(__name__)

#: relative tail mass left out beyond the kernel horizon
TAIL_MASS = 1e-8


# ---------------------------------------------------------------------------
# relaxation kernels
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RelaxationKernel:
    """Relaxation kernel ``mu = -k'`` with ``k(0) = 1 + int mu``.

    Use :func:`make_kernel` rather than the constructor; it validates the
    parameters.
    """

    family: str
    terms: tuple[tuple[float, float], ...] = ()
    amplitude: float = 0.0
    exponent: float = 0.0

    def mu(self, s):
        s = np.asarray(s, dtype=float)
        if self.family == "exponential_sum":
            return sum(c * np.exp(-lam * s) for c, lam in self.terms)
        return self.amplitude * (1.0 + s) ** (-self.exponent)

    def dmu(self, s):
        """Derivative ``mu'(s)``."""
        s = np.asarray(s, dtype=float)
        if self.family == "exponential_sum":
            return sum(-c * lam * np.exp(-lam * s) for c, lam in self.terms)
        b = self.exponent
        return -self.amplitude * b * (1.0 + s) ** (-b - 1.0)

    __call__ = mu

    @property
    def mass(self) -> float:
        """``int_0^inf mu(s) ds``."""
        if self.family == "exponential_sum":
            return float(sum(c / lam for c, lam in self.terms))
        return self.amplitude / (self.exponent - 1.0)

    @property
    def k0(self) -> float:
        return 1.0 + self.mass

    def tail(self, s):
        """``int_s^inf mu``, closed form."""
        s = np.asarray(s, dtype=float)
        if self.family == "exponential_sum":
            return sum(c / lam * np.exp(-lam * s) for c, lam in self.terms)
        b = self.exponent
        return self.amplitude / (b - 1.0) * (1.0 + s) ** (1.0 - b)

    def cumulative(self, s):
        """``int_0^s mu``."""
        return self.mass - self.tail(s)

    @cached_property
    def horizon(self) -> float:
        """Smallest S with ``int_S^inf mu < TAIL_MASS * int_0^inf mu``."""
        target = TAIL_MASS * self.mass
        if self.family == "power_law":
            b = self.exponent
            return float(TAIL_MASS ** (1.0 / (1.0 - b)) - 1.0)
        lo, hi = 0.0, 1.0
        while self.tail(hi) >= target:
            hi *= 2.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if self.tail(mid) >= target:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-12 * hi:
                break
        return hi

    @property
    def n_modes(self) -> int:
        return len(self.terms)

    def to_dict(self) -> dict:
        if self.family == "exponential_sum":
            return {"family": "exponential_sum", "terms": [list(t) for t in self.terms]}
        return {"family": "power_law", "amplitude": self.amplitude, "exponent": self.exponent}


def make_kernel(params: dict) -> RelaxationKernel:
    """Build a kernel from ``{"family": ..., ...}``.

    >>> make_kernel({"family": "exponential_sum", "terms": [[1.0, 1.0]]}).k0
    2.0
    """
    family = params.get("family")
    if family == "exponential_sum":
        terms = params.get("terms") or []
        if not terms:
            raise NonPositiveParameter("exponential_sum kernel needs at least one (c, lambda) term")
        clean = []
        for c, lam in terms:
            if not (c > 0 and lam > 0):
                raise NonPositiveParameter(f"kernel term (c={c}, lambda={lam}) must be strictly positive")
            clean.append((float(c), float(lam)))
        kernel = RelaxationKernel("exponential_sum", terms=tuple(clean))
    elif family == "power_law":
        a = float(params.get("amplitude", 0.0))
        beta = float(params.get("exponent", 0.0))
        if not a > 0:
            raise NonPositiveParameter(f"power-law amplitude must be > 0, got {a}")
        if not beta > 1:
            raise NonIntegrableKernel(f"power-law exponent must exceed 1, got {beta}")
        kernel = RelaxationKernel("power_law", amplitude=a, exponent=beta)
    else:
        raise NonPositiveParameter(f"unknown kernel family {family!r}")
    _check_kernel_samples(kernel)
    return kernel


def _check_kernel_samples(kernel: RelaxationKernel, n: int = 2001) -> None:
    s = _sample_grid(kernel.horizon, n)
    mu = kernel.mu(s)
    if np.any(mu <= 0) or np.any(kernel.dmu(s) > 0):
        raise NonPositiveParameter("kernel must satisfy mu > 0 and mu' <= 0")
    if not kernel.mu(kernel.horizon) < 1e-6 * kernel.mu(0.0):
        raise NonIntegrableKernel("kernel does not vanish at its horizon")


def _sample_grid(horizon: float, n: int) -> np.ndarray:
    # dense near zero, geometric in (1 + s)
    return np.expm1(np.linspace(0.0, math.log1p(horizon), n))


@dataclass(frozen=True)
class DecayClass:
    """``mu' + C mu**r <= 0``; ``r == 1`` is Class I."""

    label: str
    C: float
    r: float = 1.0


def kernel_class(kernel: RelaxationKernel, n_samples: int = 1000) -> DecayClass:
    if kernel.family == "exponential_sum":
        cls = DecayClass("ClassI", C=min(lam for _, lam in kernel.terms))
    else:
        b = kernel.exponent
        r = (b + 1.0) / b
        cls = DecayClass("ClassII", C=b * kernel.amplitude ** (1.0 - r), r=r)
    s = _sample_grid(kernel.horizon, n_samples)
    mu = kernel.mu(s)
    lhs = kernel.dmu(s) + cls.C * mu**cls.r
    if np.any(lhs > 1e-10 * np.maximum(mu, 1.0)):
        raise UnclassifiableKernel(f"{cls.label} inequality fails on the sample grid")
    return cls


# ---------------------------------------------------------------------------
# sources
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SourceSpec:
    """``f(u) = sum a_i |u|^(p_i-1) u - sum b_j |u|^(q_j-1) u``.

    Terms are stored sorted by exponent.
    """

    positive_terms: tuple[tuple[float, float], ...]
    negative_terms: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        pos = tuple(sorted(((float(a), float(p)) for a, p in self.positive_terms), key=lambda t: t[1]))
        neg = tuple(sorted(((float(b), float(q)) for b, q in self.negative_terms), key=lambda t: t[1]))
        object.__setattr__(self, "positive_terms", pos)
        object.__setattr__(self, "negative_terms", neg)
        if not pos:
            raise InvalidSource("at least one positive (source) term is required")
        for a, p in pos:
            if not a > 0:
                raise InvalidSource(f"source coefficient a={a} must be > 0")
            if not p > 1:
                raise InvalidSource(f"source exponent p={p} must exceed 1")
        for b, q in neg:
            if not b > 0:
                raise InvalidSource(f"sink coefficient b={b} must be > 0")
            if not q >= 1:
                raise InvalidSource(f"sink exponent q={q} must be >= 1")
        ps, qs = self.p, self.q
        if len(set(ps)) != len(ps) or len(set(qs)) != len(qs):
            raise InvalidSource("exponents within the source or the sink must be distinct")
        if set(ps) & set(qs):
            raise InvalidSource("a source exponent equals a sink exponent; merge the terms")

    @property
    def a(self) -> tuple[float, ...]:
        return tuple(t[0] for t in self.positive_terms)

    @property
    def p(self) -> tuple[float, ...]:
        return tuple(t[1] for t in self.positive_terms)

    @property
    def b(self) -> tuple[float, ...]:
        return tuple(t[0] for t in self.negative_terms)

    @property
    def q(self) -> tuple[float, ...]:
        return tuple(t[1] for t in self.negative_terms)

    @property
    def r(self) -> int:
        return len(self.positive_terms)

    @property
    def s(self) -> int:
        return len(self.negative_terms)

    @property
    def s0(self) -> int:
        return compute_s0(self)

    @property
    def p0(self) -> float:
        return max(self.p + self.q)

    @property
    def p1(self) -> float:
        return self.p[0]

    @property
    def pr(self) -> float:
        return self.p[-1]

    @property
    def qs(self) -> float | None:
        return self.q[-1] if self.q else None

    def to_dict(self) -> dict:
        return {
            "positive": [list(t) for t in self.positive_terms],
            "negative": [list(t) for t in self.negative_terms],
        }


def compute_s0(source: SourceSpec) -> int:
    """Number of sink exponents below ``p_1``."""
    return sum(1 for q in source.q if q < source.p1)


def eval_f(source: SourceSpec, u):
    u = np.asarray(u, dtype=float)
    au = np.abs(u)
    out = np.zeros_like(u)
    for a, p in source.positive_terms:
        out += a * au ** (p - 1.0) * u
    for b, q in source.negative_terms:
        out -= b * au ** (q - 1.0) * u
    return out


def eval_F(source: SourceSpec, u):
    """Primitive ``F(u) = int_0^u f``."""
    au = np.abs(np.asarray(u, dtype=float))
    out = np.zeros_like(au)
    for a, p in source.positive_terms:
        out += a / (p + 1.0) * au ** (p + 1.0)
    for b, q in source.negative_terms:
        out -= b / (q + 1.0) * au ** (q + 1.0)
    return out


@dataclass
class AssumptionReport:
    clauses: list[tuple[str, bool, str]] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(passed for _, passed, _ in self.clauses)

    def to_dict(self) -> dict:
        return {
            "clauses": [{"clause": c, "pass": bool(ok), "kind": kind} for c, ok, kind in self.clauses],
            "warnings": list(self.warnings),
        }


def validate_assumptions(
    source: SourceSpec | None,
    m: float | None,
    kernel: RelaxationKernel | None,
    strict: bool = False,
) -> AssumptionReport:
    """Check the standing structural assumptions clause by clause.

    Clauses marked ``embedding`` (exponent caps coming from 3D Sobolev
    embeddings) only raise in strict mode; elsewhere they are logged as
    notes in the report. Structural clauses always raise.
    """
    rep = AssumptionReport()

    def clause(name: str, ok: bool, kind: str) -> None:
        rep.clauses.append((name, bool(ok), kind))
        if ok:
            return
        if kind == "structural" or strict:
            raise AssumptionViolated(name)
        rep.warnings.append(name)
        log.info("relaxed assumption violated: %s", name)

    if m is not None:
        clause("m >= 1", m >= 1, "structural")
    if source is not None:
        ps, qs = source.p, source.q
        clause("1 < p_1 < ... < p_r", ps[0] > 1 and all(x < y for x, y in zip(ps, ps[1:])), "structural")
        clause("1 <= q_1 < ... < q_s", all(x < y for x, y in zip(qs, qs[1:])) and (not qs or qs[0] >= 1), "structural")
        clause("p_i != q_j", not (set(ps) & set(qs)), "structural")
        clause("p_r <= 5", ps[-1] <= 5, "embedding")
        if qs:
            clause("q_s <= 5", qs[-1] <= 5, "embedding")
        if m is not None:
            clause("(m+1)/m * p_r < 6", (m + 1) / m * ps[-1] < 6, "embedding")
            if qs:
                clause("(m+1)/m * q_s < 6", (m + 1) / m * qs[-1] < 6, "embedding")
    if kernel is not None:
        s = _sample_grid(kernel.horizon, 2001)
        clause("mu > 0", bool(np.all(kernel.mu(s) > 0)), "structural")
        clause("mu' <= 0", bool(np.all(kernel.dmu(s) <= 0)), "structural")
        clause("mu integrable, k(0) > 1", math.isfinite(kernel.mass) and kernel.k0 > 1, "structural")
    return rep


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform interior grid on a box with homogeneous Dirichlet boundary.

    Fields are arrays of shape ``grid.shape`` holding interior values only;
    the boundary is implicitly zero. Operators accept extra leading batch
    axes.
    """

    lengths: tuple[float, ...]
    n: tuple[int, ...]

    def __post_init__(self):
        lengths = tuple(float(x) for x in np.atleast_1d(self.lengths))
        n = tuple(int(x) for x in np.atleast_1d(self.n))
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "n", n)
        if len(lengths) not in (1, 2) or len(n) != len(lengths):
            raise ShapeMismatch("grid must be 1D or 2D with one node count per axis")
        if any(k < 3 for k in n):
            raise ShapeMismatch("need at least 3 interior nodes per axis")
        if any(L <= 0 for L in lengths):
            raise NonPositiveParameter("domain lengths must be positive")

    @property
    def dim(self) -> int:
        return len(self.n)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.n

    @cached_property
    def h(self) -> tuple[float, ...]:
        return tuple(L / (k + 1) for L, k in zip(self.lengths, self.n))

    @property
    def hmin(self) -> float:
        return min(self.h)

    @property
    def cell(self) -> float:
        return float(np.prod(self.h))

    @property
    def size(self) -> int:
        return int(np.prod(self.n))

    def coords(self) -> tuple[np.ndarray, ...]:
        axes = [np.arange(1, k + 1) * h for k, h in zip(self.n, self.h)]
        return tuple(np.meshgrid(*axes, indexing="ij"))

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def check(self, u, name: str = "field") -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape[-self.dim :] != self.shape:
            raise ShapeMismatch(f"{name} has shape {u.shape}, grid expects {self.shape}")
        return u

    # -- operators ---------------------------------------------------------

    def laplacian(self, u: np.ndarray) -> np.ndarray:
        out = np.zeros_like(u)
        for ax, h in enumerate(self.h):
            axis = u.ndim - self.dim + ax
            lo = [slice(None)] * u.ndim
            hi = [slice(None)] * u.ndim
            lo[axis] = slice(None, -1)
            hi[axis] = slice(1, None)
            lo, hi = tuple(lo), tuple(hi)
            term = -2.0 * u
            term[hi] += u[lo]
            term[lo] += u[hi]
            out += term / h**2
        return out

    def _diffs(self, u: np.ndarray):
        # forward differences including the two boundary links, per axis
        for ax, h in enumerate(self.h):
            axis = u.ndim - self.dim + ax
            first = np.take(u, [0], axis=axis)
            last = np.take(u, [-1], axis=axis)
            yield np.concatenate([first, np.diff(u, axis=axis), -last], axis=axis) / h

    def _sum(self, x: np.ndarray) -> np.ndarray:
        return self.cell * x.sum(axis=tuple(range(x.ndim - self.dim, x.ndim)))

    def grad_sq(self, u: np.ndarray):
        """``||grad u||_2^2``."""
        return sum(self._sum(d * d) for d in self._diffs(u))

    def grad_inner(self, u: np.ndarray, w: np.ndarray):
        return sum(self._sum(a * b) for a, b in zip(self._diffs(u), self._diffs(w)))

    def inner(self, u: np.ndarray, w: np.ndarray):
        return self._sum(u * w)

    def lp_pow(self, u: np.ndarray, q: float):
        """``||u||_q^q``."""
        return self._sum(np.abs(u) ** q)

    def lp_norm(self, u: np.ndarray, q: float):
        return self.lp_pow(u, q) ** (1.0 / q)

    def integrate(self, x: np.ndarray):
        return self._sum(x)

    @cached_property
    def neg_laplacian_matrix(self) -> sp.csc_matrix:
        mats = []
        for k, h in zip(self.n, self.h):
            mats.append(sp.diags([-np.ones(k - 1), 2 * np.ones(k), -np.ones(k - 1)], [-1, 0, 1]) / h**2)
        if self.dim == 1:
            return sp.csc_matrix(mats[0])
        ix, iy = sp.identity(self.n[0]), sp.identity(self.n[1])
        return sp.csc_matrix(sp.kron(mats[0], iy) + sp.kron(ix, mats[1]))

    @cached_property
    def _poisson_lu(self):
        return spla.splu(self.neg_laplacian_matrix)

    def solve_poisson(self, rhs: np.ndarray) -> np.ndarray:
        """Solve ``-Lap_h x = rhs`` with Dirichlet data."""
        return self._poisson_lu.solve(np.ravel(rhs)).reshape(self.shape)

    def first_eigenvector(self) -> np.ndarray:
        """Ground state of ``-Lap_h``, a product of sines."""
        u = np.ones(self.shape)
        for X, L in zip(self.coords(), self.lengths):
            u = u * np.sin(np.pi * X / L)
        return u

    def to_dict(self) -> dict:
        return {"dimension": self.dim, "lengths": list(self.lengths), "n": list(self.n)}


# ---------------------------------------------------------------------------
# initial histories
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HistoryProfile:
    """Past history ``u(x, t) = g(t) u0(x)`` for ``t <= 0``.

    ``kind == "constant"`` means ``g == 1``. For ``"separable"`` the time
    profile is ``exp(rate * t)`` (``profile="exp"``, ``rate >= 0``) or
    ``cos(omega * t)`` (``profile="cos"``). ``velocity`` is the initial
    velocity at ``t = 0`` and is independent of ``g``.
    """

    kind: str
    displacement: np.ndarray
    velocity: np.ndarray
    profile: str = "exp"
    rate: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "separable"):
            raise ShapeMismatch(f"unknown history kind {self.kind!r}")
        if self.displacement.shape != self.velocity.shape:
            raise ShapeMismatch("displacement and velocity shapes differ")
        if self.kind == "separable":
            if self.profile not in ("exp", "cos"):
                raise ShapeMismatch(f"unknown separable profile {self.profile!r}")
            if self.profile == "exp" and self.rate < 0:
                raise NonPositiveParameter("exp history rate must be >= 0 so g stays bounded")

    def g(self, tau) -> np.ndarray:
        """Time factor at ``tau <= 0``."""
        tau = np.asarray(tau, dtype=float)
        if self.kind == "constant":
            return np.ones_like(tau)
        if self.profile == "exp":
            return np.exp(self.rate * tau)
        return np.cos(self.rate * tau)

    def at(self, tau: float) -> np.ndarray:
        return float(self.g(tau)) * self.displacement

    def weighted_integral(self, c: float, lam: float, power: int = 1) -> float:
        """``int_0^inf c exp(-lam s) g(-s)**power ds``; closed form when available."""
        if self.kind == "constant":
            return c / lam
        if self.profile == "exp":
            return c / (lam + power * self.rate)
        x, w = _laguerre64()
        return float(c / lam * np.sum(w * self.g(-x / lam) ** power))


def _laguerre64():
    return np.polynomial.laguerre.laggauss(64)


def sine_field(grid: SpatialGrid, amplitude: float, mode: Sequence[int] | int = 1) -> np.ndarray:
    modes = np.broadcast_to(np.atleast_1d(mode), (grid.dim,))
    u = np.full(grid.shape, float(amplitude))
    for X, L, k in zip(grid.coords(), grid.lengths, modes):
        u = u * np.sin(k * np.pi * X / L)
    return u


def bump_field(grid: SpatialGrid, amplitude: float) -> np.ndarray:
    """Polynomial bump ``prod 4 x (L - x) / L^2`` scaled to peak ``amplitude``."""
    u = np.full(grid.shape, float(amplitude))
    for X, L in zip(grid.coords(), grid.lengths):
        u = u * 4.0 * X * (L - X) / L**2
    return u


SHAPES: dict[str, Callable[..., np.ndarray]] = {"sine": sine_field, "bump": bump_field}
