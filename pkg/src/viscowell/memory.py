"""Memory backends for the convolution ``int_0^inf mu(s) u(t - s) ds``.

Both backends expose the same small interface used by the stepper:

``convolution()``
    the grid field ``Z(t) = int mu(s) u(t - s) ds``; the elastic force is
    ``Lap_h (k0 u - Z)``, which is the PDE's ``k0 Lap u - int mu Lap u(t-s)``.
``norm(u)``
    ``int mu(s) |grad w(s)|^2 ds`` with ``w(s) = u - u(t - s)``.
``dissipation(u)``
    ``-1/2 int mu'(s) |grad w(s)|^2 ds`` (non-negative).
``advanced(u_new, u_old, dt)``
    the backend one step later, after ``u_new`` became the current field.

Between time levels the history is taken piecewise linear in ``t``.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from .model import HistoryProfile, RelaxationKernel, SpatialGrid

PRONY, QUADRATURE = "prony", "quadrature"
BACKEND_CODES = {PRONY: 0, QUADRATURE: 1}

_GL20 = np.polynomial.legendre.leggauss(20)
_GL4 = np.polynomial.legendre.leggauss(4)


def memory_force(grid: SpatialGrid, k0: float, u: np.ndarray, conv: np.ndarray | None) -> np.ndarray:
    """Elastic plus memory force ``k0 Lap u - int mu Lap u(t - s) ds``.

    ``mu = -k'``, so the equation's ``-int k'(s) Lap u(t-s) ds`` enters with
    a plus sign next to ``-k(0) Lap u`` on the left, i.e. with a minus sign
    on the right-hand side. This is the only place the sign is applied.
    """
    if conv is None:
        return grid.laplacian(u)
    return grid.laplacian(k0 * u - conv)


@lru_cache(maxsize=64)
def step_weights(x: float) -> np.ndarray:
    """``int_0^1 phi(theta) exp(-x theta) d theta`` for the five hat products.

    Order: ``1-theta, theta, (1-theta)^2, 2 theta (1-theta), theta^2``.
    """
    if x <= 5.0:
        nodes, w = _GL20
        th = 0.5 * (nodes + 1.0)
        e = 0.5 * w * np.exp(-x * th)
        return np.array([
            np.sum(e * (1 - th)),
            np.sum(e * th),
            np.sum(e * (1 - th) ** 2),
            np.sum(e * 2 * th * (1 - th)),
            np.sum(e * th**2),
        ])
    ex = math.exp(-x)
    e0 = (1.0 - ex) / x
    e1 = (1.0 - ex * (1.0 + x)) / x**2
    e2 = (2.0 - ex * (x * x + 2.0 * x + 2.0)) / x**3
    return np.array([e0 - e1, e1, e0 - 2 * e1 + e2, 2 * (e1 - e2), e2])


class PronyModes:
    """Per-mode memory ``z_k = int c_k exp(-lam_k s) u(t-s) ds``.

    Alongside each field ``z_k`` the scalar ``A_k = int c_k exp(-lam_k s)
    |grad u(t-s)|^2 ds`` is kept, which makes the weighted history norm
    ``(c_k/lam_k)|grad u|^2 - 2<grad u, grad z_k> + A_k`` exact for the
    piecewise-linear history.
    """

    kind = PRONY

    def __init__(self, grid: SpatialGrid, kernel: RelaxationKernel, z: np.ndarray, A: np.ndarray):
        self.grid = grid
        self.kernel = kernel
        self.c = np.array([t[0] for t in kernel.terms])
        self.lam = np.array([t[1] for t in kernel.terms])
        self.z = z
        self.A = A

    @classmethod
    def from_history(cls, grid, kernel, history: HistoryProfile) -> "PronyModes":
        u0 = history.displacement
        g0 = float(grid.grad_sq(u0))
        z = np.stack([history.weighted_integral(c, lam, 1) * u0 for c, lam in kernel.terms])
        A = np.array([history.weighted_integral(c, lam, 2) * g0 for c, lam in kernel.terms])
        return cls(grid, kernel, z, A)

    @property
    def psi(self) -> np.ndarray:
        """Mode fields ``psi_k = int c_k exp(-lam_k s) Lap u(t-s) ds``."""
        return self.grid.laplacian(self.z)

    def convolution(self) -> np.ndarray:
        return self.z.sum(axis=0)

    def mode_norms(self, u: np.ndarray) -> np.ndarray:
        gu = float(self.grid.grad_sq(u))
        cross = np.array([self.grid.grad_inner(u, zk) for zk in self.z])
        return np.maximum(self.c / self.lam * gu - 2.0 * cross + self.A, 0.0)

    def norm(self, u: np.ndarray) -> float:
        return float(self.mode_norms(u).sum())

    def dissipation(self, u: np.ndarray) -> float:
        return float(0.5 * np.sum(self.lam * self.mode_norms(u)))

    def advanced(self, u_new: np.ndarray, u_old: np.ndarray, dt: float) -> "PronyModes":
        g = self.grid
        gnn, gno, goo = float(g.grad_sq(u_new)), float(g.grad_inner(u_new, u_old)), float(g.grad_sq(u_old))
        z = np.empty_like(self.z)
        A = np.empty_like(self.A)
        for k, (c, lam) in enumerate(zip(self.c, self.lam)):
            x = lam * dt
            w = c * dt * step_weights(x)
            decay = math.exp(-x)
            z[k] = decay * self.z[k] + w[0] * u_new + w[1] * u_old
            A[k] = decay * self.A[k] + w[2] * gnn + w[3] * gno + w[4] * goo
        return PronyModes(self.grid, self.kernel, z, A)

    def payload(self) -> np.ndarray:
        return np.concatenate([self.z.ravel(), self.A])

    @classmethod
    def from_payload(cls, grid, kernel, history, data: np.ndarray, **_) -> "PronyModes":
        K = kernel.n_modes
        z = data[: K * grid.size].reshape((K,) + grid.shape).copy()
        A = data[K * grid.size : K * grid.size + K].copy()
        return cls(grid, kernel, z, A)


class HistoryRing:
    """Direct quadrature of the memory integral over stored past steps.

    ``[0, S]`` is split into fixed panels uniform in ``log(1 + s)``; each
    panel carries 4-point Gauss-Legendre nodes. For ``s < t`` the field
    ``u(t - s)`` is interpolated linearly between stored steps; for ``s > t``
    the prescribed history ``g(t - s) u0`` is integrated as scalars. With a
    constant history the ``s > t`` part uses the closed-form kernel tail.
    """

    kind = QUADRATURE
    PANEL_WIDTH = 0.1

    def __init__(self, grid, kernel, history: HistoryProfile, dt: float, capacity: int):
        self.grid = grid
        self.kernel = kernel
        self.history = history
        self.dt = dt
        self.S = kernel.horizon
        n_panels = max(1, math.ceil(math.log1p(self.S) / self.PANEL_WIDTH))
        self.edges = np.expm1(np.linspace(0.0, math.log1p(self.S), n_panels + 1))
        self.capacity = capacity
        self.buffer = np.zeros((capacity,) + grid.shape)
        self.n = 0
        self._cache = None

    @staticmethod
    def capacity_for(kernel: RelaxationKernel, dt: float, t_end: float) -> int:
        return int(math.ceil(min(kernel.horizon, t_end) / dt)) + 3

    @classmethod
    def from_history(cls, grid, kernel, history, dt: float, capacity: int) -> "HistoryRing":
        ring = cls(grid, kernel, history, dt, capacity)
        ring.buffer[0] = history.displacement
        return ring

    @property
    def t(self) -> float:
        return self.n * self.dt

    def nodes(self, a: float, b: float):
        """Gauss nodes and weights for ``int_a^b`` on the fixed panels."""
        b = min(b, self.S)
        if b <= a:
            return np.zeros(0), np.zeros(0)
        lo = np.maximum(self.edges[:-1], a)
        hi = np.minimum(self.edges[1:], b)
        keep = hi > lo
        lo, hi = lo[keep], hi[keep]
        x, w = _GL4
        half = 0.5 * (hi - lo)[:, None]
        s = (0.5 * (hi + lo))[:, None] + half * x[None, :]
        return s.ravel(), (half * w[None, :]).ravel()

    def _past(self, s: np.ndarray) -> np.ndarray:
        tau = self.n - s / self.dt
        j = np.clip(np.floor(tau).astype(int), 0, max(self.n - 1, 0))
        frac = (tau - j)[:, None]
        if self.n == 0:
            return np.repeat(self.buffer[:1], len(s), axis=0)
        lo = self.buffer[j % self.capacity].reshape(len(s), -1)
        hi = self.buffer[(j + 1) % self.capacity].reshape(len(s), -1)
        return ((1.0 - frac) * lo + frac * hi).reshape((len(s),) + self.grid.shape)

    def _tails(self):
        """``(int mu g^k, int -mu' g^k)`` over ``s > t`` for ``k = 0, 1, 2``."""
        t = self.t
        if self.history.kind == "constant":
            m0, d0 = float(self.kernel.tail(t)), float(self.kernel.mu(t))
            return np.array([m0, m0, m0]), np.array([d0, d0, d0])
        s, w = self.nodes(t, self.S)
        g = self.history.g(t - s)
        mu, dmu = self.kernel.mu(s), -self.kernel.dmu(s)
        powers = np.stack([np.ones_like(g), g, g * g])
        return powers @ (w * mu), powers @ (w * dmu)

    def _state(self):
        if self._cache is None:
            s, w = self.nodes(0.0, self.t)
            past = self._past(s) if len(s) else np.zeros((0,) + self.grid.shape)
            self._cache = (s, w, past, self._tails())
        return self._cache

    def convolution(self) -> np.ndarray:
        s, w, past, (mt, _) = self._state()
        out = np.tensordot(w * self.kernel.mu(s), past, axes=1) if len(s) else self.grid.zeros()
        return out + mt[1] * self.history.displacement

    def _weighted(self, u, weights_fn, tails):
        s, w, past, _ = self._state()
        total = 0.0
        if len(s):
            total += float(np.sum(w * weights_fn(s) * self.grid.grad_sq(u[None] - past)))
        u0 = self.history.displacement
        g = self.grid
        total += tails[0] * g.grad_sq(u) - 2.0 * tails[1] * g.grad_inner(u, u0) + tails[2] * g.grad_sq(u0)
        return max(float(total), 0.0)

    def norm(self, u: np.ndarray) -> float:
        return self._weighted(u, self.kernel.mu, self._state()[3][0])

    def dissipation(self, u: np.ndarray) -> float:
        return 0.5 * self._weighted(u, lambda s: -self.kernel.dmu(s), self._state()[3][1])

    def advanced(self, u_new: np.ndarray, u_old: np.ndarray, dt: float) -> "HistoryRing":
        ring = HistoryRing.__new__(HistoryRing)
        ring.__dict__.update(self.__dict__)
        ring.buffer = self.buffer  # shared storage; old slots are never rewritten while in use
        ring.n = self.n + 1
        ring.buffer[ring.n % ring.capacity] = u_new
        ring._cache = None
        return ring

    def payload(self) -> np.ndarray:
        keep = min(self.n + 1, self.capacity)
        idx = [(self.n - keep + 1 + i) % self.capacity for i in range(keep)]
        return np.concatenate([[float(self.n), float(keep)], self.buffer[idx].ravel()])

    @classmethod
    def from_payload(cls, grid, kernel, history, data: np.ndarray, dt: float, capacity: int) -> "HistoryRing":
        ring = cls(grid, kernel, history, dt, capacity)
        n, keep = int(data[0]), int(data[1])
        fields = data[2 : 2 + keep * grid.size].reshape((keep,) + grid.shape)
        ring.n = n
        for i in range(keep):
            ring.buffer[(n - keep + 1 + i) % capacity] = fields[i]
        return ring
