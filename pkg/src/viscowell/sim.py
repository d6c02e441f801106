"""Leapfrog time stepping with node-local implicit damping.

The scheme advances

    (u^{n+1} - 2u^n + u^{n-1}) / dt^2 + |v|^{m-1} v = F^n,   v = (u^{n+1} - u^{n-1}) / (2 dt)

where ``F^n`` collects the elastic, memory and source forces at level ``n``.
Substituting ``u^{n+1} = u^{n-1} + 2 dt v`` leaves the scalar monotone
equation ``2v/dt + |v|^{m-1} v = c`` at every node.
"""

from __future__ import annotations

import logging
import math
import struct
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import ConfigError, ShapeMismatch
from .memory import BACKEND_CODES, PRONY, QUADRATURE, HistoryRing, PronyModes, memory_force
from .model import HistoryProfile, RelaxationKernel, SourceSpec, SpatialGrid, eval_F, eval_f

log = logging.getLogger(__name__)


class StopReason(str, Enum):
    COMPLETED = "Completed"
    BLOWUP = "BlowupThreshold"
    NONFINITE = "NonFinite"


@dataclass(frozen=True)
class Problem:
    """Everything that defines a solution: grid, history, kernel, source, damping.

    ``kernel=None`` removes the memory term (``k0 = 1``), ``source=None``
    removes ``f`` and ``damping_m=None`` removes the frictional damping.
    """

    grid: SpatialGrid
    history: HistoryProfile
    kernel: RelaxationKernel | None = None
    source: SourceSpec | None = None
    damping_m: float | None = 1.0

    def __post_init__(self):
        self.grid.check(self.history.displacement, "initial displacement")
        if self.damping_m is not None and self.damping_m < 1:
            raise ConfigError(f"damping exponent m must be >= 1, got {self.damping_m}")

    @property
    def k0(self) -> float:
        return self.kernel.k0 if self.kernel is not None else 1.0

    def source_force(self, u: np.ndarray) -> np.ndarray:
        return eval_f(self.source, u) if self.source is not None else 0.0

    def potential(self, u: np.ndarray) -> float:
        """``int F(u) dx``."""
        return float(self.grid.integrate(eval_F(self.source, u))) if self.source is not None else 0.0


@dataclass(frozen=True)
class SolverConfig:
    dt: float
    t_end: float
    memory_backend: str = PRONY
    blowup_threshold: float = 1e6
    energy_floor: float = 1e-14
    sample_every: int = 1
    dense_factor: float = 10.0

    def __post_init__(self):
        if not (self.dt > 0 and self.t_end > 0):
            raise ConfigError("dt and t_end must be positive")
        if self.memory_backend not in (PRONY, QUADRATURE):
            raise ConfigError(f"unknown memory backend {self.memory_backend!r}")
        if self.sample_every < 1:
            raise ConfigError("sample_every must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def check_cfl(self, grid: SpatialGrid, k0: float) -> None:
        limit = 0.5 * grid.hmin / math.sqrt(k0)
        if self.dt > limit * (1 + 1e-12):
            raise ConfigError(f"dt={self.dt} exceeds the stability bound 0.5*h/sqrt(k0)={limit:.6g}")


@dataclass
class HistoryState:
    """Discrete state at time level ``n``.

    ``v`` is the velocity at ``t``: the prescribed initial velocity at
    ``n = 0`` and the backward difference afterwards. The centred velocity
    at level ``n`` is only known once level ``n + 1`` has been computed and
    is delivered through :class:`Snapshot`.
    """

    grid: SpatialGrid
    u: np.ndarray
    u_prev: np.ndarray
    v: np.ndarray
    memory: PronyModes | HistoryRing | None
    t: float
    step_index: int = 0
    dissipated: float = 0.0
    last_rate: float | None = None

    def memory_norm(self) -> float:
        return self.memory.norm(self.u) if self.memory is not None else 0.0

    def memory_dissipation(self) -> float:
        return self.memory.dissipation(self.u) if self.memory is not None else 0.0


@dataclass
class Snapshot:
    """Diagnostic quantities at level ``n`` with the centred velocity."""

    grid: SpatialGrid
    t: float
    u: np.ndarray
    v: np.ndarray
    memory_value: float
    memory_rate: float
    damp_power: float
    dissipated: float

    def memory_norm(self) -> float:
        return self.memory_value


# ---------------------------------------------------------------------------
# nodal damping solve
# ---------------------------------------------------------------------------


def solve_damped_velocity(c: np.ndarray, dt: float, m: float | None, tol: float = 1e-13) -> np.ndarray:
    """Solve ``2 v / dt + |v|^(m-1) v = c`` node by node.

    The left side is odd, strictly increasing and convex on ``v > 0``, so
    Newton started from an upper bound decreases monotonically to the root.
    """
    c = np.asarray(c, dtype=float)
    if m is None:
        return 0.5 * dt * c
    if m == 1:
        return c / (2.0 / dt + 1.0)
    a = np.abs(c)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        x = np.minimum(0.5 * dt * a, a ** (1.0 / m))
        for _ in range(200):
            g = 2.0 * x / dt + x**m - a
            dg = 2.0 / dt + m * x ** (m - 1.0)
            x_new = np.clip(x - g / dg, 0.0, x)
            done = np.all(np.abs(x_new - x) <= tol * np.maximum(x_new, 1e-300))
            x = x_new
            if done:
                break
    return np.sign(c) * x


def damping_term(v: np.ndarray, m: float | None) -> np.ndarray:
    if m is None:
        return np.zeros_like(v)
    return np.abs(v) ** (m - 1.0) * v


# ---------------------------------------------------------------------------
# state construction and stepping
# ---------------------------------------------------------------------------


def _make_memory(problem: Problem, backend: str, dt: float, t_end: float):
    kernel = problem.kernel
    if kernel is None:
        return None
    if backend == PRONY:
        if kernel.family != "exponential_sum":
            raise ConfigError("the Prony backend needs an exponential_sum kernel; use the quadrature backend")
        return PronyModes.from_history(problem.grid, kernel, problem.history)
    cap = HistoryRing.capacity_for(kernel, dt, t_end)
    return HistoryRing.from_history(problem.grid, kernel, problem.history, dt, cap)


def forcing(problem: Problem, u: np.ndarray, memory) -> np.ndarray:
    conv = memory.convolution() if memory is not None else None
    return memory_force(problem.grid, problem.k0, u, conv) + problem.source_force(u)


def init_state(problem: Problem, config: SolverConfig) -> HistoryState:
    """Level-0 state with a Taylor start for the ghost level ``u^{-1}``."""
    grid = problem.grid
    u0 = np.array(grid.check(problem.history.displacement), dtype=float)
    v0 = np.array(grid.check(problem.history.velocity, "initial velocity"), dtype=float)
    config.check_cfl(grid, problem.k0)
    memory = _make_memory(problem, config.memory_backend, config.dt, config.t_end)
    acc = forcing(problem, u0, memory) - damping_term(v0, problem.damping_m)
    dt = config.dt
    u_prev = u0 - dt * v0 + 0.5 * dt * dt * acc
    return HistoryState(grid, u0, u_prev, v0, memory, 0.0, 0, 0.0, None)


def step(state: HistoryState, config: SolverConfig, problem: Problem) -> tuple[HistoryState, Snapshot]:
    """Advance one level; also return the completed diagnostics of the old level."""
    dt = config.dt
    u, up = state.u, state.u_prev
    with np.errstate(over="ignore", invalid="ignore"):
        rhs = forcing(problem, u, state.memory)
        c = rhs + 2.0 * (u - up) / (dt * dt)
        v = solve_damped_velocity(c, dt, problem.damping_m)
        u_new = up + 2.0 * dt * v
        damp_power = float(problem.grid.lp_pow(v, problem.damping_m + 1.0)) if problem.damping_m else 0.0
        mem_value = state.memory_norm()
        mem_rate = state.memory_dissipation()
    rate = damp_power + mem_rate
    dissipated = state.dissipated
    if state.last_rate is not None:
        dissipated += 0.5 * dt * (state.last_rate + rate)
    snap = Snapshot(state.grid, state.t, u, v, mem_value, mem_rate, damp_power, dissipated)
    memory = state.memory.advanced(u_new, u, dt) if state.memory is not None else None
    new = HistoryState(
        state.grid, u_new, u, (u_new - u) / dt, memory,
        (state.step_index + 1) * dt, state.step_index + 1, dissipated, rate,
    )
    return new, snap


def reversed_state(state: HistoryState) -> HistoryState:
    """Swap the two levels and negate the velocity (memoryless states only)."""
    if state.memory is not None:
        raise ConfigError("time reversal is only defined without memory")
    return replace(state, u=state.u_prev.copy(), u_prev=state.u.copy(), v=-state.v)


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------


def run(problem: Problem, config: SolverConfig, state: HistoryState | None = None):
    """Integrate to ``t_end`` or until blow-up.

    Returns ``(trace, final_state, stop_reason)``. Samples are taken every
    ``sample_every`` steps, at every step once ``|grad u|`` exceeds
    ``dense_factor`` times its initial value, and at the final level.
    """
    from .diag import EnergyTrace

    state = state if state is not None else init_state(problem, config)
    trace = EnergyTrace.empty()
    n_end = config.n_steps
    g_start = math.sqrt(float(problem.grid.grad_sq(state.u)))
    stop = StopReason.COMPLETED
    final = state
    while True:
        new, snap = step(state, config, problem)
        n = state.step_index
        grad = math.sqrt(float(problem.grid.grad_sq(snap.u))) if np.all(np.isfinite(snap.u)) else math.inf
        finite = np.all(np.isfinite(new.u)) and np.all(np.isfinite(snap.v)) and math.isfinite(snap.dissipated)
        if not finite:
            stop = StopReason.NONFINITE
            final = state
            break
        blown = grad > config.blowup_threshold
        dense = g_start > 0 and grad > config.dense_factor * g_start
        last = n >= n_end or blown
        if n % config.sample_every == 0 or dense or last:
            trace.append(problem, snap)
        if blown:
            stop = StopReason.BLOWUP
            final = replace(state, v=snap.v)
            break
        if last:
            final = replace(state, v=snap.v)
            break
        state = new
    trace.stop_reason = stop.value
    log.info("run stopped at t=%.6g: %s", final.t, stop.value)
    return trace, final, stop


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

MAGIC = b"VWCKPT01"
# magic, dim, nx, ny, backend, step, payload length, t, dt, dissipated, last rate
_HEADER = struct.Struct("<8sIIIiQQdddd")


def dump_checkpoint(state: HistoryState, path: str | Path, dt: float) -> None:
    grid = state.grid
    nx = grid.n[0]
    ny = grid.n[1] if grid.dim == 2 else 1
    backend = -1 if state.memory is None else BACKEND_CODES[state.memory.kind]
    payload = state.memory.payload() if state.memory is not None else np.zeros(0)
    rate = math.nan if state.last_rate is None else state.last_rate
    header = _HEADER.pack(
        MAGIC, grid.dim, nx, ny, backend, state.step_index, payload.size, state.t, dt, state.dissipated, rate
    )
    body = np.concatenate([state.u.ravel(), state.u_prev.ravel(), state.v.ravel(), payload]).astype("<f8")
    Path(path).write_bytes(header + body.tobytes())


def load_checkpoint(path: str | Path, problem: Problem, config: SolverConfig) -> HistoryState:
    raw = Path(path).read_bytes()
    magic, dim, nx, ny, backend, step_index, n_payload, t, dt, dissipated, rate = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ConfigError(f"{path}: not a checkpoint file")
    grid = problem.grid
    if dim != grid.dim or (nx, ny if dim == 2 else 1) != (grid.n[0], grid.n[1] if dim == 2 else 1):
        raise ShapeMismatch("checkpoint grid does not match the problem grid")
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).astype(float)
    k = grid.size
    u, u_prev, v = (data[i * k : (i + 1) * k].reshape(grid.shape).copy() for i in range(3))
    payload = data[3 * k : 3 * k + n_payload]
    memory = None
    if backend == BACKEND_CODES[PRONY]:
        memory = PronyModes.from_payload(grid, problem.kernel, problem.history, payload)
    elif backend == BACKEND_CODES[QUADRATURE]:
        cap = HistoryRing.capacity_for(problem.kernel, dt, config.t_end)
        memory = HistoryRing.from_payload(grid, problem.kernel, problem.history, payload, dt, cap)
    last_rate = None if math.isnan(rate) else rate
    return HistoryState(grid, u, u_prev, v, memory, t, step_index, dissipated, last_rate)
