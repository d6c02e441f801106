"""Energy diagnostics, decay fits, blow-up detection and regime prediction."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import integrate, optimize, stats

from .errors import InsufficientDecay, NotInBlowupRegime
from .model import SourceSpec, kernel_class, validate_assumptions
from .errors import AssumptionViolated, UnclassifiableKernel
from .well import WellConstants, i0_value, i_value, membership_label

log = logging.getLogger(__name__)

#: the eight standard trace columns first, then the extra ones needed by the blow-up functional
TRACE_COLUMNS = (
    "t",
    "quad_energy",
    "total_energy",
    "memory_norm",
    "dissipation",
    "I0",
    "grad_norm",
    "damp_power",
    "memory_dissipation",
    "n_prime",
)


# ---------------------------------------------------------------------------
# energies of a single state
# ---------------------------------------------------------------------------


def quad_energy(state, kernel=None) -> float:
    """``1/2 (|v|^2 + |grad u|^2 + int mu |grad w|^2)``.

    ``state`` is a :class:`~viscowell.sim.HistoryState` or a
    :class:`~viscowell.sim.Snapshot`; the memory norm comes from its backend.
    """
    g = state.grid
    return 0.5 * float(g.inner(state.v, state.v) + g.grad_sq(state.u) + state.memory_norm())


def total_energy(state, kernel, source: SourceSpec | None) -> float:
    from .model import eval_F

    pot = float(state.grid.integrate(eval_F(source, state.u))) if source is not None else 0.0
    return quad_energy(state, kernel) - pot


# ---------------------------------------------------------------------------
# traces
# ---------------------------------------------------------------------------


@dataclass
class EnergyTrace:
    """Sampled time series; one list per column of :data:`TRACE_COLUMNS`."""

    data: dict[str, list[float]]
    stop_reason: str | None = None

    @classmethod
    def empty(cls) -> "EnergyTrace":
        return cls({c: [] for c in TRACE_COLUMNS})

    @classmethod
    def from_arrays(cls, stop_reason: str | None = None, **cols) -> "EnergyTrace":
        n = len(cols["t"])
        data = {c: np.asarray(cols.get(c, np.zeros(n)), dtype=float).tolist() for c in TRACE_COLUMNS}
        return cls(data, stop_reason)

    def __len__(self) -> int:
        return len(self.data["t"])

    def __getattr__(self, name):
        data = self.__dict__.get("data")
        if data is not None and name in data:
            return np.asarray(data[name], dtype=float)
        raise AttributeError(name)

    def append(self, problem, snap) -> None:
        g = problem.grid
        mem = snap.memory_value
        quad = quad_energy(snap)
        E = quad - problem.potential(snap.u)
        if problem.source is not None:
            I0 = i0_value(g, snap.u, mem, problem.source)
        else:
            I0 = float(g.grad_sq(snap.u)) + mem
        row = {
            "t": snap.t,
            "quad_energy": quad,
            "total_energy": E,
            "memory_norm": mem,
            "dissipation": snap.dissipated,
            "I0": I0,
            "grad_norm": math.sqrt(float(g.grad_sq(snap.u))),
            "damp_power": snap.damp_power,
            "memory_dissipation": snap.memory_rate,
            "n_prime": float(g.inner(snap.u, snap.v)),
        }
        for c in TRACE_COLUMNS:
            self.data[c].append(float(row[c]))

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_COLUMNS)
            for i in range(len(self)):
                w.writerow([repr(float(self.data[c][i])) for c in TRACE_COLUMNS])

    @classmethod
    def from_csv(cls, path: str | Path) -> "EnergyTrace":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        cols = {name: [float(r[i]) for r in body] for i, name in enumerate(header)}
        missing = [c for c in TRACE_COLUMNS[:8] if c not in cols]
        if missing:
            raise ValueError(f"trace CSV lacks columns {missing}")
        return cls.from_arrays(**cols)

    def energy_scale(self) -> float:
        return max(float(np.max(np.abs(self.quad_energy))), float(np.max(np.abs(self.total_energy))), 1e-300)


# ---------------------------------------------------------------------------
# energy identity and dissipation
# ---------------------------------------------------------------------------


def identity_residuals(trace: EnergyTrace) -> np.ndarray:
    """``E(t) + D(t) - E(0)`` at every sample."""
    E = trace.total_energy
    return E + trace.dissipation - E[0]


def energy_identity_residual(trace: EnergyTrace, refined: EnergyTrace | None = None):
    """Return ``(max_residual, order)``; ``order`` needs the same run at ``dt/2``."""
    res = float(np.max(np.abs(identity_residuals(trace)))) if len(trace) else 0.0
    order = None
    if refined is not None:
        res2 = float(np.max(np.abs(identity_residuals(refined))))
        if res > 0 and res2 > 0:
            order = math.log2(res / res2)
    return res, order


def dissipation_D(trace: EnergyTrace) -> np.ndarray:
    """Cumulative trapezoid of the sampled rate ``|u_t|_{m+1}^{m+1} - 1/2 int mu' |grad w|^2``."""
    rate = trace.damp_power + trace.memory_dissipation
    return integrate.cumulative_trapezoid(rate, trace.t, initial=0.0)


def resolved_length(trace: EnergyTrace, rtol: float = 1e-2) -> int:
    """Number of leading samples whose identity residual stays within ``rtol`` of the local energy scale.

    A fixed-step scheme cannot follow a solution into its singularity; past
    this point the samples describe the discretisation, not the equation.
    """
    if not len(trace):
        return 0
    E = trace.total_energy
    scale = np.maximum(np.abs(E), max(abs(E[0]), trace.quad_energy[0], 1e-300))
    bad = np.nonzero(np.abs(identity_residuals(trace)) > rtol * scale)[0]
    return int(bad[0]) if len(bad) else len(trace)


def truncated(trace: EnergyTrace, n: int) -> EnergyTrace:
    return EnergyTrace({c: list(v[:n]) for c, v in trace.data.items()}, trace.stop_reason)


def energy_nonincreasing(trace: EnergyTrace, tol: float) -> bool:
    return bool(np.all(np.diff(trace.total_energy) <= tol))


# ---------------------------------------------------------------------------
# decay fits and comparison envelope
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DecayFit:
    model: str
    rate: float
    amplitude: float
    r_squared: float
    n_points: int

    def to_dict(self) -> dict:
        return {"model": self.model, "rate": self.rate, "amplitude": self.amplitude, "r_squared": self.r_squared, "n_points": self.n_points}


def fit_decay(
    trace: EnergyTrace,
    model: str = "exponential",
    window: tuple[float, float] | None = None,
    floor: float = 1e-14,
    min_points: int = 8,
    monotone_tol: float = 1e-3,
) -> DecayFit:
    """Least-squares fit of ``log E`` on the window.

    The default window is the last half of the run, or of its initial part
    where ``E`` stays above the floor if the energy drops below it earlier.

    Exponential: ``E = A exp(-rate t)``; power: ``E = A (1 + t)^rate`` (so
    ``rate`` is the negative exponent). Samples with ``E`` below
    ``floor * energy_scale`` are dropped.
    """
    t, E = trace.t, trace.total_energy
    above = E > floor * trace.energy_scale()
    if window is None:
        # last half of the span where E is still resolved above the floor
        below = np.nonzero(~above)[0]
        t_last = t[below[0] - 1] if len(below) and below[0] > 0 else t[-1]
        window = (t[0] + 0.5 * (t_last - t[0]), t_last)
    sel = (t >= window[0]) & (t <= window[1]) & above
    if sel.sum() < min_points:
        raise InsufficientDecay(f"only {int(sel.sum())} usable samples in window {window}")
    tw, Ew = t[sel], E[sel]
    if np.any(np.diff(Ew) > monotone_tol * Ew[0]):
        raise InsufficientDecay("energy is not decreasing on the fit window")
    x = tw if model == "exponential" else np.log1p(tw)
    fit = stats.linregress(x, np.log(Ew))
    rate = -fit.slope if model == "exponential" else fit.slope
    return DecayFit(model, float(rate), float(math.exp(fit.intercept)), float(fit.rvalue**2), int(sel.sum()))


def _phi(params):
    if len(params) == 2:
        C1, m = params
        return lambda x: C1 * (x ** (2.0 / (m + 1.0)) + x)
    C2, C3, m, sigma, r = params
    return lambda x: C2 * (x ** (2.0 / (m + 1.0)) + x) + C3 * x ** (sigma / (sigma + r - 1.0))


def invert_identity_plus(phi, S: float) -> float:
    """Solve ``x + phi(x) = S`` on ``[0, S]``."""
    if S <= 0:
        return 0.0
    return optimize.brentq(lambda x: x + phi(x) - S, 0.0, S, xtol=1e-15 * S + 1e-300, rtol=4 * np.finfo(float).eps)


def decay_envelope(E0: float, phi_params: Sequence[float], t_grid: Sequence[float], dt: float = 1e-3) -> np.ndarray:
    """Explicit Euler solution of ``S' = -(I + phi)^{-1}(S)``, ``S(0) = E0``, sampled at ``t_grid``."""
    phi = _phi(tuple(phi_params))
    t_grid = np.asarray(t_grid, dtype=float)
    out = np.empty_like(t_grid)
    order = np.argsort(t_grid)
    S, t = float(E0), 0.0
    for i in order:
        target = t_grid[i]
        while t < target - 1e-12:
            h = min(dt, target - t)
            S = max(S - h * invert_identity_plus(phi, S), 0.0)
            t += h
        out[i] = S
    return out


@dataclass
class EnvelopeCheck:
    C1: float
    T1: float
    T: float
    n: np.ndarray
    E_nT: np.ndarray
    S_n: np.ndarray
    ok: bool

    def to_dict(self) -> dict:
        return {
            "C1": self.C1,
            "T1": self.T1,
            "T": self.T,
            "n": self.n.tolist(),
            "E_nT": self.E_nT.tolist(),
            "S_n": self.S_n.tolist(),
            "ok": self.ok,
        }


def check_decay_envelope(trace: EnergyTrace, m: float, transient: float = 0.2) -> EnvelopeCheck:
    """Fit the smallest ``C1`` with ``E <= phi(E(0) - E)`` after the transient and test ``E(nT) <= S(n)``.

    ``T1`` is the first sample after the initial ``transient`` fraction of
    the run; ``T`` is the first sample ``>= T1`` with
    ``E(T) + phi^{-1}(E(T)) <= E(0)``.
    """
    t, E = trace.t, trace.total_energy
    E0 = E[0]
    D = E0 - E
    i1 = int(np.searchsorted(t, t[0] + transient * (t[-1] - t[0])))
    tail = slice(i1, None)
    base = D[tail] ** (2.0 / (m + 1.0)) + D[tail]
    if np.any(base <= 0):
        raise InsufficientDecay("no dissipation after the transient")
    C1 = float(np.max(E[tail] / base))
    phi = _phi((C1, m))
    T = None
    for i in range(i1, len(t)):
        inv = optimize.brentq(lambda x: phi(x) - E[i], 0.0, max(E0, 1.0) * 10) if E[i] > 0 else 0.0
        if E[i] + inv <= E0 * (1 + 1e-12):
            T = float(t[i] - t[0])
            break
    if T is None or T <= 0:
        raise InsufficientDecay("no admissible period T inside the run")
    n = np.arange(0, int(math.floor((t[-1] - t[0]) / T + 1e-9)) + 1)
    E_nT = np.interp(t[0] + n * T, t, E)
    S_n = decay_envelope(E0, (C1, m), n.astype(float))
    ok = bool(np.all(E_nT <= S_n * (1 + 1e-9) + 1e-15))
    return EnvelopeCheck(C1, float(t[i1] - t[0]), T, n, E_nT, S_n, ok)


# ---------------------------------------------------------------------------
# blow-up
# ---------------------------------------------------------------------------


def alpha_bounds(pr: float, m: float) -> tuple[float, float]:
    return (pr - m) / ((pr + 1.0) * (m + 1.0)), (pr - 1.0) / (2.0 * (pr + 1.0))


def choose_alpha_eps(source: SourceSpec, m: float, H0: float, N0prime: float) -> tuple[float, float]:
    """``alpha`` at half its admissible bound; ``eps`` as large as allowed, capped at 1."""
    if not H0 > 0:
        raise NotInBlowupRegime(f"H(0)={H0} must be positive")
    b1, b2 = alpha_bounds(source.pr, m)
    if not (b1 > 0 and b2 > 0):
        raise NotInBlowupRegime(f"p_r={source.pr} must exceed m={m}")
    alpha = 0.5 * min(b1, b2)
    eps = 1.0
    if N0prime < 0:
        eps = min(eps, -H0 ** (1.0 - alpha) / (2.0 * N0prime))
    return alpha, eps


@dataclass
class BlowupFunctional:
    alpha: float
    eps: float
    H: np.ndarray
    Y: np.ndarray


def blowup_functional(
    trace: EnergyTrace,
    source: SourceSpec,
    m: float,
    alpha: float | None = None,
    eps: float | None = None,
    M: float | None = None,
) -> BlowupFunctional:
    """``Y = H^(1-alpha) + eps N'`` with ``H = -E`` or, given ``M``, ``H = M - E``."""
    E = trace.total_energy
    H = (M - E) if M is not None else -E
    a0, e0 = choose_alpha_eps(source, m, float(H[0]), float(trace.n_prime[0]))
    alpha = a0 if alpha is None else alpha
    eps = e0 if eps is None else eps
    if np.any(H <= 0):
        raise NotInBlowupRegime("H became non-positive along the trace")
    Y = H ** (1.0 - alpha) + eps * trace.n_prime
    return BlowupFunctional(alpha, eps, H, Y)


@dataclass
class BlowupDetection:
    blew_up: bool
    T_est: float
    concavity_ok: bool | None
    beta: float | None = None

    def to_dict(self) -> dict:
        return {"blew_up": self.blew_up, "T_est": self.T_est, "concavity_ok": self.concavity_ok, "beta": self.beta}


def estimate_blowup_time(t: np.ndarray, g: np.ndarray, min_points: int = 8):
    """Fit ``g = A (T - t)^(-beta)`` on the last decade of growth; return ``(T, beta)``."""
    sel = growth_window(g, min_points)
    tw, gw = t[sel], g[sel]
    # start: beta = 1 makes 1/g linear in t with root T
    slope, icpt = np.polyfit(tw, 1.0 / gw, 1)
    T0 = -icpt / slope if slope < 0 else tw[-1] + (tw[-1] - tw[0])
    T0 = max(T0, tw[-1] + 1e-9 * max(1.0, abs(tw[-1])))

    def resid(x):
        logA, beta, logd = x
        T = tw[-1] + math.exp(logd)
        return logA - beta * np.log(T - tw) - np.log(gw)

    x0 = [math.log(gw[-1]) + math.log(T0 - tw[-1]), 1.0, math.log(T0 - tw[-1])]
    sol = optimize.least_squares(resid, x0, method="lm", xtol=1e-14, ftol=1e-14)
    logA, beta, logd = sol.x
    return float(tw[-1] + math.exp(logd)), float(beta)


def concave_decreasing(t: np.ndarray, z: np.ndarray, rtol: float = 1e-6) -> bool:
    slopes = np.diff(z) / np.diff(t)
    scale = max(float(np.max(np.abs(slopes))), 1e-300)
    return bool(np.all(slopes <= rtol * scale) and np.all(np.diff(slopes) <= rtol * scale))


def growth_window(g: np.ndarray, min_points: int = 8) -> np.ndarray:
    """Mask of the last decade of growth of ``g`` (at least ``min_points`` samples)."""
    sel = g >= g[-1] / 10.0
    # only the trailing run of samples above the cut
    below = np.nonzero(~sel)[0]
    if len(below):
        sel[: below[-1] + 1] = False
    if sel.sum() < min_points:
        sel = np.zeros_like(sel)
        sel[-min_points:] = True
    return sel


def detect_blowup(
    trace: EnergyTrace,
    alpha: float | None = None,
    Y: np.ndarray | None = None,
    threshold: float | None = None,
) -> BlowupDetection:
    """Blow-up flag, fitted blow-up time and the concavity test of ``Z = Y^(-alpha/(1-alpha))``.

    ``concavity_ok`` requires ``Z`` to decrease at every sample and to be
    concave on the growth window (the last decade of growth of ``|grad u|``).
    """
    if threshold is not None:
        blew_up = bool(np.max(trace.grad_norm) > threshold)
    else:
        blew_up = trace.stop_reason in ("BlowupThreshold", "NonFinite")
    if not blew_up:
        return BlowupDetection(False, math.inf, None)
    T_est, beta = estimate_blowup_time(trace.t, trace.grad_norm)
    concavity = None
    if alpha is not None and Y is not None:
        if np.all(Y > 0):
            Z = Y ** (-alpha / (1.0 - alpha))
            t = trace.t
            win = growth_window(trace.grad_norm)
            concavity = bool(np.all(np.diff(Z) < 0)) and concave_decreasing(t[win], Z[win])
        else:
            concavity = False
    return BlowupDetection(True, T_est, concavity, beta)


# ---------------------------------------------------------------------------
# regime prediction
# ---------------------------------------------------------------------------

VERDICTS = (
    "GlobalByTheorem4.2",
    "GlobalByTheorem4.3",
    "DecayCaseI",
    "DecayCaseII",
    "DecayCaseIII",
    "DecayCaseIV",
    "BlowupByTheorem6.1",
    "BlowupByTheorem6.2",
    "BlowupByCorollary6.3",
    "NoPrediction",
)


@dataclass(frozen=True)
class InitialEnergies:
    E0: float
    quad0: float
    I0: float
    I: float
    memory_norm: float
    membership: str

    def to_dict(self) -> dict:
        return {
            "E0": self.E0,
            "quad_energy0": self.quad0,
            "I0": self.I0,
            "I": self.I,
            "memory_norm": self.memory_norm,
            "membership": self.membership,
        }


def history_memory_norm(problem) -> float:
    """``int mu(s) |grad(u0 - g(-s) u0)|^2 ds`` by adaptive quadrature."""
    kernel, hist = problem.kernel, problem.history
    if kernel is None or hist.kind == "constant":
        return 0.0
    g0 = float(problem.grid.grad_sq(hist.displacement))
    if g0 == 0.0:
        return 0.0
    val, _ = integrate.quad(lambda s: kernel.mu(s) * (1.0 - hist.g(-s)) ** 2, 0.0, np.inf, limit=500, epsabs=1e-14, epsrel=1e-12)
    return g0 * float(val)


def initial_energies(problem, constants: WellConstants | None = None) -> InitialEnergies:
    g = problem.grid
    u0, v0 = problem.history.displacement, problem.history.velocity
    mem = history_memory_norm(problem)
    quad = 0.5 * float(g.inner(v0, v0) + g.grad_sq(u0) + mem)
    E0 = quad - problem.potential(u0)
    src = problem.source
    if src is not None:
        I0 = i0_value(g, u0, mem, src)
        I = i_value(g, u0, mem, src)
    else:
        I0 = float(g.grad_sq(u0)) + mem
        I = 0.5 * I0
    label = "n/a"
    if constants is not None:
        is_zero = not np.any(u0) and mem == 0.0
        label = membership_label(I, I0, float(g.grad_sq(u0)) + mem, constants.depth_value, is_zero)
    return InitialEnergies(E0, quad, I0, I, mem, label)


@dataclass
class RegimePrediction:
    hypotheses: dict[str, list[tuple[str, bool]]]
    verdicts: list[str]

    @property
    def verdict(self) -> str:
        return self.verdicts[0] if self.verdicts else "NoPrediction"

    @property
    def predicts_blowup(self) -> bool:
        return any(v.startswith("Blowup") for v in self.verdicts)

    @property
    def predicts_global(self) -> bool:
        return any(v.startswith(("Global", "Decay")) for v in self.verdicts)

    def to_dict(self) -> dict:
        return {
            "verdicts": list(self.verdicts) or ["NoPrediction"],
            "hypotheses": {
                name: [{"clause": c, "pass": bool(ok)} for c, ok in clauses]
                for name, clauses in self.hypotheses.items()
            },
        }


def _standing(problem, strict: bool) -> list[tuple[str, bool]]:
    clauses = [
        ("relaxation kernel present", problem.kernel is not None),
        ("frictional damping present (m >= 1)", problem.damping_m is not None),
        ("source present", problem.source is not None),
    ]
    try:
        validate_assumptions(problem.source, problem.damping_m, problem.kernel, strict=strict)
        ok = True
    except AssumptionViolated:
        ok = False
    clauses.append(("standing assumptions" + (" (strict)" if strict else ""), ok))
    return clauses


def classify_regime(problem, constants: WellConstants, energies: InitialEnergies, strict: bool = False) -> RegimePrediction:
    """Evaluate every hypothesis clause and collect all verdicts that fire."""
    src, m, kernel = problem.source, problem.damping_m, problem.kernel
    base = _standing(problem, strict)
    hyp: dict[str, list[tuple[str, bool]]] = {}
    verdicts: list[str] = []
    base_ok = all(ok for _, ok in base)
    E0, quad0 = energies.E0, energies.quad0
    k0 = problem.k0
    has_src = src is not None

    def add(name, verdict, clauses):
        clauses = base + clauses
        hyp[name] = clauses
        if all(ok for _, ok in clauses):
            verdicts.append(verdict)

    qs = src.qs if has_src else None
    add("Theorem4.2", "GlobalByTheorem4.2", [
        ("s >= 1", has_src and src.s >= 1),
        ("p_r < q_s", has_src and qs is not None and src.pr < qs),
    ])
    d = constants.depth_value
    add("Theorem4.3", "GlobalByTheorem4.3", [
        (f"E(0) < d (d={d:.12g})", E0 < d),
        ("u0 in W1", energies.membership == "W1"),
    ])

    cls = None
    if kernel is not None:
        try:
            cls = kernel_class(kernel)
        except UnclassifiableKernel:
            cls = None
    common = [
        (f"quadratic energy(0) <= y0 (y0={constants.y0:.12g})", quad0 <= constants.y0),
        (f"E(0) < d0 (d0={constants.d0:.12g})", E0 < constants.d0),
        ("u0 in W1", energies.membership == "W1"),
        ("m <= 5 (sup |u|_{m+1} bounded by E(0))", m is not None and m <= 5),
    ]
    m_is_1 = m is not None and m == 1
    m_gt_1 = m is not None and m > 1
    class_i = cls is not None and cls.label == "ClassI"
    class_ii = cls is not None and cls.label == "ClassII"
    add("Theorem5.5.I", "DecayCaseI", common + [("m = 1", m_is_1), ("mu' + C mu <= 0", class_i)])
    add("Theorem5.5.II", "DecayCaseII", common + [("m > 1", m_gt_1), ("mu' + C mu <= 0", class_i)])
    add("Theorem5.5.III", "DecayCaseIII", common + [("m = 1", m_is_1), ("mu' + C mu^r <= 0, 1 < r < 2", class_ii)])
    add("Theorem5.5.IV", "DecayCaseIV", common + [("m > 1", m_gt_1), ("mu' + C mu^r <= 0, 1 < r < 2", class_ii)])

    p1 = src.p1 if has_src else 0.0
    pr = src.pr if has_src else 0.0
    no_sink_or_below = has_src and (qs is None or qs < p1)
    blow_common = [
        (f"p_1 > sqrt(k0) (k0={k0:.12g})", has_src and p1 > math.sqrt(k0)),
        ("p_r > m", has_src and m is not None and pr > m),
    ]
    add("Theorem6.1", "BlowupByTheorem6.1", [
        ("E(0) < 0", E0 < 0),
        ("q_s < p_1", no_sink_or_below),
    ] + blow_common)
    M = constants.M_threshold
    m_ok = M is not None
    add("Theorem6.2", "BlowupByTheorem6.2", [
        ("M defined (p_1 > l0)", m_ok),
        (f"0 <= E(0) < M (M={M})", m_ok and 0 <= E0 < M),
        (f"quadratic energy(0) > y0 (y0={constants.y0:.12g})", quad0 > constants.y0),
        ("p_1 > q_s", no_sink_or_below),
    ] + blow_common)
    add("Corollary6.3", "BlowupByCorollary6.3", [
        ("M defined (p_1 > l0)", m_ok),
        (f"0 <= E(0) < M (M={M})", m_ok and 0 <= E0 < M),
        ("p_1 > q_s", no_sink_or_below),
        ("u0 in W2", energies.membership == "W2"),
    ] + blow_common)
    return RegimePrediction(hyp, verdicts)
