"""Potential-well constants for f(u) = u^3 on [0, pi] with mu(s) = exp(-s).

With the embedding constant pinned to 1 the bound y0, the lower depth d0 and
the sink threshold l0 have closed forms; the grid estimate of the depth d
must sit above d0.  Adding a sink term -|u|u raises the depth.

Run with ``python3 demos/well_constants.py``.
"""

from viscowell import runner
from viscowell.config import build_experiment
from viscowell.presets import get_preset


def report(name):
    exp = build_experiment(get_preset(name), name)
    c = runner.constants_report(exp)
    print(f"{name:18s} gamma={c['gammas'][0]:.6f}  y0={c['y0']:.6f}  d0={c['d0']:.6f}  d={c['d']:.6f}")
    return c


if __name__ == "__main__":
    pinned = report("single-cubic")
    print(f"  closed form: y0 = 1/2, d0 = 1/4; d / d0 = {pinned['d'] / pinned['d0']:.3f}")
    report("single-cubic-grid")
    report("sink-added")
