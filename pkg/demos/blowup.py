"""Finite-time blow-up from negative initial energy.

The run stops once the gradient norm crosses the blow-up threshold.  The
blow-up time is then estimated from a power-law fit of the growth and
compared with the upper bound from the concavity argument.

Run with ``python3 demos/blowup.py``.
"""

from viscowell import runner
from viscowell.config import build_experiment
from viscowell.presets import get_preset

if __name__ == "__main__":
    exp = build_experiment(get_preset("blowup-negE"), "blowup-negE")
    print("verdicts:", runner.classify_report(exp)["verdicts"])
    summary, trace, state = runner.simulate_experiment(exp)
    print(f"E(0) = {summary['E0']:.5g}; stopped with {summary['stop']} at t = {state.t:.4f}")
    b = summary["blowup"]
    print(f"estimated blow-up time {b['T_est']:.4f}, growth exponent {b['beta']:.3f}")
    for key in ("alpha", "T_upper", "concavity_ok"):
        if key in b:
            print(f"{key}: {b[key]}")
