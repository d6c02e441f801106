"""Energy decay under linear and cubic damping.

Linear damping with an exponential kernel gives exponential decay; cubic
damping gives an algebraic rate.  Each run prints its predicted regime, the
fitted decay law and the check against the abstract decay envelope.

Run with ``python3 demos/energy_decay.py`` (about half a minute).
"""

from viscowell import runner
from viscowell.config import build_experiment
from viscowell.presets import get_preset

if __name__ == "__main__":
    for name in ("decay-m1-expkernel", "decay-m3"):
        exp = build_experiment(get_preset(name), name)
        verdicts = runner.classify_report(exp)["verdicts"]
        summary, trace, _ = runner.simulate_experiment(exp)
        print(f"{name}: verdicts {verdicts}")
        print(f"  E(0) = {trace.total_energy[0]:.5g}, E(T) = {trace.total_energy[-1]:.5g} at T = {trace.t[-1]:g}")
        print(f"  energy identity residual {summary['max_residual']:.2e}")
        fit = summary["fit"]
        if fit and "rate" in fit:
            print(f"  {fit['model']} fit: rate {fit['rate']:.4f}, R^2 {fit['r_squared']:.5f}")
        env = summary["envelope"]
        if env and "ok" in env:
            print(f"  below decay envelope: {env['ok']} (C1 {env['C1']:.3f}, T {env['T']:.3g})")
