"""A one-axis sweep of the data amplitude across the well boundary.

Small amplitudes start inside the stable set and decay; large ones start
in the unstable set and blow up.  The sweep table records the predicted
and observed outcome of every point.

Run with ``python3 demos/phase_sweep.py [OUT_DIR]``.
"""

import csv
import sys
import tempfile

from viscowell import runner
from viscowell.presets import get_preset

if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp(prefix="sweep-")
    doc = get_preset("sweep-single-cubic")
    axes = [runner.parse_axis("amplitude=lin:0.25:2.5:10")]
    runner.sweep(doc, axes, out, jobs=1)
    with open(f"{out}/sweep.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            print(f"amplitude {float(row['amplitude']):5.2f}  {row['membership']:9s} "
                  f"predicted {row['predicted']:13s} observed {row['observed']:9s} match {row['match']}")
    print("table written to", out)
