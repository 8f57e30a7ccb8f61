"""Trade-off sweep over the relevance/coherence mixing weight.

Usage: python3 scripts/run_sweep.py [out_dir]
"""

import sys
from pathlib import Path

from lshan import cli

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("runs/sweep")
data = out / "data"
out.mkdir(parents=True, exist_ok=True)

cli.run(["synth", "--out", str(data), "--seed", "0"])

cfg_path = out / "sweep.cfg"
cfg_path.write_text("seed = 0\n")

sys.exit(cli.run(["sweep", "--config", str(cfg_path), "--data", str(data),
                  "--out", str(out / "sweep.csv")]))
