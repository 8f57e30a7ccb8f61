"""Rank-consistency probe: does the decoder's k-best ranking agree with
latent DTW distance?

Usage: python3 scripts/run_probe.py <model.lshn> <data_dir> [out.csv]
"""

import sys
from pathlib import Path

from lshan import cli

if len(sys.argv) < 3:
    print(__doc__)
    sys.exit(1)

model, data = sys.argv[1], sys.argv[2]
out = sys.argv[3] if len(sys.argv) > 3 else "probe.csv"
sys.exit(cli.run(["probe", "--model", model, "--data", data,
                  "--split", "train", "--out", out]))
