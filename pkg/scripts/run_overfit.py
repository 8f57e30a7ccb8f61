"""Overfit experiment: train on the standard synthetic corpus and report
train / test accuracy.

Usage: python3 scripts/run_overfit.py [out_dir]
"""

import sys
from pathlib import Path

from lshan import cli

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("runs/overfit")
data = out / "data"
model = out / "model"

cli.run(["synth", "--out", str(data), "--seed", "0"])

cfg_path = out / "train.cfg"
out.mkdir(parents=True, exist_ok=True)
# defaults of TrainingConfig tuned for the standard synthetic corpus
cfg_path.write_text("seed = 0\n")

for step in (
    ["train", "--config", str(cfg_path), "--data", str(data),
     "--out", str(model)],
    ["eval", "--model", str(model / "final.lshn"), "--data", str(data),
     "--split", "train", "--out", str(out / "train_eval.csv")],
    ["eval", "--model", str(model / "final.lshn"), "--data", str(data),
     "--split", "test", "--out", str(out / "test_eval.csv")],
):
    code = cli.run(step)
    if code != 0:
        sys.exit(code)
