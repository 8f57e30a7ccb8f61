"""Segmentation strategy comparison: evaluate one checkpoint with all three
clip segmentation strategies on the synthetic test split and print a table.

Usage: python3 scripts/compare_strategies.py <model.lshn> <data_dir>
"""

import sys
from pathlib import Path

from lshan import evaluation as eval_mod
from lshan import han as han_mod
from lshan.corpus import load_dataset, read_vocabulary

if len(sys.argv) != 3:
    print(__doc__)
    sys.exit(1)

model_path, data_dir = Path(sys.argv[1]), Path(sys.argv[2])
ls, han, _ = han_mod.load_checkpoint(model_path)
vocab_path = data_dir / "vocab.txt"
vocab = read_vocabulary(vocab_path) if vocab_path.exists() else None
dataset = load_dataset(data_dir / "manifest_test.json", vocab)

print(f"{'strategy':<12} {'accuracy':>9} {'S':>4} {'I':>4} {'D':>4}")
for name in ("two-split", "pair-split", "even-7"):
    strategy = han_mod.parse_strategy(name)
    report = eval_mod.evaluate(ls, han, dataset, strategy, 30)
    agg = report.aggregate
    print(f"{name:<12} {report.mean_accuracy:>9.4f} {agg.substitutions:>4}"
          f" {agg.insertions:>4} {agg.deletions:>4}")
