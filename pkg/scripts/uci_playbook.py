"""Loop configs over tree counts, depths and learning rates; report mean test scores.

    python scripts/uci_playbook.py configs/iris.yaml --trees 1 10 --depths 1 5
    python scripts/uci_playbook.py configs/abalone_regression.yaml --runs 10 --lr 0.1 0.5

A config without its own test file whose three split fractions are equal is
run as rotated folds (5 shuffles x 3 folds); everything else is repeated over
``--runs`` seeds.  Results go to a TSV (one row per grid point) and stdout.

Learning rates that worked (15-run / 5-seed means):
  iris                AdaGrad 0.3, batch 25, 3000 steps: 4.3-4.9% test error
  abalone regression  AdaGrad 0.5, batch 32, 6000 steps (tuned on a stand-in
                      target; rerun once the real file is available)

iris has 4 feature columns.  The input width is always read from the data
file, so a 3-column variant of the file would also work unchanged.
"""
import argparse
import copy
import itertools
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from hingeforest.config import parse_config
from hingeforest.experiments import rotated_folds, seed_sweep


def uses_folds(cfg):
    fractions = list(cfg.dataset.splits.values())
    return cfg.dataset.test is None and len(fractions) == 3 and np.ptp(fractions) < 1e-6


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("configs", nargs="+")
    parser.add_argument("--trees", type=int, nargs="*", help="tree counts (default: config's)")
    parser.add_argument("--depths", type=int, nargs="*", help="depths (default: config's)")
    parser.add_argument("--lr", type=float, nargs="*", help="learning rates (default: config's)")
    parser.add_argument("--kind", choices=["tree", "fern"], help="override forest kind")
    parser.add_argument("--runs", type=int, default=10, help="seeds for non-fold protocols")
    parser.add_argument("--shuffles", type=int, default=5)
    parser.add_argument("--out", default="playbook_results.tsv")
    args = parser.parse_args(argv)

    out = Path(args.out)
    new = not out.exists()
    with open(out, "a") as fh, tempfile.TemporaryDirectory() as scratch:
        if new:
            fh.write("config\tkind\ttrees\tdepth\tlr\tprotocol\truns\tmetric\tmean\tsd\tseconds\n")
        for path in args.configs:
            base = parse_config(path)
            forest = base.architecture.forest
            grid = itertools.product(args.trees or [forest.trees], args.depths or [forest.depth],
                                     args.lr or [base.optimizer.learning_rate])
            for trees, depth, lr in grid:
                cfg = copy.deepcopy(base)
                cfg.architecture.forest.trees, cfg.architecture.forest.depth = trees, depth
                cfg.architecture.forest.kind = args.kind or forest.kind
                cfg.optimizer.learning_rate = lr
                start = time.perf_counter()
                if uses_folds(cfg):
                    protocol, runs = "folds", rotated_folds(cfg, args.shuffles, 3, scratch)
                else:
                    protocol, runs = "seeds", seed_sweep(cfg, range(1, args.runs + 1), scratch)
                regression = runs[0].test.r2 is not None
                values = np.array([r.test.r2 if regression else 100 * r.test.error for r in runs])
                sd = values.std(ddof=1) if len(values) > 1 else 0.0
                row = [Path(path).stem, cfg.architecture.forest.kind, trees, depth, lr, protocol,
                       len(runs), "r2" if regression else "error%", f"{values.mean():.4f}",
                       f"{sd:.4f}", f"{time.perf_counter() - start:.1f}"]
                line = "\t".join(map(str, row))
                fh.write(line + "\n")
                fh.flush()
                print(line, flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
