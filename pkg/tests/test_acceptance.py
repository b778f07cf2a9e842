"""Acceptance criteria, one test each.

Every test records a single ``PASS``/``FAIL`` line; the lines are printed at
the end of the pytest run (see ``conftest.py``) and also when this file is
executed directly with ``python tests/test_acceptance.py``.
"""
import time
from pathlib import Path

import numpy as np
import pytest

from hingeforest.build import load_splits
from hingeforest.config import parse_config
from hingeforest.experiments import data_root, rotated_folds, seed_sweep
from hingeforest.forest import (FERN, TREE, HingeForestParams, forest_backward, forest_forward,
                                initialize_forest, kernels, oracle_forward, oracle_terms)
from hingeforest.gradcheck import check_gradients
from hingeforest.layers import RunningBatchNorm
from hingeforest.serialize import load_model
from hingeforest.train import evaluate, train

REPO = Path(__file__).resolve().parent.parent
CONFIGS = REPO / "configs"
RESULTS = {}
BACKEND_NAMES = sorted(kernels.BACKENDS)

MNIST_FILES = ("train-images-idx3-ubyte.gz", "train-labels-idx1-ubyte.gz",
               "t10k-images-idx3-ubyte.gz", "t10k-labels-idx1-ubyte.gz")


def record(number, title, passed, detail):
    RESULTS[number] = f"[{'PASS' if passed else 'FAIL'}] {number:>2}. {title}: {detail}"
    assert passed, RESULTS[number]


def fail_missing(number, title, missing):
    RESULTS[number] = (f"[FAIL] {number:>2}. {title}: dataset not found ({', '.join(map(str, missing))}); "
                       "run scripts/fetch_data.py or set HINGEFOREST_DATA")
    pytest.fail(RESULTS[number])


def test_01_oracle_equivalence():
    rng = np.random.default_rng(20240601)
    start = time.perf_counter()
    worst, most_terms = 0.0, 0
    for i in range(1000):
        kind = TREE if i % 2 == 0 else FERN
        depth, nfeat = int(rng.integers(1, 7)), int(rng.integers(1, 21))
        p = initialize_forest(1, depth, nfeat, num_outputs=1, kind=kind, seed=rng,
                              dtype=np.float64)
        x = rng.normal(size=nfeat)
        out, _ = forest_forward(x[None, :], p)
        fi, t, w = p.feature_index[0], p.thresholds[0], p.leaf_weights[0]
        ref = oracle_forward(x, fi, t, w, depth, kind == FERN)
        worst = max(worst, float(np.max(np.abs(out[0, 0] - ref))))
        terms = oracle_terms(x, fi, t, w, depth, kind == FERN)
        most_terms = max(most_terms, sum(bool(np.any(term != 0)) for term in terms))
    elapsed = time.perf_counter() - start
    record(1, "oracle equivalence", worst <= 1e-6 and most_terms <= 1 and elapsed < 10,
           f"1000 instances, max |diff| {worst:.2e} (<= 1e-6), max nonzero leaf terms "
           f"{most_terms} (<= 1), {elapsed:.2f}s (< 10s)")


def test_02_gradient_correctness():
    from hingeforest.build import DataInfo, build_graph
    cfg = parse_config("""
dataset: {train: unused.csv}
architecture:
  features: {type: conv, kernels: 4, kernel_size: 5, stride: 3}
  forest: {kind: tree, trees: 4, depth: 3}
run: {seed: 7}
""", check_paths=False)
    start = time.perf_counter()
    graph = build_graph(cfg, DataInfo((1, 8, 8), 10, "classification", list("0123456789")),
                        dtype=np.float64)
    rng = np.random.default_rng(7)
    x = rng.uniform(size=(16, 1, 8, 8))
    y = rng.integers(0, 10, 16)
    for _ in range(10):
        graph.run_forward(rng.uniform(size=(16, 1, 8, 8)), rng.integers(0, 10, 16))
    report = check_gradients(graph.eval(), x, y, samples=200, h=1e-3, tolerance=1e-3, seed=7,
                             activations=["batch_norm"])
    elapsed = time.perf_counter() - start
    groups = ", ".join(f"{k} {v:.1e}" for k, v in report.per_group.items())
    record(2, "gradient correctness", report.passed and report.checked == 200 and elapsed < 60,
           f"{report.checked} coords ({report.skipped} kink-skipped), max rel err "
           f"{report.max_rel_error:.2e} (< 1e-3), {elapsed:.1f}s; {groups}")


def test_03_sparsity():
    rng = np.random.default_rng(3)
    pairs = violations = zero_margin = 0
    for name in BACKEND_NAMES:
        be = kernels.get_backend(name)
        for kind in (TREE, FERN):
            for depth in (1, 3, 6):
                p = initialize_forest(6, depth, 5, num_outputs=2, kind=kind, seed=rng,
                                      dtype=np.float64)
                x = rng.normal(size=(10, 5))
                # put some inputs exactly on their root threshold
                x[0, p.feature_index[0, 0]] = p.thresholds[0, 0]
                _, cache = forest_forward(x, p, be)
                for n in range(10):
                    for m in range(6):
                        g = np.zeros((10, 6, 2))
                        if rng.random() < 0.8:
                            g[n, m] = rng.normal(size=2)
                        dx, dt, dw = forest_backward(g, cache, p, be)
                        live = cache.margin[n, m] != 0 and np.any(g[n, m] != 0)
                        zero_margin += cache.margin[n, m] == 0
                        want = 1 if live else 0
                        ok = (np.count_nonzero(dt) == want
                              and np.count_nonzero(np.abs(dw).sum(axis=2)) == want
                              and np.count_nonzero(dx) <= want)
                        if live:
                            ok = ok and dt[m, cache.vertex[n, m]] != 0 \
                                and np.any(dw[m, cache.leaf[n, m]] != 0)
                        pairs += 1
                        violations += not ok
    record(3, "sparsity", violations == 0 and zero_margin > 0,
           f"{pairs} (example, tree) pairs over backends {BACKEND_NAMES}, {violations} violations, "
           f"{zero_margin} zero-margin pairs checked")


def test_04_complexity():
    rng = np.random.default_rng(4)
    mismatches = []
    for name in BACKEND_NAMES:
        be = kernels.get_backend(name)
        for kind in (TREE, FERN):
            for depth in range(1, 11):
                nb, m = int(rng.integers(1, 40)), int(rng.integers(1, 8))
                p = initialize_forest(m, depth, 6, kind=kind, seed=rng)
                _, cache = forest_forward(rng.normal(size=(nb, 6)).astype(np.float32), p, be)
                if cache.decisions != nb * m * depth:
                    mismatches.append((name, kind, depth, cache.decisions, nb * m * depth))
    record(4, "complexity", not mismatches,
           f"decision count == N_B*M*D for trees and ferns, D=1..10, backends {BACKEND_NAMES}; "
           f"mismatches {mismatches or 'none'}")


def test_05_depth1_equivalence():
    rng = np.random.default_rng(5)
    differing = 0
    checks = 0
    for name in BACKEND_NAMES:
        be = kernels.get_backend(name)
        for dtype in (np.float32, np.float64):
            for _ in range(10):
                tree = initialize_forest(10, 1, 7, num_outputs=3, kind=TREE, seed=123, dtype=dtype)
                fern = initialize_forest(10, 1, 7, num_outputs=3, kind=FERN, seed=123, dtype=dtype)
                x = rng.normal(size=(32, 7)).astype(dtype)
                g = rng.normal(size=(32, 10, 3)).astype(dtype)
                o1, c1 = forest_forward(x, tree, be)
                o2, c2 = forest_forward(x, fern, be)
                outs = [o1.tobytes() == o2.tobytes()]
                for a, b in zip(forest_backward(g, c1, tree, be), forest_backward(g, c2, fern, be)):
                    outs.append(a.tobytes() == b.tobytes())
                checks += len(outs)
                differing += outs.count(False)
    record(5, "depth-1 tree/fern equivalence", differing == 0,
           f"{checks} output/gradient arrays compared bitwise (shared seed), {differing} differ")


def test_06_batch_norm_parity():
    from hingeforest.build import DataInfo, build_graph
    rng = np.random.default_rng(6)
    bn = RunningBatchNorm("bn", ["x"], 12)
    for _ in range(20):
        bn.forward([rng.normal(2.0, 3.0, size=(16, 12)).astype(np.float32)])
    bn.frozen = True
    x = rng.normal(size=(16, 12)).astype(np.float32)
    train_out = bn.forward([x]).copy()
    bn.training = False
    layer_ok = train_out.tobytes() == bn.forward([x]).tobytes()

    cfg = parse_config("dataset: {train: unused.csv}\n", check_paths=False)
    graph = build_graph(cfg, DataInfo((4,), 3, "classification", ["a", "b", "c"]))
    for _ in range(10):
        graph.run_forward(rng.normal(size=(8, 4)), rng.integers(0, 3, 8))
    graph["batch_norm"].frozen = True
    batch = rng.normal(size=(8, 4))
    graph.train()
    a = graph.predict(batch).copy()
    graph.eval()
    graph_ok = a.tobytes() == graph.predict(batch).tobytes()
    record(6, "batch-norm forward parity", layer_ok and graph_ok,
           f"frozen stats, train vs eval bitwise equal: layer {layer_ok}, full graph {graph_ok}")


def test_07_iris(tmp_path):
    cfg = parse_config(CONFIGS / "iris.yaml")
    start = time.perf_counter()
    runs = rotated_folds(cfg, shuffles=5, folds=3, out_root=tmp_path)
    elapsed = time.perf_counter() - start
    errors = np.array([r.test.error for r in runs])
    record(7, "iris reproduction", len(runs) == 15 and errors.mean() <= 0.06 and elapsed < 300,
           f"15 runs (3 folds x 5 shuffles), mean test error {100 * errors.mean():.2f}% "
           f"(sd {100 * errors.std(ddof=1):.2f}; <= 6%), {elapsed:.1f}s (< 300s)")


def test_08_abalone(tmp_path):
    title = "abalone regression"
    path = data_root(REPO / "data") / "abalone.data"
    if not path.exists():
        fail_missing(8, title, [path])
    cfg = parse_config(CONFIGS / "abalone_regression.yaml", check_paths=False)
    cfg.dataset.train = str(path)
    start = time.perf_counter()
    runs = seed_sweep(cfg, out_root=tmp_path)
    elapsed = time.perf_counter() - start
    r2 = np.array([r.test.r2 for r in runs])
    record(8, title, r2.mean() >= 0.50 and elapsed < 600,
           f"5 seeds, mean test R^2 {r2.mean():.3f} (sd {r2.std(ddof=1):.3f}; >= 0.50), "
           f"{elapsed:.1f}s (< 600s)")


def test_09_mnist_smoke(tmp_path):
    title = "MNIST smoke"
    root = data_root(REPO / "data") / "mnist"
    missing = [root / f for f in MNIST_FILES if not (root / f).exists()]
    if missing:
        fail_missing(9, title, missing)
    cfg = parse_config(CONFIGS / "mnist_smoke.yaml", check_paths=False)
    cfg.dataset.train = {"images": str(root / MNIST_FILES[0]), "labels": str(root / MNIST_FILES[1])}
    cfg.dataset.test = {"images": str(root / MNIST_FILES[2]), "labels": str(root / MNIST_FILES[3])}
    cfg.output.dir = str(tmp_path)
    assert (cfg.architecture.forest.trees, cfg.architecture.forest.depth) == (10, 5)
    assert (cfg.run.max_steps, cfg.run.batch_size, cfg.optimizer.name) == (2000, 53, "adam")
    start = time.perf_counter()
    splits = load_splits(cfg)
    result = train(cfg, splits=splits, quiet=True)
    graph, _ = load_model(result.final_model)
    test = evaluate(graph, splits["test"])
    elapsed = time.perf_counter() - start
    record(9, title, test.error <= 0.08 and elapsed < 900,
           f"M=10 D=5, 2000 Adam steps, N_B=53: final test error {100 * test.error:.2f}% "
           f"(<= 8%), {elapsed:.0f}s (< 900s)")


def test_10_determinism(tmp_path):
    from hingeforest.data import write_idx
    rng = np.random.default_rng(10)
    images = rng.integers(0, 256, size=(120, 11, 11))
    labels = (images[:, :5].mean(axis=(1, 2)) > images[:, 6:].mean(axis=(1, 2))).astype(int)
    write_idx(tmp_path / "img", tmp_path / "lbl", images, labels)
    conv_cfg = f"""
dataset:
  format: idx
  train: {{images: {tmp_path / 'img'}, labels: {tmp_path / 'lbl'}}}
  splits: {{train: 0.5, validation: 0.25, test: 0.25}}
architecture:
  features: {{type: conv, kernels: 6}}
  forest: {{kind: fern, trees: 5, depth: 4}}
optimizer: {{name: adam}}
run: {{batch_size: 13, max_steps: 60, eval_interval: 20}}
"""
    runs = {"iris": CONFIGS / "iris.yaml", "conv/idx": conv_cfg}
    identical = {}
    for label, source in runs.items():
        blobs = []
        for attempt in ("a", "b"):
            cfg = parse_config(source)
            cfg.output.dir = str(tmp_path / label.replace("/", "_") / attempt)
            blobs.append(train(cfg, quiet=True).metrics_path.read_bytes())
        identical[label] = blobs[0] == blobs[1] and len(blobs[0]) > 0
    record(10, "determinism", all(identical.values()),
           "repeated runs give byte-identical metrics: "
           + ", ".join(f"{k} {v}" for k, v in identical.items()))


if __name__ == "__main__":
    import sys
    code = pytest.main([__file__, "-q", "-p", "no:cacheprovider"])
    sys.exit(code)
