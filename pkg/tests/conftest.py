import sys

import numpy as np
import pytest

from hingeforest.forest import kernels


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(params=sorted(kernels.BACKENDS))
def backend(request):
    return kernels.get_backend(request.param)


TINY_CONFIG = """
dataset:
  train: tiny.csv
  task: {task}
  splits: {{train: 0.6, validation: 0.2, test: 0.2}}
architecture:
  features: {{type: inner_product, count: 8}}
  forest: {{kind: tree, trees: 4, depth: 3}}
optimizer: {{name: adagrad, learning_rate: 0.3}}
run: {{batch_size: 10, max_steps: 40, eval_interval: 10, seed: 3}}
output: {{dir: out}}
"""


def write_tiny(directory, task="classification", rows=100, seed=0):
    """A small linearly structured dataset plus a config pointing at it."""
    r = np.random.default_rng(seed)
    x = r.normal(size=(rows, 3))
    if task == "regression":
        y = [f"{v:.6f}" for v in x @ [1.0, -2.0, 0.5]]
    else:
        y = ["pos" if v > 0 else "neg" for v in x[:, 0] + x[:, 1]]
    lines = [",".join(f"{v:.6f}" for v in row) + f",{lab}" for row, lab in zip(x, y)]
    (directory / "tiny.csv").write_text("\n".join(lines) + "\n")
    path = directory / "tiny.yaml"
    path.write_text(TINY_CONFIG.format(task=task))
    return path


@pytest.fixture
def tiny(tmp_path):
    return write_tiny(tmp_path)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        terminalreporter.write_line(results[number])
