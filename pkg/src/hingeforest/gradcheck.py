"""Central-difference gradient checking for whole graphs.

The graph is copied, cast to float64 and put in inference mode so the
running batch-norm statistics stay fixed.  Coordinates whose perturbation
changes any tree's leaf or minimizing vertex, or moves a margin that is
already within ``10 h`` of zero, sit on a hinge kink and are skipped.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .forest import HingeForest


@dataclass
class GradcheckReport:
    checked: int
    skipped: int
    max_rel_error: float
    tolerance: float
    failures: list = field(default_factory=list)    # (coordinate, analytic, numeric, rel)
    per_group: dict = field(default_factory=dict)   # group -> max rel error

    @property
    def passed(self) -> bool:
        return self.checked > 0 and not self.failures

    def summary(self) -> str:
        lines = [f"checked {self.checked} coordinates, skipped {self.skipped} near kinks",
                 f"max relative error {self.max_rel_error:.3e} (tolerance {self.tolerance:g})"]
        for group, err in self.per_group.items():
            lines.append(f"  {group}: {err:.3e}")
        for coord, a, n, rel in self.failures[:20]:
            lines.append(f"  FAIL {coord}: analytic {a:.6e} numeric {n:.6e} rel {rel:.3e}")
        lines.append("PASS" if self.passed else "FAIL")
        return "\n".join(lines)


def _forest_state(graph):
    return [(n.cache.leaf.copy(), n.cache.vertex.copy(), n.cache.margin.copy())
            for n in graph.nodes.values() if isinstance(n, HingeForest) and n.cache is not None]


def _crosses_kink(base, other, min_margin):
    for (leaf0, vert0, marg0), (leaf1, vert1, marg1) in zip(base, other):
        if not (np.array_equal(leaf0, leaf1) and np.array_equal(vert0, vert1)):
            return True
        moved = marg0 != marg1
        if np.any(np.abs(marg0[moved]) < min_margin):
            return True
    return False


def relative_error(analytic, numeric):
    return abs(analytic - numeric) / max(1e-8, abs(analytic))


class _Shifted:
    """Adds ``delta`` to a node's forward output (an inner input of its consumers)."""

    def __init__(self, node):
        self.node, self.forward = node, node.forward
        self.delta = None

    def __call__(self, inputs):
        out = self.forward(inputs)
        if self.delta is not None:
            out = out + self.delta
        self.value = out
        return out


def check_gradients(graph, x, y, samples=200, h=1e-3, tolerance=1e-3, seed=0,
                    include_input=True, groups=None, activations=()) -> GradcheckReport:
    """Compare analytic gradients with ``(L(p+h) - L(p-h)) / 2h``.

    Coordinates are drawn round-robin over parameter groups, the graph input
    when ``include_input``, and the outputs of the nodes named in
    ``activations``, until ``samples`` have been checked.
    """
    g = copy.deepcopy(graph).cast(np.float64).eval()
    x = np.array(x, dtype=np.float64)
    shifts = {}
    for name in activations:
        shifts[name] = g[name].forward = _Shifted(g[name])
    g.run_forward(x, y)
    g.run_backward()
    base_state = _forest_state(g)
    targets = {}
    for name, param, grad in g.parameters():
        targets[name] = (param, grad.copy())
    if include_input:
        targets["input"] = (x, g[g.input_name].grad.copy())
    for name, shift in shifts.items():
        shift.delta = np.zeros_like(shift.value)
        targets[f"{name}:output"] = (shift.delta, g[name].grad.copy())
    if groups is not None:
        targets = {k: v for k, v in targets.items() if k in groups}
    rng = np.random.default_rng(seed)
    names = list(targets)
    report = GradcheckReport(0, 0, 0.0, tolerance, per_group={k: 0.0 for k in names})
    attempts = 0
    while report.checked < samples and attempts < 50 * samples and names:
        name = names[attempts % len(names)]
        attempts += 1
        value, analytic_grad = targets[name]
        flat = int(rng.integers(value.size))
        idx = np.unravel_index(flat, value.shape)
        original = value[idx]
        value[idx] = original + h
        up = g.run_forward(x, y)
        state_up = _forest_state(g)
        value[idx] = original - h
        down = g.run_forward(x, y)
        state_down = _forest_state(g)
        value[idx] = original
        if _crosses_kink(base_state, state_up, 10 * h) or _crosses_kink(base_state, state_down, 10 * h):
            report.skipped += 1
            continue
        numeric = (up - down) / (2 * h)
        analytic = float(analytic_grad[idx])
        rel = relative_error(analytic, numeric)
        report.checked += 1
        report.max_rel_error = max(report.max_rel_error, rel)
        report.per_group[name] = max(report.per_group[name], rel)
        if rel >= tolerance:
            report.failures.append((f"{name}{list(idx)}", analytic, numeric, rel))
    return report


def gradcheck_config(config, samples=200, h=1e-3, tolerance=1e-3, seed=0, warmup=20, splits=None):
    """Build the configured graph in float64 and check it on one training batch.

    The running batch-norm statistics are first warmed up on ``warmup``
    training batches so the check runs at a realistic operating point.
    """
    from .build import build_graph, data_info, load_splits
    from .data import BatchStream

    splits = splits if splits is not None else load_splits(config)
    graph = build_graph(config, data_info(config, splits), dtype=np.float64)
    stream = BatchStream(splits["train"], config.run.batch_size,
                         np.random.default_rng([config.run.seed, 0x6C]))
    graph.train()
    for _ in range(warmup):
        graph.run_forward(*stream.next_batch())
    x, y = stream.next_batch()
    inner = graph["forest"].inputs
    return check_gradients(graph.eval(), x, y, samples, h, tolerance, seed, activations=inner)
