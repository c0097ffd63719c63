"""Embedded verification battery behind ``modseg selfcheck``.

Each check returns (name, passed, detail). The battery re-derives expected
values from independent formulations (pairwise modularity sum, central
differences, planted ground truth, hand-built golden bytes) rather than
re-running the code paths it is checking.
"""

from __future__ import annotations

import itertools
import struct
import time
from typing import Callable, List, Tuple

import numpy as np

from . import graph as graphmod
from . import io as iomod
from . import loss as lossmod
from . import model as modelmod
from . import nn
from . import synth
from .errors import BadMagic
from .eval import evaluate_dataset
from .pipeline import TrainConfig, train_image, select_foreground, upsample_mask
from .model import hard_labels

CheckResult = Tuple[str, bool, str]


def _two_triangles() -> graphmod.PatchGraph:
    adj = np.zeros((6, 6))
    for a, b in [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)]:
        adj[a, b] = adj[b, a] = 1.0
    return graphmod.PatchGraph(
        n=6, adjacency=adj, degrees=adj.sum(axis=1).astype(np.int64), edge_count=6.0
    )


def check_modularity_equivalence(num_seeds: int = 40) -> CheckResult:
    worst = 0.0
    for seed in range(num_seeds):
        g = synth.random_simple_graph(seed)
        for bits in itertools.product((0, 1), repeat=g.n):
            labels = np.array(bits)
            q_hard = graphmod.modularity_hard(g, labels)
            q_quad = graphmod.modularity_quadratic(g, graphmod.one_hot(labels, 2))
            worst = max(worst, abs(q_hard - q_quad))
    ok = worst < 1e-12
    return ("modularity trace == pairwise (all 2-labelings)", ok, f"max |diff| = {worst:.2e}")


def check_two_triangles() -> CheckResult:
    g = _two_triangles()
    split = graphmod.modularity_hard(g, np.array([0, 0, 0, 1, 1, 1]))
    lumped = graphmod.modularity_hard(g, np.zeros(6, dtype=int))
    ok = abs(split - 0.5) < 1e-12 and lumped == 0.0
    return ("two-triangle fixture Q", ok, f"split={split!r}, single-cluster={lumped!r}")


def _pipeline_loss_fn(g, a_hat, x, activation):
    def fn(arrays):
        params = modelmod.ModelParams(activation_kind=activation, **arrays)
        c, cache = modelmod.forward(params, a_hat, x)
        value = lossmod.loss_value(g, c)
        grads = modelmod.backward(cache, lossmod.loss_grad(g, c))
        return value, grads

    return fn


def gradient_check_instance(
    seed: int, activation: str, n_max: int = 16, k: int = 2
) -> nn.GradCheckReport:
    """Finite-difference check of the full loss on one random small instance."""
    rng = nn.make_rng(seed, stream=0x6C)
    n = int(rng.integers(6, n_max + 1))
    in_dim = int(rng.integers(5, 10))
    hidden = int(rng.integers(4, 8))
    adj = (rng.uniform(size=(n, n)) < 0.5).astype(np.float64)
    adj = np.triu(adj, k=1)
    adj = adj + adj.T
    if adj.sum() == 0:
        adj[0, 1] = adj[1, 0] = 1.0
    g = graphmod.PatchGraph(
        n=n, adjacency=adj, degrees=adj.sum(axis=1).astype(np.int64),
        edge_count=float(adj.sum()) / 2.0,
    )
    a_hat = graphmod.normalized_adjacency(g)
    x = rng.normal(size=(n, in_dim))
    params = modelmod.init_params(
        rng, in_dim=in_dim, hidden=hidden, k=k, activation_kind=activation
    )
    # Check at a generic parameter point: zero biases can park ReLU
    # pre-activations exactly on the kink, where central differences are
    # meaningless for any one-sided derivative convention.
    arrays = params.to_dict()
    for name in ("b0", "b1", "b_head"):
        arrays[name] = 0.1 * rng.normal(size=arrays[name].shape)
    return nn.finite_difference_check(
        _pipeline_loss_fn(g, a_hat, x, activation), arrays, h=1e-6, tol=1e-5
    )


def check_gradients() -> CheckResult:
    worst = 0.0
    for activation in nn.ACTIVATIONS:
        for seed in (1, 2):
            report = gradient_check_instance(seed, activation)
            worst = max(worst, report.max_rel_err)
    ok = worst < 1e-5
    return ("full-model gradient vs central differences", ok, f"max rel err = {worst:.2e}")


def check_collapse_endpoints() -> CheckResult:
    n, k = 40, 2
    uniform = np.full((n, k), 1.0 / k)
    one_cluster = np.zeros((n, k))
    one_cluster[:, 0] = 1.0
    r_uniform = lossmod.collapse_regularizer(uniform)
    r_collapsed = lossmod.collapse_regularizer(one_cluster)
    ok = abs(r_uniform) < 1e-12 and abs(r_collapsed - (np.sqrt(2) - 1.0)) < 1e-12
    return (
        "collapse regularizer endpoints",
        ok,
        f"uniform={r_uniform:.2e}, single-cluster={r_collapsed:.12f}",
    )


def check_planted_recovery(num_images: int = 3) -> CheckResult:
    cfg = TrainConfig(refine="none")
    pairs = []
    losses_ok = True
    for seed in range(num_images):
        inst = synth.make_planted_instance(seed)
        result = train_image(inst.features, cfg)
        labels = hard_labels(result.assignment)
        fg = select_foreground(labels, inst.features.grid_h, inst.features.grid_w)
        mask = upsample_mask(
            result.assignment, fg,
            inst.features.grid_h, inst.features.grid_w,
            inst.features.source_image_w, inst.features.source_image_h,
        )
        pairs.append((f"planted-{seed}", mask, inst.pixel_mask))
        losses_ok = losses_ok and result.final_loss < result.initial_loss
    report = evaluate_dataset(pairs)
    ok = report.aggregate_miou >= 0.95 and losses_ok and not report.failures
    return (
        "planted-partition recovery",
        ok,
        f"mean mIoU = {report.aggregate_miou:.4f}, losses decreased = {losses_ok}",
    )


def check_golden_bytes(tmp_dir=None) -> CheckResult:
    import tempfile
    from pathlib import Path

    golden = (
        b"UNSG"
        + struct.pack("<7I", 1, 1, 1, 2, 8, 8, 8)
        + struct.pack("<2f", 1.5, -2.0)
    )
    with tempfile.TemporaryDirectory(dir=tmp_dir) as td:
        path = Path(td) / "golden.unsg"
        grid = graphmod.PatchFeatureGrid(
            grid_h=1, grid_w=1, dim=2,
            data=np.array([[1.5, -2.0]]),
            source_image_w=8, source_image_h=8, patch_size=8,
        )
        iomod.write_features(grid, path)
        written = path.read_bytes()
        bytes_ok = written == golden
        back = iomod.read_features(path)
        roundtrip_ok = np.array_equal(back.data, grid.data)

        rejected = 0
        expected_rejections = 0
        for pos in range(4):
            for val in range(256):
                if golden[pos] == val:
                    continue
                expected_rejections += 1
                corrupt = bytearray(golden)
                corrupt[pos] = val
                path.write_bytes(bytes(corrupt))
                try:
                    iomod.read_features(path)
                except BadMagic:
                    rejected += 1
        magic_ok = rejected == expected_rejections
    ok = bytes_ok and roundtrip_ok and magic_ok
    return (
        "feature-file golden bytes + magic fuzz",
        ok,
        f"bytes={bytes_ok}, roundtrip={roundtrip_ok}, rejected {rejected}/{expected_rejections}",
    )


def check_miou_oracle() -> CheckResult:
    from .eval import miou
    from .pipeline import SegmentationMask

    rng = nn.make_rng(7, stream=0x10)
    worst = 0.0
    for _ in range(25):
        a = (rng.uniform(size=(16, 16)) < 0.5).astype(np.uint8)
        b = (rng.uniform(size=(16, 16)) < 0.5).astype(np.uint8)
        got = miou(
            SegmentationMask(16, 16, a), SegmentationMask(16, 16, b)
        )
        expect = _miou_bruteforce(a, b)
        worst = max(worst, abs(got - expect))
    ok = worst < 1e-12
    return ("mIoU vs brute-force pixel counting", ok, f"max |diff| = {worst:.2e}")


def _miou_bruteforce(a: np.ndarray, b: np.ndarray) -> float:
    total = 0.0
    for cls in (0, 1):
        tp = fp = fn = 0
        for i in range(a.shape[0]):
            for j in range(a.shape[1]):
                pa, pb = a[i, j] == cls, b[i, j] == cls
                tp += pa and pb
                fp += pa and not pb
                fn += pb and not pa
        total += 1.0 if (tp + fp + fn) == 0 else tp / (tp + fp + fn)
    return total / 2.0


ALL_CHECKS: List[Callable[[], CheckResult]] = [
    check_modularity_equivalence,
    check_two_triangles,
    check_gradients,
    check_collapse_endpoints,
    check_planted_recovery,
    check_golden_bytes,
    check_miou_oracle,
]


def run_all(verbose_print: Callable[[str], None] = print) -> bool:
    all_ok = True
    rows = []
    for check in ALL_CHECKS:
        start = time.perf_counter()
        name, ok, detail = check()
        elapsed = time.perf_counter() - start
        rows.append((name, ok, detail, elapsed))
        all_ok = all_ok and ok
    width = max(len(r[0]) for r in rows)
    for name, ok, detail, elapsed in rows:
        status = "PASS" if ok else "FAIL"
        verbose_print(f"{status}  {name:<{width}}  {detail}  [{elapsed:.2f}s]")
    verbose_print("selfcheck: " + ("all checks passed" if all_ok else "FAILURES detected"))
    return all_ok
