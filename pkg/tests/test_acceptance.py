"""Acceptance suite: one printed PASS/FAIL line per criterion.

Criteria 6-8 and 11 train networks and are marked ``slow``; deselect them
with ``-m "not slow"``. Training budgets are desk-scale (one CPU).
"""

import itertools
import math
import time
from pathlib import Path

import numpy as np
import pytest

from matrixse import autodiff as ad
from matrixse import oracles
from matrixse.autodiff import Array
from matrixse.config import TrainConfig
from matrixse.harness import benchmark_speed, evaluate, loglog_slope, predict, train
from matrixse.model import count_layers, embed_grid, head, init_params, matrix_se_forward, param_count, run_blocks
from matrixse.routing import PermKind, build_flatten_table, build_qshuffle_table, compose, qrotate
from matrixse.tasks import GENERATORS, make_instance, sudoku_augment, sudoku_load, sudoku_valid

from fd import RTOL, project, worst_relative_error
from test_routing import interleave_halves, quadtree_order

SUDOKU_FIXTURE = Path(__file__).parent / "data" / "sudoku_100.csv"

# desk-scale training budgets
MATRIX_BUDGET = dict(m=48, B=2, min_train_size=4, max_train_size=16, steps=3000, batch_size=16,
              learning_rate=1e-3, log_every=500, checkpoint_every=10**9)
GRAPH_BUDGET = dict(m=48, B=2, min_train_size=4, max_train_size=16, batch_size=16,
              learning_rate=1e-3, log_every=500, checkpoint_every=10**9)
GRAPH_STEPS = {"component_labeling": 10000, "transitivity": 3000}
SUDOKU = dict(m=24, B=1, steps=1000, batch_size=8, learning_rate=1e-3, recurrent_steps=2,
              eval_recurrent_steps=2, log_every=100, checkpoint_every=10**9)
EVAL_INSTANCES = 64


@pytest.fixture
def report(capsys):
    def emit(number: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\ncriterion {number:>2}: {'PASS' if ok else 'FAIL'} | {detail}")
        assert ok, detail

    return emit


_trained: dict = {}


def trained(task: str, budget: dict, **overrides):
    """Train once per (task, settings) within the session and reuse the result."""
    key = (task, tuple(sorted({**budget, **overrides}.items())))
    if key not in _trained:
        _trained[key] = train(TrainConfig(task=task, **budget, **overrides)).checkpoint
    return _trained[key]


def acc(ckpt, task, sizes, recurrent_steps=1):
    rows = evaluate(ckpt, task, sizes, EVAL_INSTANCES, seed=1234, recurrent_steps=recurrent_steps)
    return {r["size"]: r["per_element_acc"] for r in rows}


def fmt(accs):
    return ", ".join(f"{s}:{a:.4f}" for s, a in accs.items())


# ---------------------------------------------------------------------------


def test_criterion_01_permutation_suite(report):
    t0 = time.perf_counter()
    failures = []
    for k in range(1, 7):
        n, side = 4**k, 1 << k
        ident = np.arange(n)
        tables = {kind: build_flatten_table(k, kind) for kind in PermKind if "flatten" in kind.value}
        tables.update({f"shuffle_{d}": build_qshuffle_table(k, d) for d in ("right", "left")})
        for name, t in tables.items():
            if sorted(t.table.tolist()) != list(range(n)):
                failures.append(f"k={k} {name} not a bijection")
        r, l = tables["shuffle_right"], tables["shuffle_left"]
        zf, zu = tables[PermKind.ZORDER_FLATTEN], tables[PermKind.ZORDER_UNFLATTEN]
        for a, b in ((r, l), (l, r), (zf, zu), (zu, zf)):
            if not np.array_equal(compose(a, b), ident):
                failures.append(f"k={k} {a.kind.value}/{b.kind.value} do not compose to identity")
        if [qrotate(int(x), k, "right") for x in range(n)] != r.table.tolist():
            failures.append(f"k={k} shuffle table differs from qrotate")
        for j in range(k + 1):
            cells = {(int(t) // side, int(t) % side) for t in zf.table[: 4**j]}
            if cells != set(itertools.product(range(1 << j), repeat=2)):
                failures.append(f"k={k} prefix {j} not the top-left block")
        if [r_ * side + c for r_, c in quadtree_order(k)] != zf.table.tolist():
            failures.append(f"k={k} Z-order differs from quadtree traversal")
        rows = interleave_halves(side)
        matrix = np.arange(n).reshape(side, side)
        via_seq = matrix.ravel()[zf.table][r.table][zu.table].reshape(side, side)
        if not np.array_equal(via_seq, matrix[rows][:, rows]):
            failures.append(f"k={k} 2D shuffle differs from row/column interleave")
    elapsed = time.perf_counter() - t0
    ok = not failures and elapsed < 60
    report(1, ok, f"k<=6, {len(failures)} failures {failures[:3]}, {elapsed:.1f}s (< 60s)")


def test_criterion_02_gradient_suite(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    errors = {}
    with ad.precision(np.float64):
        def arr(*shape, scale=1.0):
            return Array(rng.normal(size=shape) * scale, requires_grad=True)

        x, w, b = arr(3, 5), arr(5, 4), arr(4)
        g = Array(rng.uniform(0.5, 1.5, size=8), requires_grad=True)
        y = arr(3, 8)
        table = arr(6, 3)
        ids = rng.integers(6, size=(2, 4))
        seq = arr(16, 2)
        logits = arr(7, 5)
        labels = rng.integers(5, size=7)
        mask = np.array([1, 1, 0, 1, 1, 0, 1])
        p = lambda n: rng.normal(size=n)
        checks = {
            "linear": (lambda pr=p(12): project(ad.apply_linear(x, w, b), pr), [x, w, b]),
            "gelu": (lambda pr=p(15): project(ad.apply_gelu(ad.mul(x, 2.0)), pr), [x]),
            "rmsnorm": (lambda pr=p(24): project(ad.apply_rmsnorm(y, g), pr), [y, g]),
            "sigmoid": (lambda pr=p(15): project(ad.apply_sigmoid(x), pr), [x]),
            "add/mul": (lambda pr=p(12): project(ad.mul(ad.add(ad.apply_linear(x, w), b), b), pr), [x, w, b]),
            "reshape": (lambda pr=p(15): project(ad.reshape(ad.mul(x, x), (5, 3)), pr), [x]),
            "embed": (lambda pr=p(24): project(ad.embed(table, ids), pr), [table]),
            "permute_select": (lambda pr=p(32): project(ad.permute_select(seq, build_qshuffle_table(2, "right")), pr),
                               [seq]),
            "softmax_xent": (lambda: ad.softmax_xent_loss(logits, labels, mask), [logits]),
        }
        for name, (fn, arrays) in checks.items():
            errors[name] = worst_relative_error(fn, arrays)

        params = init_params(4, 1, 5, 3, seed=0, dtype=np.float64)
        grid = np.random.default_rng(1).integers(5, size=(1, 4, 4))
        targets = np.random.default_rng(2).integers(3, size=16)

        def model_loss():
            out = matrix_se_forward(grid, params)
            return ad.softmax_xent_loss(ad.reshape(out, (16, 3)), targets, np.ones(16))

        errors["model m=4 B=1 4x4"] = worst_relative_error(model_loss, list(params.named_arrays().values()))
    elapsed = time.perf_counter() - t0
    worst = max(errors, key=errors.get)
    ok = all(e < RTOL for e in errors.values()) and elapsed < 300
    report(2, ok, f"{len(errors)} checks, worst {worst} rel err {errors[worst]:.2e} (< {RTOL}), {elapsed:.1f}s")


def test_criterion_03_parameter_count(report):
    blocks = param_count(m=96, B=2, blocks_only=True)
    full = param_count(m=96, B=2, vocab_in=12, vocab_out=12)
    materialised = sum(a.size for a in init_params(96, 2, 12, 12).named_arrays().values())
    ok = blocks == 3_548_166 and full == materialised
    report(3, ok, f"block weights {blocks:,} (expect 3,548,166); with embedding+head {full:,} = arrays {materialised:,}")


def test_criterion_04_depth_law(report):
    params = init_params(2, 1, 3, 3)
    seen = {}
    for k in range(1, 7):
        with count_layers() as counts:
            matrix_se_forward(np.zeros((1, 1 << k, 1 << k), dtype=int), params)
        seen[k] = (counts["qswitch"], counts["qshuffle"])
    ok = all(seen[k] == (2 * k - 1, 2 * k - 2) for k in seen)
    report(4, ok, "per block (switch, shuffle): " + ", ".join(f"k={k}:{v}" for k, v in seen.items()))


def test_criterion_05_receptive_field(report):
    dead = []
    for side, seed in itertools.product((4, 8), (0, 1, 2)):
        k = side.bit_length() - 1
        params = init_params(8, 1, 5, 3, seed=seed)
        grid = np.random.default_rng(seed).integers(5, size=(1, side, side))
        seq = Array(embed_grid(grid, params, k).data.copy(), requires_grad=True)
        logits = head(run_blocks(seq, params, k), params, k)
        for cell, cls in itertools.product(range(side * side), range(3)):
            seq.grad = None
            weights = np.zeros(logits.shape)
            weights.reshape(-1, 3)[cell, cls] = 1
            ad.backward(project(logits, weights))
            zero = int((np.abs(seq.grad[0]).sum(axis=1) == 0).sum())
            if zero:
                dead.append((side, seed, cell, cls, zero))
    report(5, not dead, f"B=1, sizes 4/8, seeds 0-2: {len(dead)} logits with a blind input position")


@pytest.mark.slow
def test_criterion_06_matrix_tasks(report):
    results, ok = {}, True
    for task in ("transpose", "rotate90", "xor"):
        sizes = [4, 8, 16, 32] if task == "transpose" else [4, 8, 16]
        results[task] = acc(trained(task, MATRIX_BUDGET), task, sizes)
        ok &= all(results[task][s] >= 0.99 for s in (4, 8, 16))
    ok &= results["transpose"][32] >= 0.90
    detail = "; ".join(f"{t} {fmt(a)}" for t, a in results.items())
    report(6, ok, f"{MATRIX_BUDGET['steps']} steps, need >=0.99 at 4-16 and transpose >=0.90 at 32: {detail}")


@pytest.mark.slow
def test_criterion_07_graph_tasks(report):
    results = {task: acc(trained(task, GRAPH_BUDGET, steps=steps), task, [4, 8, 16])
               for task, steps in GRAPH_STEPS.items()}
    ok = all(a >= 0.95 for accs in results.values() for a in accs.values())
    detail = "; ".join(f"{t} ({GRAPH_STEPS[t]} steps) {fmt(a)}" for t, a in results.items())
    report(7, ok, f"need >=0.95 at trained sizes: {detail}")


@pytest.mark.slow
def test_criterion_08_flatten_ablation(report):
    z = acc(trained("transpose", MATRIX_BUDGET), "transpose", [32])[32]
    r = acc(trained("transpose", MATRIX_BUDGET, flatten_kind="raster"), "transpose", [32])[32]
    report(8, z - r >= 0.05, f"32x32 per-element: zorder {z:.4f}, raster {r:.4f}, gap {z - r:.4f} (>= 0.05)")


def test_criterion_09_complexity_scaling(report):
    sizes = [16, 32, 64, 128, 256]
    rows = benchmark_speed(TrainConfig(m=16, B=2), sizes, steps=3, warmup=1)
    slope = loglog_slope(sizes, [r["train_ms"] for r in rows])
    times = ", ".join(f"{r['size']}:{r['train_ms']:.0f}ms" for r in rows)
    report(9, 1.8 <= slope <= 2.5, f"train-step log-log slope {slope:.3f} in [1.8, 2.5] ({times})")


def test_criterion_10_oracle_suite(report):
    mismatches = []
    for task, size in itertools.product(sorted(GENERATORS), (4, 8, 16)):
        for seed in range(1000):
            inst = make_instance(task, size, seed)
            if not np.array_equal(oracles.solve(task, inst.input), inst.target):
                mismatches.append((task, size, seed))
    puzzles = sudoku_load(SUDOKU_FIXTURE)
    invalid = 0
    for seed in range(1000):
        src = puzzles[seed % len(puzzles)]
        aug = sudoku_augment(src, seed)
        given = aug.input[:9, :9]
        keeps_givens = np.all((given == 0) | (given == aug.target[:9, :9]))
        if not (sudoku_valid(aug.target[:9, :9]) and keeps_givens):
            invalid += 1
    ok = not mismatches and invalid == 0
    report(10, ok, f"{len(GENERATORS)} tasks x 3 sizes x 1000: {len(mismatches)} mismatches; "
                   f"1000 Sudoku augmentations: {invalid} invalid")


@pytest.mark.slow
def test_criterion_11_sudoku_pipeline(report):
    config = TrainConfig(task="sudoku", data_path=str(SUDOKU_FIXTURE), **SUDOKU)
    result = train(config)
    losses = [m["loss"] for m in result.metrics]
    puzzles = sudoku_load(SUDOKU_FIXTURE)
    pred = predict(result.checkpoint.params, np.stack([p.input for p in puzzles]), config.eval_recurrent_steps)
    solved = [i for i, p in enumerate(puzzles) if np.array_equal(pred[i][:9, :9], p.target[:9, :9])]
    consistent = all(sudoku_valid(pred[i][:9, :9]) for i in solved)
    cells = np.mean([np.mean(pred[i][:9, :9] == p.target[:9, :9]) for i, p in enumerate(puzzles)])
    ok = losses[-1] < losses[0] and consistent
    report(11, ok, f"loss {losses[0]:.3f} -> {losses[-1]:.3f}; {len(solved)}/100 solved, all validator-consistent: "
                   f"{consistent}; cell accuracy {cells:.3f}. Declared out of desk scale: 64-1024 sizes, "
                   "full Sudoku accuracies, 500k-step budgets, CIFAR-10")
