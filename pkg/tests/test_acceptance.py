"""End-to-end acceptance checks.

Each test prints one PASS/FAIL line (collected in the terminal summary) and
then asserts the same condition. The desk-task training runs are shared
through session fixtures so every configuration is trained once.
"""

import subprocess
import sys
import time
from statistics import median

import numpy as np
import pytest

from backslash.codec import (
    decode_tensor,
    eg_encode,
    empirical_entropy,
    encode_tensor,
    fixed_length_bits,
    huffman_avg_bits,
)
from backslash.ggd import fit_gg
from backslash.tensorstore import ParameterTensor, dequantize, quantize, save_tensor
from backslash.trainer import (
    DESK_TASK,
    Model,
    TrainConfig,
    evaluate,
    gen_blobs,
    prune_model,
    quantize_model,
    rd_gradient,
    train,
)

from .oracles import brute_force_optimal_prefix_avg, central_difference, gg_sample

SWEEP_LAMBDAS = (0.0, 1e2, 1e3, 1e4)
SWEEP_SEEDS = (0, 1, 2, 3)
# rate multiplier of the BackSlash model used for pruning, quantization and ablation
BACKSLASH_LAMBDA = 3e3
PRUNE_RATES = [i / 10 for i in range(10)]

EG_TABLE = {
    0: "1 010 011 00100 00101 00110 00111 0001000 0001001 0001010",
    1: "10 11 0100 0101 0110 0111 001000 001001 001010 001011",
    2: "100 101 110 111 01000 01001 01010 01011 01100 01101",
    3: "1000 1001 1010 1011 1100 1101 1110 1111 010000 010001",
    4: "10000 10001 10010 10011 10100 10101 10110 10111 11000 11001",
    5: "100000 100001 100010 100011 100100 100101 100110 100111 101000 101001",
}


def report(log, number, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {title} -- {detail}"
    log.append((number, line))
    print(line)
    assert ok, line


def desk_config(lam, seed, fixed_shape=None):
    d = DESK_TASK
    return TrainConfig(
        lam=lam,
        epsilon=d["epsilon"],
        learning_rate=d["learning_rate"],
        epochs=d["epochs"],
        batch_size=d["batch_size"],
        seed=seed,
        hidden=d["hidden"],
        fixed_shape=fixed_shape,
    )


def desk_data(seed):
    d = DESK_TASK
    return gen_blobs(d["classes"], d["per_class"], d["dim"], d["spread"], seed)


class Run:
    def __init__(self, model, metrics, data):
        self.model = model
        self.metrics = metrics
        self.x_test = data.x_test
        self.y_test = data.y_test

    @property
    def bits(self):
        return self.metrics.last.eg_bits

    @property
    def accuracy(self):
        return self.metrics.last.test_accuracy

    def accuracy_of(self, model):
        return evaluate(model, self.x_test, self.y_test)


def _train(lam, seed, data, fixed_shape=None):
    model, metrics = train(desk_config(lam, seed, fixed_shape), data)
    return Run(model, metrics, data)


@pytest.fixture(scope="session")
def sweep():
    start = time.perf_counter()
    runs = {}
    for seed in SWEEP_SEEDS:
        data = desk_data(seed)
        for lam in SWEEP_LAMBDAS:
            runs[lam, seed] = _train(lam, seed, data)
        del data
    return runs, time.perf_counter() - start


@pytest.fixture(scope="session")
def backslash_run():
    start = time.perf_counter()
    run = _train(BACKSLASH_LAMBDA, 0, desk_data(0))
    return run, time.perf_counter() - start


def largest_safe_rate(accuracies):
    """Index of the largest rate up to which accuracy stays within 5 points of unpruned."""
    best = 0
    for i, acc in enumerate(accuracies):
        if acc < accuracies[0] - 0.05:
            break
        best = i
    return best


# -- 1 ----------------------------------------------------------------------


def test_criterion_01_eg_golden_table(acceptance_log):
    start = time.perf_counter()
    mismatches = []
    checked = 0
    for k, row in EG_TABLE.items():
        for value, code in enumerate(row.split()):
            checked += 1
            if eg_encode(value, k) != code:
                mismatches.append((k, value))
    elapsed = time.perf_counter() - start
    ok = checked == 60 and not mismatches and elapsed < 1.0
    report(acceptance_log, 1, "EG golden table", ok, f"{checked - len(mismatches)}/60 codewords match in {elapsed:.3f}s")


# -- 2 ----------------------------------------------------------------------


def _mixed_tensor(rng, i):
    n = int(rng.integers(1, 10_001))
    kind = i % 6
    if kind == 0:
        x = rng.normal(0, rng.uniform(0.01, 1.0), n)
    elif kind == 1:
        x = rng.laplace(0, rng.uniform(0.001, 0.5), n)
    elif kind == 2:
        x = gg_sample(float(rng.uniform(0.2, 3.0)), float(rng.uniform(0.005, 0.2)), n, int(rng.integers(2**31)))
    elif kind == 3:
        x = rng.uniform(-2, 2, n)
    elif kind == 4:
        x = rng.normal(0, 0.1, n) * (rng.random(n) < 0.1)
    else:
        x = np.full(n, rng.uniform(-1, 1))
    return x


def test_criterion_02_codec_roundtrip(acceptance_log):
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    failures = 0
    for i in range(1000):
        x = _mixed_tensor(rng, i)
        n, k = int(rng.integers(0, 13)), int(rng.integers(0, 6))
        q = quantize(x, n)
        data = encode_tensor(x, n, k).to_bytes()
        exact = np.array_equal(decode_tensor(data), q)
        again = encode_tensor(dequantize(decode_tensor(data), n), n, k).to_bytes() == data
        same = encode_tensor(x, n, k).to_bytes() == data
        failures += not (exact and again and same)
    elapsed = time.perf_counter() - start
    ok = failures == 0 and elapsed < 30
    report(acceptance_log, 2, "codec roundtrip", ok, f"{1000 - failures}/1000 tensors exact and byte-identical in {elapsed:.1f}s")


# -- 3 ----------------------------------------------------------------------


def test_criterion_03_shape_estimator(acceptance_log):
    start = time.perf_counter()
    errors = {}
    for i, nu in enumerate((0.5, 0.85, 1.26, 1.36, 1.54, 2.0)):
        x = gg_sample(nu, 1.0, 10**6, seed=300 + i)
        errors[nu] = abs(fit_gg(x).shape - nu)
    elapsed = time.perf_counter() - start
    ok = max(errors.values()) <= 0.05 and elapsed < 60
    detail = ", ".join(f"{nu}:{e:.4f}" for nu, e in errors.items())
    report(acceptance_log, 3, "shape estimator", ok, f"|error| {detail} in {elapsed:.1f}s")


# -- 4 ----------------------------------------------------------------------


def test_criterion_04_gradient(acceptance_log):
    start = time.perf_counter()
    model = Model.init((6, 5, 4, 3), seed=11)
    rng = np.random.default_rng(12)
    for b in model.biases:
        b[:] = rng.normal(0, 0.2, b.size)
    x = rng.normal(size=(10, 6))
    y = rng.integers(0, 3, 10)
    worst = 0.0
    for nu in (0.3, 1.0, 2.0):
        for lam in (0.0, 10.0):
            cfg = TrainConfig(lam=lam, fixed_shape=nu)
            _, grads = rd_gradient(model, x, y, cfg, nu)
            analytic = np.concatenate([g.ravel() for g in grads])

            def cost(v):
                m = model.copy()
                m.set_flat(v)
                return rd_gradient(m, x, y, cfg, nu)[0].cost

            numeric = central_difference(cost, model.flat(), h=1e-6)
            rel = np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-6)
            worst = max(worst, float(rel.max()))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-5 and elapsed < 10
    report(acceptance_log, 4, "gradient correctness", ok, f"max relative error {worst:.2e} in {elapsed:.1f}s")


# -- 5, 6 -------------------------------------------------------------------


def test_criterion_05_rate_vs_lambda(acceptance_log, sweep):
    runs, elapsed = sweep
    medians = [median(runs[lam, s].bits for s in SWEEP_SEEDS) for lam in SWEEP_LAMBDAS]
    decreasing = all(b < a for a, b in zip(medians, medians[1:]))
    halved = all(runs[SWEEP_LAMBDAS[-1], s].bits <= 0.5 * runs[0.0, s].bits for s in SWEEP_SEEDS)
    ok = decreasing and halved and elapsed < 600
    detail = " > ".join(f"{b:.3f}" for b in medians)
    report(acceptance_log, 5, "rate vs lambda", ok, f"median bits {detail}; lambda-max at most half of lambda=0 on every seed: {halved}; {elapsed:.0f}s")


def test_criterion_06_accuracy_preserved(acceptance_log, sweep):
    runs, _ = sweep
    base_bits = median(runs[0.0, s].bits for s in SWEEP_SEEDS)
    base_acc = median(runs[0.0, s].accuracy for s in SWEEP_SEEDS)
    found = []
    for lam in SWEEP_LAMBDAS[1:]:
        bits = median(runs[lam, s].bits for s in SWEEP_SEEDS)
        acc = median(runs[lam, s].accuracy for s in SWEEP_SEEDS)
        if bits <= 0.7 * base_bits and acc >= base_acc - 0.03:
            found.append(f"lambda={lam:g}: -{100 * (1 - bits / base_bits):.0f}% bits, accuracy {acc:.3f} vs {base_acc:.3f}")
    report(acceptance_log, 6, "accuracy preservation", bool(found), "; ".join(found) or "no lambda qualifies")


# -- 7, 8 -------------------------------------------------------------------


def test_criterion_07_pruning(acceptance_log, sweep, backslash_run):
    start = time.perf_counter()
    base = sweep[0][0.0, 0]
    bs, train_time = backslash_run
    curves = {}
    for name, run in (("baseline", base), ("backslash", bs)):
        curves[name] = [run.accuracy_of(prune_model(run.model, r)) for r in PRUNE_RATES]
    elapsed = time.perf_counter() - start + train_time
    safe = {name: largest_safe_rate(c) for name, c in curves.items()}
    ok = safe["backslash"] - safe["baseline"] >= 2 and elapsed < 300
    report(
        acceptance_log,
        7,
        "pruning robustness",
        ok,
        f"safe up to {safe['baseline'] / 10:.1f} (baseline) vs {safe['backslash'] / 10:.1f} (lambda={BACKSLASH_LAMBDA:g}); {elapsed:.0f}s",
    )


def test_criterion_08_quantization(acceptance_log, sweep, backslash_run):
    start = time.perf_counter()
    chance = 1.0 / DESK_TASK["classes"]
    parts, ok = [], True
    for name, run in (("baseline", sweep[0][0.0, 0]), ("backslash", backslash_run[0])):
        acc = run.accuracy_of(run.model)
        a8 = run.accuracy_of(quantize_model(run.model, 8))
        a4 = run.accuracy_of(quantize_model(run.model, 4))
        ok &= acc - a8 < 0.02 and abs(a4 - chance) <= 0.10
        parts.append(f"{name} {acc:.3f} -> {a8:.3f} at 2^-8, {a4:.3f} at 2^-4")
    elapsed = time.perf_counter() - start
    ok &= elapsed < 120
    report(acceptance_log, 8, "quantization parity", ok, "; ".join(parts) + f" (chance {chance:.2f})")


# -- 9 ----------------------------------------------------------------------


def test_criterion_09_baselines(acceptance_log):
    start = time.perf_counter()
    rng = np.random.default_rng(99)
    bounded = 0
    for _ in range(100):
        size = int(rng.integers(1, 4097))
        weights = rng.dirichlet(np.full(size, rng.uniform(0.05, 5.0)))
        symbols = rng.choice(size, int(rng.integers(size, 20 * size + 100)), p=weights)
        h = empirical_entropy(symbols)
        avg = huffman_avg_bits(symbols)
        bounded += h - 1e-12 <= avg < h + 1
    optimal = 0
    cases = 0
    for size in range(1, 9):
        for _ in range(10):
            freqs = rng.integers(1, 100, size)
            symbols = np.repeat(np.arange(size), freqs)
            cases += 1
            optimal += abs(huffman_avg_bits(symbols) - brute_force_optimal_prefix_avg(freqs.tolist())) < 1e-12
    fl = fixed_length_bits(np.arange(641))
    elapsed = time.perf_counter() - start
    ok = bounded == 100 and optimal == cases and fl == 10 and elapsed < 60
    report(
        acceptance_log,
        9,
        "baseline sanity",
        ok,
        f"entropy bound {bounded}/100, brute-force optimal {optimal}/{cases}, FL(641 symbols)={fl} bits; {elapsed:.1f}s",
    )


# -- 10 ---------------------------------------------------------------------


def test_criterion_10_ablation(acceptance_log, backslash_run):
    start = time.perf_counter()
    adaptive, train_time = backslash_run
    data = desk_data(0)
    points = {}
    for nu in (0.5, 1.0, 2.0):
        run = _train(BACKSLASH_LAMBDA, 0, data, fixed_shape=nu)
        points[nu] = (run.accuracy, run.bits)
    elapsed = time.perf_counter() - start + train_time
    a_acc, a_bits = adaptive.accuracy, adaptive.bits
    dominated = [nu for nu, (acc, bits) in points.items() if acc > a_acc and bits < a_bits]
    ok = not dominated and elapsed < 900
    detail = ", ".join(f"nu0={nu:g}: ({acc:.3f}, {bits:.3f})" for nu, (acc, bits) in points.items())
    report(acceptance_log, 10, "shape ablation", ok, f"adaptive ({a_acc:.3f}, {a_bits:.3f}) vs {detail}; {elapsed:.0f}s")


# -- 11 ---------------------------------------------------------------------


def _cli(*argv, cwd):
    proc = subprocess.run([sys.executable, "-m", "backslash", *argv], cwd=cwd, capture_output=True, check=False)
    return proc.returncode, proc.stdout, proc.stderr


def test_criterion_11_cli_determinism(acceptance_log, tmp_path):
    small = ["--classes", "4", "--per-class", "40", "--dim", "12", "--spread", "1.0", "--seed", "5"]
    tensor = ParameterTensor("w", (50, 40), np.random.default_rng(5).laplace(0, 0.05, 2000))
    commands = {
        "train": ["train", "--lambda", "20", "--hidden", "16", "--lr", "0.02", "--epochs", "5", "--out", "out/m.ggrt", "--metrics", "out/m.jsonl", *small],
        "fit": ["fit", "t.ggrt", "--json"],
        "encode": ["encode", "t.ggrt", "--n", "8", "--k", "0", "--out", "out/t.ggeg"],
        "decode": ["decode", "out/t.ggeg", "--out", "out/back.ggrt"],
        "quantize": ["quantize", "t.ggrt", "--n", "5", "--out", "out/q.ggrt"],
        "prune": ["prune", "t.ggrt", "--rate", "0.6", "--out", "out/p.ggrt"],
        "evaluate": ["evaluate", "out/m.ggrt", "--rates", "0,0.5,0.9", "--json", *small],
        "rate-report": ["rate-report", "t.ggrt", "--json"],
    }
    outputs = []
    for rep in ("a", "b"):
        cwd = tmp_path / rep
        (cwd / "out").mkdir(parents=True)
        save_tensor(tensor, cwd / "t.ggrt")
        seen = {name: _cli(*argv, cwd=cwd) for name, argv in commands.items()}
        files = {p.name: p.read_bytes() for p in sorted((cwd / "out").iterdir())}
        outputs.append((seen, files))
    (seen_a, files_a), (seen_b, files_b) = outputs
    all_ok = all(code == 0 for code, _, _ in seen_a.values())
    differing = [n for n in commands if seen_a[n] != seen_b[n]] + [f for f in files_a if files_a[f] != files_b.get(f)]
    ok = all_ok and not differing and files_a.keys() == files_b.keys()
    report(
        acceptance_log,
        11,
        "CLI determinism",
        ok,
        f"{len(commands)} commands, {len(files_a)} output files, all exit 0: {all_ok}, differing: {differing or 'none'}",
    )
