"""Acceptance criteria 1-10, each at its stated tolerance.

Every test records a PASS/FAIL line that is repeated in the pytest terminal
summary under "acceptance criteria".
"""

import time
import warnings

import numpy as np
import pytest

from conftest import random_params, report
from prunefl.cost import ConvergenceConstants, convergence_bound
from prunefl.flsim import init_model, local_gradient, loss_and_grad, prune_mask
from prunefl.harness.config import parse_config
from prunefl.harness.sweep import run_sweep
from prunefl.harness.train import run_fl
from prunefl.solver import (
    INITIALIZATIONS,
    SolverConfig,
    alternate,
    bisect_bandwidth,
    exhaustive_search,
    optimize,
    pruning_objective,
    solve_t_tilde,
    t_tilde_bounds,
)
from prunefl.system import dbm_to_watts, no_prune_latencies, shannon_rate


def test_c1_closed_form_vs_grid():
    rng = np.random.default_rng(101)
    worst = -np.inf
    start = time.perf_counter()
    for _ in range(200):
        params = random_params(rng, 5)
        bw = rng.dirichlet(np.ones(5)) * params.total_bandwidth_B
        t_np = no_prune_latencies(bw, params)
        lo, hi = t_tilde_bounds(bw, params)
        grid = np.linspace(lo, hi, 100_000)
        values = np.concatenate([pruning_objective(g, t_np, params) for g in np.array_split(grid, 20)])
        step = grid[1] - grid[0]
        slope = (1 - params.lam) + params.lam * params.m_const * np.sum(params.K**2 / t_np)
        ours = pruning_objective(solve_t_tilde(bw, params), t_np, params)
        # excess over the grid minimum, in units of one grid step of objective change
        worst = max(worst, (ours - values.min()) / (step * slope))
    elapsed = time.perf_counter() - start
    ok = worst <= 1.0 and elapsed < 10.0
    report(1, "closed-form latency bound vs 1e5-point grid", ok,
           f"worst excess {worst:.3g} grid steps, {elapsed:.1f} s")
    assert ok


def test_c2_bisection():
    rng = np.random.default_rng(102)
    n0 = dbm_to_watts(-174)
    worst_res, worst_trip = 0.0, 0.0
    for _ in range(1000):
        p = dbm_to_watts(rng.uniform(10, 30))
        h = 10 ** rng.uniform(-14, -9)
        asymptote = p * h / (n0 * np.log(2))
        target = asymptote * rng.uniform(1e-4, 0.999)
        b = bisect_bandwidth(target, p, h, n0, rel_tol=1e-10)
        worst_res = max(worst_res, abs(shannon_rate(b, p, h, n0) - target) / target)
        b0 = 10 ** rng.uniform(2, 8)
        back = bisect_bandwidth(shannon_rate(b0, p, h, n0), p, h, n0, rel_tol=1e-10)
        worst_trip = max(worst_trip, abs(back - b0) / b0)
    ok = worst_res <= 1e-9 and worst_trip <= 1e-9
    report(2, "bisection residual and round trip", ok,
           f"max residual {worst_res:.2e}, max round-trip error {worst_trip:.2e}")
    assert ok


def test_c3_alternation_vs_exhaustive():
    rng = np.random.default_rng(103)
    cfg = SolverConfig(rho_grid=50, bw_grid=50)
    ratios = {2: [], 3: []}
    start = time.perf_counter()
    for n in (2, 3):
        for _ in range(50):
            params = random_params(rng, n)
            ours = optimize(params, cfg).cost.weighted_total
            ratios[n].append(ours / exhaustive_search(params, cfg).cost.weighted_total)
    elapsed = time.perf_counter() - start
    worst = max(max(r) for r in ratios.values())
    ok = worst <= 1.02 and elapsed < 120
    report(3, "alternating optimizer within 2% of exhaustive search", ok,
           f"worst ratio I=2 {max(ratios[2]):.4f}, I=3 {max(ratios[3]):.4f}, {elapsed:.1f} s")
    assert ok


def test_c4_bandwidth_sum_monotone():
    rng = np.random.default_rng(104)
    violations = 0
    runs = 0
    for _ in range(500):
        params = random_params(rng, int(rng.integers(2, 8)))
        b_total = params.total_bandwidth_B
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            for init in INITIALIZATIONS.values():
                start = init(params)
                sol = alternate(params, start)
                sums = [start.sum()] + [h.bandwidth_sum for h in sol.history]
                runs += 1
                if np.any(np.diff(sums) > 0) or sums[-1] > b_total:
                    violations += 1
            final = optimize(params).allocation.bandwidth.sum()
        if final > b_total:
            violations += 1
    ok = violations == 0
    report(4, "sum of bandwidths non-increasing across iterations and within budget", ok,
           f"{violations} violations in {runs} alternation runs over 500 instances")
    assert ok


def _dominance(rows):
    by_value: dict = {}
    for r in rows:
        by_value.setdefault(r.sweep_value, {})[r.policy] = r.total_cost
    bad = []
    for value, costs in by_value.items():
        ours = costs["proposed"]
        for name, c in costs.items():
            if name != "proposed" and not ours <= c:
                bad.append((value, name, ours / c))
    return by_value, bad


def test_c5_baseline_dominance_and_power_trend(tmp_path):
    policies = ["proposed", "gba", "fpr(0)", "fpr(0.35)", "fpr(0.7)"]
    power = parse_config({"seeds": 20, "policies": policies,
                          "sweep": {"variable": "tx_power", "values": [f"{p} dBm" for p in range(17, 30, 2)]},
                          "output": {"directory": str(tmp_path)}})
    size = parse_config({"seeds": 20, "policies": policies,
                         "sweep": {"variable": "model_bits", "values": ["0.4 Mbit", "0.8 Mbit", "1.2 Mbit",
                                                                       "1.6 Mbit", "2.0 Mbit", "2.4 Mbit"]},
                         "output": {"directory": str(tmp_path)}})
    power_rows, _ = run_sweep(power)
    size_rows, _ = run_sweep(size)
    assert all(r.status == "ok" for r in power_rows + size_rows)
    by_power, bad_p = _dominance(power_rows)
    _, bad_s = _dominance(size_rows)
    trend = [by_power[v]["proposed"] for v in power.sweep_values]
    decreasing = bool(np.all(np.diff(trend) < 0))
    ok = not bad_p and not bad_s and decreasing
    report(5, "proposed <= GBA/FPR on power and model-size sweeps, cost decreasing in power", ok,
           f"{len(bad_p) + len(bad_s)} dominance violations, proposed cost {trend[0]:.5f} -> {trend[-1]:.5f}")
    assert ok


def test_c6_lambda_tradeoff():
    base = parse_config({})
    lams = [1e-5, 1e-4, 4e-4, 1e-3]
    latency, learning = [], []
    for lam in lams:
        params = base.params(0, {"lambda": lam})
        cost = optimize(params).cost
        latency.append(cost.latency_term)
        learning.append(cost.learning_term)
    ok = bool(np.all(np.diff(latency) >= 0) and np.all(np.diff(learning) <= 0))
    report(6, "lambda trade-off", ok,
           "latency " + ", ".join(f"{v:.4g}" for v in latency)
           + "; learning " + ", ".join(f"{v:.4g}" for v in learning))
    assert ok


def test_c7_bound_structure():
    rng = np.random.default_rng(107)
    violations = 0
    for _ in range(10_000):
        n = int(rng.integers(1, 8))
        k = rng.integers(1, 100, n)
        consts = ConvergenceConstants(rng.uniform(0, 5), rng.uniform(0, 5), rng.uniform(0, 0.124),
                                      rng.uniform(0, 5), rng.uniform(0, 5), int(rng.integers(0, 1000)))
        rho, q = rng.uniform(0, 1, n), rng.uniform(0, 1, n)
        base = convergence_bound(rho, q, k, consts)
        i = rng.integers(n)
        if rng.integers(2):
            rho[i] = rng.uniform(rho[i], 1)
        else:
            q[i] = rng.uniform(q[i], 1)
        if convergence_bound(rho, q, k, consts) < base:
            violations += 1
    example = convergence_bound([0.5, 0.0], [0.0, 0.5], [1, 1], ConvergenceConstants(1, 1, 0, 1, 1, 0))
    ok = violations == 0 and abs(example - 4.5) <= 1e-12
    report(7, "convergence bound monotone, hand example 4.5", ok,
           f"{violations} monotonicity violations in 1e4 perturbations, example {example!r}")
    assert ok


def test_c8_gradient_check():
    rng = np.random.default_rng(108)
    worst = 0.0
    h = 1e-6
    for trial in range(50):
        model = init_model([2, 2, 2], trial)
        x, y = rng.standard_normal((3, 2)), rng.integers(0, 2, 3)
        mask = prune_mask(model, rng.uniform(0, 0.8), rng_seed=trial)
        g = local_gradient(model, mask, x, y)
        w = model.weights * mask.keep
        fd = np.zeros_like(w)
        for j in np.flatnonzero(mask.keep):
            e = np.zeros_like(w)
            e[j] = h
            fd[j] = (loss_and_grad(w + e, model.layer_shapes, x, y)[0]
                     - loss_and_grad(w - e, model.layer_shapes, x, y)[0]) / (2 * h)
        worst = max(worst, np.max(np.abs(g - fd)) / max(np.max(np.abs(fd)), 1e-12))
    ok = worst <= 1e-5
    report(8, "masked gradient vs central finite differences", ok, f"max relative error {worst:.2e}")
    assert ok


@pytest.fixture(scope="module")
def mnist_run(mnist_idx, tmp_path_factory):
    cfg = parse_config({
        "fl": dict(mnist_idx, train_size=500, test_size=1000, rounds=150, eta=1e-3, seeds=5,
                   hidden=[60], policies=["ideal", "fpr(0)", "proposed", "fpr(0.7)"]),
        "output": {"directory": str(tmp_path_factory.mktemp("fl"))},
    })
    start = time.perf_counter()
    summaries, traces = run_fl(cfg)
    return {s.policy: s.mean_accuracy_final for s in summaries}, traces, time.perf_counter() - start


def test_c9_accuracy_ordering(mnist_run):
    acc, _, elapsed = mnist_run
    a = [acc["ideal"], acc["fpr(0)"], acc["proposed"], acc["fpr(0.7)"]]
    noise = 0.01
    ordered = all(a[i] >= a[i + 1] - noise for i in range(3))
    gap = a[0] - a[3]
    ok = ordered and gap >= 0.03 and elapsed < 300
    report(9, "MNIST accuracy ordering ideal >= FPR(0) >= proposed >= FPR(0.7), gap >= 3 points", ok,
           "final accuracy " + ", ".join(f"{k} {v:.4f}" for k, v in acc.items())
           + f"; gap {100 * gap:.2f} points; {elapsed:.0f} s")
    assert ok


def test_c10_deviation_bound(mnist_run):
    _, traces, _ = mnist_run
    checked = violations = 0
    for t in traces:
        for dev, norm in zip(t.prune_deviation, t.weight_norm_sq):
            checked += dev.size
            violations += int(np.sum(dev > t.rho_used * norm))
    ok = violations == 0 and checked > 0
    report(10, "magnitude-pruning deviation bound every round", ok,
           f"{violations} violations over {checked} UE-rounds")
    assert ok
