"""Walk through one channel realization of the default 5-UE scenario.

Shows the pieces the optimizer is built from (no-prune latencies,
the latency bound t~, the pruning rates it implies) and then compares the
joint allocation with the baselines.

    python demos/01_one_scenario.py [seed]
"""

import sys

import numpy as np

from prunefl.cost import total_cost
from prunefl.harness.config import parse_config
from prunefl.solver import (
    equal_split,
    fpr_allocation,
    gba_allocation,
    optimize,
    pruning_for,
    solve_t_tilde,
    t_tilde_bounds,
)
from prunefl.system import no_prune_latencies, packet_errors

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
params = parse_config({}).params(seed)
np.set_printoptions(precision=4, suppress=True)

print("uplink gains, dB  ", 10 * np.log10(params.uplink_gain))
print("samples K         ", params.K)

# Step 1: with the bandwidth fixed, every UE has a no-prune latency.
bw = equal_split(params)
t_np = no_prune_latencies(bw, params)
print("\nequal split, MHz  ", bw / 1e6)
print("t_np, s           ", t_np)
lo, hi = t_tilde_bounds(bw, params)
print(f"t~ must lie in [{lo:.4f}, {hi:.4f}] s")

# Step 2: the best common deadline t~ sits on a breakpoint (or at t~min);
# UEs slower than t~ prune just enough to meet it.
t = solve_t_tilde(bw, params)
print(f"optimal t~        {t:.4f} s")
print("pruning rates     ", pruning_for(t, t_np, params))

# Step 3: alternate with the bandwidth step until the cost settles.
sol = optimize(params)
a = sol.allocation
print(f"\nalternating optimization ({len(sol.history)} iterations, start: {sol.metadata['initialization']})")
print("rho               ", a.rho)
print("bandwidth, MHz    ", a.bandwidth / 1e6, f"(sum {a.bandwidth.sum() / 1e6:.3f} of 15)")
print("packet errors     ", packet_errors(a.bandwidth, params))

print("\npolicy        total     latency   learning")
rows = [("proposed", a), ("gba", gba_allocation(params))]
rows += [(f"fpr({r:g})", fpr_allocation(params, r)) for r in (0.0, 0.35, 0.7)]
for name, alloc in rows:
    c = total_cost(alloc, params)
    print(f"{name:<12} {c.weighted_total:8.5f}  {c.latency_term:8.5f}  {c.learning_term:9.3f}")
