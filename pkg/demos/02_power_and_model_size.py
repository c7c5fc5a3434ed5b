"""Total cost against UE transmit power and model size, averaged over 20 channel seeds.

Writes sweep_tx_power.csv and sweep_model_bits.csv (plus per-seed tables)
into ./demo_results and prints the proposed/baseline averages.
"""

from prunefl.harness.config import parse_config
from prunefl.harness.sweep import run_sweep

POLICIES = ["proposed", "gba", "fpr(0)", "fpr(0.35)", "fpr(0.7)"]

sweeps = {
    "tx_power": [f"{p} dBm" for p in range(17, 30, 2)],
    "model_bits": [f"{m:.1f} Mbit" for m in (0.4, 0.8, 1.2, 1.6, 2.0, 2.4)],
}

for variable, values in sweeps.items():
    cfg = parse_config({
        "seeds": 20,
        "policies": POLICIES,
        "sweep": {"variable": variable, "values": values},
        "output": {"directory": "demo_results", "workers": 4},
    })
    rows, _ = run_sweep(cfg)
    print(f"\n{variable:<10}" + "".join(f"{p:>11}" for p in POLICIES))
    for i, value in enumerate(values):
        costs = rows[i * len(POLICIES):(i + 1) * len(POLICIES)]
        print(f"{value:<10}" + "".join(f"{r.total_cost:11.4f}" for r in costs))
