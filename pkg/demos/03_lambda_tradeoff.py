"""How the weight lambda moves the optimum between latency and learning cost.

Small lambda buys latency with heavy pruning; large lambda stops pruning
and pays for it in round time.
"""

import numpy as np

from prunefl.harness.config import parse_config
from prunefl.solver import optimize

base = parse_config({})
print("lambda      latency[s]  learning    mean rho   bandwidth used [MHz]")
for lam in np.logspace(-5, -2, 7):
    params = base.params(0, {"lambda": float(lam)})
    sol = optimize(params)
    c, a = sol.cost, sol.allocation
    print(f"{lam:9.2e}  {c.latency_term:10.4f}  {c.learning_term:10.3f}  {a.rho.mean():8.3f}"
          f"   {a.bandwidth.sum() / 1e6:8.3f}")
