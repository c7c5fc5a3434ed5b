"""Joint pruning-rate / bandwidth allocation.

The proposed method alternates two block minimizations:

* given bandwidths, the latency bound ``t_tilde`` minimizes a convex
  piecewise-linear function whose kinks are the no-prune latencies, and
  pruning rates follow as the smallest rates meeting ``t_tilde``;
* given pruning rates and ``t_tilde``, each UE receives the smallest
  bandwidth whose uplink rate meets its deadline (bisection on the
  monotone Shannon rate).

Bandwidth never grows across iterations, so a run that starts inside the
budget stays inside it.  Several starting splits are tried and the best
run is kept.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .cost import CostBreakdown, total_cost
from .system import (
    Allocation,
    DomainError,
    InfeasibleError,
    SystemParams,
    no_prune_latencies,
    packet_errors,
    shannon_rate,
)


class SizeGuardError(ValueError):
    """Exhaustive enumeration would be too large."""


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Breakpoint:
    ue_index: int
    t_np: float
    slope_weight: float


@dataclass(frozen=True)
class SolverConfig:
    bisection_rel_tol: float = 1e-10
    max_outer_iters: int = 100
    objective_rel_tol: float = 1e-6
    rho_grid: int = 50
    bw_grid: int = 50
    # exhaustive_search refuses more than this many bandwidth grid combinations
    max_grid_points: int = 10_000_000
    # starting bandwidth splits tried by optimize(); the best run is kept
    initializations: tuple[str, ...] = ("equal", "inverse_gain", "equal_latency")

    def __post_init__(self):
        for name in ("bisection_rel_tol", "objective_rel_tol"):
            if not 0 < getattr(self, name) < 1:
                raise DomainError(f"{name} must lie in (0, 1)")
        for name in ("max_outer_iters", "rho_grid", "bw_grid"):
            if getattr(self, name) < 1:
                raise DomainError(f"{name} must be >= 1")
        unknown = set(self.initializations) - set(INITIALIZATIONS)
        if unknown or not self.initializations:
            raise DomainError(f"unknown initializations {sorted(unknown)}")


@dataclass
class IterationRecord:
    t_tilde: float
    objective: float
    bandwidth_sum: float


@dataclass
class Solution:
    allocation: Allocation
    cost: CostBreakdown
    history: list[IterationRecord] = field(default_factory=list)
    converged: bool = True
    metadata: dict = field(default_factory=dict)

    def __iter__(self):
        # allow ``alloc, cost = optimize(...)``
        yield self.allocation
        yield self.cost


# ---------------------------------------------------------------------------
# pruning / latency block


def rho_min(t_tilde, t_np):
    """Smallest pruning rate that lets a UE finish within ``t_tilde``."""
    t_np = np.asarray(t_np, dtype=float)
    if np.any(t_np <= 0):
        raise DomainError("t_np must be positive")
    if np.any(np.asarray(t_tilde) < 0):
        raise DomainError("t_tilde must be non-negative")
    r = np.maximum(1.0 - np.asarray(t_tilde, dtype=float) / t_np, 0.0)
    return r if r.ndim else float(r)


def breakpoints(bandwidth, params: SystemParams) -> list[Breakpoint]:
    """No-prune latencies sorted non-increasing; ties keep UE index order."""
    t_np = no_prune_latencies(bandwidth, params)
    k = params.K
    order = sorted(range(len(t_np)), key=lambda i: (-t_np[i], i))
    return [Breakpoint(i, float(t_np[i]), float(k[i] ** 2 / t_np[i])) for i in order]


def t_tilde_bounds(bandwidth, params: SystemParams) -> tuple[float, float]:
    t_np = no_prune_latencies(bandwidth, params)
    return float(np.max(t_np * (1.0 - params.rho_max))), float(np.max(t_np))


def pruning_objective(t_tilde, t_np, params: SystemParams):
    """(1 - lam) t + lam m sum_i K_i^2 rho_min_i(t), vectorized over ``t_tilde``."""
    t = np.asarray(t_tilde, dtype=float)
    t_np = np.asarray(t_np, dtype=float)
    k2 = params.K ** 2
    lam, m = params.lam, params.m_const
    rho = np.maximum(1.0 - t[..., None] / t_np, 0.0)
    val = (1.0 - lam) * t + lam * m * (rho * k2).sum(axis=-1)
    return val if val.ndim else float(val)


def _optimal_t_tilde(t_np: np.ndarray, params: SystemParams) -> float:
    """Minimizer of :func:`pruning_objective` over [t_min, t_max]."""
    if t_np.size == 0:
        raise DomainError("no UEs")
    lam, m = params.lam, params.m_const
    k2 = params.K ** 2
    t_min = float(np.max(t_np * (1.0 - params.rho_max)))
    t_max = float(np.max(t_np))
    order = sorted(range(t_np.size), key=lambda i: (-t_np[i], i))
    ts = t_np[order]
    w = k2[order] / ts

    # i1: UEs whose breakpoint lies at or above t_min (all of them if the
    # smallest does)
    i1 = int(np.count_nonzero(ts >= t_min))
    if (1.0 - lam) - lam * m * w[:i1].sum() >= 0:
        return t_min

    # Scan breakpoints upward from t_min; the first one where the slope to
    # its right turns non-negative is the kink where the objective bottoms
    # out.  The largest breakpoint has slope 1 - lam >= 0, so this always
    # terminates.
    for j in range(i1 - 1, -1, -1):
        right_slope = (1.0 - lam) - lam * m * w[ts > ts[j]].sum()
        if right_slope >= 0:
            return float(min(max(ts[j], t_min), t_max))
    return t_max


def solve_t_tilde(bandwidth, params: SystemParams) -> float:
    """Optimal latency bound for fixed bandwidths."""
    if params.num_ues == 0:
        raise DomainError("no UEs")
    return _optimal_t_tilde(no_prune_latencies(bandwidth, params), params)


def pruning_for(t_tilde: float, t_np, params: SystemParams) -> np.ndarray:
    """Pruning rates for a latency bound, clipped to each UE's maximum."""
    return np.minimum(rho_min(t_tilde, t_np), params.rho_max)


# ---------------------------------------------------------------------------
# bandwidth block


def bisect_bandwidth(
    target_rate: float,
    power: float,
    gain: float,
    noise_density: float,
    rel_tol: float = 1e-10,
    initial_upper: float = 1.0,
    ue: int | None = None,
) -> float:
    """Smallest bandwidth whose Shannon rate reaches ``target_rate``.

    Returns the upper end of the final bracket, so the rate at the result
    is never below the target.  Bisection stops once both the rate excess
    and the bracket width are within ``rel_tol`` relative; the width test
    matters where the rate curve is nearly flat in bandwidth.
    """
    if target_rate <= 0:
        return 0.0
    asymptote = power * gain / (noise_density * math.log(2.0))
    if target_rate >= asymptote:
        raise InfeasibleError(
            f"target rate {target_rate:.6g} bit/s is at or above the rate limit {asymptote:.6g} bit/s"
            + (f" for UE {ue}" if ue is not None else ""),
            ue,
        )

    snr_bw = power * gain / noise_density
    ln2 = math.log(2.0)

    def rate(b):
        # scalar fast path of shannon_rate
        return b * math.log1p(snr_bw / b) / ln2 if b > 0 else 0.0

    lo, hi = 0.0, max(initial_upper, 1e-12)
    while rate(hi) < target_rate:
        lo, hi = hi, 2.0 * hi
        if not math.isfinite(hi):
            raise InfeasibleError("bandwidth bracket diverged", ue)
    for _ in range(2000):
        excess = (rate(hi) - target_rate) / target_rate
        if excess <= rel_tol and hi - lo <= rel_tol * hi:
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if rate(mid) >= target_rate:
            hi = mid
        else:
            lo = mid
    return hi


def target_rates(rho, t_tilde: float, params: SystemParams) -> np.ndarray:
    """Uplink rate each UE needs to finish within ``t_tilde`` at pruning ``rho``."""
    keep = 1.0 - np.asarray(rho, dtype=float)
    compute = keep * params.compute_latency()
    slack = t_tilde - compute
    bad = np.flatnonzero((keep > 0) & (slack <= 0))
    if bad.size:
        i = int(bad[0])
        raise InfeasibleError(
            f"UE {i}: t_tilde {t_tilde:.6g} s leaves no time to upload after {compute[i]:.6g} s of compute",
            i,
        )
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(keep > 0, keep * params.model_bits_DM / np.where(slack > 0, slack, 1.0), 0.0)


def solve_bandwidth(rho, t_tilde: float, params: SystemParams, cfg: SolverConfig | None = None) -> np.ndarray:
    """Per-UE minimal bandwidth meeting the latency bound (rate target)."""
    cfg = cfg or SolverConfig()
    targets = target_rates(rho, t_tilde, params)
    start = params.total_bandwidth_B / params.num_ues
    out = np.zeros(params.num_ues)
    for i, ue in enumerate(params.ues):
        out[i] = bisect_bandwidth(
            targets[i], ue.tx_power, ue.uplink_gain, params.noise_density_N0,
            cfg.bisection_rel_tol, start, ue=i,
        )
    return out


# ---------------------------------------------------------------------------
# alternating optimization


def aux_objective(rho, bandwidth, t_tilde: float, params: SystemParams) -> float:
    """(1 - lam) t_tilde + lam m sum_i K_i (q_i + K_i rho_i)."""
    k = params.K
    q = packet_errors(bandwidth, params)
    return float((1.0 - params.lam) * t_tilde
                 + params.lam * params.m_const * np.sum(k * (q + k * np.asarray(rho))))


def _t_np_lenient(bandwidth: np.ndarray, params: SystemParams) -> np.ndarray:
    # fully pruned UEs are handed zero bandwidth; their breakpoint is at
    # infinity and they stay fully pruned
    b = np.asarray(bandwidth, dtype=float)
    out = np.full(b.shape, np.inf)
    pos = b > 0
    if pos.any():
        sub = b.copy()
        sub[~pos] = 1.0
        out[pos] = no_prune_latencies(sub, params)[pos]
    return out


def _pruning_step(bandwidth: np.ndarray, params: SystemParams) -> tuple[float, np.ndarray]:
    t_np = _t_np_lenient(bandwidth, params)
    finite = np.isfinite(t_np)
    if finite.all():
        t = _optimal_t_tilde(t_np, params)
        return t, pruning_for(t, t_np, params)
    # only reachable when the UEs without bandwidth have rho_max = 1
    if np.any(params.rho_max[~finite] < 1.0):
        raise InfeasibleError("UE without bandwidth cannot be fully pruned", int(np.flatnonzero(~finite)[0]))
    rho = np.ones_like(t_np)
    if not finite.any():
        return 0.0, rho
    sub = _restrict(params, np.flatnonzero(finite))
    t = _optimal_t_tilde(t_np[finite], sub)
    rho[finite] = pruning_for(t, t_np[finite], sub)
    return t, rho


def _restrict(params: SystemParams, idx) -> SystemParams:
    from dataclasses import replace

    return replace(params, ues=tuple(params.ues[i] for i in idx))


def _within_budget(bandwidth: np.ndarray, budget: float) -> np.ndarray:
    """Shave floating-point excess so the shares sum to at most ``budget``."""
    b = np.asarray(bandwidth, dtype=float)
    while b.sum() > budget:
        b = b * (1.0 - 4.0 * np.finfo(float).eps)
    return b


def equal_split(params: SystemParams) -> np.ndarray:
    return _within_budget(np.full(params.num_ues, params.total_bandwidth_B / params.num_ues),
                          params.total_bandwidth_B)


def inverse_gain_split(params: SystemParams) -> np.ndarray:
    """Budget split in proportion to 1 / h_i."""
    inv = 1.0 / params.uplink_gain
    return _within_budget(params.total_bandwidth_B * inv / inv.sum(), params.total_bandwidth_B)


def equal_latency_split(params: SystemParams, rel_tol: float = 1e-10) -> np.ndarray:
    """Budget split that gives every UE the same no-prune latency.

    Bisects on the common latency T; each UE's share is the bandwidth whose
    rate uploads the model in T minus its compute time.
    """
    compute = params.compute_latency()
    floor = np.max(compute + params.model_bits_DM / params.rate_asymptote())
    budget = params.total_bandwidth_B

    def shares(t):
        if t <= floor:
            return None
        rates = params.model_bits_DM / (t - compute)
        return np.array([
            bisect_bandwidth(r, ue.tx_power, ue.uplink_gain, params.noise_density_N0, rel_tol,
                             budget / params.num_ues)
            for r, ue in zip(rates, params.ues)
        ])

    hi = floor * 2.0 + 1.0
    while shares(hi).sum() > budget:
        hi *= 2.0
    lo = floor
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        b = shares(mid)
        if b is not None and b.sum() <= budget:
            hi = mid
        else:
            lo = mid
        if hi - lo <= rel_tol * hi:
            break
    b = shares(hi)
    # hand out the round-off remainder evenly
    b = b + (budget - b.sum()) / params.num_ues if b.sum() < budget else b * (budget / b.sum())
    return _within_budget(b, budget)


INITIALIZATIONS = {
    "equal": equal_split,
    "inverse_gain": inverse_gain_split,
    "equal_latency": equal_latency_split,
}


def alternate(params: SystemParams, initial_bandwidth, cfg: SolverConfig | None = None) -> Solution:
    """Alternating minimization from one starting bandwidth vector.

    Stops when the relative objective change drops below
    ``cfg.objective_rel_tol`` or after ``cfg.max_outer_iters`` rounds; in the
    latter case the best iterate is returned with ``converged=False``.
    """
    cfg = cfg or SolverConfig()
    n = params.num_ues
    if n == 0:
        raise DomainError("no UEs")
    bandwidth = np.asarray(initial_bandwidth, dtype=float).copy()
    if bandwidth.shape != (n,):
        raise DomainError("initial bandwidth has the wrong length")
    if bandwidth.sum() > params.total_bandwidth_B * (1 + 1e-12):
        raise InfeasibleError("initial bandwidth exceeds the budget")
    no_prune_latencies(bandwidth, params)  # raises on an infeasible start

    history: list[IterationRecord] = []
    best = None
    prev = math.inf
    converged = False
    for _ in range(cfg.max_outer_iters):
        t_tilde, rho = _pruning_step(bandwidth, params)
        new_bw = solve_bandwidth(rho, t_tilde, params, cfg)
        # the previous bandwidth already meets the deadline, so the minimal one
        # cannot exceed it; min() absorbs bisection round-off
        bandwidth = np.minimum(new_bw, bandwidth)
        obj = aux_objective(rho, bandwidth, t_tilde, params)
        history.append(IterationRecord(t_tilde, obj, float(bandwidth.sum())))
        if best is None or obj <= best[0]:
            best = (obj, rho.copy(), bandwidth.copy(), t_tilde)
        if abs(prev - obj) <= cfg.objective_rel_tol * max(abs(obj), 1e-300):
            converged = True
            break
        prev = obj
    if not converged:
        warnings.warn(
            f"alternating optimization did not converge in {cfg.max_outer_iters} iterations",
            ConvergenceWarning,
            stacklevel=2,
        )
    _, rho, bandwidth, t_tilde = best
    alloc = Allocation(rho, bandwidth, t_tilde)
    alloc.check(params)
    return Solution(alloc, total_cost(alloc, params), history, converged, {"policy": "proposed"})


def optimize(params: SystemParams, cfg: SolverConfig | None = None) -> Solution:
    """Proposed joint pruning / bandwidth allocation.

    Runs :func:`alternate` from each split in ``cfg.initializations`` and
    keeps the cheapest result (ties go to the earlier start).
    """
    cfg = cfg or SolverConfig()
    if params.num_ues == 0:
        raise DomainError("no UEs")
    best = None
    for name in cfg.initializations:
        sol = alternate(params, INITIALIZATIONS[name](params), cfg)
        sol.metadata["initialization"] = name
        if best is None or sol.cost.weighted_total < best.cost.weighted_total:
            best = sol
    return best


# ---------------------------------------------------------------------------
# oracle


def _bandwidth_grid(params: SystemParams, cfg: SolverConfig) -> np.ndarray:
    g = cfg.bw_grid
    return params.total_bandwidth_B * np.arange(1, g + 1) / g


def _rho_grid(params: SystemParams, cfg: SolverConfig) -> np.ndarray:
    """Per-UE pruning grids, shape (I, rho_grid), ascending."""
    g = cfg.rho_grid
    base = np.linspace(0.0, 1.0, g) if g > 1 else np.zeros(1)
    return params.rho_max[:, None] * base[None, :]


def _bandwidth_combos(params: SystemParams, cfg: SolverConfig) -> np.ndarray:
    n = params.num_ues
    g = cfg.bw_grid
    if g**n > cfg.max_grid_points:
        raise SizeGuardError(
            f"{g}^{n} = {g**n} bandwidth grid points exceeds the limit of {cfg.max_grid_points}"
        )
    idx = np.stack(np.meshgrid(*[np.arange(1, g + 1, dtype=np.int32)] * n, indexing="ij"), -1).reshape(-1, n)
    # budget: sum_i B_i <= B on the grid B_i = B * idx_i / g
    return idx[idx.sum(axis=1) <= g]


def _first_grid_index(a, levels, rho_max, g):
    """Index of the smallest grid pruning rate with a_i (1 - rho) <= level.

    ``a``: (C, I) no-prune latencies, ``levels``: (C, T).  Returns the index
    array (C, I, T), clipped into range, and a feasibility mask.
    """
    ratio = levels[:, None, :] / a[:, :, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        x = (1.0 - ratio) / rho_max[None, :, None] * (g - 1) if g > 1 else np.full(ratio.shape, np.inf)
    x = np.where(ratio >= 1.0 - 1e-12, 0.0, x)
    idx = np.ceil(x - 1e-9)
    idx = np.where(np.isfinite(idx), np.maximum(idx, 0.0), np.inf)
    ok = idx <= g - 1
    return np.where(ok, idx, 0).astype(np.intp), ok


def exhaustive_search(params: SystemParams, cfg: SolverConfig | None = None, chunk: int = 4096) -> Solution:
    """Grid minimum of the weighted cost over all (rho, B) grid points.

    Bandwidths range over multiples of B / bw_grid with the budget enforced;
    pruning rates over ``rho_grid`` evenly spaced values in [0, rho_max_i].
    For each bandwidth combination the pruning grid is enumerated exactly by
    sweeping the candidate slowest-UE latencies: for a given latency level
    every UE takes the smallest grid rate that meets it, which dominates any
    other grid choice with the same maximum.
    """
    cfg = cfg or SolverConfig()
    n = params.num_ues
    if n == 0:
        raise DomainError("no UEs")
    combos = _bandwidth_combos(params, cfg)
    if combos.size == 0:
        raise InfeasibleError("no bandwidth grid point fits the budget")
    bw_values = _bandwidth_grid(params, cfg)
    rho_g = _rho_grid(params, cfg)                    # (I, G)
    lam, m = params.lam, params.m_const
    k = params.K
    c = lam * m * k**2                                 # per-UE pruning price
    # per-UE lookup tables over the bandwidth grid
    t_np_tab = np.stack([no_prune_latencies(np.full(n, b), params) for b in bw_values], axis=1)  # (I, Gb)
    q_tab = np.stack([packet_errors(np.full(n, b), params) for b in bw_values], axis=1)

    best_val, best = math.inf, None
    ues = np.arange(n)
    for start in range(0, len(combos), chunk):
        cb = combos[start:start + chunk] - 1           # (C, I) indices into bw_values
        a = t_np_tab[ues, cb]                          # (C, I) no-prune latency
        qcost = lam * m * np.sum(k * q_tab[ues, cb], axis=1)
        lat = a[:, :, None] * (1.0 - rho_g[None, :, :])          # (C, I, G), descending in G
        cand = lat.reshape(len(cb), -1)                          # candidate max latencies (C, I*G)
        # for each candidate level T, each UE's first grid index with latency <= T
        first, ok = _first_grid_index(a, cand, params.rho_max, cfg.rho_grid)   # (C, I, T)
        feasible = ok.all(axis=1)                                # (C, T)
        rho_sel = np.take_along_axis(rho_g[None, :, :], first.reshape(len(cb), n, -1), axis=2)
        lat_sel = a[:, :, None] * (1.0 - rho_sel)
        vals = (1.0 - lam) * lat_sel.max(axis=1) + np.einsum("i,cit->ct", c, rho_sel) + qcost[:, None]
        vals = np.where(feasible, vals, np.inf)
        flat = int(np.argmin(vals))
        ci, ti = divmod(flat, vals.shape[1])
        if vals[ci, ti] < best_val:
            best_val = float(vals[ci, ti])
            best = (bw_values[cb[ci]], rho_sel[ci, :, ti].copy(), float(lat_sel[ci, :, ti].max()))
    bandwidth, rho, t_tilde = best
    alloc = Allocation(rho, bandwidth, t_tilde)
    return Solution(alloc, total_cost(alloc, params), [], True, {"policy": "exhaustive", "grid_value": best_val})


def brute_force_search(params: SystemParams, cfg: SolverConfig) -> Solution:
    """Literal enumeration of every (rho, B) grid point; for tiny grids only."""
    combos = _bandwidth_combos(params, cfg)
    bw_values = _bandwidth_grid(params, cfg)
    rho_g = _rho_grid(params, cfg)
    best_val, best = math.inf, None
    for cb in combos:
        bw = bw_values[cb - 1]
        for rho in itertools.product(*rho_g):
            alloc = Allocation(np.array(rho), bw, 0.0)
            val = total_cost(alloc, params).weighted_total
            if val < best_val:
                best_val, best = val, alloc
    return Solution(best, total_cost(best, params), [], True, {"policy": "brute_force"})


# ---------------------------------------------------------------------------
# baselines


def gba_allocation(params: SystemParams) -> Allocation:
    """Bandwidth split in proportion to 1/h_i; pruning optimized for that split."""
    bandwidth = inverse_gain_split(params)
    t_np = no_prune_latencies(bandwidth, params)
    t = _optimal_t_tilde(t_np, params)
    return Allocation(pruning_for(t, t_np, params), bandwidth, t)


def fpr_allocation(params: SystemParams, rho_fixed: float, cfg: SolverConfig | None = None) -> Allocation:
    """Common fixed pruning rate for every UE.

    The latency bound is the smallest one feasible under the equal split;
    bandwidths are then shrunk to the minimum meeting it.
    """
    if not 0.0 <= rho_fixed <= 1.0:
        raise DomainError("rho_fixed must lie in [0, 1]")
    if rho_fixed > params.rho_max.min() + 1e-12:
        raise InfeasibleError(f"rho_fixed {rho_fixed} exceeds the smallest rho_max {params.rho_max.min()}")
    n = params.num_ues
    rho = np.full(n, float(rho_fixed))
    if rho_fixed >= 1.0:
        return Allocation(rho, np.zeros(n), 0.0)
    equal = np.full(n, params.total_bandwidth_B / n)
    t = float(np.max((1.0 - rho) * no_prune_latencies(equal, params)))
    bandwidth = np.minimum(solve_bandwidth(rho, t, params, cfg), equal)
    return Allocation(rho, bandwidth, t)
