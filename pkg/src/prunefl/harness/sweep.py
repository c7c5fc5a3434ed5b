"""Parameter sweeps over allocation policies, averaged over channel seeds."""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..cost import total_cost
from ..policies import Policy, allocate
from ..solver import SizeGuardError
from ..system import InfeasibleError
from .config import ExperimentConfig, parse_quantity, SCENARIO_FIELDS

log = logging.getLogger(__name__)

# exhaustive rows are only produced up to this many UEs
EXHAUSTIVE_MAX_UES = 3


@dataclass
class SeedResult:
    sweep_value: object
    policy: str
    seed: int
    status: str
    total_cost: float = math.nan
    latency_term: float = math.nan
    learning_term: float = math.nan
    mean_rho: float = math.nan
    bandwidth_used: float = math.nan


@dataclass
class ResultRow:
    sweep_variable: str
    sweep_value: object
    sweep_value_si: float
    policy: str
    status: str
    total_cost: float | None
    latency_term: float | None
    learning_term: float | None
    mean_rho: float | None
    mean_accuracy_final: float | None
    seed_count: int
    seeds: str
    metadata: dict = field(default_factory=dict)


def _si_value(variable: str | None, value) -> float:
    if variable is None or value is None:
        return math.nan
    dim = SCENARIO_FIELDS[variable][0]
    if dim is None:
        return float(value)
    return parse_quantity(value, dim, variable)


def _evaluate(task) -> SeedResult:
    cfg, value, policy, seed = task
    overrides = {} if cfg.sweep_variable is None else {cfg.sweep_variable: value}
    params = cfg.params(seed, overrides)
    if policy.kind == "exhaustive" and params.num_ues > EXHAUSTIVE_MAX_UES:
        return SeedResult(value, policy.label, seed, "skipped_size_guard")
    try:
        alloc = allocate(policy, params, cfg.solver)
        cost = total_cost(alloc, params)
    except InfeasibleError as exc:
        log.info("infeasible: value=%s policy=%s seed=%d: %s", value, policy.label, seed, exc)
        return SeedResult(value, policy.label, seed, "infeasible")
    except SizeGuardError:
        return SeedResult(value, policy.label, seed, "skipped_size_guard")
    return SeedResult(
        value, policy.label, seed, "ok",
        cost.weighted_total, cost.latency_term, cost.learning_term,
        float(np.mean(alloc.rho)), float(np.sum(alloc.bandwidth)),
    )


def _format_seeds(seeds) -> str:
    seeds = sorted(seeds)
    if seeds and seeds == list(range(seeds[0], seeds[-1] + 1)) and len(seeds) > 2:
        return f"{seeds[0]}-{seeds[-1]}"
    return " ".join(str(s) for s in seeds)


def run_sweep(cfg: ExperimentConfig, write: bool = True) -> tuple[list[ResultRow], list[SeedResult]]:
    """Evaluate every (sweep value, policy, seed) and average over seeds.

    Rows come back ordered by sweep value (config order), then policy
    (config order).  A row whose seeds are not all feasible is reported
    with ``status="infeasible"`` and averages over the feasible seeds only.
    When ``write`` is set the aggregate and per-seed tables are written as
    CSV into ``cfg.output_dir``.
    """
    tasks = [(cfg, v, p, s) for v in cfg.sweep_values for p in cfg.policies for s in cfg.seeds]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            per_seed = list(pool.map(_evaluate, tasks, chunksize=8))
    else:
        per_seed = [_evaluate(t) for t in tasks]

    rows = []
    it = iter(per_seed)
    for value in cfg.sweep_values:
        for policy in cfg.policies:
            group = [next(it) for _ in cfg.seeds]
            ok = [r for r in group if r.status == "ok"]
            if len(ok) == len(group):
                status = "ok"
            elif any(r.status == "skipped_size_guard" for r in group):
                status = "skipped_size_guard"
            else:
                status = "infeasible"

            def mean(attr):
                return float(np.mean([getattr(r, attr) for r in ok])) if ok else None

            rows.append(ResultRow(
                sweep_variable=cfg.sweep_variable or "none",
                sweep_value=value,
                sweep_value_si=_si_value(cfg.sweep_variable, value),
                policy=policy.label,
                status=status,
                total_cost=mean("total_cost"),
                latency_term=mean("latency_term"),
                learning_term=mean("learning_term"),
                mean_rho=mean("mean_rho"),
                mean_accuracy_final=None,
                seed_count=len(ok),
                seeds=_format_seeds(r.seed for r in ok),
                metadata=_metadata(cfg),
            ))
    if write:
        write_sweep_csv(cfg, rows, per_seed)
    return rows, per_seed


def _metadata(cfg: ExperimentConfig) -> dict:
    return {
        "config_hash": cfg.config_hash,
        "m0_interpretation": cfg.m0_interpretation(),
        "defaults_used": ";".join(cfg.defaults_used) or "none",
        "fpr_bandwidth": "min feasible t_tilde under equal split, then minimal bandwidth",
        "initializations": ";".join(cfg.solver.initializations),
    }


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return "" if math.isnan(value) else repr(value)
    return str(value)


AGG_COLUMNS = [
    "sweep_variable", "sweep_value", "sweep_value_si", "policy", "status", "total_cost",
    "latency_term", "learning_term", "mean_rho", "mean_accuracy_final", "seed_count", "seeds",
    "config_hash", "m0_interpretation", "defaults_used", "fpr_bandwidth", "initializations",
]
SEED_COLUMNS = [
    "sweep_variable", "sweep_value", "policy", "seed", "status", "total_cost", "latency_term",
    "learning_term", "mean_rho", "bandwidth_used", "config_hash", "m0_interpretation", "defaults_used",
]


def write_csv(path: Path, columns: list[str], records: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for rec in records:
            writer.writerow([_fmt(rec.get(c)) for c in columns])


def write_sweep_csv(cfg: ExperimentConfig, rows: list[ResultRow], per_seed: list[SeedResult]) -> tuple[Path, Path]:
    name = cfg.sweep_variable or "scenario"
    agg_path = Path(cfg.output_dir) / f"sweep_{name}.csv"
    seed_path = Path(cfg.output_dir) / f"sweep_{name}_seeds.csv"
    agg = []
    for r in rows:
        rec = asdict(r)
        rec.update(rec.pop("metadata"))
        agg.append(rec)
    meta = _metadata(cfg)
    seeds = [asdict(r) | meta | {"sweep_variable": name} for r in per_seed]
    write_csv(agg_path, AGG_COLUMNS, agg)
    write_csv(seed_path, SEED_COLUMNS, seeds)
    return agg_path, seed_path
