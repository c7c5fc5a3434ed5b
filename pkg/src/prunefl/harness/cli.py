"""Command-line entry point: ``prunefl {solve,sweep,train,oracle}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from ..solver import SizeGuardError, exhaustive_search, optimize
from ..system import InfeasibleError, round_latency
from .config import ConfigError, ExperimentConfig, load_config, parse_config

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_INTERNAL = 0, 1, 2, 3


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else parse_config({})
    if args.out:
        cfg.output_dir = Path(args.out)
    if args.seed is not None:
        cfg.channel_seed = args.seed
        cfg.raw["channel"] = dict(cfg.raw.get("channel", {}), seed=args.seed)
    return cfg


def _alloc_json(alloc, cost, params) -> dict:
    return {
        "rho": alloc.rho.tolist(),
        "bandwidth_hz": alloc.bandwidth.tolist(),
        "t_tilde_s": alloc.t_tilde,
        "round_latency_s": round_latency(alloc, params),
        "cost": {
            "total": cost.weighted_total,
            "latency_term": cost.latency_term,
            "learning_term": cost.learning_term,
            "upsilon": cost.upsilon,
        },
    }


def cmd_solve(cfg: ExperimentConfig) -> dict:
    params = cfg.params(cfg.channel_seed)
    sol = optimize(params, cfg.solver)
    out = _alloc_json(sol.allocation, sol.cost, params)
    out.update(
        iterations=len(sol.history),
        converged=sol.converged,
        initialization=sol.metadata.get("initialization"),
        metadata=params.metadata | {"config_hash": cfg.config_hash},
    )
    return out


def cmd_oracle(cfg: ExperimentConfig) -> dict:
    params = cfg.params(cfg.channel_seed)
    sol = optimize(params, cfg.solver)
    ex = exhaustive_search(params, cfg.solver)
    return {
        "proposed": _alloc_json(sol.allocation, sol.cost, params),
        "exhaustive": _alloc_json(ex.allocation, ex.cost, params),
        "ratio": sol.cost.weighted_total / ex.cost.weighted_total,
        "grid": {"rho": cfg.solver.rho_grid, "bandwidth": cfg.solver.bw_grid},
        "metadata": params.metadata | {"config_hash": cfg.config_hash},
    }


def cmd_sweep(cfg: ExperimentConfig) -> dict:
    from .sweep import run_sweep

    rows, _ = run_sweep(cfg)
    name = cfg.sweep_variable or "scenario"
    return {
        "rows": len(rows),
        "csv": [str(cfg.output_dir / f"sweep_{name}.csv"), str(cfg.output_dir / f"sweep_{name}_seeds.csv")],
        "infeasible_rows": sum(r.status == "infeasible" for r in rows),
    }


def cmd_train(cfg: ExperimentConfig) -> dict:
    from .train import run_fl

    summaries, _ = run_fl(cfg)
    return {
        "summary": [vars(s) for s in summaries],
        "csv": [str(cfg.output_dir / "train_summary.csv"), str(cfg.output_dir / "train_trace.csv")],
    }


COMMANDS = {"solve": cmd_solve, "sweep": cmd_sweep, "train": cmd_train, "oracle": cmd_oracle}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="prunefl", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "solve": "optimize one scenario and print the allocation",
        "sweep": "run a parameter sweep and write CSV tables",
        "train": "run the FL simulation for each policy and write CSV traces",
        "oracle": "compare the optimizer with exhaustive grid search",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="JSON experiment config (defaults to the built-in scenario)")
        p.add_argument("--seed", type=int, help="channel seed for solve/oracle")
        p.add_argument("--out", help="output directory (overrides config and $PRUNEFL_OUTPUT_DIR)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load(args)
        result = COMMANDS[args.command](cfg)
    except (ConfigError, SizeGuardError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except Exception as exc:  # noqa: BLE001 - mapped to the documented exit code
        logging.getLogger(__name__).exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    json.dump(result, sys.stdout, indent=2, default=_json_default)
    sys.stdout.write("\n")
    return EXIT_OK


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


if __name__ == "__main__":
    sys.exit(main())
