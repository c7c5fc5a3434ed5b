"""FL accuracy experiments: every policy trained over several seeds."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..flsim import Dataset, TrainingTrace, run_training
from ..policies import Policy
from .config import ExperimentConfig
from .datasets import train_test_blobs
from .idx import load_idx_dataset
from .sweep import write_csv


@dataclass
class PolicySummary:
    policy: str
    mean_accuracy_final: float
    std_accuracy_final: float
    mean_rho: float
    mean_packet_error: float
    seed_count: int


def load_datasets(cfg: ExperimentConfig, rng_seed: int = 0) -> tuple[Dataset, Dataset, str]:
    """Train/test subsets from IDX files, or the synthetic blobs when no paths are set.

    The train subset is a seeded uniform sample of ``train_size`` items;
    the test subset is the first ``test_size`` items of the test files.
    """
    fl = cfg.fl
    paths = (fl.train_images, fl.train_labels, fl.test_images, fl.test_labels)
    if all(p is None for p in paths):
        train, test = train_test_blobs(fl.train_size, fl.test_size, rng_seed=rng_seed)
        return train, test, "synthetic gaussian blobs"
    if any(p is None for p in paths):
        from .config import ConfigError

        raise ConfigError("fl: give all four IDX paths or none")
    train = load_idx_dataset(fl.train_images, fl.train_labels)
    test = load_idx_dataset(fl.test_images, fl.test_labels, limit=fl.test_size)
    idx = np.random.default_rng(rng_seed).permutation(len(train))[: fl.train_size]
    return train.subset(np.sort(idx)), test, "idx"


def run_fl(cfg: ExperimentConfig, write: bool = True) -> tuple[list[PolicySummary], list[TrainingTrace]]:
    fl = cfg.fl
    train, test, source = load_datasets(cfg)
    traces = []
    summaries = []
    for label in fl.policies:
        policy = Policy.parse(label)
        runs = []
        for seed in fl.seeds:
            params = cfg.params(seed)
            runs.append(run_training(params, policy, train, test, fl.rounds, fl.eta, seed,
                                     hidden=fl.hidden, solver_cfg=cfg.solver))
        traces.extend(runs)
        finals = np.array([t.final_accuracy for t in runs])
        summaries.append(PolicySummary(
            policy.label,
            float(finals.mean()),
            float(finals.std()),
            float(np.mean([t.rho_used.mean() for t in runs])),
            float(np.mean([t.packet_error.mean() for t in runs])),
            len(runs),
        ))
    if write:
        write_fl_csv(cfg, summaries, traces, source)
    return summaries, traces


def write_fl_csv(cfg, summaries, traces, source: str) -> tuple[Path, Path]:
    meta = {
        "config_hash": cfg.config_hash,
        "m0_interpretation": cfg.m0_interpretation(),
        "defaults_used": ";".join(cfg.defaults_used) or "none",
        "dataset": source,
        "eta": cfg.fl.eta,
    }
    out = Path(cfg.output_dir)
    summary_path = out / "train_summary.csv"
    trace_path = out / "train_trace.csv"
    write_csv(summary_path,
              ["policy", "mean_accuracy_final", "std_accuracy_final", "mean_rho", "mean_packet_error",
               "seed_count", "config_hash", "m0_interpretation", "defaults_used", "dataset", "eta"],
              [vars(s) | meta for s in summaries])
    records = []
    for t in traces:
        for r in range(t.rounds + 1):
            rec = {"policy": t.policy, "seed": t.seed, "round": r,
                   "test_accuracy": t.test_accuracy[r], "test_loss": t.test_loss[r]} | meta
            if r:
                rec["train_loss"] = t.train_loss[r - 1]
                rec["drops"] = "".join("1" if d else "0" for d in t.drops[r - 1])
                rec["skipped"] = int(t.skipped[r - 1])
            records.append(rec)
    write_csv(trace_path,
              ["policy", "seed", "round", "test_accuracy", "test_loss", "train_loss", "drops", "skipped",
               "config_hash", "m0_interpretation", "defaults_used", "dataset", "eta"],
              records)
    return summary_path, trace_path
