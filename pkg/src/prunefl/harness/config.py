"""JSON experiment configuration.

Quantities may be bare numbers (already SI) or strings with an explicit
unit suffix, e.g. ``"23 dBm"``, ``"15 MHz"``, ``"1.6 Mbit"``,
``"-174 dBm/Hz"``.  Everything is converted to SI here; nothing downstream
sees a dB value.  See ``docs/config.md`` for the full schema.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
import os
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

from ..policies import Policy
from ..solver import SolverConfig
from ..system import SystemParams, UeProfile, dbm_to_watts
from .channels import ChannelSpec, sample_channels

OUTPUT_ENV = "PRUNEFL_OUTPUT_DIR"


class ConfigError(ValueError):
    pass


# unit -> (dimension, converter to SI)
_UNITS = {
    "hz": ("frequency", lambda v: v),
    "khz": ("frequency", lambda v: v * 1e3),
    "mhz": ("frequency", lambda v: v * 1e6),
    "ghz": ("frequency", lambda v: v * 1e9),
    "cycles": ("cycles", lambda v: v),
    "mcycles": ("cycles", lambda v: v * 1e6),
    "gcycles": ("cycles", lambda v: v * 1e9),
    "bit": ("bits", lambda v: v),
    "kbit": ("bits", lambda v: v * 1e3),
    "mbit": ("bits", lambda v: v * 1e6),
    "gbit": ("bits", lambda v: v * 1e9),
    "w": ("power", lambda v: v),
    "mw": ("power", lambda v: v * 1e-3),
    "dbm": ("power", dbm_to_watts),
    "dbw": ("power", lambda v: 10.0 ** (v / 10.0)),
    "w/hz": ("psd", lambda v: v),
    "dbm/hz": ("psd", dbm_to_watts),
    "s": ("time", lambda v: v),
    "ms": ("time", lambda v: v * 1e-3),
    "m": ("length", lambda v: v),
    "km": ("length", lambda v: v * 1e3),
    "db": ("ratio", lambda v: 10.0 ** (v / 10.0)),
}

_QUANTITY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([A-Za-z/]+)?\s*$")


def parse_quantity(value: Any, dimension: str, name: str = "value") -> float:
    """Convert ``value`` to SI.

    ``dimension`` is one of the unit families above; a CPU-cycle count may
    also be written in Hz-style prefixes (``"0.168 GHz"``), matching how
    per-sample workloads are usually quoted.
    """
    if isinstance(value, bool):
        raise ConfigError(f"{name}: expected a quantity, got {value!r}")
    if isinstance(value, (int, float)):
        out = float(value)
    elif isinstance(value, str):
        m = _QUANTITY.match(value)
        if not m:
            raise ConfigError(f"{name}: cannot parse quantity {value!r}")
        number, unit = float(m.group(1)), (m.group(2) or "").lower()
        if not unit:
            out = number
        else:
            if unit not in _UNITS:
                raise ConfigError(f"{name}: unknown unit {m.group(2)!r}")
            dim, conv = _UNITS[unit]
            if dimension == "cycles" and dim == "frequency":
                dim = "cycles"
            if dim != dimension:
                raise ConfigError(f"{name}: unit {m.group(2)!r} is a {dim}, expected a {dimension}")
            out = conv(number)
    else:
        raise ConfigError(f"{name}: expected a number or string, got {type(value).__name__}")
    if not math.isfinite(out):
        raise ConfigError(f"{name}: value is not finite")
    return out


# scenario key -> (dimension or None for plain numbers, default, published?)
SCENARIO_FIELDS: dict[str, tuple[str | None, Any, bool]] = {
    "num_ues": (None, 5, True),
    "tx_power": ("power", "23 dBm", True),
    "total_bandwidth": ("frequency", "15 MHz", True),
    "noise_density": ("psd", "-174 dBm/Hz", True),
    "waterfall_m0": (None, 0.023, True),
    "m0_is_db": (None, False, False),
    "model_bits": ("bits", "1.6 Mbit", True),
    "cycles_per_sample": ("cycles", "0.168 GHz", True),
    "cpu_freq": ("frequency", "5 GHz", True),
    "bs_tx_power": ("power", "30 dBm", False),
    "agg_latency": ("time", "0 s", False),
    "lambda": (None, 0.0004, True),
    "m_const": (None, 1.0, False),
    "rho_max": (None, 0.7, True),
    "samples": (None, None, True),
}

SWEEP_VARIABLES = (
    "tx_power",
    "model_bits",
    "lambda",
    "total_bandwidth",
    "waterfall_m0",
    "m_const",
    "rho_max",
    "cpu_freq",
    "num_ues",
)


@dataclass
class FlConfig:
    train_images: str | None = None
    train_labels: str | None = None
    test_images: str | None = None
    test_labels: str | None = None
    train_size: int = 500
    test_size: int = 1000
    rounds: int = 150
    eta: float = 1e-3
    seeds: list[int] = field(default_factory=lambda: list(range(5)))
    hidden: list[int] = field(default_factory=lambda: [60])
    policies: list[str] = field(default_factory=lambda: ["ideal", "fpr(0)", "proposed", "fpr(0.7)"])


@dataclass
class ExperimentConfig:
    scenario: dict
    channel: ChannelSpec
    channel_seed: int
    sweep_variable: str | None
    sweep_values: list
    policies: list[Policy]
    seeds: list[int]
    solver: SolverConfig
    fl: FlConfig
    output_dir: Path
    workers: int
    raw: dict
    defaults_used: list[str]

    @property
    def config_hash(self) -> str:
        # where results are written does not change them
        content = {k: v for k, v in self.raw.items() if k != "output"}
        blob = json.dumps(content, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:12]

    def m0_interpretation(self) -> str:
        return "dB->linear" if self.scenario.get("m0_is_db") else "linear"

    def params(self, seed: int, overrides: dict | None = None) -> SystemParams:
        """Scenario for one channel realization, with optional field overrides."""
        return build_params(self.scenario | (overrides or {}), self.channel, seed, self.defaults_used)


def build_params(scenario: dict, channel: ChannelSpec, seed: int, defaults_used=()) -> SystemParams:
    s = {k: scenario.get(k, SCENARIO_FIELDS[k][1]) for k in SCENARIO_FIELDS}
    n = int(s["num_ues"])
    if n < 1:
        raise ConfigError("num_ues must be >= 1")
    samples = s["samples"]
    if samples is None:
        samples = [(30, 40, 50)[i % 3] for i in range(n)]
    if len(samples) != n:
        raise ConfigError(f"samples lists {len(samples)} UEs but num_ues is {n}")
    draw = sample_channels(replace(channel, num_ues=n), seed)

    m0_raw = s["waterfall_m0"]
    m0_is_db = bool(s["m0_is_db"])
    if isinstance(m0_raw, str) and m0_raw.strip().lower().endswith("db"):
        m0_is_db = True
        m0_raw = m0_raw.strip()[:-2]
    m0 = float(m0_raw)
    if m0_is_db:
        m0 = 10.0 ** (m0 / 10.0)

    p = parse_quantity(s["tx_power"], "power", "tx_power")
    f = parse_quantity(s["cpu_freq"], "frequency", "cpu_freq")
    rho_max = float(s["rho_max"])
    try:
        ues = tuple(
            UeProfile(
                index=i,
                samples_K=int(samples[i]),
                samples_max=int(samples[i]),
                cpu_freq=f,
                tx_power=p,
                uplink_gain=float(draw.uplink[i]),
                downlink_gain=float(draw.downlink[i]),
                rho_max=rho_max,
            )
            for i in range(n)
        )
        return SystemParams(
            ues=ues,
            total_bandwidth_B=parse_quantity(s["total_bandwidth"], "frequency", "total_bandwidth"),
            noise_density_N0=parse_quantity(s["noise_density"], "psd", "noise_density"),
            waterfall_m0=m0,
            model_bits_DM=parse_quantity(s["model_bits"], "bits", "model_bits"),
            cycles_per_sample_dc=parse_quantity(s["cycles_per_sample"], "cycles", "cycles_per_sample"),
            bs_tx_power=parse_quantity(s["bs_tx_power"], "power", "bs_tx_power"),
            agg_latency_ta=parse_quantity(s["agg_latency"], "time", "agg_latency"),
            lam=float(s["lambda"]),
            m_const=float(s["m_const"]),
            m0_is_db=m0_is_db,
            metadata={
                "m0_interpretation": "dB->linear" if m0_is_db else "linear",
                "defaults_used": list(defaults_used),
                "channel_seed": seed,
            },
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _int_list(value, name) -> list[int]:
    if isinstance(value, int) and not isinstance(value, bool):
        return list(range(value))
    if isinstance(value, list) and all(isinstance(v, int) and not isinstance(v, bool) for v in value):
        return list(value)
    raise ConfigError(f"{name} must be an integer count or a list of integers")


def parse_config(raw: dict, base_dir: Path | None = None) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    raw = copy.deepcopy(raw)
    known = {"scenario", "channel", "sweep", "policies", "seeds", "solver", "fl", "output"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")

    scenario = raw.get("scenario", {})
    bad = set(scenario) - set(SCENARIO_FIELDS)
    if bad:
        raise ConfigError(f"unknown scenario keys: {sorted(bad)}")
    defaults_used = sorted(k for k, (_, d, published) in SCENARIO_FIELDS.items()
                           if k not in scenario and not published)

    ch = dict(raw.get("channel", {}))
    channel_seed = int(ch.pop("seed", 0))
    try:
        for key in ("cell_radius", "min_distance", "ref_distance"):
            if key in ch:
                ch[key] = parse_quantity(ch[key], "length", f"channel.{key}")
        channel = ChannelSpec(num_ues=int(scenario.get("num_ues", 5)), **ch)
    except TypeError as exc:
        raise ConfigError(f"channel: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"channel: {exc}") from exc

    sweep = raw.get("sweep")
    if sweep is None:
        variable, values = None, [None]
    else:
        variable = sweep.get("variable")
        values = sweep.get("values")
        if variable not in SWEEP_VARIABLES:
            raise ConfigError(f"sweep variable {variable!r} not in {SWEEP_VARIABLES}")
        if not isinstance(values, list) or not values:
            raise ConfigError("sweep values must be a non-empty list")

    try:
        policies = [Policy.parse(p) for p in raw.get("policies", ["proposed", "gba", "fpr(0)", "fpr(0.35)", "fpr(0.7)"])]
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    seeds = _int_list(raw.get("seeds", 20), "seeds")
    try:
        solver = SolverConfig(**{k: tuple(v) if isinstance(v, list) else v
                                 for k, v in raw.get("solver", {}).items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"solver: {exc}") from exc

    fl_raw = dict(raw.get("fl", {}))
    if "seeds" in fl_raw:
        fl_raw["seeds"] = _int_list(fl_raw["seeds"], "fl.seeds")
    try:
        fl = FlConfig(**fl_raw)
    except TypeError as exc:
        raise ConfigError(f"fl: {exc}") from exc
    if base_dir is not None:
        for key in ("train_images", "train_labels", "test_images", "test_labels"):
            path = getattr(fl, key)
            if path is not None and not Path(path).is_absolute():
                setattr(fl, key, str(base_dir / path))

    out = raw.get("output", {})
    out_dir = Path(os.environ.get(OUTPUT_ENV) or out.get("directory", "results"))
    workers = int(out.get("workers", 1))
    if workers < 1:
        raise ConfigError("output.workers must be >= 1")

    cfg = ExperimentConfig(
        scenario=scenario,
        channel=channel,
        channel_seed=channel_seed,
        sweep_variable=variable,
        sweep_values=values,
        policies=policies,
        seeds=seeds,
        solver=solver,
        fl=fl,
        output_dir=out_dir,
        workers=workers,
        raw=raw,
        defaults_used=defaults_used,
    )
    cfg.params(channel_seed)  # validate the scenario eagerly
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    return parse_config(raw, path.parent)
