"""Seeded channel-gain generator (path loss with optional Rayleigh fading)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ChannelSpec:
    """Distance-based path loss ``ref_loss_db + 10 * exponent * log10(d / ref_distance)``.

    Defaults follow the common urban macro-cell fit 128.1 + 37.6 log10(d_km).
    UE distances are uniform in [min_distance, cell_radius] metres.
    """

    num_ues: int = 5
    cell_radius: float = 500.0
    min_distance: float = 50.0
    exponent: float = 3.76
    ref_loss_db: float = 128.1
    ref_distance: float = 1000.0
    fading: bool = False
    reciprocal: bool = True

    def __post_init__(self):
        if self.num_ues < 1:
            raise ValueError("num_ues must be >= 1")
        if not 0 < self.min_distance <= self.cell_radius:
            raise ValueError("need 0 < min_distance <= cell_radius")


@dataclass(frozen=True)
class ChannelDraw:
    distances: np.ndarray
    uplink: np.ndarray
    downlink: np.ndarray


def path_gain(distance, spec: ChannelSpec):
    loss_db = spec.ref_loss_db + 10.0 * spec.exponent * np.log10(np.asarray(distance, dtype=float) / spec.ref_distance)
    return 10.0 ** (-loss_db / 10.0)


def sample_channels(spec: ChannelSpec, rng_seed) -> ChannelDraw:
    rng = np.random.default_rng(rng_seed)
    d = rng.uniform(spec.min_distance, spec.cell_radius, spec.num_ues)
    base = path_gain(d, spec)
    if spec.fading:
        # |h|^2 of a unit-power Rayleigh channel is Exp(1)
        up = base * rng.exponential(1.0, spec.num_ues)
        down = up if spec.reciprocal else base * rng.exponential(1.0, spec.num_ues)
    else:
        up = base
        down = base
    return ChannelDraw(d, up, down.copy())


def fading_samples(n: int, rng_seed) -> np.ndarray:
    return np.random.default_rng(rng_seed).exponential(1.0, n)
