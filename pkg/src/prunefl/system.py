"""Communication and latency model of a pruned wireless FL round.

All quantities are SI: Hz, watts, W/Hz, bits, cycles, seconds.  Unit
conversion from dBm/MHz/Mbit happens at the configuration boundary
(:mod:`prunefl.harness.config`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class DomainError(ValueError):
    """An input lies outside the domain of a formula."""


class InfeasibleError(ValueError):
    """A bandwidth/latency configuration cannot be realized.

    ``ue`` carries the offending UE index when one can be named.
    """

    def __init__(self, message: str, ue: int | None = None):
        super().__init__(message)
        self.ue = ue


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) / 1000.0


def watts_to_dbm(watts: float) -> float:
    return 10.0 * math.log10(watts * 1000.0)


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


@dataclass(frozen=True)
class UeProfile:
    index: int
    samples_K: int
    samples_max: int
    cpu_freq: float
    tx_power: float
    uplink_gain: float
    downlink_gain: float
    rho_max: float

    def __post_init__(self):
        if not 1 <= self.samples_K <= self.samples_max:
            raise DomainError(
                f"UE {self.index}: need 1 <= samples_K <= samples_max, "
                f"got {self.samples_K}, {self.samples_max}"
            )
        for name in ("cpu_freq", "tx_power", "uplink_gain", "downlink_gain"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise DomainError(f"UE {self.index}: {name} must be positive, got {value}")
        if not 0.0 <= self.rho_max <= 1.0:
            raise DomainError(f"UE {self.index}: rho_max must be in [0, 1], got {self.rho_max}")


@dataclass(frozen=True)
class SystemParams:
    ues: tuple[UeProfile, ...]
    total_bandwidth_B: float
    noise_density_N0: float
    waterfall_m0: float
    model_bits_DM: float
    cycles_per_sample_dc: float
    bs_tx_power: float
    agg_latency_ta: float = 0.0
    lam: float = 0.0004
    m_const: float = 1.0
    # provenance only; the numeric m0 above is already linear
    m0_is_db: bool = False
    metadata: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "ues", tuple(self.ues))
        for name in ("total_bandwidth_B", "noise_density_N0", "model_bits_DM"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise DomainError(f"{name} must be positive, got {value}")
        if not 0.0 <= self.lam <= 1.0:
            raise DomainError(f"lambda must be in [0, 1], got {self.lam}")
        for name in ("m_const", "waterfall_m0", "agg_latency_ta", "cycles_per_sample_dc"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be non-negative")
        if self.bs_tx_power <= 0:
            raise DomainError("bs_tx_power must be positive")

    @property
    def num_ues(self) -> int:
        return len(self.ues)

    # vector views used throughout the solver
    @property
    def K(self) -> np.ndarray:
        return np.array([u.samples_K for u in self.ues], dtype=float)

    @property
    def cpu_freq(self) -> np.ndarray:
        return np.array([u.cpu_freq for u in self.ues], dtype=float)

    @property
    def tx_power(self) -> np.ndarray:
        return np.array([u.tx_power for u in self.ues], dtype=float)

    @property
    def uplink_gain(self) -> np.ndarray:
        return np.array([u.uplink_gain for u in self.ues], dtype=float)

    @property
    def rho_max(self) -> np.ndarray:
        return np.array([u.rho_max for u in self.ues], dtype=float)

    def compute_latency(self) -> np.ndarray:
        """Unpruned local training time K_i d^c / f_i per UE."""
        return self.K * self.cycles_per_sample_dc / self.cpu_freq

    def rate_asymptote(self) -> np.ndarray:
        """Uplink rate limit p_i h_i / (N0 ln 2) as bandwidth grows without bound."""
        return self.tx_power * self.uplink_gain / (self.noise_density_N0 * math.log(2.0))


@dataclass(frozen=True)
class Allocation:
    rho: np.ndarray
    bandwidth: np.ndarray
    t_tilde: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "rho", np.asarray(self.rho, dtype=float))
        object.__setattr__(self, "bandwidth", np.asarray(self.bandwidth, dtype=float))
        if self.rho.shape != self.bandwidth.shape:
            raise DomainError("rho and bandwidth must have the same length")
        if self.t_tilde < 0:
            raise DomainError("t_tilde must be non-negative")

    def check(self, params: SystemParams, rtol: float = 1e-9) -> None:
        """Raise if the allocation violates the box and budget constraints."""
        if self.rho.shape != (params.num_ues,):
            raise DomainError(f"allocation has {self.rho.size} entries for {params.num_ues} UEs")
        if np.any(self.rho < 0) or np.any(self.rho > params.rho_max + 1e-12):
            raise InfeasibleError("pruning rate outside [0, rho_max]")
        if np.any(self.bandwidth < 0):
            raise InfeasibleError("negative bandwidth")
        if self.bandwidth.sum() > params.total_bandwidth_B * (1 + rtol):
            raise InfeasibleError(
                f"bandwidth budget exceeded: {self.bandwidth.sum():.6g} > {params.total_bandwidth_B:.6g}"
            )


def _check_finite_nonneg(**values) -> None:
    for name, v in values.items():
        arr = np.asarray(v, dtype=float)
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise DomainError(f"{name} must be finite and non-negative")


def shannon_rate(bandwidth, power, gain, noise_density):
    """Achievable rate B log2(1 + p h / (B N0)) in bit/s.

    Vectorized over numpy inputs.  Zero bandwidth yields a rate of exactly
    zero (the limit as B -> 0).
    """
    _check_finite_nonneg(bandwidth=bandwidth, power=power, gain=gain, noise_density=noise_density)
    b = np.asarray(bandwidth, dtype=float)
    snr_bw = np.asarray(power, dtype=float) * np.asarray(gain, dtype=float) / np.asarray(
        noise_density, dtype=float
    )
    if np.any(snr_bw <= 0) or np.any(np.asarray(noise_density) <= 0):
        raise DomainError("power, gain and noise_density must be positive")
    with np.errstate(divide="ignore", invalid="ignore"):
        rate = np.where(b > 0, b * np.log1p(snr_bw / np.where(b > 0, b, 1.0)) / math.log(2.0), 0.0)
    return rate if rate.ndim else float(rate)


def packet_error_rate(bandwidth, power, gain, noise_density, m0):
    """Waterfall packet error probability 1 - exp(-m0 B N0 / (p h))."""
    _check_finite_nonneg(bandwidth=bandwidth, m0=m0)
    p_h = np.asarray(power, dtype=float) * np.asarray(gain, dtype=float)
    if np.any(p_h <= 0):
        raise DomainError("power and gain must be positive")
    q = -np.expm1(-np.asarray(m0, dtype=float) * np.asarray(bandwidth, dtype=float) * noise_density / p_h)
    return q if q.ndim else float(q)


def uplink_rates(bandwidth, params: SystemParams) -> np.ndarray:
    return np.asarray(
        shannon_rate(np.asarray(bandwidth, dtype=float), params.tx_power, params.uplink_gain,
                     params.noise_density_N0)
    )


def packet_errors(bandwidth, params: SystemParams) -> np.ndarray:
    return np.asarray(
        packet_error_rate(np.asarray(bandwidth, dtype=float), params.tx_power, params.uplink_gain,
                          params.noise_density_N0, params.waterfall_m0)
    )


def no_prune_latency(ue: UeProfile, bandwidth: float, params: SystemParams) -> float:
    """Compute-plus-upload latency of ``ue`` when nothing is pruned."""
    if bandwidth <= 0:
        raise InfeasibleError(f"UE {ue.index}: zero bandwidth gives infinite upload latency", ue.index)
    rate = shannon_rate(bandwidth, ue.tx_power, ue.uplink_gain, params.noise_density_N0)
    return params.model_bits_DM / rate + ue.samples_K * params.cycles_per_sample_dc / ue.cpu_freq


def no_prune_latencies(bandwidth, params: SystemParams) -> np.ndarray:
    """Vector of breakpoints t_np_i = D_M / R_i + K_i d^c / f_i."""
    b = np.asarray(bandwidth, dtype=float)
    zero = np.flatnonzero(b <= 0)
    if zero.size:
        i = int(zero[0])
        raise InfeasibleError(f"UE {i}: zero bandwidth gives infinite upload latency", i)
    return params.model_bits_DM / uplink_rates(b, params) + params.compute_latency()


def broadcast_latency(params: SystemParams) -> float:
    """Downlink time of the worst UE, using the whole band at BS power."""
    rates = shannon_rate(
        params.total_bandwidth_B,
        params.bs_tx_power,
        np.array([u.downlink_gain for u in params.ues]),
        params.noise_density_N0,
    )
    return float(np.max(params.model_bits_DM / np.asarray(rates)))


def local_latencies(alloc: Allocation, params: SystemParams) -> np.ndarray:
    """Per-UE pruned training plus upload time t_c + t_u."""
    rho = alloc.rho
    b = alloc.bandwidth
    keep = 1.0 - rho
    bad = np.flatnonzero((b <= 0) & (keep > 0))
    if bad.size:
        i = int(bad[0])
        raise InfeasibleError(f"UE {i}: zero bandwidth with rho < 1", i)
    rates = uplink_rates(b, params)
    with np.errstate(divide="ignore", invalid="ignore"):
        upload = np.where(keep > 0, keep * params.model_bits_DM / np.where(rates > 0, rates, 1.0), 0.0)
    return keep * params.compute_latency() + upload


def round_latency(alloc: Allocation, params: SystemParams) -> float:
    """Wall time of one FL round: broadcast + slowest local step + aggregation."""
    return broadcast_latency(params) + float(np.max(local_latencies(alloc, params))) + params.agg_latency_ta


def reference_params(
    uplink_gains: Sequence[float],
    samples_K: Sequence[int] | None = None,
    *,
    downlink_gains: Sequence[float] | None = None,
    tx_power_dbm: float = 23.0,
    model_bits: float = 1.6e6,
    total_bandwidth: float = 15e6,
    m0: float = 0.023,
    m0_is_db: bool = False,
    lam: float = 0.0004,
    m_const: float = 1.0,
    noise_dbm_per_hz: float = -174.0,
    cycles_per_sample: float = 0.168e9,
    cpu_freq: float = 5e9,
    rho_max: float = 0.7,
    bs_tx_power_dbm: float = 30.0,
    agg_latency: float = 0.0,
) -> SystemParams:
    """Scenario built on the reference parameter set.

    ``samples_K`` defaults to cycling through (30, 40, 50).  Downlink gains
    default to the uplink gains (reciprocal channel).  The BS power of
    30 dBm and zero aggregation latency are assumed values.
    """
    gains = list(uplink_gains)
    n = len(gains)
    if samples_K is None:
        samples_K = [(30, 40, 50)[i % 3] for i in range(n)]
    dl = list(downlink_gains) if downlink_gains is not None else gains
    p = dbm_to_watts(tx_power_dbm)
    ues = tuple(
        UeProfile(
            index=i,
            samples_K=int(samples_K[i]),
            samples_max=int(samples_K[i]),
            cpu_freq=cpu_freq,
            tx_power=p,
            uplink_gain=float(gains[i]),
            downlink_gain=float(dl[i]),
            rho_max=rho_max,
        )
        for i in range(n)
    )
    return SystemParams(
        ues=ues,
        total_bandwidth_B=total_bandwidth,
        noise_density_N0=dbm_to_watts(noise_dbm_per_hz),
        waterfall_m0=db_to_linear(m0) if m0_is_db else m0,
        model_bits_DM=model_bits,
        cycles_per_sample_dc=cycles_per_sample,
        bs_tx_power=dbm_to_watts(bs_tx_power_dbm),
        agg_latency_ta=agg_latency,
        lam=lam,
        m_const=m_const,
        m0_is_db=m0_is_db,
        metadata={
            "m0_interpretation": "dB->linear" if m0_is_db else "linear",
            "bs_tx_power": "assumed default" if bs_tx_power_dbm == 30.0 else "configured",
        },
    )
