"""Learning-cost model derived from the pruned-FL convergence bound."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .system import (
    Allocation,
    DomainError,
    SystemParams,
    broadcast_latency,
    local_latencies,
    packet_errors,
)


class DivergenceError(ValueError):
    """The bound's divisor d = 1 - 8 xi2 is not positive."""


class ConstraintViolation(ValueError):
    """An allocation breaks the t_c + t_u <= t_tilde coupling constraint."""


@dataclass(frozen=True)
class ConvergenceConstants:
    beta: float
    xi1: float
    xi2: float
    weight_bound_D: float
    initial_gap: float
    rounds_S: int

    def __post_init__(self):
        for name in ("beta", "xi1", "xi2", "weight_bound_D", "initial_gap", "rounds_S"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be non-negative")

    @property
    def d(self) -> float:
        return 1.0 - 8.0 * self.xi2

    def psi(self) -> float:
        """Initial-model term 2 beta (F(W0) - F(W*)) / (d (S + 1))."""
        self._require_convergent()
        return 2.0 * self.beta * self.initial_gap / (self.d * (self.rounds_S + 1))

    def m_const(self, samples_K) -> float:
        """m = max{8 xi1 / (d K), 2 beta^2 I D^2 / (d K^2)} for the given sample counts."""
        self._require_convergent()
        k = np.asarray(samples_K, dtype=float)
        total = k.sum()
        return max(
            8.0 * self.xi1 / (self.d * total),
            2.0 * self.beta**2 * k.size * self.weight_bound_D**2 / (self.d * total**2),
        )

    def _require_convergent(self) -> None:
        if self.d <= 0:
            raise DivergenceError(f"d = 1 - 8*xi2 = {self.d} <= 0; convergence is not guaranteed")


@dataclass(frozen=True)
class CostBreakdown:
    latency_term: float
    learning_term: float
    upsilon: float
    weighted_total: float


def learning_penalty(alloc: Allocation, params: SystemParams) -> float:
    """m * sum_i K_i (q_i + K_i rho_i), the variable part of the one-round bound."""
    alloc.check(params)
    k = params.K
    q = packet_errors(alloc.bandwidth, params)
    return float(params.m_const * np.sum(k * (q + k * alloc.rho)))


def total_cost(
    alloc: Allocation,
    params: SystemParams,
    include_constants: bool = False,
    *,
    use_t_tilde: bool = False,
    constants: ConvergenceConstants | None = None,
    rtol: float = 1e-9,
) -> CostBreakdown:
    """Weighted latency/learning objective of an allocation.

    With ``use_t_tilde`` the latency term is the auxiliary bound
    ``alloc.t_tilde``, which must dominate every UE's local latency.
    Otherwise the latency term is the slowest UE's compute-plus-upload time.
    ``include_constants`` adds upsilon = (1-lam)(t_d + t_a) + lam*psi; psi is
    zero unless ``constants`` are given.
    """
    lam = params.lam
    local = local_latencies(alloc, params)
    if use_t_tilde:
        worst = float(np.max(local))
        if worst > alloc.t_tilde * (1.0 + rtol):
            i = int(np.argmax(local))
            raise ConstraintViolation(
                f"UE {i}: local latency {worst:.9g} s exceeds t_tilde {alloc.t_tilde:.9g} s"
            )
        latency = float(alloc.t_tilde)
    else:
        latency = float(np.max(local))
    learning = learning_penalty(alloc, params)
    psi = constants.psi() if constants is not None else 0.0
    upsilon = (1.0 - lam) * (broadcast_latency(params) + params.agg_latency_ta) + lam * psi
    total = (1.0 - lam) * latency + lam * learning
    if include_constants:
        total += upsilon
    return CostBreakdown(latency, learning, upsilon, total)


def theorem1_bound(avg_rho, avg_q, params: SystemParams, constants: ConvergenceConstants) -> float:
    """Upper bound on the average squared global-gradient norm after S rounds.

    Sum of an initial-model term that vanishes as S grows, a packet-error
    term weighted by K_i and a pruning term weighted by K_i^2.
    """
    return convergence_bound(avg_rho, avg_q, params.K, constants)


def convergence_bound(avg_rho, avg_q, samples_K, constants: ConvergenceConstants) -> float:
    """:func:`theorem1_bound` on raw sample counts instead of a scenario."""
    c = constants
    c._require_convergent()
    rho = np.asarray(avg_rho, dtype=float)
    q = np.asarray(avg_q, dtype=float)
    k = np.asarray(samples_K, dtype=float)
    if not (rho.shape == q.shape == k.shape):
        raise DomainError("avg_rho, avg_q and sample counts must have equal length")
    if np.any((rho < 0) | (rho > 1)) or np.any((q < 0) | (q > 1)):
        raise DomainError("average rates must lie in [0, 1]")
    total = k.sum()
    d = c.d
    initial = 2.0 * c.beta * c.initial_gap / (d * (c.rounds_S + 1))
    packet = 8.0 * c.xi1 / (d * total) * np.sum(k * q)
    pruning = 2.0 * c.beta**2 * k.size * c.weight_bound_D**2 / (d * total**2) * np.sum(k**2 * rho)
    return float(initial + packet + pruning)
