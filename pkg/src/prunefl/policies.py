"""Allocation policies compared in experiments."""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .cost import total_cost
from .system import Allocation, SystemParams, packet_errors

KINDS = ("proposed", "gba", "fpr", "ideal", "exhaustive")


@dataclass(frozen=True)
class Policy:
    kind: str
    rho_fixed: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown policy {self.kind!r}; expected one of {KINDS}")

    @property
    def label(self) -> str:
        return f"fpr({self.rho_fixed:g})" if self.kind == "fpr" else self.kind

    @classmethod
    def parse(cls, text: str) -> "Policy":
        """``"proposed"``, ``"gba"``, ``"ideal"``, ``"exhaustive"`` or ``"fpr(0.35)"``."""
        text = text.strip().lower()
        m = re.fullmatch(r"fpr\(\s*([0-9.eE+-]+)\s*\)", text)
        if m:
            return cls("fpr", float(m.group(1)))
        return cls(text)


def allocate(policy: Policy, params: SystemParams, cfg=None) -> Allocation:
    """Allocation chosen by ``policy``; ideal FL uses no pruning and the equal split."""
    from . import solver

    if policy.kind == "proposed":
        return solver.optimize(params, cfg).allocation
    if policy.kind == "exhaustive":
        return solver.exhaustive_search(params, cfg).allocation
    if policy.kind == "gba":
        return solver.gba_allocation(params)
    if policy.kind == "fpr":
        return solver.fpr_allocation(params, policy.rho_fixed, cfg)
    n = params.num_ues
    return Allocation(np.zeros(n), solver.equal_split(params), 0.0)


def policy_rates(policy: Policy, params: SystemParams, cfg=None) -> tuple[np.ndarray, np.ndarray]:
    """Per-UE (pruning rate, packet error rate) realized by ``policy``."""
    alloc = allocate(policy, params, cfg)
    if policy.kind == "ideal":
        return alloc.rho, np.zeros(params.num_ues)
    return alloc.rho, packet_errors(alloc.bandwidth, params)


def policy_cost(policy: Policy, params: SystemParams, cfg=None):
    alloc = allocate(policy, params, cfg)
    return alloc, total_cost(alloc, params)
