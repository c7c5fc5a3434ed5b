"""Desk-scale pruned FedSGD simulator.

One global MLP (sigmoid hidden layers, softmax output, cross-entropy) is
trained by FedSGD: every round each UE magnitude-prunes the broadcast
model, takes one full-batch gradient on its local samples, and uploads it
over a link that drops the packet with probability q_i.  The server
averages the surviving gradients weighted by sample count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .system import DomainError, SystemParams

Shapes = list[tuple[int, int]]


@dataclass(frozen=True)
class ModelState:
    weights: np.ndarray
    layer_shapes: tuple[tuple[int, int], ...]

    def __post_init__(self):
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))
        object.__setattr__(self, "layer_shapes", tuple(tuple(s) for s in self.layer_shapes))
        if self.weights.ndim != 1 or self.weights.size != num_parameters(self.layer_shapes):
            raise DomainError(
                f"weight vector of length {self.weights.size} does not match shapes {self.layer_shapes}"
            )
        if not np.all(np.isfinite(self.weights)):
            raise DomainError("weights must be finite")


@dataclass(frozen=True)
class PruneMask:
    keep: np.ndarray
    rho_realized: float


@dataclass(frozen=True)
class Dataset:
    images: np.ndarray   # (n, features), float in [0, 1]
    labels: np.ndarray   # (n,), int

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        images = np.asarray(self.images, dtype=float)
        if images.ndim != 2:
            images = images.reshape(len(labels), int(np.prod(images.shape[1:], dtype=np.int64)))
        if len(images) != len(labels):
            raise DomainError("images and labels differ in length")
        object.__setattr__(self, "images", images)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.images[idx], self.labels[idx])


@dataclass
class TrainingTrace:
    policy: str
    seed: int
    rho_used: np.ndarray
    packet_error: np.ndarray
    test_accuracy: list[float] = field(default_factory=list)
    test_loss: list[float] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)
    drops: list[np.ndarray] = field(default_factory=list)
    skipped: list[bool] = field(default_factory=list)
    rho_realized: list[np.ndarray] = field(default_factory=list)
    # per round, per UE: ||W - W_pruned||^2 and ||W||^2
    prune_deviation: list[np.ndarray] = field(default_factory=list)
    weight_norm_sq: list[float] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @property
    def rounds(self) -> int:
        return len(self.drops)

    @property
    def final_accuracy(self) -> float:
        return self.test_accuracy[-1]


# ---------------------------------------------------------------------------
# MLP


def mlp_shapes(sizes: Sequence[int]) -> Shapes:
    """Layer shapes for an MLP with the given layer widths, e.g. (784, 60, 10)."""
    return [(sizes[i], sizes[i + 1]) for i in range(len(sizes) - 1)]


def num_parameters(shapes) -> int:
    return sum(r * c + c for r, c in shapes)


def unpack(weights: np.ndarray, shapes) -> list[tuple[np.ndarray, np.ndarray]]:
    """Views (W, b) per layer into the flat weight vector."""
    out = []
    pos = 0
    for r, c in shapes:
        w = weights[pos:pos + r * c].reshape(r, c)
        pos += r * c
        b = weights[pos:pos + c]
        pos += c
        out.append((w, b))
    return out


def init_model(sizes: Sequence[int], rng_seed=0) -> ModelState:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(rng_seed)
    shapes = mlp_shapes(sizes)
    parts = []
    for r, c in shapes:
        limit = math.sqrt(6.0 / (r + c))
        parts.append(rng.uniform(-limit, limit, r * c))
        parts.append(np.zeros(c))
    return ModelState(np.concatenate(parts), shapes)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _log_softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def forward(weights: np.ndarray, shapes, x: np.ndarray) -> np.ndarray:
    """Logits of the network."""
    layers = unpack(weights, shapes)
    a = x
    for w, b in layers[:-1]:
        a = _sigmoid(a @ w + b)
    w, b = layers[-1]
    return a @ w + b


def loss_and_grad(weights: np.ndarray, shapes, x: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient with respect to the flat weights."""
    layers = unpack(weights, shapes)
    acts = [x]
    for w, b in layers[:-1]:
        acts.append(_sigmoid(acts[-1] @ w + b))
    w_out, b_out = layers[-1]
    logp = _log_softmax(acts[-1] @ w_out + b_out)
    n = x.shape[0]
    loss = -float(logp[np.arange(n), y].mean())

    delta = np.exp(logp)
    delta[np.arange(n), y] -= 1.0
    delta /= n
    grads = []
    for layer in range(len(layers) - 1, -1, -1):
        w, _ = layers[layer]
        a = acts[layer]
        grads.append((a.T @ delta, delta.sum(axis=0)))
        if layer:
            delta = (delta @ w.T) * a * (1.0 - a)
    flat = np.concatenate([np.concatenate([gw.ravel(), gb]) for gw, gb in reversed(grads)])
    return loss, flat


def _mean_ce(logits, labels) -> float:
    logp = _log_softmax(logits)
    return -float(logp[np.arange(len(labels)), labels].mean())


def evaluate(model: ModelState, testset: Dataset) -> tuple[float, float]:
    """Top-1 accuracy and mean cross-entropy on ``testset``."""
    if len(testset) == 0:
        raise DomainError("empty test set")
    logits = forward(model.weights, model.layer_shapes, testset.images)
    acc = float(np.mean(np.argmax(logits, axis=1) == testset.labels))
    return acc, _mean_ce(logits, testset.labels)


# ---------------------------------------------------------------------------
# pruning, local step, aggregation


def prune_mask(model: ModelState, rho: float, rng_seed=None) -> PruneMask:
    """Mask that zeroes the floor(rho * n) smallest-magnitude weights.

    Equal magnitudes are ordered by position, or by a seeded random
    permutation when ``rng_seed`` is given.
    """
    if not 0.0 <= rho <= 1.0:
        raise DomainError(f"rho must lie in [0, 1], got {rho}")
    w = model.weights
    n = w.size
    k = min(n, int(math.floor(rho * n + 1e-9)))
    keep = np.ones(n, dtype=bool)
    if k:
        mag = np.abs(w)
        if rng_seed is None:
            order = np.argsort(mag, kind="stable")
        else:
            perm = np.random.default_rng(rng_seed).permutation(n)
            order = perm[np.argsort(mag[perm], kind="stable")]
        keep[order[:k]] = False
    return PruneMask(keep, k / n if n else 0.0)


def local_gradient(model: ModelState, mask: PruneMask, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Gradient of the pruned model, zero at pruned positions."""
    if mask.keep.shape != model.weights.shape:
        raise DomainError("mask length does not match the model")
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] == 0 or x.shape[0] != len(y):
        raise DomainError("batch must be a non-empty (n, features) array with n labels")
    if x.shape[1] != model.layer_shapes[0][0]:
        raise DomainError(f"batch has {x.shape[1]} features, model expects {model.layer_shapes[0][0]}")
    keep = mask.keep.astype(float)
    _, g = loss_and_grad(model.weights * keep, model.layer_shapes, x, np.asarray(y))
    return g * keep


def aggregate(gradients, sample_counts, success) -> tuple[np.ndarray, bool]:
    """Sample-weighted mean of the gradients that arrived.

    Returns ``(g, skipped)``; ``skipped`` is True, and ``g`` zero, when no
    packet got through.
    """
    grads = np.asarray(gradients, dtype=float)
    k = np.asarray(sample_counts, dtype=float)
    c = np.asarray(success, dtype=float)
    if not (len(grads) == len(k) == len(c)):
        raise DomainError("gradients, sample_counts and success must have equal length")
    weights = k * c
    total = weights.sum()
    if total <= 0:
        return np.zeros(grads.shape[1:]), True
    return weights @ grads / total, False


# ---------------------------------------------------------------------------
# training loop


def partition(n_available: int, samples_K, rng: np.random.Generator) -> list[np.ndarray]:
    """Disjoint uniformly random index sets of the requested sizes."""
    need = int(np.sum(samples_K))
    if n_available < need:
        raise DomainError(f"dataset has {n_available} samples, UEs need {need}")
    perm = rng.permutation(n_available)
    bounds = np.cumsum([0, *samples_K])
    return [perm[bounds[i]:bounds[i + 1]] for i in range(len(samples_K))]


def run_training(
    params: SystemParams,
    policy,
    dataset: Dataset,
    testset: Dataset,
    rounds: int,
    eta: float,
    rng_seed: int,
    hidden: Sequence[int] = (60,),
    solver_cfg=None,
) -> TrainingTrace:
    """Simulate ``rounds`` of pruned FedSGD under an allocation policy.

    ``policy`` is a :class:`prunefl.policies.Policy` or its string form
    (``"proposed"``, ``"gba"``, ``"fpr(0.35)"``, ``"ideal"``, ``"exhaustive"``);
    it fixes the per-UE pruning rates and packet error rates for the run
    since channels are static.
    """
    from .policies import Policy, policy_rates

    if isinstance(policy, str):
        policy = Policy.parse(policy)
    if rounds < 0:
        raise DomainError("rounds must be non-negative")
    rng = np.random.default_rng(rng_seed)
    k = params.K.astype(int)
    parts = partition(len(dataset), k, rng)
    local = [dataset.subset(p) for p in parts]
    classes = int(max(dataset.labels.max(), testset.labels.max())) + 1
    model = init_model([dataset.images.shape[1], *hidden, classes], rng)
    rho, q = policy_rates(policy, params, solver_cfg)

    trace = TrainingTrace(
        policy=policy.label,
        seed=int(rng_seed),
        rho_used=rho,
        packet_error=q,
        metadata={
            "pruning": "magnitude, recomputed each round",
            "activation": "sigmoid hidden, softmax output",
            "partition": "uniform random",
            "eta": eta,
            "hidden": list(hidden),
        },
    )
    acc, loss = evaluate(model, testset)
    trace.test_accuracy.append(acc)
    trace.test_loss.append(loss)

    w = model.weights.copy()
    shapes = model.layer_shapes
    for _ in range(rounds):
        current = ModelState(w, shapes)
        success = rng.random(len(k)) >= q
        grads = []
        realized = np.zeros(len(k))
        deviation = np.zeros(len(k))
        losses = np.zeros(len(k))
        masks: dict[float, PruneMask] = {}
        for i, data in enumerate(local):
            r = float(rho[i])
            if r not in masks:
                masks[r] = prune_mask(current, r)
            mask = masks[r]
            realized[i] = mask.rho_realized
            deviation[i] = float(np.sum((w * ~mask.keep) ** 2))
            grads.append(local_gradient(current, mask, data.images, data.labels))
            losses[i] = _mean_ce(forward(w, shapes, data.images), data.labels)
        g, skipped = aggregate(grads, k, success)
        if not skipped:
            w = w - eta * g
        trace.drops.append(~success)
        trace.skipped.append(skipped)
        trace.rho_realized.append(realized)
        trace.prune_deviation.append(deviation)
        trace.weight_norm_sq.append(float(np.sum(current.weights ** 2)))
        trace.train_loss.append(float(np.dot(k, losses) / k.sum()))
        acc, loss = evaluate(ModelState(w, shapes), testset)
        trace.test_accuracy.append(acc)
        trace.test_loss.append(loss)
    return trace
