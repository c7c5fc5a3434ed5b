"""Built-in synthetic dataset so experiments run without downloads."""

from __future__ import annotations

import numpy as np

from ..flsim import Dataset


def gaussian_blobs(n: int, features: int = 64, classes: int = 10, spread: float = 0.25, rng_seed=0) -> Dataset:
    """Isotropic Gaussian clusters clipped to [0, 1], one cluster per class.

    Class centres are drawn once from ``rng_seed``; samples are balanced
    across classes in a shuffled order.
    """
    rng = np.random.default_rng(rng_seed)
    centres = rng.uniform(0.0, 1.0, (classes, features))
    labels = rng.permutation(np.arange(n) % classes)
    images = np.clip(centres[labels] + spread * rng.standard_normal((n, features)), 0.0, 1.0)
    return Dataset(images, labels)


def train_test_blobs(n_train: int, n_test: int, rng_seed=0, **kwargs) -> tuple[Dataset, Dataset]:
    data = gaussian_blobs(n_train + n_test, rng_seed=rng_seed, **kwargs)
    idx = np.arange(n_train + n_test)
    return data.subset(idx[:n_train]), data.subset(idx[n_train:])
