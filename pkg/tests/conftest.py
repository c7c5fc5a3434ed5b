import sys
from pathlib import Path

import numpy as np
import pytest

from prunefl.system import reference_params

sys.path.insert(0, str(Path(__file__).parent))

# fixed 5-UE channel realization used by the regression constants
FIXED_GAINS = (1e-10, 4e-11, 1.5e-11, 6e-12, 2.5e-12)
FIXED_K = (30, 40, 50, 30, 40)


@pytest.fixture
def reference():
    return reference_params(FIXED_GAINS, FIXED_K)


def random_params(rng, n, **overrides):
    """Reference-like scenario with random path-loss gains and sample counts."""
    from prunefl.harness.channels import ChannelSpec, sample_channels

    ch = sample_channels(ChannelSpec(num_ues=n, fading=bool(rng.integers(2))), int(rng.integers(1 << 31)))
    kwargs = dict(
        samples_K=rng.choice([30, 40, 50], n),
        downlink_gains=ch.downlink,
        tx_power_dbm=rng.uniform(17, 29),
        model_bits=rng.uniform(0.4e6, 2.4e6),
        lam=10 ** rng.uniform(-5, -3),
    )
    kwargs.update(overrides)
    return reference_params(ch.uplink, **kwargs)


@pytest.fixture(scope="session")
def mnist_idx(tmp_path_factory):
    """Real MNIST digits (mlxtend's bundled 5000-image subset) written as IDX files.

    Layout: 4000 train images, 1000 test images, shuffled with a fixed seed.
    """
    mlxtend_data = pytest.importorskip("mlxtend.data")
    from prunefl.harness.idx import write_idx

    x, y = mlxtend_data.mnist_data()
    perm = np.random.default_rng(2024).permutation(len(y))
    x = x[perm].reshape(-1, 28, 28).astype(np.uint8)
    y = y[perm].astype(np.uint8)
    root = tmp_path_factory.mktemp("mnist")
    paths = {
        "train_images": root / "train-images-idx3-ubyte.gz",
        "train_labels": root / "train-labels-idx1-ubyte.gz",
        "test_images": root / "t10k-images-idx3-ubyte",
        "test_labels": root / "t10k-labels-idx1-ubyte",
    }
    write_idx(paths["train_images"], x[:4000], compress=True)
    write_idx(paths["train_labels"], y[:4000], compress=True)
    write_idx(paths["test_images"], x[4000:])
    write_idx(paths["test_labels"], y[4000:])
    return {k: str(v) for k, v in paths.items()}


# acceptance criteria report: one line per criterion in the terminal summary
ACCEPTANCE_LINES: dict[int, str] = {}


def report(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} ({detail})"
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
