import numpy as np
import pytest

from otmix.dataspace import Dataset, MixingRatio


def make_blob(rng, mean, n, label=None, scale=1.0, dim=2):
    feats = np.asarray(mean, dtype=float) + scale * rng.standard_normal((n, dim))
    labels = None if label is None else np.full(n, label, dtype=np.int64)
    return feats, labels


def random_dataset(seed, n, dim=2, num_classes=None, spread=2.0):
    """Generic random point cloud, optionally labeled."""
    rng = np.random.default_rng(seed)
    feats = spread * rng.standard_normal((n, dim))
    labels = rng.integers(0, num_classes, n) if num_classes else None
    return Dataset(features=feats, labels=labels, id=f"rand{seed}")


def random_simplex(rng, m):
    v = rng.random(m)
    return MixingRatio(tuple(v / v.sum()))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
