import numpy as np
import pytest

from cloudparse.bundle import train_bundle
from cloudparse.config import CgParams
from cloudparse.geometry import LandmarkShape, SimilarityTransform
from cloudparse.shape_model import train_pca
from cloudparse.synth import horse_like_training_set


def planted_shapes(n_shapes=30, n=24, seed=0, noise=0.0):
    """Circle plus two radial harmonics with random weights, at random poses."""
    rng = np.random.default_rng(seed)
    t = np.linspace(0, 2 * np.pi, n, endpoint=False)
    out = []
    for _ in range(n_shapes):
        c = rng.normal(0, 0.1, 2)
        r = 1 + c[0] * np.cos(2 * t) + c[1] * np.sin(3 * t)
        pts = np.stack([r * np.cos(t), r * np.sin(t)], axis=1)
        A = SimilarityTransform(*rng.uniform(-50, 50, 2), rng.uniform(5, 20),
                                rng.uniform(-np.pi, np.pi))
        pts = A.apply(pts) + rng.normal(0, noise, pts.shape)
        out.append(LandmarkShape(pts))
    return out


@pytest.fixture(scope="session")
def horse_shapes():
    return horse_like_training_set(40, 48, seed=1)


@pytest.fixture(scope="session")
def horse_model(horse_shapes):
    return train_pca(horse_shapes, 8)


@pytest.fixture(scope="session")
def horse_bundle(horse_shapes):
    return train_bundle(horse_shapes, 8, CgParams(n_cand1=60, n_cand2=120))
