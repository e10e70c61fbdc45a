import numpy as np
import pytest

from distcca.cluster import shard
from distcca.synthetic import gen_population, sample


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_cluster(dx=6, dy=5, n=400, K=3, delta=0.2, seed=0, **kw):
    model = gen_population(dx, dy, delta, seed)
    return model, shard(sample(model, n * K, seed), K, **kw)


def random_spd(rng, n, shift=1.0):
    G = rng.standard_normal((n, n))
    return G.T @ G + shift * np.eye(n)
