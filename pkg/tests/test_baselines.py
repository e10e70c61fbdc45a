import numpy as np
import pytest

from distcca.baselines import naive_dc, pooled_cca, whitened_dc
from distcca.cluster import CovarianceTriple, shard
from distcca.harness import score
from distcca.metrics import population_frame
from distcca.synthetic import Dataset, gen_population, sample


def test_pooled_zero_cross():
    m = CovarianceTriple(np.eye(3), np.eye(2), np.zeros((3, 2)), 10)
    assert np.allclose(pooled_cca(m, 2).rho, 0)


def test_pooled_diagonal():
    m = CovarianceTriple(np.eye(2), np.eye(2), np.diag([0.5, 0.2]), 10)
    b = pooled_cca(m, 2)
    assert np.allclose(b.rho, [0.5, 0.2])
    assert np.allclose(b.U, np.eye(2)) and np.allclose(b.V, np.eye(2))


def test_pooled_on_population_moments():
    model = gen_population(6, 5, 0.2, 4)
    m = CovarianceTriple(model.Sigma_x, model.Sigma_y, model.Sigma_xy, 1)
    b = pooled_cca(m, 3)
    assert np.allclose(b.rho, model.rho_star[:3], atol=1e-8)
    G = model.U_star[:, :3].T @ model.Sigma_x @ b.U
    assert np.allclose(np.abs(G), np.eye(3), atol=1e-8)
    assert np.allclose(b.U.T @ model.Sigma_x @ b.U, np.eye(3), atol=1e-10)


def _data(seed=0, N=3000):
    model = gen_population(6, 5, 0.2, seed)
    return model, sample(model, N, seed)


def test_single_machine_dc():
    _, data = _data()
    cl = shard(data, 1)
    pooled = pooled_cca(cl.global_moments, 3)
    w = whitened_dc(cl, 3)
    assert np.allclose(w.U, pooled.U, atol=1e-8) and np.allclose(w.V, pooled.V, atol=1e-8)
    nd = naive_dc(cl, 3)
    m1 = cl.machines[0]
    from distcca.linalg import truncated_svd
    Phi, _, Psi = truncated_svd(m1.whitened_local, 3)
    assert np.allclose(nd.U, Phi, atol=1e-8) and np.allclose(nd.V, Psi, atol=1e-8)


def test_identical_shards_equal_single_machine():
    _, data = _data(N=800)
    twice = Dataset(np.vstack([data.X, data.X]), np.vstack([data.Y, data.Y]))
    one, two = whitened_dc(shard(data, 1), 2), whitened_dc(shard(twice, 2), 2)
    assert np.allclose(one.U, two.U, atol=1e-8)
    assert np.allclose(naive_dc(shard(data, 1), 2).V, naive_dc(shard(twice, 2), 2).V, atol=1e-8)


def test_dc_ledger():
    _, data = _data()
    cl = shard(data, 4)
    assert naive_dc(cl, 2).ledger_scalars == 4 * 11 * 2
    with pytest.raises(ValueError):
        naive_dc(cl, 6)


def test_naive_worse_than_whitened():
    worse = 0
    for seed in range(20):
        model = gen_population(15, 20, 0.15, seed)
        cl = shard(sample(model, 2000 * 30, seed), 30)
        frame, g = population_frame(model), cl.global_moments
        n = naive_dc(cl, 1)
        w = whitened_dc(cl, 1)
        worse += score(n.U, n.V, frame, 0.15, g, True) > score(w.U, w.V, frame, 0.15, g, True)
    assert worse >= 19
