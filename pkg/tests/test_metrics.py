import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from distcca.baselines import pooled_cca
from distcca.cluster import CovarianceTriple, shard
from distcca.metrics import (ReferenceFrame, covariability, diagnostics, gap_index,
                             gapfree_error_top, gapfree_error_topL, gapfree_sides,
                             metric_orthonormalize, pooled_frame, population_frame,
                             sine_distance, wilks_lambda)
from distcca.synthetic import Dataset, gen_population, sample


def _setup(seed=0, dx=6, dy=5, N=2000, delta=0.2):
    model = gen_population(dx, dy, delta, seed)
    data = sample(model, N, seed)
    cl = shard(data, 1)
    return model, cl, cl.global_moments


def _unit(w, S):
    return w / np.sqrt(w @ S @ w)


def test_pooled_frame_is_orthonormal():
    _, _, g = _setup()
    f = pooled_frame(g)
    assert f.U_ref.shape == (6, 6) and f.V_ref.shape == (5, 5)
    assert np.allclose(f.U_ref.T @ g.Sxx @ f.U_ref, np.eye(6), atol=1e-8)
    assert np.allclose(f.V_ref.T @ g.Syy @ f.V_ref, np.eye(5), atol=1e-8)
    assert f.rho_ref.shape == (6,) and f.rho_ref[5] == 0


def test_population_frame_completion():
    model = gen_population(6, 4, 0.1, 2, r=3)
    f = population_frame(model)
    assert f.U_ref.shape == (6, 6) and f.V_ref.shape == (4, 4)
    assert np.allclose(f.U_ref.T @ model.Sigma_x @ f.U_ref, np.eye(6), atol=1e-8)
    assert np.allclose(f.U_ref[:, :3], model.U_star)


def test_frame_validation():
    with pytest.raises(ValueError):
        ReferenceFrame(np.eye(2), np.eye(2), np.array([0.1, 0.5]), "pooled")


def test_top_error_examples():
    _, _, g = _setup()
    f = pooled_frame(g)
    u1, v1 = f.U_ref[:, 0], f.V_ref[:, 0]
    assert gapfree_sides(u1, v1, f, 0.1, g.Sxx, g.Syy) == pytest.approx((0, 0), abs=1e-20)
    w = _unit(f.U_ref[:, 3:] @ np.array([1.0, -2.0, 0.5]), g.Sxx)
    x_side, _ = gapfree_sides(w, v1, f, 0.1, g.Sxx, g.Syy)
    assert x_side == pytest.approx(1, abs=1e-10)
    with pytest.raises(ValueError):
        gapfree_error_top(2 * u1, v1, f, 0.1, g.Sxx, g.Syy)
    with pytest.raises(ValueError):
        gapfree_error_top(u1, v1, f, 1.0, g.Sxx, g.Syy)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 1000))
def test_completeness_and_sign_invariance(seed):
    _, _, g = _setup(seed % 7)
    f = pooled_frame(g)
    rng = np.random.default_rng(seed)
    u = _unit(rng.standard_normal(6), g.Sxx)
    v = _unit(rng.standard_normal(5), g.Syy)
    coeffs = f.U_ref.T @ g.Sxx @ u
    assert coeffs @ coeffs == pytest.approx(1, abs=1e-8)
    e = gapfree_error_top(u, v, f, 0.2, g.Sxx, g.Syy)
    assert gapfree_error_top(-u, -v, f, 0.2, g.Sxx, g.Syy) == pytest.approx(e, abs=1e-15)
    flipped = ReferenceFrame(-f.U_ref, f.V_ref * np.where(np.arange(5) % 2, -1, 1),
                             f.rho_ref, "pooled")
    assert gapfree_error_top(u, v, flipped, 0.2, g.Sxx, g.Syy) == pytest.approx(e, abs=1e-15)


@pytest.mark.parametrize("seed", range(5))
def test_sine_consistency_at_exact_gap(seed):
    _, cl, g = _setup(seed, N=3000)
    f = pooled_frame(g)
    rng = np.random.default_rng(seed)
    u = _unit(f.U_ref[:, 0] + 0.1 * rng.standard_normal(6), g.Sxx)
    v = _unit(f.V_ref[:, 0] + 0.1 * rng.standard_normal(5), g.Syy)
    rho = f.rho_ref
    delta = (rho[0] - rho[1]) / rho[0]
    x_side, y_side = gapfree_sides(u, v, f, delta, g.Sxx, g.Syy)
    sx = sine_distance(u, f.U_ref[:, 0], g.Sxx)
    sy = sine_distance(v, f.V_ref[:, 0], g.Syy)
    assert abs(x_side - sx ** 2) <= 1e-12 and abs(y_side - sy ** 2) <= 1e-12
    assert gapfree_error_top(u, v, f, delta, g.Sxx, g.Syy) == pytest.approx(
        max(sx, sy) ** 2, abs=1e-12)


def test_topL_examples_and_consistency():
    _, _, g = _setup(3)
    f = pooled_frame(g)
    assert gapfree_error_topL(f.U_ref[:, :3], f.V_ref[:, :3], f, 0.1, g.Sxx, g.Syy) < 1e-12
    rng = np.random.default_rng(3)
    u = _unit(f.U_ref[:, 0] + 0.2 * rng.standard_normal(6), g.Sxx)
    v = _unit(f.V_ref[:, 0] + 0.2 * rng.standard_normal(5), g.Syy)
    top = gapfree_error_top(u, v, f, 0.15, g.Sxx, g.Syy)
    topL = gapfree_error_topL(u[:, None], v[:, None], f, 0.15, g.Sxx, g.Syy, L=1)
    assert topL ** 2 == pytest.approx(top, rel=1e-10)
    with pytest.raises(ValueError):
        gapfree_error_topL(f.U_ref[:, :2], f.V_ref[:, :2], f, 0.1, g.Sxx, g.Syy, L=3)
    with pytest.raises(ValueError):
        gapfree_error_topL(2 * f.U_ref[:, :2], f.V_ref[:, :2], f, 0.1, g.Sxx, g.Syy)


def test_topL_rotation_invariance_with_tie():
    S = np.eye(4)
    f = ReferenceFrame(np.eye(4), np.eye(4), np.array([0.5, 0.5, 0.2, 0.1]), "pooled")
    assert gap_index(f.rho_ref, 1, 0.3) == 2
    rng = np.random.default_rng(0)
    U = np.linalg.qr(rng.standard_normal((4, 2)))[0]
    V = np.linalg.qr(rng.standard_normal((4, 2)))[0]
    c, s = np.cos(0.7), np.sin(0.7)
    R = np.eye(4)
    R[:2, :2] = [[c, -s], [s, c]]
    rot = ReferenceFrame(R, R, f.rho_ref, "pooled")
    a = gapfree_error_topL(U[:, :1], V[:, :1], f, 0.3, S, S)
    b = gapfree_error_topL(U[:, :1], V[:, :1], rot, 0.3, S, S)
    assert a == pytest.approx(b, abs=1e-14)


def test_threshold_ties_are_included():
    f = ReferenceFrame(np.eye(3), np.eye(3), np.array([0.5, 0.25, 0.1]), "pooled")
    u = np.array([0.0, 1.0, 0.0])
    assert gapfree_error_top(u, u, f, 0.5, np.eye(3), np.eye(3)) == pytest.approx(1)


def test_sine_distance_examples():
    S = np.diag([1.0, 2.0])
    u = np.array([1.0, 1.0])
    assert sine_distance(u, u, S) == 0 and sine_distance(-u, 3 * u, S) < 1e-8
    assert sine_distance(np.array([1.0, 0]), np.array([0, 1.0]), S) == pytest.approx(1)


def test_covariability():
    _, _, g = _setup(1)
    pool = pooled_cca(g, 1)
    assert covariability(pool.U[:, 0], pool.V[:, 0], g.Sxy) == pytest.approx(pool.rho[0],
                                                                               abs=1e-10)


def test_metric_orthonormalize_keeps_span():
    _, _, g = _setup()
    W = np.random.default_rng(0).standard_normal((6, 3))
    Q = metric_orthonormalize(W, g.Sxx)
    assert np.allclose(Q.T @ g.Sxx @ Q, np.eye(3), atol=1e-10)
    coef = np.linalg.lstsq(W, Q, rcond=None)[0]
    assert np.allclose(W @ coef, Q, atol=1e-10)


def test_wilks_examples():
    res = wilks_lambda([0.0, 0.0], 100, 2, 2)
    assert np.allclose(res.lam, 1) and np.allclose(res.statistic, 0) and np.allclose(res.p_value, 1)
    res = wilks_lambda([0.5], 1000, 1, 1)
    assert res.statistic[0] == pytest.approx(-(1000 - 1 - 1.5) * np.log(0.75))
    assert res.df[0] == 1
    with pytest.raises(ValueError):
        wilks_lambda([1.0], 1000, 1, 1)
    with pytest.raises(ValueError):
        wilks_lambda([0.5], 2, 1, 1)


def test_wilks_raw_p_values_can_decrease():
    # Equal correlations: the k=1 test spends its doubled statistic on four
    # degrees of freedom, the k=2 test on one.
    res = wilks_lambda([0.1, 0.1], 12, 2, 2)
    assert res.p_value[0] > res.p_value[1]
    assert np.all(np.diff(res.p_sequential) >= 0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 0.95), min_size=1, max_size=6), st.integers(20, 5000))
def test_wilks_sequential_p_monotone(rho, N):
    rho = sorted(rho, reverse=True)
    res = wilks_lambda(rho, N, 6, 7)
    assert np.all(np.diff(res.p_sequential) >= 0)
    assert np.all(res.p_sequential >= res.p_value)


def test_diagnostics():
    model = gen_population(5, 4, 0.2, 0)
    data = sample(model, 2000, 0)
    d1 = diagnostics(shard(data, 1), 0.1)
    assert d1.kappa == 0 and d1.theorem1_condition_met
    twice = Dataset(np.vstack([data.X, data.X]), np.vstack([data.Y, data.Y]))
    assert diagnostics(shard(twice, 2), 0.1).kappa < 1e-12
    d = diagnostics(shard(data, 4), 0.01)
    assert d.kappa > 0 and d.gamma_hat > 0 and not d.theorem1_condition_met


def test_kappa_rate():
    ratios = []
    for seed in range(15):
        model = gen_population(5, 4, 0.2, seed)
        k = []
        for n in (1000, 2000):
            cl = shard(sample(model, n * 4, seed), 4)
            k.append(diagnostics(cl, 0.1).kappa)
        ratios.append(k[0] / k[1])
    assert 1.15 < np.median(ratios) < 1.75
