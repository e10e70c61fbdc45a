"""
Acceptance criteria, one test each, at the stated tolerances.

Every test prints a ``PASS``/``FAIL``/``SKIP`` line with the measured
numbers.  Run ``python3 tests/test_acceptance.py`` for the lines alone, or
``pytest tests/test_acceptance.py -v`` for the same checks under pytest.
"""
import os
import sys
import time

import numpy as np
import pytest
from scipy import stats

from distcca.baselines import pooled_cca
from distcca.cluster import shard
from distcca.datasets import DATA_ROOT_ENV, find_mnist, load_mnist
from distcca.harness import (ExperimentSpec, run_gap_sweep, run_iterations_sweep,
                             run_machines_sweep, run_realdata, replication_seed)
from distcca.linalg import sqrtm_psd
from distcca.metrics import (diagnostics, gapfree_error_topL, gapfree_sides, pooled_frame,
                             sine_distance, wilks_lambda)
from distcca.solver import (DeflationState, InnerSolver, SolverConfig, deflate, init_top,
                            outer_round, resolve_omega, solve_top_L, solve_top_pair,
                            top_pair_ledger_total)
from distcca.synthetic import gen_population, sample
from distcca.testing import build_explicit, oracle_selftest


def _report(number, title, ok, detail):
    status = {True: "PASS", False: "FAIL", None: "SKIP"}[ok]
    line = f"{status} criterion {number} ({title}): {detail}"
    sys.__stdout__.write(line + "\n")
    sys.__stdout__.flush()
    return line


def _by_method(rows, sweep_values=None):
    out = {}
    for r in rows:
        out.setdefault(r.method, {})[r.sweep] = r.mean_log_error
    return out


def criterion_1():
    t0 = time.perf_counter()
    worst = oracle_selftest(seeds=range(10), iterations=20, dx=4, dy=4, N=200)
    elapsed = time.perf_counter() - t0
    ok = max(worst) <= 1e-10 and elapsed < 5
    return ok, f"max per-iterate deviation {max(worst):.2e} over 10 seeds, {elapsed:.1f} s"


def criterion_2():
    t0 = time.perf_counter()
    errs = []
    for seed in range(10):
        model = gen_population(15, 20, 0.2, seed)
        cl = shard(sample(model, 60000, seed), 1)
        res = solve_top_L(cl, SolverConfig(L=3, T=100, T_prime=50))
        g = cl.global_moments
        errs.append(gapfree_error_topL(res.basis.U, res.basis.V, pooled_frame(g), 0.2,
                                       g.Sxx, g.Syy))
    elapsed = time.perf_counter() - t0
    hits = sum(e < 1e-8 for e in errs)
    ok = hits == 10 and elapsed < 60
    return ok, f"{hits}/10 seeds below 1e-8 (worst {max(errs):.2e}), {elapsed:.1f} s"


def criterion_3():
    t0 = time.perf_counter()
    parts, ok = [], True
    for L in (1, 2):
        spec = ExperimentSpec("iterations", dx=15, dy=20, n=2000, K=(30,), deltas=(0.15,),
                              T=50, T_prime=10, L=L, replications=50, checkpoints=(50,),
                              methods=("pooled", "dist"))
        m = _by_method(run_iterations_sweep(spec))
        gap = abs(m["dist"][50] - m["pooled"][50])
        ok &= gap <= 0.5
        parts.append(f"L={L}: dist {m['dist'][50]:.3f} vs pooled {m['pooled'][50]:.3f}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 600
    return ok, "; ".join(parts) + f"; {elapsed:.0f} s"


def criterion_4():
    deltas = (0.05, 0.1, 0.15, 0.2, 0.25)
    spec = ExperimentSpec("gap", dx=15, dy=20, n=2000, K=(30,), deltas=deltas, T=50,
                          T_prime=10, replications=30, methods=("dist",))
    m = _by_method(run_gap_sweep(spec))["dist"]
    rho = stats.spearmanr([1 / d for d in deltas], [m[d] for d in deltas])[0]
    curve = ", ".join(f"{m[d]:.2f}" for d in deltas)
    return rho > 0.8, f"Spearman {rho:.3f}; dist mean log error by delta: {curve}"


def criterion_5():
    t0 = time.perf_counter()
    Ks = (8, 16, 32, 64, 128)
    spec = ExperimentSpec("machines", dx=15, dy=20, n=2000, K=Ks, deltas=(0.15,), T=50,
                          T_prime=10, replications=30,
                          methods=("pooled", "whitened-dc", "dist"))
    m = _by_method(run_machines_sweep(spec))
    wdc = [m["whitened-dc"][K] for K in Ks]
    increasing = all(b > a for a, b in zip(wdc, wdc[1:]))
    gaps = [abs(m["dist"][K] - m["pooled"][K]) for K in Ks]
    elapsed = time.perf_counter() - t0
    ok = increasing and max(gaps) <= 0.5 and elapsed < 900
    return ok, (f"W-DC by K {[round(x, 3) for x in wdc]} strictly increasing={increasing}; "
                f"max |dist-pooled| {max(gaps):.3f}; {elapsed:.0f} s")


def criterion_6():
    details, ok = [], True
    for K, T, Tp in ((30, 12, 10), (7, 5, 3), (1, 2, 1)):
        model = gen_population(15, 20, 0.15, 0)
        cl = shard(sample(model, 200 * K, 0), K)
        solve_top_pair(cl, SolverConfig(T=T, T_prime=Tp))
        want = top_pair_ledger_total(T, Tp, K, 35)
        ok &= cl.ledger.total == want
        details.append(f"K={K},T={T},T'={Tp}: {cl.ledger.total} vs {want}")
    return ok, "; ".join(details)


def _invariants(seed):
    """The invariant checks on one seeded instance; returns failed names."""
    failed = []
    model = gen_population(6, 5, 0.2, seed)
    cl = shard(sample(model, 4 * 1500, seed), 4)
    g = cl.global_moments
    cfg = SolverConfig(L=3, T=30, T_prime=10)
    omega = resolve_omega(cl, cfg)
    # outer-round normalization
    st = init_top(cl.machines[0], 0, omega)
    solve = InnerSolver(cl.machines[0], st.rho_bar, 0, cfg)
    for _ in range(5):
        st = outer_round(cl, st, 10, solve)
        if abs(st.u @ g.Sxx @ st.u + st.v @ g.Syy @ st.v - 2) > 1e-10:
            failed.append("normalization")
            break
    # orthonormal final basis and deflation orthogonality
    res = solve_top_L(cl, cfg)
    U, V = res.basis.U, res.basis.V
    if (np.max(np.abs(U.T @ g.Sxx @ U - np.eye(3))) > 1e-8 or
            np.max(np.abs(V.T @ g.Syy @ V - np.eye(3))) > 1e-8):
        failed.append("orthonormality")
    GU, GV = U.T @ g.Sxx @ U, V.T @ g.Syy @ V
    if np.max(np.abs(GU[np.triu_indices(3, 1)])) > 1e-10 or \
            np.max(np.abs(GV[np.triu_indices(3, 1)])) > 1e-10:
        failed.append("deflation orthogonality")
    # completeness identity and sine consistency
    frame = pooled_frame(g)
    u = U[:, 0] + 0.05 * np.random.default_rng(seed).standard_normal(6)
    u = u / np.sqrt(u @ g.Sxx @ u)
    c = frame.U_ref.T @ g.Sxx @ u
    if abs(c @ c - 1) > 1e-8:
        failed.append("completeness")
    v = V[:, 0] / np.sqrt(V[:, 0] @ g.Syy @ V[:, 0])
    rho = frame.rho_ref
    delta = (rho[0] - rho[1]) / rho[0]
    x_side, y_side = gapfree_sides(u, v, frame, delta, g.Sxx, g.Syy)
    if abs(x_side - sine_distance(u, frame.U_ref[:, 0], g.Sxx) ** 2) > 1e-12 or \
            abs(y_side - sine_distance(v, frame.V_ref[:, 0], g.Syy) ** 2) > 1e-12:
        failed.append("sine consistency")
    # Weyl bound
    st0 = init_top(cl.machines[0], 0, 0.0)
    if not abs(st0.rho_bar - rho[0]) <= diagnostics(cl, omega).kappa:
        failed.append("Weyl")
    # spectral symmetry of C
    ops = build_explicit(g, cl.machines[0].moments, rho[0] + omega)
    lam = np.sort(ops.eigvals)
    if np.max(np.abs(lam + lam[::-1])) > 1e-10:
        failed.append("eigen-symmetry")
    return failed


def criterion_7():
    bad = {}
    for seed in range(50):
        for name in _invariants(seed):
            bad.setdefault(name, []).append(seed)
    if not bad:
        return True, "all seven invariants hold on 50 seeds"
    return False, "violations: " + "; ".join(f"{k} on seeds {v}" for k, v in bad.items())


def criterion_8():
    try:
        path = find_mnist(os.environ.get(DATA_ROOT_ENV))
    except FileNotFoundError:
        return None, f"MNIST training images not found (set ${DATA_ROOT_ENV})"
    data = load_mnist(path)
    spec = ExperimentSpec("realdata", K=(2, 8, 25), L=3, T=50, T_prime=10, replications=1,
                          center="global-mean", ridge=1e-3, metric_delta=0.15)
    m = _by_method(run_realdata(spec, data))
    order = {K: (m["dist"][K], m["whitened-dc"][K], m["naive-dc"][K]) for K in spec.K}
    ok = all(d < w < n for d, w, n in order.values())
    return ok, "; ".join(f"K={K}: DIST {d:.2f}, W-DC {w:.2f}, N-DC {n:.2f}"
                         for K, (d, w, n) in order.items())


def criterion_9():
    hits = 0
    for rep in range(50):
        ss = replication_seed(0, rep)
        model = gen_population(15, 20, 0.1, ss, r=3)
        data = sample(model, 60000, ss)
        cl = shard(data, 1)
        rho = pooled_cca(cl.global_moments, 15).rho
        p = wilks_lambda(rho, 60000, 15, 20).p_value
        hits += bool(np.all(p[:3] < 0.01) and p[3] >= 0.05)
    return hits >= 45, f"{hits}/50 replications screen exactly three components"


CRITERIA = [
    (1, "oracle equivalence", criterion_1),
    (2, "pooled recovery", criterion_2),
    (3, "iterations sweep tracks pooled", criterion_3),
    (4, "error grows with 1/delta", criterion_4),
    (5, "machines sweep", criterion_5),
    (6, "ledger exactness", criterion_6),
    (7, "invariant suite", criterion_7),
    (8, "real-data ordering", criterion_8),
    (9, "Wilks screening", criterion_9),
]


@pytest.mark.parametrize("number,title,check", CRITERIA, ids=[f"c{n}" for n, _, _ in CRITERIA])
def test_criterion(number, title, check):
    ok, detail = check()
    _report(number, title, ok, detail)
    if ok is None:
        pytest.skip(detail)
    assert ok, detail


if __name__ == "__main__":
    results = []
    for number, title, check in CRITERIA:
        ok, detail = check()
        _report(number, title, ok, detail)
        results.append(ok)
    sys.exit(0 if all(r is not False for r in results) else 1)
