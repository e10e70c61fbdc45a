"""
Dense reference operators for small instances.

Used by the test-suite to check the distributed solver step by step.
Everything here assembles full matrices and is limited to ``d <= 64``.
"""
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .baselines import whiten
from .linalg import sqrtm_psd, sym_eig

MAX_DIM = 64


class OracleInvariantError(AssertionError):
    pass


@dataclass
class ExplicitOperators:
    rho_bar: float
    C_hat: np.ndarray
    M_rho: np.ndarray
    M_rho1: np.ndarray
    H_full: np.ndarray
    H_1: np.ndarray
    eigvals: np.ndarray
    eigvecs: np.ndarray
    Sx_half: np.ndarray
    Sy_half: np.ndarray
    Wx: np.ndarray
    Wy: np.ndarray
    Sxx: np.ndarray
    Syy: np.ndarray

    @property
    def dx(self):
        return self.Sxx.shape[0]


def _hessian(m, rho_bar):
    return np.block([[rho_bar * m.Sxx, -m.Sxy], [-m.Sxy.T, rho_bar * m.Syy]])


def build_explicit(pooled, machine1, rho_bar) -> ExplicitOperators:
    """Assemble ``C``, ``(rho_bar I - C)^{-1}``, both Hessians and ``M_rho,1``."""
    dx, dy = pooled.Sxy.shape
    d = dx + dy
    if d > MAX_DIM:
        raise ValueError(f"explicit operators are limited to d <= {MAX_DIM}, got {d}")
    Wx, Wy, T = whiten(pooled)
    C = np.block([[np.zeros((dx, dx)), T], [T.T, np.zeros((dy, dy))]])
    A = rho_bar * np.eye(d) - C
    M = np.linalg.inv(A)
    resid = np.max(np.abs(M @ A - np.eye(d)))
    if resid > 1e-10 * max(1.0, np.linalg.norm(M, 2)):
        raise OracleInvariantError(f"M_rho inverse residual {resid:.3e}")
    Sx_half, Sy_half = sqrtm_psd(pooled.Sxx), sqrtm_psd(pooled.Syy)
    D = scipy.linalg.block_diag(Sx_half, Sy_half)
    H1 = _hessian(machine1, rho_bar)
    M1 = D @ np.linalg.solve(H1, D)
    lam, R = sym_eig(C)
    if np.max(np.abs(lam + lam[::-1])) > 1e-10:
        raise OracleInvariantError("spectrum of C is not symmetric")
    return ExplicitOperators(rho_bar, C, M, M1, _hessian(pooled, rho_bar), H1, lam, R,
                             Sx_half, Sy_half, Wx, Wy, pooled.Sxx, pooled.Syy)


def power_step_reference(u, v, ops: ExplicitOperators):
    """Whiten, apply ``M_rho``, un-whiten, rescale to Sigma metric sum 2."""
    z = np.concatenate([ops.Sx_half @ u, ops.Sy_half @ v])
    w = ops.M_rho @ z
    u_new = ops.Wx @ w[:ops.dx]
    v_new = ops.Wy @ w[ops.dx:]
    total = u_new @ ops.Sxx @ u_new + v_new @ ops.Syy @ v_new
    s = np.sqrt(2.0 / total)
    return u_new * s, v_new * s


def oracle_selftest(seeds=range(10), iterations=20, dx=4, dy=4, N=200, delta=0.2):
    """Largest per-iterate gap between exact outer rounds and the dense map.

    Runs one machine with a direct inner solve (a single Newton step is
    then exact) and returns, for each seed, the worst absolute difference
    over ``iterations`` outer rounds.
    """
    from .cluster import shard
    from .solver import InnerSolver, SolverConfig, init_top, outer_round, resolve_omega
    from .synthetic import gen_population, sample

    worst = []
    for seed in seeds:
        model = gen_population(dx, dy, delta, seed)
        cluster = shard(sample(model, N, seed), 1)
        cfg = SolverConfig(T=iterations, T_prime=1, inner_solver="direct")
        state = init_top(cluster.machines[0], 0, resolve_omega(cluster, cfg))
        ops = build_explicit(cluster.global_moments, cluster.machines[0].moments, state.rho_bar)
        solve = InnerSolver(cluster.machines[0], state.rho_bar, 0, cfg)
        gap = 0.0
        for _ in range(iterations):
            u_ref, v_ref = power_step_reference(state.u, state.v, ops)
            state = outer_round(cluster, state, 1, solve)
            gap = max(gap, np.max(np.abs(state.u - u_ref)), np.max(np.abs(state.v - v_ref)))
        worst.append(float(gap))
    return worst
