"""
Scoring: gap-free subspace errors, sine distance, captured correlation,
Wilks' lambda and the constants that enter the convergence theory.

All Sigma inner products use the global sample moments, whichever frame
the reference directions come from.
"""
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy import stats

from .baselines import whiten
from .linalg import full_svd, inv_sqrt, sqrtm_psd

NORMALIZATION_TOL = 1e-6
# Correlations within a few ulps of the threshold count as ties (<=).
TIE_ULPS = 8


@dataclass
class ReferenceFrame:
    U_ref: np.ndarray
    V_ref: np.ndarray
    rho_ref: np.ndarray
    source: str

    def __post_init__(self):
        rho = np.asarray(self.rho_ref, dtype=float)
        if np.any(np.diff(rho) > 1e-12) or rho.min() < -1e-12 or rho.max() > 1 + 1e-12:
            raise ValueError("reference correlations must be non-increasing in [0, 1]")
        self.rho_ref = rho

    def rho_x(self):
        return self.rho_ref[:self.U_ref.shape[1]]

    def rho_y(self):
        return self.rho_ref[:self.V_ref.shape[1]]


def pooled_frame(moments) -> ReferenceFrame:
    """Every pooled canonical direction on both sides, correlations zero padded."""
    Wx, Wy, T = whiten(moments)
    Phi, s, Psi = full_svd(T)
    rho = np.zeros(max(T.shape))
    rho[:s.size] = s
    return ReferenceFrame(Wx @ Phi, Wy @ Psi, rho, "pooled")


def _complete(Q):
    """Append an orthonormal basis of the complement of ``range(Q)``."""
    if Q.shape[1] == Q.shape[0]:
        return Q
    return np.column_stack([Q, scipy.linalg.null_space(Q.T)])


def population_frame(model) -> ReferenceFrame:
    """Analytic directions, completed in whitened coordinates when ``r < d``."""
    Phi = _complete(sqrtm_psd(model.Sigma_x) @ model.U_star)
    Psi = _complete(sqrtm_psd(model.Sigma_y) @ model.V_star)
    return ReferenceFrame(inv_sqrt(model.Sigma_x) @ Phi, inv_sqrt(model.Sigma_y) @ Psi,
                          np.asarray(model.rho_star, dtype=float), "population")


def _check_unit(w, S, name):
    val = float(w @ S @ w)
    if abs(val - 1.0) > NORMALIZATION_TOL:
        raise ValueError(f"{name} is not unit length in its metric (norm^2 = {val:.6g})")


def _complement_mask(rho, threshold):
    slack = TIE_ULPS * np.finfo(float).eps * max(1.0, abs(threshold))
    return rho <= threshold + slack


def gapfree_sides(u, v, frame, delta, Sxx, Syy):
    """The x-side and y-side sums of ``gapfree_error_top``."""
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    _check_unit(u, Sxx, "u")
    _check_unit(v, Syy, "v")
    threshold = (1 - delta) * frame.rho_ref[0]
    mx = _complement_mask(frame.rho_x(), threshold)
    my = _complement_mask(frame.rho_y(), threshold)
    px = frame.U_ref[:, mx].T @ (Sxx @ u)
    py = frame.V_ref[:, my].T @ (Syy @ v)
    return float(px @ px), float(py @ py)


def gapfree_error_top(u, v, frame, delta, Sxx, Syy):
    """Largest squared Sigma-overlap with directions below ``(1 - delta) rho_1``."""
    return max(gapfree_sides(u, v, frame, delta, Sxx, Syy))


def gap_index(rho, L, delta):
    """Number of reference correlations strictly above ``(1 - delta) rho_L``."""
    threshold = (1 - delta) * rho[L - 1]
    return int(np.count_nonzero(~_complement_mask(rho, threshold)))


def gapfree_error_topL(U, V, frame, delta, Sxx, Syy, L=None):
    """Spectral norm of the Sigma cross-Gram with the reference complement."""
    U = np.atleast_2d(np.asarray(U, dtype=float).T).T
    V = np.atleast_2d(np.asarray(V, dtype=float).T).T
    L = U.shape[1] if L is None else L
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if L > U.shape[1] or L > V.shape[1] or L > min(frame.U_ref.shape[1], frame.V_ref.shape[1]):
        raise ValueError(f"L={L} exceeds the available columns")
    U, V = U[:, :L], V[:, :L]
    for W, S, name in ((U, Sxx, "U"), (V, Syy, "V")):
        G = W.T @ S @ W
        if np.max(np.abs(G - np.eye(L))) > NORMALIZATION_TOL:
            raise ValueError(f"{name} is not orthonormal in its metric")
    L_delta = gap_index(frame.rho_ref, L, delta)
    errs = []
    for R, W, S in ((frame.U_ref, U, Sxx), (frame.V_ref, V, Syy)):
        block = R[:, L_delta:].T @ (S @ W)
        errs.append(np.linalg.norm(block, 2) if block.size else 0.0)
    return float(max(errs))


def sine_distance(u, u_ref, Sxx):
    """Sine of the angle between ``u`` and ``u_ref`` in the ``Sxx`` metric."""
    a = Sxx @ u_ref
    c = abs(float(u @ a)) / np.sqrt(float(u @ Sxx @ u) * float(u_ref @ a))
    return float(np.sqrt(max(0.0, 1.0 - min(c, 1.0) ** 2)))


def covariability(u, v, Sxy):
    return float(u @ Sxy @ v)


def metric_orthonormalize(W, S):
    """Same span, ``W^T S W = I`` (Cholesky of the Gram matrix)."""
    G = W.T @ S @ W
    R = np.linalg.cholesky((G + G.T) / 2).T
    return scipy.linalg.solve_triangular(R, W.T, trans="T").T


@dataclass
class WilksResult:
    lam: np.ndarray
    statistic: np.ndarray
    df: np.ndarray
    p_value: np.ndarray
    p_sequential: np.ndarray


def wilks_lambda(rho_hat, N, dx, dy) -> WilksResult:
    """Bartlett's chi-square test that correlations ``k, k+1, ...`` all vanish.

    ``p_value`` is the raw tail probability for each ``k``.  It need not be
    monotone in ``k`` (the degrees of freedom shrink too), so
    ``p_sequential`` also gives the running maximum, which is the p-value
    of the step-down rule "component k is significant only if every
    earlier one is".
    """
    rho = np.asarray(rho_hat, dtype=float)
    if np.any(rho >= 1) or np.any(rho < 0):
        raise ValueError("canonical correlations must lie in [0, 1)")
    if N <= dx + dy:
        raise ValueError("need N > dx + dy")
    logs = np.log1p(-rho ** 2)
    log_lam = np.cumsum(logs[::-1])[::-1]
    factor = N - 1 - (dx + dy + 1) / 2
    stat = -factor * log_lam
    stat = np.where(np.abs(stat) < 1e-300, 0.0, stat)
    k = np.arange(1, rho.size + 1)
    df = (dx - k + 1) * (dy - k + 1)
    p = stats.chi2.sf(stat, df)
    return WilksResult(np.exp(log_lam), stat, df, p, np.maximum.accumulate(p))


@dataclass
class Diagnostics:
    kappa: float
    gamma_hat: float
    omega_used: float
    theorem1_condition_met: bool


def diagnostics(cluster, omega) -> Diagnostics:
    """``kappa = ||T_1 - T||``, the smallest moment eigenvalue, and ``2 kappa <= omega``."""
    T = whiten(cluster.global_moments)[2]
    kappa = float(np.linalg.norm(cluster.machines[0].whitened_local - T, 2))
    g = cluster.global_moments
    gamma = float(min(np.linalg.eigvalsh(g.Sxx)[0], np.linalg.eigvalsh(g.Syy)[0]))
    return Diagnostics(kappa, gamma, float(omega), bool(2 * kappa <= omega))
