"""
Reference estimators: pooled CCA and one-shot divide-and-conquer.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .linalg import inv_sqrt, sym_eig, truncated_svd


@dataclass
class CanonicalBasis:
    U: np.ndarray
    V: np.ndarray
    rho: np.ndarray
    method: str
    ledger_scalars: Optional[int] = None

    @property
    def L(self):
        return self.U.shape[1]


def whiten(moments):
    """``(Wx, Wy, T)`` with ``W = S^{-1/2}`` and ``T = Wx Sxy Wy``."""
    Wx = inv_sqrt(moments.Sxx)
    Wy = inv_sqrt(moments.Syy)
    return Wx, Wy, Wx @ moments.Sxy @ Wy


def pooled_cca(moments, L) -> CanonicalBasis:
    """Classical CCA on a single set of moments."""
    Wx, Wy, T = whiten(moments)
    Phi, rho, Psi = truncated_svd(T, L)
    return CanonicalBasis(Wx @ Phi, Wy @ Psi, rho, "pooled", 0)


def _dc_subspaces(cluster, L):
    if not 1 <= L <= min(cluster.dx, cluster.dy):
        raise ValueError(f"L={L} out of range")
    local = [truncated_svd(m.whitened_local, L) for m in cluster.machines]
    cluster.ledger.record_all("dc/local-svd", "to-center", cluster.ids, (cluster.dx + cluster.dy) * L)
    Px = cluster.combine(np.stack([Phi @ Phi.T for Phi, _, _ in local]))
    Py = cluster.combine(np.stack([Psi @ Psi.T for _, _, Psi in local]))
    Phi_dc = sym_eig((Px + Px.T) / 2)[1][:, :L]
    Psi_dc = sym_eig((Py + Py.T) / 2)[1][:, :L]
    # Rotate within the averaged subspaces to machine 1's canonical order.
    # Spans are untouched; with K = 1 this reproduces machine 1's own SVD.
    T1 = cluster.machines[0].whitened_local
    P, _, Q = truncated_svd(Phi_dc.T @ T1 @ Psi_dc, L)
    Phi_dc, Psi_dc = Phi_dc @ P, Psi_dc @ Q
    signs = np.sign(np.sum(Phi_dc * local[0][0], axis=0))
    signs[signs == 0] = 1.0
    return Phi_dc * signs, Psi_dc * signs


def _rho_on_global(cluster, U, V):
    return np.linalg.svd(U.T @ cluster.global_moments.Sxy @ V, compute_uv=False)


def naive_dc(cluster, L) -> CanonicalBasis:
    """Average local top-L projectors of the whitened local matrices.

    The returned directions live in whitened coordinates and are not
    Sigma-orthonormal.
    """
    before = cluster.ledger.total
    Phi, Psi = _dc_subspaces(cluster, L)
    return CanonicalBasis(Phi, Psi, _rho_on_global(cluster, Phi, Psi), "naive-dc",
                          cluster.ledger.total - before)


def whitened_dc(cluster, L) -> CanonicalBasis:
    """Naive divide-and-conquer mapped back through machine 1's inverse roots."""
    before = cluster.ledger.total
    Phi, Psi = _dc_subspaces(cluster, L)
    m1 = cluster.machines[0]
    U, V = m1.inv_sqrt_x() @ Phi, m1.inv_sqrt_y() @ Psi
    return CanonicalBasis(U, V, _rho_on_global(cluster, U, V), "whitened-dc",
                          cluster.ledger.total - before)
