"""
Dense linear-algebra kernel.

Symmetric eigendecomposition, truncated SVD, inverse square roots,
Gram-Schmidt and a matrix-free conjugate-gradient solver.  Every routine is
a pure function of its inputs.
"""
from typing import Callable, Tuple

import numpy as np

SYMMETRY_TOL = 1e-10
RIDGE_FLOOR = 1e-10


class ShapeError(ValueError):
    """Input has the wrong shape or is not symmetric."""


class NearSingularError(np.linalg.LinAlgError):
    """An SPD matrix has an eigenvalue below the ridge floor."""

    def __init__(self, message, eigenvalue=None, machine=None):
        super().__init__(message)
        self.eigenvalue = eigenvalue
        self.machine = machine


class DegeneracyError(np.linalg.LinAlgError):
    """Columns are (numerically) linearly dependent."""


class ConvergenceError(RuntimeError):
    """An iterative solver ran out of iterations."""

    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


def _check_symmetric(A):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ShapeError(f"expected a square matrix, got shape {A.shape}")
    scale = np.max(np.abs(A)) if A.size else 0.0
    if np.max(np.abs(A - A.T), initial=0.0) > SYMMETRY_TOL * max(scale, 1e-300):
        raise ShapeError("matrix is not symmetric")
    return A


def _first_nonzero_positive(V):
    """Flip column signs so the first non-negligible entry of each column is positive."""
    if V.size == 0:
        return V, np.ones(V.shape[1])
    mags = np.abs(V)
    thresh = 1e-12 * np.max(mags, axis=0, keepdims=True)
    idx = np.argmax(mags > thresh, axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs, signs


def sym_eig(A) -> Tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (descending) and orthonormal eigenvectors of a symmetric matrix.

    Eigenvector signs follow the same convention as :func:`truncated_svd`.
    """
    A = _check_symmetric(A)
    w, V = np.linalg.eigh(A)
    w, V = w[::-1], V[:, ::-1]
    V, _ = _first_nonzero_positive(V)
    return w, V


def inv_sqrt(A) -> np.ndarray:
    """Symmetric inverse square root of an SPD matrix.

    Raises :class:`NearSingularError` when the smallest eigenvalue falls below
    ``RIDGE_FLOOR * lambda_max`` (or is non-positive).
    """
    A = _check_symmetric(A)
    w, V = np.linalg.eigh(A)
    lmax = w[-1] if w.size else 1.0
    if w.size and (w[0] <= 0 or w[0] < RIDGE_FLOOR * lmax):
        raise NearSingularError(
            f"smallest eigenvalue {w[0]:.3e} below floor {RIDGE_FLOOR * lmax:.3e}",
            eigenvalue=float(w[0]))
    B = (V / np.sqrt(w)) @ V.T
    return (B + B.T) / 2


def sqrtm_psd(A) -> np.ndarray:
    """Symmetric square root of a PSD matrix (tiny negative eigenvalues clipped)."""
    A = _check_symmetric(A)
    w, V = np.linalg.eigh(A)
    B = (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T
    return (B + B.T) / 2


def truncated_svd(M, L: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Top-``L`` singular triplets ``(Phi, s, Psi)`` with ``M @ Psi = Phi * s``.

    The first non-negligible entry of every left vector is positive and the
    right vector's sign follows its left partner.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ShapeError(f"expected a matrix, got shape {M.shape}")
    if not 1 <= L <= min(M.shape):
        raise ValueError(f"L={L} out of range for a {M.shape} matrix")
    P, s, Qt = np.linalg.svd(M, full_matrices=False)
    Phi, signs = _first_nonzero_positive(P[:, :L])
    Psi = Qt[:L].T * signs
    return Phi, s[:L], Psi


def full_svd(M) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Full SVD with square orthonormal factors and the sign convention above.

    Returns ``(Phi, s, Psi)`` where ``Phi`` is rows x rows, ``Psi`` is
    cols x cols and ``s`` holds the ``min(rows, cols)`` singular values.
    Null-space columns of ``Psi`` are sign-normalized on their own.
    """
    M = np.asarray(M, dtype=float)
    P, s, Qt = np.linalg.svd(M, full_matrices=True)
    r = s.size
    Phi, signs = _first_nonzero_positive(P)
    Psi = Qt.T.copy()
    Psi[:, :r] *= signs[:r]
    Psi[:, r:], _ = _first_nonzero_positive(Psi[:, r:])
    return Phi, s, Psi


def gram_schmidt(M, rtol: float = 1e-12) -> np.ndarray:
    """Orthonormalize the columns of ``M`` (modified Gram-Schmidt, two passes)."""
    M = np.array(M, dtype=float)
    if M.ndim != 2:
        raise ShapeError(f"expected a matrix, got shape {M.shape}")
    Q = np.zeros_like(M)
    for j in range(M.shape[1]):
        q = M[:, j].copy()
        base = np.linalg.norm(q)
        for _ in range(2):
            for i in range(j):
                q -= (Q[:, i] @ q) * Q[:, i]
        nrm = np.linalg.norm(q)
        if base == 0 or nrm <= rtol * base:
            raise DegeneracyError(f"column {j} is linearly dependent on earlier columns")
        Q[:, j] = q / nrm
    return Q


def cg_solve(apply: Callable[[np.ndarray], np.ndarray], b, tol: float = 1e-10,
             max_iters: int = None, x0=None) -> np.ndarray:
    """Solve ``A x = b`` for SPD ``A`` given only ``apply(v) = A @ v``.

    Stops once ``||A x - b|| <= tol * ||b||``.  ``max_iters`` defaults to
    ten times the dimension.
    """
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    if max_iters is None:
        max_iters = 10 * max(n, 1)
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros_like(b)
    target = tol * bnorm
    if x0 is None:
        x = np.zeros_like(b)
        r = b.copy()
    else:
        x = np.array(x0, dtype=float)
        r = b - apply(x)
    p = r.copy()
    rs = r @ r
    target2 = target * target
    for _ in range(max_iters):
        if rs <= target2:
            return x
        Ap = apply(p)
        alpha = rs / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        rs_new = r @ r
        p *= rs_new / rs
        p += r
        rs = rs_new
    res = np.sqrt(rs)
    if res <= target:
        return x
    raise ConvergenceError(
        f"CG did not reach relative residual {tol:g} in {max_iters} iterations "
        f"(final {res / bnorm:.3e})", residual=float(res))
