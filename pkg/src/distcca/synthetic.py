"""
Synthetic two-view Gaussian model with a prescribed canonical structure.

The auto-covariances are ``I + (Z + Z^T) / ||2 (Z + Z^T)||`` for standard
normal ``Z`` (eigenvalues in [0.5, 1.5]); the cross-covariance is
``Sx^{1/2} Phi D Psi^T Sy^{1/2}`` with ``D = 0.1 I + diag(3d, 2d, d, 0, ...)``.

Randomness comes from numpy's PCG64.  A seed is expanded into independent
streams with ``SeedSequence(seed, spawn_key=(tag,))``; the model and the
sample use different tags, so ``gen_population(seed=s)`` and
``sample(seed=s)`` never share random numbers.
"""
import struct
from dataclasses import dataclass

import numpy as np

from .linalg import gram_schmidt, inv_sqrt, sqrtm_psd

MODEL_STREAM = 1
SAMPLE_STREAM = 2
DELTA_MAX = 0.3


class ModelIntegrityError(ValueError):
    """The assembled joint covariance is not positive semi-definite."""


def stream(seed, tag):
    """Generator for stream ``tag`` of ``seed``."""
    if isinstance(seed, np.random.SeedSequence):
        ss = np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + (tag,))
    else:
        ss = np.random.SeedSequence(int(seed), spawn_key=(tag,))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass
class Dataset:
    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        if self.X.shape[0] != self.Y.shape[0]:
            raise ValueError("X and Y must have the same number of rows")

    @property
    def N(self):
        return self.X.shape[0]


@dataclass
class PopulationModel:
    dx: int
    dy: int
    r: int
    delta: float
    Sigma_x: np.ndarray
    Sigma_y: np.ndarray
    Sigma_xy: np.ndarray
    U_star: np.ndarray
    V_star: np.ndarray
    rho_star: np.ndarray

    def joint_covariance(self):
        return np.block([[self.Sigma_x, self.Sigma_xy],
                         [self.Sigma_xy.T, self.Sigma_y]])


def canonical_profile(r, delta, length):
    """``0.1 + (3d, 2d, d, 0, ...)`` for the first ``r`` entries, zero padded."""
    rho = np.zeros(length)
    bumps = np.zeros(r)
    bumps[:3] = (3 * delta, 2 * delta, delta)[:r]
    rho[:r] = 0.1 + bumps
    return rho


def _normalized_cov(Z):
    S = Z + Z.T
    return np.eye(Z.shape[0]) + S / np.linalg.norm(2 * S, 2)


def gen_population(dx, dy, delta, seed, r=None) -> PopulationModel:
    """Build the population model; ``r`` defaults to ``min(dx, dy)``."""
    if dx < 2 or dy < 2:
        raise ValueError("dx and dy must be at least 2")
    if not 0 < delta <= DELTA_MAX:
        raise ValueError(f"delta must lie in (0, {DELTA_MAX}], got {delta}")
    if r is None:
        r = min(dx, dy)
    if not 1 <= r <= min(dx, dy):
        raise ValueError(f"rank r={r} out of range")
    rng = stream(seed, MODEL_STREAM)
    Sx = _normalized_cov(rng.standard_normal((dx, dx)))
    Sy = _normalized_cov(rng.standard_normal((dy, dy)))
    Phi = gram_schmidt(rng.standard_normal((dx, r)))
    Psi = gram_schmidt(rng.standard_normal((dy, r)))
    rho = canonical_profile(r, delta, max(dx, dy))
    Sxy = sqrtm_psd(Sx) @ (Phi * rho[:r]) @ Psi.T @ sqrtm_psd(Sy)
    return PopulationModel(dx, dy, r, float(delta), Sx, Sy, Sxy,
                           inv_sqrt(Sx) @ Phi, inv_sqrt(Sy) @ Psi, rho)


def _joint_factor(model):
    C = model.joint_covariance()
    try:
        return np.linalg.cholesky(C)
    except np.linalg.LinAlgError:
        w, V = np.linalg.eigh(C)
        if w[0] < -1e-10:
            raise ModelIntegrityError(f"joint covariance has eigenvalue {w[0]:.3e}")
        return V * np.sqrt(np.clip(w, 0.0, None))


def sample(model: PopulationModel, N, seed) -> Dataset:
    """Draw ``N`` i.i.d. rows from ``N(0, joint covariance)``."""
    if N < 1:
        raise ValueError("N must be positive")
    F = _joint_factor(model)
    Z = stream(seed, SAMPLE_STREAM).standard_normal((N, model.dx + model.dy))
    W = Z @ F.T
    return Dataset(np.ascontiguousarray(W[:, :model.dx]),
                   np.ascontiguousarray(W[:, model.dx:]))


_MAGIC = b"DCCAPOP1"
_FIELDS = ("Sigma_x", "Sigma_y", "Sigma_xy", "U_star", "V_star", "rho_star")


def save_model(model: PopulationModel, path):
    """Write the model as little-endian float64 blocks after a small header.

    Layout: 8-byte magic, int64 ``dx, dy, r``, float64 ``delta``, then the
    matrices ``Sigma_x, Sigma_y, Sigma_xy, U_star, V_star, rho_star`` in
    row-major order.
    """
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<qqqd", model.dx, model.dy, model.r, model.delta))
        for name in _FIELDS:
            fh.write(np.ascontiguousarray(getattr(model, name), dtype="<f8").tobytes())


def load_model(path) -> PopulationModel:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != _MAGIC:
        raise ValueError("not a population model file")
    dx, dy, r, delta = struct.unpack_from("<qqqd", raw, 8)
    shapes = [(dx, dx), (dy, dy), (dx, dy), (dx, r), (dy, r), (max(dx, dy),)]
    offset = 8 + struct.calcsize("<qqqd")
    arrays = []
    for shape in shapes:
        count = int(np.prod(shape))
        arrays.append(np.frombuffer(raw, dtype="<f8", count=count, offset=offset)
                      .reshape(shape).astype(float))
        offset += 8 * count
    if offset != len(raw):
        raise ValueError("population model file has trailing or missing bytes")
    return PopulationModel(dx, dy, r, delta, *arrays)
