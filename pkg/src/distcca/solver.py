"""
Distributed CCA by shift-and-invert power iterations.

Each outer round applies ``H^{-1} B`` to the current pair, where
``H = [[rho_bar Sxx, -Sxy], [-Sxy^T, rho_bar Syy]]`` and
``B = blockdiag(Sxx, Syy)`` are the global (averaged) matrices.  The linear
system is never formed at the center.  Instead ``T'`` approximate-Newton
rounds average the local gradients ``H_k z_j - B_k z_t`` and precondition
the step with machine 1's Hessian ``H_1``, solved by matrix-free CG.
Further pairs are found one at a time after deflating every machine's
cross-covariance with Sigma-metric projectors.

Communication (logical scalars, ``d = dx + dy``) for one call of
:func:`solve_top_pair`::

    K                      shift value broadcast
    T * K*d                anchor broadcast, once per outer round
    T * T' * 2*K*d         gradient gather + iterate broadcast per inner round
    T * 2*K*d              Sigma-metric renormalization per outer round
    2*K*d                  final per-view normalization

i.e. ``K * (1 + d * (T * (2*T' + 3) + 2))``.  Each level of
:func:`solve_top_L` adds ``4*K*d`` for deflation and ``K*d`` for the
reported correlation; see :func:`top_pair_ledger_total` and
:func:`top_L_ledger_total`.
"""
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import scipy.linalg

from .baselines import CanonicalBasis
from .linalg import DegeneracyError, NearSingularError, cg_solve, truncated_svd

ZERO_METRIC = 1e-14
COLLAPSE_NORM = 1e-12


class DeflationCollapseError(DegeneracyError):
    """The new direction lies (numerically) in the span of earlier ones."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


@dataclass
class SolverConfig:
    L: int = 1
    T: int = 50
    T_prime: int = 10
    c0: float = 0.5
    omega_override: Optional[float] = None
    delta: float = 0.15
    cg_tol: float = 1e-10
    cg_max_iters: Optional[int] = None
    inner_solver: str = "cg"
    seed: int = 0
    record_trajectory: bool = False

    def __post_init__(self):
        if self.L < 1:
            raise ValueError("L must be at least 1")
        if self.T < 1 or self.T_prime < 1:
            raise ValueError("T and T_prime must be at least 1")
        if self.c0 <= 0:
            raise ValueError("c0 must be positive")
        if self.omega_override is not None and self.omega_override <= 0:
            raise ValueError("omega override must be positive")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.inner_solver not in ("cg", "direct"):
            raise ValueError("inner_solver must be 'cg' or 'direct'")


@dataclass
class ShiftState:
    rho_bar: float
    u: np.ndarray
    v: np.ndarray
    level: int = 0
    trajectory: Optional[list] = None


@dataclass
class DeflationState:
    U_done: np.ndarray
    V_done: np.ndarray
    SigmaX_U: np.ndarray
    SigmaY_V: np.ndarray

    @classmethod
    def empty(cls, dx, dy):
        return cls(np.zeros((dx, 0)), np.zeros((dy, 0)), np.zeros((dx, 0)), np.zeros((dy, 0)))

    @property
    def level(self):
        return self.U_done.shape[1]

    def project_x(self, u):
        return u - self.U_done @ (self.SigmaX_U.T @ u)

    def project_y(self, v):
        return v - self.V_done @ (self.SigmaY_V.T @ v)


@dataclass
class TopPairResult:
    u: np.ndarray
    v: np.ndarray
    state: ShiftState
    trajectory: Optional[list] = None


@dataclass
class DistributedResult:
    basis: CanonicalBasis
    trajectories: List[Optional[list]] = field(default_factory=list)
    rho_bars: List[float] = field(default_factory=list)
    ledger_scalars: int = 0


def estimate_omega(d, n, c0=0.5):
    """``c0 * sqrt(d * ln(d)^2 / n)``."""
    if d < 2 or n < 1:
        raise ValueError("need d >= 2 and n >= 1")
    if c0 <= 0:
        raise ValueError("c0 must be positive")
    return c0 * np.sqrt(d * np.log(d) ** 2 / n)


def resolve_omega(cluster, config):
    if config.omega_override is not None:
        return float(config.omega_override)
    return float(estimate_omega(cluster.d, cluster.machines[0].n, config.c0))


def top_pair_ledger_total(T, T_prime, K, d):
    return K * (1 + d * (T * (2 * T_prime + 3) + 2))


def top_L_ledger_total(L, T, T_prime, K, d):
    return L * (top_pair_ledger_total(T, T_prime, K, d) + 5 * K * d)


def init_top(machine, level, omega) -> ShiftState:
    """Shift and starting pair from machine 1's whitened (deflated) matrix.

    The returned pair has unit length in machine 1's own metric on each
    view, so its metric sum there is exactly 2.
    """
    Phi, s, Psi = truncated_svd(machine.whitened(level), 1)
    u = machine.inv_sqrt_x() @ Phi[:, 0]
    v = machine.inv_sqrt_y() @ Psi[:, 0]
    return ShiftState(float(s[0] + 1.5 * omega), u, v, level)


def local_gradient(machine, u_j, v_j, u_t, v_t, rho_bar, level):
    """``H_k (u_j; v_j) - blockdiag(Sxx_k, Syy_k) (u_t; v_t)`` from mat-vecs."""
    m = machine.moments
    Sxy = machine.deflated_xy[level]
    gx = m.Sxx @ (rho_bar * u_j - u_t) - Sxy @ v_j
    gy = m.Syy @ (rho_bar * v_j - v_t) - Sxy.T @ u_j
    return np.concatenate([gx, gy])


def hessian_apply(machine, rho_bar, level):
    """Mat-vec closure for ``H_k``; the matrix itself is never assembled."""
    m = machine.moments
    Sxx, Syy, Sxy = rho_bar * m.Sxx, rho_bar * m.Syy, machine.deflated_xy[level]
    dx = Sxx.shape[0]

    def apply(z):
        u, v = z[:dx], z[dx:]
        return np.concatenate([Sxx @ u - Sxy @ v, Syy @ v - Sxy.T @ u])

    return apply


def assemble_hessian(machine, rho_bar, level):
    """Dense ``H_k`` (for the PD check and the direct fallback)."""
    m = machine.moments
    Sxy = machine.deflated_xy[level]
    return np.block([[rho_bar * m.Sxx, -Sxy], [-Sxy.T, rho_bar * m.Syy]])


class InnerSolver:
    """Solves ``H_1 x = g`` for one level; checks ``H_1`` is PD on creation."""

    def __init__(self, machine, rho_bar, level, config):
        H = assemble_hessian(machine, rho_bar, level)
        try:
            factor = scipy.linalg.cho_factor(H)
        except np.linalg.LinAlgError:
            raise NearSingularError(
                f"machine {machine.id} Hessian is not positive definite at shift {rho_bar:.6g}",
                machine=machine.id) from None
        self.mode = config.inner_solver
        self._factor = factor if self.mode == "direct" else None
        # The d x d matrix is already at hand for the PD check; one product
        # with it equals hessian_apply and is much cheaper per CG step.
        self._apply = H.__matmul__
        self.tol = config.cg_tol
        self.max_iters = config.cg_max_iters

    def __call__(self, g):
        if self.mode == "direct":
            return scipy.linalg.cho_solve(self._factor, g)
        return cg_solve(self._apply, g, self.tol, self.max_iters)


def inner_round(cluster, state, anchor, solve=None, label="inner", config=None):
    """One approximate-Newton step ``z <- z - H_1^{-1} mean_k g_k``.

    ``state`` carries the current inner iterate and the shift, ``anchor``
    the outer iterate ``(u_t, v_t)``.  ``solve`` is an :class:`InnerSolver`;
    one is built from ``config`` when omitted.  Returns the updated ``(u, v)``.
    """
    if solve is None:
        solve = InnerSolver(cluster.machines[0], state.rho_bar, state.level,
                            config or SolverConfig())
    u_t, v_t = anchor
    grads = cluster.local_gradients(state.u, state.v, u_t, v_t, state.rho_bar, state.level)
    g = cluster.reduce_average(grads, label + "/grad")
    step = solve(g)
    z = np.concatenate([state.u, state.v]) - step
    cluster.broadcast(z, label + "/iterate")
    return z[:cluster.dx], z[cluster.dx:]


def metric_sum(cluster, u, v, label):
    su = cluster.distributed_matvec_x(u, label + "/norm-x")
    sv = cluster.distributed_matvec_y(v, label + "/norm-y")
    return float(u @ su + v @ sv)


def outer_round(cluster, state, T_prime, solve=None, label="outer", config=None) -> ShiftState:
    """``T_prime`` inner rounds from the anchor, then rescale to metric sum 2."""
    if solve is None:
        solve = InnerSolver(cluster.machines[0], state.rho_bar, state.level,
                            config or SolverConfig())
    anchor = (state.u, state.v)
    cluster.broadcast(state.u.size + state.v.size, label + "/anchor")
    current = ShiftState(state.rho_bar, state.u.copy(), state.v.copy(), state.level)
    for j in range(T_prime):
        current.u, current.v = inner_round(cluster, current, anchor, solve, f"{label}/j{j}")
    total = metric_sum(cluster, current.u, current.v, label)
    if total < ZERO_METRIC:
        raise DegeneracyError(f"iterate collapsed (metric sum {total:.3e})")
    scale = np.sqrt(2.0 / total)
    return ShiftState(state.rho_bar, current.u * scale, current.v * scale, state.level,
                      state.trajectory)


def normalize_views(cluster, u, v, label):
    nu = float(u @ cluster.distributed_matvec_x(u, label + "/final-x"))
    nv = float(v @ cluster.distributed_matvec_y(v, label + "/final-y"))
    if nu < ZERO_METRIC or nv < ZERO_METRIC:
        raise DegeneracyError("cannot normalize a zero direction")
    return u / np.sqrt(nu), v / np.sqrt(nv)


def solve_top_pair(cluster, config, level=0, omega=None, state=None) -> TopPairResult:
    """Top canonical pair of the level-``level`` cross-covariances."""
    omega = resolve_omega(cluster, config) if omega is None else omega
    tag = f"L{level + 1}"
    if state is None:
        state = init_top(cluster.machines[0], level, omega)
    cluster.broadcast(1, tag + "/shift")
    solve = InnerSolver(cluster.machines[0], state.rho_bar, level, config)
    trajectory = [] if config.record_trajectory else None
    for t in range(config.T):
        state = outer_round(cluster, state, config.T_prime, solve, f"{tag}/t{t}")
        if trajectory is not None:
            trajectory.append((state.u.copy(), state.v.copy()))
    state.trajectory = trajectory
    u, v = normalize_views(cluster, state.u, state.v, tag)
    return TopPairResult(u, v, state, trajectory)


def deflate(cluster, u_prime, v_prime, defl: DeflationState, label="deflate"):
    """Project a new pair off the found ones and deflate every machine.

    Updates ``defl`` in place and appends one deflated level to each
    machine.  Returns the Sigma-normalized ``(u, v)``.
    """
    u = defl.project_x(u_prime)
    v = defl.project_y(v_prime)
    su = cluster.distributed_matvec_x(u, label + "/norm-x")
    sv = cluster.distributed_matvec_y(v, label + "/norm-y")
    nu, nv = float(u @ su), float(v @ sv)
    if min(nu, nv) < COLLAPSE_NORM ** 2:
        raise DeflationCollapseError(
            f"projected direction has metric norm {np.sqrt(max(min(nu, nv), 0.0)):.3e}")
    nu, nv = np.sqrt(nu), np.sqrt(nv)
    u, v, su, sv = u / nu, v / nv, su / nu, sv / nv
    cluster.broadcast(u.size + v.size, label + "/directions")
    cluster.broadcast(su.size + sv.size, label + "/metric-images")
    cluster.append_deflation(u, v, su, sv)
    defl.U_done = np.column_stack([defl.U_done, u])
    defl.V_done = np.column_stack([defl.V_done, v])
    defl.SigmaX_U = np.column_stack([defl.SigmaX_U, su])
    defl.SigmaY_V = np.column_stack([defl.SigmaY_V, sv])
    return u, v


def solve_top_L(cluster, config) -> DistributedResult:
    """Top-L canonical pairs by successive deflation.

    Resets any deflation left on ``cluster`` by an earlier call.  A
    deflation collapse raises :class:`DeflationCollapseError` whose
    ``partial`` attribute holds the basis found so far.
    """
    L = config.L
    if L > min(cluster.dx, cluster.dy):
        raise ValueError(f"L={L} exceeds min(dx, dy)")
    cluster.reset_deflation()
    before = cluster.ledger.total
    omega = resolve_omega(cluster, config)
    defl = DeflationState.empty(cluster.dx, cluster.dy)
    rhos, trajectories, shifts = [], [], []
    for level in range(L):
        pair = solve_top_pair(cluster, config, level, omega)
        try:
            u, v = deflate(cluster, pair.u, pair.v, defl, f"L{level + 1}/deflate")
        except DeflationCollapseError as err:
            err.partial = CanonicalBasis(defl.U_done, defl.V_done, np.array(rhos),
                                         "dist", cluster.ledger.total - before)
            raise
        rhos.append(float(u @ cluster.distributed_matvec_xy(v, f"L{level + 1}/rho")))
        trajectories.append(pair.trajectory)
        shifts.append(pair.state.rho_bar)
    spent = cluster.ledger.total - before
    basis = CanonicalBasis(defl.U_done, defl.V_done, np.array(rhos), "dist", spent)
    return DistributedResult(basis, trajectories, shifts, spent)
