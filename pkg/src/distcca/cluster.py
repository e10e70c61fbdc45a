"""
Deterministic star-network simulation.

A :class:`Cluster` owns K machines, each holding a contiguous block of rows
and its local second moments.  All traffic between the center and the
workers goes through :meth:`Cluster.broadcast` and
:meth:`Cluster.reduce_average`, which log every transmitted scalar in a
:class:`MessageLedger`.  Per-machine products are evaluated on stacked
arrays, optionally split across a thread pool; reductions always run
sequentially in machine-id order, so results do not depend on the number
of workers.
"""
import csv
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .linalg import NearSingularError, inv_sqrt

TO_CENTER = "to-center"
TO_WORKERS = "to-workers"
CENTER_POLICIES = ("none", "global-mean")


@dataclass
class CovarianceTriple:
    """Second moments ``(Sxx, Syy, Sxy)`` estimated from ``n`` rows."""
    Sxx: np.ndarray
    Syy: np.ndarray
    Sxy: np.ndarray
    n: int

    @classmethod
    def from_data(cls, X, Y, mean_x=None, mean_y=None, ridge=0.0):
        if mean_x is not None:
            X = X - mean_x
        if mean_y is not None:
            Y = Y - mean_y
        n = X.shape[0]
        Sxx = X.T @ X / n
        Syy = Y.T @ Y / n
        if ridge:
            Sxx[np.diag_indices_from(Sxx)] += ridge
            Syy[np.diag_indices_from(Syy)] += ridge
        return cls(Sxx, Syy, X.T @ Y / n, n)

    @property
    def dx(self):
        return self.Sxx.shape[0]

    @property
    def dy(self):
        return self.Syy.shape[0]


class MessageLedger:
    """Append-only log of ``(round, direction, machine, scalars)`` records."""

    def __init__(self):
        self.records = []
        self._total = 0

    def record(self, round_label, direction, machine, scalars):
        self.records.append((round_label, direction, int(machine), int(scalars)))
        self._total += int(scalars)

    def record_all(self, round_label, direction, machines, scalars):
        scalars = int(scalars)
        self.records.extend((round_label, direction, m, scalars) for m in machines)
        self._total += scalars * len(machines)

    def __len__(self):
        return len(self.records)

    @property
    def total(self):
        return self._total

    def total_by(self, round_label=None, direction=None, prefix=None):
        out = 0
        for rnd, dirn, _, scalars in self.records:
            if round_label is not None and rnd != round_label:
                continue
            if prefix is not None and not rnd.startswith(prefix):
                continue
            if direction is not None and dirn != direction:
                continue
            out += scalars
        return out

    def totals_by_round(self):
        out = {}
        for rnd, _, _, scalars in self.records:
            out[rnd] = out.get(rnd, 0) + scalars
        return out

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["round", "direction", "machine", "scalars"])
            writer.writerows(self.records)


@dataclass
class MachineShard:
    id: int
    X: np.ndarray
    Y: np.ndarray
    moments: CovarianceTriple
    deflated_xy: List[np.ndarray] = field(default_factory=list)
    _wx: Optional[np.ndarray] = field(default=None, repr=False)
    _wy: Optional[np.ndarray] = field(default=None, repr=False)
    _t0: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def n(self):
        return self.moments.n

    def inv_sqrt_x(self):
        if self._wx is None:
            self._wx = self._inv_sqrt(self.moments.Sxx, "x")
        return self._wx

    def inv_sqrt_y(self):
        if self._wy is None:
            self._wy = self._inv_sqrt(self.moments.Syy, "y")
        return self._wy

    def _inv_sqrt(self, S, view):
        try:
            return inv_sqrt(S)
        except NearSingularError as err:
            raise NearSingularError(f"machine {self.id}, {view}-view moments: {err}",
                                    eigenvalue=err.eigenvalue, machine=self.id) from None

    def whitened(self, level=0):
        """Local whitened cross-covariance of the (deflated) level ``level``."""
        return self.inv_sqrt_x() @ self.deflated_xy[level] @ self.inv_sqrt_y()

    @property
    def whitened_local(self):
        if self._t0 is None:
            self._t0 = self.whitened(0)
        return self._t0


class Cluster:
    """K machines around a center; see :func:`shard` for construction."""

    def __init__(self, blocks, center="none", ridge=0.0, workers=1):
        if center not in CENTER_POLICIES:
            raise ValueError(f"center policy must be one of {CENTER_POLICIES}")
        self.ledger = MessageLedger()
        self.workers = max(1, int(workers))
        self.center = center
        self.ridge = ridge
        self.sizes = np.array([X.shape[0] for X, _ in blocks])
        self.K = len(blocks)
        self.N = int(self.sizes.sum())
        self.equal = bool(np.all(self.sizes == self.sizes[0]))
        self.weights = self.sizes / self.N
        self.ids = list(range(1, self.K + 1))
        self.dx = blocks[0][0].shape[1]
        self.dy = blocks[0][1].shape[1]

        mean_x = mean_y = None
        if center == "global-mean":
            local_means = np.stack([np.concatenate([X.mean(axis=0), Y.mean(axis=0)])
                                    for X, Y in blocks])
            mean = self.reduce_average(local_means, "center/means")
            self.broadcast(mean, "center/means")
            mean_x, mean_y = mean[:self.dx], mean[self.dx:]
        self.mean_x, self.mean_y = mean_x, mean_y

        moments = [CovarianceTriple.from_data(X, Y, mean_x, mean_y, ridge) for X, Y in blocks]
        self._Sxx = np.stack([m.Sxx for m in moments])
        self._Syy = np.stack([m.Syy for m in moments])
        self._Sxy = [np.stack([m.Sxy for m in moments])]
        self.machines = []
        for k, (X, Y) in enumerate(blocks):
            local = CovarianceTriple(self._Sxx[k], self._Syy[k], self._Sxy[0][k], X.shape[0])
            self.machines.append(MachineShard(k + 1, X, Y, local, [local.Sxy]))
        self.global_moments = CovarianceTriple(
            self.combine(self._Sxx), self.combine(self._Syy), self.combine(self._Sxy[0]), self.N)

    @property
    def d(self):
        return self.dx + self.dy

    @property
    def levels(self):
        return len(self._Sxy)

    # -- arithmetic helpers (no traffic) ---------------------------------

    def combine(self, stack):
        """Size-weighted average of per-machine values, summed in id order."""
        stack = np.asarray(stack)
        if self.equal:
            acc = stack[0].copy()
            for k in range(1, self.K):
                acc += stack[k]
            return acc / self.K
        acc = self.weights[0] * stack[0]
        for k in range(1, self.K):
            acc += self.weights[k] * stack[k]
        return acc

    def per_machine(self, func):
        """Evaluate ``func(lo, hi)`` on contiguous machine ranges and stack the results.

        ``func`` must return one row per machine in ``[lo, hi)``.  With more
        than one worker the ranges run on a thread pool.
        """
        if self.workers == 1 or self.K == 1:
            return func(0, self.K)
        edges = np.linspace(0, self.K, min(self.workers, self.K) + 1).astype(int)
        spans = list(zip(edges[:-1], edges[1:]))
        with ThreadPoolExecutor(max_workers=len(spans)) as pool:
            parts = list(pool.map(lambda s: func(*s), spans))
        return np.concatenate(parts, axis=0)

    # -- traffic ---------------------------------------------------------

    def broadcast(self, vector, round_label="broadcast"):
        """Center sends ``vector`` (or a length) to every machine."""
        m = vector if isinstance(vector, (int, np.integer)) else np.size(vector)
        self.ledger.record_all(round_label, TO_WORKERS, self.ids, m)

    def reduce_average(self, vectors, round_label="gather"):
        """Every machine sends one length-m vector; returns their weighted average."""
        vectors = np.asarray(vectors, dtype=float)
        if vectors.ndim != 2 or vectors.shape[0] != self.K:
            raise ValueError(f"expected {self.K} vectors, got array of shape {vectors.shape}")
        self.ledger.record_all(round_label, TO_CENTER, self.ids, vectors.shape[1])
        return self.combine(vectors)

    def gather(self, rows, round_label="gather"):
        """Every machine sends its row to the center unchanged (no averaging)."""
        rows = np.asarray(rows)
        self.ledger.record_all(round_label, TO_CENTER, self.ids, rows[0].size)
        return rows

    def _matvec(self, stack, w, round_label):
        w = np.asarray(w, dtype=float)
        if w.shape != (stack.shape[2],):
            raise ValueError(f"vector of length {stack.shape[2]} expected, got {w.shape}")
        self.broadcast(w, round_label)
        local = self.per_machine(lambda lo, hi: stack[lo:hi] @ w)
        return self.reduce_average(local, round_label)

    def distributed_matvec_x(self, u, round_label="matvec-x"):
        """Global ``Sxx @ u`` from local products (one broadcast, K gathers)."""
        return self._matvec(self._Sxx, u, round_label)

    def distributed_matvec_y(self, v, round_label="matvec-y"):
        return self._matvec(self._Syy, v, round_label)

    def distributed_matvec_xy(self, v, round_label="matvec-xy"):
        """Global (undeflated) ``Sxy @ v``."""
        return self._matvec(self._Sxy[0], v, round_label)

    # -- solver support (local computation only) -------------------------

    def local_gradients(self, u_j, v_j, u_t, v_t, rho_bar, level):
        """Stack of per-machine gradients ``H_k z_j - B_k z_t``, shape ``(K, d)``."""
        Sxy = self._Sxy[level]
        ax = rho_bar * u_j - u_t
        ay = rho_bar * v_j - v_t

        def chunk(lo, hi):
            gx = self._Sxx[lo:hi] @ ax - Sxy[lo:hi] @ v_j
            gy = self._Syy[lo:hi] @ ay - u_j @ Sxy[lo:hi]
            return np.concatenate([gx, gy], axis=1)

        return self.per_machine(chunk)

    def append_deflation(self, u, v, sx_u, sy_v):
        """Each machine forms ``(I - sx_u u^T) S (I - v sy_v^T)`` from its newest level."""
        S = self._Sxy[-1]

        def chunk(lo, hi):
            block = S[lo:hi]
            uS = u @ block                       # (k, dy)
            Sv = block @ v                       # (k, dx)
            uSv = Sv @ u                         # (k,)
            out = block - sx_u[None, :, None] * uS[:, None, :]
            out -= Sv[:, :, None] * sy_v[None, None, :]
            out += uSv[:, None, None] * np.outer(sx_u, sy_v)[None]
            return out

        new = self.per_machine(chunk)
        self._Sxy.append(new)
        for k, machine in enumerate(self.machines):
            machine.deflated_xy.append(new[k])
        return new

    def reset_deflation(self):
        del self._Sxy[1:]
        for machine in self.machines:
            del machine.deflated_xy[1:]

    def global_deflated_xy(self, level):
        """Evaluator-side average of the level-``level`` cross-covariances."""
        return self.combine(self._Sxy[level])


def shard(dataset, K, center="none", ridge=0.0, workers=1) -> Cluster:
    """Split rows contiguously over ``K`` machines.

    When ``K`` does not divide ``N`` the first ``N mod K`` machines get one
    extra row.
    """
    X, Y = dataset.X, dataset.Y
    N = X.shape[0]
    if K < 1:
        raise ValueError("K must be at least 1")
    if K > N:
        raise ValueError(f"cannot split {N} rows over {K} machines")
    d = X.shape[1] + Y.shape[1]
    if N < K * d:
        warnings.warn(f"only {N // K} rows per machine for dimension {d}", stacklevel=2)
    base, extra = divmod(N, K)
    sizes = [base + (k < extra) for k in range(K)]
    starts = np.concatenate([[0], np.cumsum(sizes)])
    blocks = [(X[starts[k]:starts[k + 1]], Y[starts[k]:starts[k + 1]]) for k in range(K)]
    return Cluster(blocks, center=center, ridge=ridge, workers=workers)
