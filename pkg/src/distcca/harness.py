"""
Replicated experiments and CSV output.

Each sweep produces one :class:`ResultRow` per (sweep value, method): the
mean natural-log error over the replications, its standard error, and the
logical scalar traffic of one run.

Replication ``i`` of master seed ``s`` uses
``SeedSequence(s, spawn_key=(REPLICATION_KEY, i))``; the population model
and the sample are then drawn from its own child streams (see
:mod:`distcca.synthetic`).  The same replication seed is reused at every
sweep value, so curves are compared on common random numbers.
"""
import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from typing import List, Optional, Sequence

import numpy as np

from .baselines import naive_dc, pooled_cca, whitened_dc
from .cluster import shard
from .metrics import (gapfree_error_top, gapfree_error_topL, metric_orthonormalize,
                      pooled_frame, population_frame)
from .solver import SolverConfig, solve_top_L, top_L_ledger_total
from .synthetic import gen_population, sample

REPLICATION_KEY = 7
KINDS = ("iterations", "gap", "machines", "realdata")
METHODS = ("pooled", "naive-dc", "whitened-dc", "dist")
# Naive DC output lives in whitened coordinates; it is only ever scored
# after Sigma-orthonormalization (span preserving).
CSV_HEADER = ["kind", "sweep", "method", "L", "mean_log_error", "stderr", "reps",
              "ledger_scalars"]
MACHINES_DEFAULT = (8, 16, 32, 64, 128, 256, 512)
REALDATA_MACHINES = (2, 4, 8, 16, 25, 50, 80)


@dataclass
class ExperimentSpec:
    kind: str
    dx: int = 15
    dy: int = 20
    r: Optional[int] = None
    n: int = 2000
    K: Sequence[int] = (30,)
    deltas: Sequence[float] = (0.15,)
    T: int = 50
    T_prime: int = 10
    L: int = 1
    replications: int = 50
    seed: int = 0
    checkpoints: Optional[Sequence[int]] = None
    metric_delta: Optional[float] = None
    methods: Sequence[str] = METHODS
    c0: float = 0.5
    omega: Optional[float] = None
    workers: int = 1
    center: str = "none"
    ridge: float = 0.0
    dataset: Optional[str] = None
    output: Optional[str] = None

    def __post_init__(self):
        self.K = tuple(int(k) for k in self.K)
        self.deltas = tuple(float(x) for x in self.deltas)
        self.methods = tuple(self.methods)
        if self.checkpoints is not None:
            self.checkpoints = tuple(sorted(set(int(t) for t in self.checkpoints)))
        self.validate()

    def validate(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if not self.K or not self.deltas or not self.methods:
            raise ValueError("K, deltas and methods must be non-empty")
        if min(self.K) < 1:
            raise ValueError("K values must be positive")
        bad = set(self.methods) - set(METHODS)
        if bad:
            raise ValueError(f"unknown methods {sorted(bad)}")
        if self.T < 1 or self.T_prime < 1 or self.L < 1 or self.n < 1:
            raise ValueError("T, T_prime, L and n must be positive")
        if self.checkpoints is not None and (not self.checkpoints or
                                             self.checkpoints[0] < 1 or
                                             self.checkpoints[-1] > self.T):
            raise ValueError("checkpoints must lie in 1..T")
        if self.metric_delta is not None and not 0 < self.metric_delta < 1:
            raise ValueError("metric_delta must lie in (0, 1)")

    def solver_config(self, T=None):
        return SolverConfig(L=self.L, T=T or self.T, T_prime=self.T_prime, c0=self.c0,
                            omega_override=self.omega)


@dataclass
class ResultRow:
    kind: str
    sweep: float
    method: str
    L: int
    mean_log_error: float
    stderr: float
    reps: int
    ledger_scalars: int

    def as_list(self):
        return [self.kind, _fmt(self.sweep), self.method, str(self.L),
                repr(float(self.mean_log_error)), repr(float(self.stderr)),
                str(self.reps), str(self.ledger_scalars)]


def _fmt(x):
    if isinstance(x, (int, np.integer)) or float(x).is_integer():
        return str(int(x))
    return repr(float(x))


def replication_seed(master, rep):
    return np.random.SeedSequence(int(master), spawn_key=(REPLICATION_KEY, int(rep)))


def log_error(err):
    return float(np.log(max(err, np.finfo(float).tiny)))


def score(U, V, frame, delta, moments, orthonormalize=False):
    """Gap-free error of a basis; top-1 form for one column, spectral form otherwise."""
    U = np.atleast_2d(np.asarray(U).T).T
    V = np.atleast_2d(np.asarray(V).T).T
    if orthonormalize:
        U = metric_orthonormalize(U, moments.Sxx)
        V = metric_orthonormalize(V, moments.Syy)
    if U.shape[1] == 1:
        u, v = U[:, 0], V[:, 0]
        u = u / np.sqrt(u @ moments.Sxx @ u)
        v = v / np.sqrt(v @ moments.Syy @ v)
        return gapfree_error_top(u, v, frame, delta, moments.Sxx, moments.Syy)
    return gapfree_error_topL(U, V, frame, delta, moments.Sxx, moments.Syy)


def evaluate_methods(cluster, frame, delta, spec, checkpoints):
    """Errors (per method) and traffic on one cluster.

    ``dist`` yields one error per checkpoint; the baselines one each.
    """
    g = cluster.global_moments
    errors, traffic = {}, {}
    if "pooled" in spec.methods:
        b = pooled_cca(g, spec.L)
        errors["pooled"], traffic["pooled"] = [score(b.U, b.V, frame, delta, g)], [0]
    for name, fn in (("naive-dc", naive_dc), ("whitened-dc", whitened_dc)):
        if name in spec.methods:
            b = fn(cluster, spec.L)
            errors[name] = [score(b.U, b.V, frame, delta, g, orthonormalize=True)]
            traffic[name] = [b.ledger_scalars]
    if "dist" in spec.methods:
        errors["dist"], traffic["dist"] = _dist_errors(cluster, frame, delta, spec, checkpoints)
    return errors, traffic


def _dist_errors(cluster, frame, delta, spec, checkpoints):
    g = cluster.global_moments
    if spec.L == 1:
        # One run; every outer iterate is what a run stopped there would return
        # before its final per-view normalization, which the scorer applies.
        cfg = replace(spec.solver_config(max(checkpoints)), record_trajectory=True)
        res = solve_top_L(cluster, cfg)
        traj = res.trajectories[0]
        errs = [score(traj[t - 1][0], traj[t - 1][1], frame, delta, g) for t in checkpoints]
        # Traffic of a run stopped at t follows from the closed form; the
        # full run's own ledger pins that form down.
        traffic = [top_L_ledger_total(1, t, spec.T_prime, cluster.K, cluster.d)
                   for t in checkpoints]
        if res.ledger_scalars != traffic[-1]:
            raise AssertionError("ledger total differs from its closed form")
        return errs, traffic
    errs, traffic = [], []
    for t in checkpoints:
        res = solve_top_L(cluster, spec.solver_config(t))
        errs.append(score(res.basis.U, res.basis.V, frame, delta, g))
        traffic.append(res.ledger_scalars)
    return errs, traffic


def _synthetic_replication(args):
    spec, K, delta, rep, checkpoints = args
    ss = replication_seed(spec.seed, rep)
    model = gen_population(spec.dx, spec.dy, delta, ss, spec.r)
    cluster = shard(sample(model, spec.n * K, ss), K, center=spec.center, ridge=spec.ridge)
    metric_delta = spec.metric_delta or delta
    return evaluate_methods(cluster, population_frame(model), metric_delta, spec, checkpoints)


def _run_replications(spec, K, delta, checkpoints):
    jobs = [(spec, K, delta, rep, checkpoints) for rep in range(spec.replications)]
    if spec.workers > 1 and spec.replications > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            return list(pool.map(_synthetic_replication, jobs))
    return [_synthetic_replication(job) for job in jobs]


def _aggregate(kind, L, sweep_values, method, per_rep, traffic):
    logs = np.array([[log_error(e) for e in errs] for errs in per_rep])
    reps = logs.shape[0]
    mean = logs.mean(axis=0)
    se = logs.std(axis=0, ddof=1) / np.sqrt(reps) if reps > 1 else np.zeros_like(mean)
    return [ResultRow(kind, s, method, L, float(m), float(e), reps, int(c))
            for s, m, e, c in zip(sweep_values, mean, se, traffic)]


def _collect(kind, spec, results, sweep, checkpoints=None):
    rows = []
    for method in spec.methods:
        per_rep = [r[0][method] for r in results]
        traffic = results[0][1][method]
        values = checkpoints if (method == "dist" and checkpoints) else [sweep]
        rows += _aggregate(kind, spec.L, values, method, per_rep, traffic)
    return rows


def run_iterations_sweep(spec) -> List[ResultRow]:
    """Distributed error at each checkpoint (default ``1..T``); baselines once."""
    checkpoints = spec.checkpoints or tuple(range(1, spec.T + 1))
    results = _run_replications(spec, spec.K[0], spec.deltas[0], checkpoints)
    # Baselines sit on the sweep axis at the last checkpoint.
    return _collect("iterations", spec, results, checkpoints[-1], checkpoints)


def run_gap_sweep(spec) -> List[ResultRow]:
    rows = []
    for delta in spec.deltas:
        results = _run_replications(spec, spec.K[0], delta, (spec.T,))
        rows += _collect("gap", spec, results, delta)
    return rows


def run_machines_sweep(spec) -> List[ResultRow]:
    rows = []
    for K in spec.K:
        results = _run_replications(spec, K, spec.deltas[0], (spec.T,))
        rows += _collect("machines", spec, results, K)
    return rows


def run_realdata(spec, data) -> List[ResultRow]:
    """Errors against the pooled estimate for each machine count.

    ``data`` is a :class:`~distcca.datasets.ViewPair`.  The split is
    deterministic, so each configuration is a single run.
    """
    delta = spec.metric_delta or 0.15
    methods = [m for m in spec.methods if m != "pooled"]
    rows = []
    for K in spec.K:
        cluster = shard(data, K, center=spec.center, ridge=spec.ridge)
        frame = pooled_frame(cluster.global_moments)
        errors, traffic = evaluate_methods(cluster, frame, delta,
                                           replace(spec, methods=tuple(methods)), (spec.T,))
        for m in methods:
            rows += _aggregate("realdata", spec.L, [K], m, [errors[m]], traffic[m])
    return rows


def run(spec, data=None) -> List[ResultRow]:
    if spec.kind == "iterations":
        return run_iterations_sweep(spec)
    if spec.kind == "gap":
        return run_gap_sweep(spec)
    if spec.kind == "machines":
        return run_machines_sweep(spec)
    if data is None:
        raise ValueError("realdata runs need a loaded dataset")
    return run_realdata(spec, data)


def emit_csv(rows, path):
    """UTF-8, LF line endings, floats in round-trip ``repr`` form."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in rows:
            writer.writerow(row.as_list())


def read_csv(path) -> List[ResultRow]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != CSV_HEADER:
            raise ValueError(f"unexpected header {header}")
        return [ResultRow(k, float(s), m, int(L), float(e), float(se), int(r), int(led))
                for k, s, m, L, e, se, r, led in reader]


def write_metadata(spec, path, extra=None):
    """Sidecar JSON with every setting that shaped the numbers."""
    meta = asdict(spec)
    meta["omega_rule"] = "override" if spec.omega is not None else f"c0={spec.c0}"
    if spec.kind == "realdata" and spec.metric_delta is None:
        meta["metric_delta"] = 0.15
    meta.update(extra or {})
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return meta
