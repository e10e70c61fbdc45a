"""
Checking the solver against dense operators
===========================================

On a tiny instance the shift-and-invert map can be formed explicitly.
One exact outer round must agree with it to rounding error.
"""
import numpy as np

from distcca import gen_population, sample, shard
from distcca.metrics import diagnostics
from distcca.solver import estimate_omega
from distcca.testing import build_explicit, oracle_selftest

print("max deviation per seed:", ["%.1e" % x for x in oracle_selftest(seeds=range(5))])

model = gen_population(4, 4, 0.2, seed=0)
cluster = shard(sample(model, 4000, seed=0), K=4)
omega = estimate_omega(cluster.d, cluster.machines[0].n)
ops = build_explicit(cluster.global_moments, cluster.machines[0].moments, 1.0)
print("eigenvalues of C:", np.round(ops.eigvals, 4))

d = diagnostics(cluster, omega)
print(f"kappa={d.kappa:.4f}  gamma={d.gamma_hat:.4f}  omega={omega:.4f}  "
      f"2*kappa <= omega: {d.theorem1_condition_met}")
