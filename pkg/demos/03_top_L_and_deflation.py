"""
Several canonical pairs by deflation
====================================

After each pair is found every machine removes it from its own
cross-covariance; the next solve then targets the following pair.
"""
import numpy as np

from distcca import gen_population, pooled_cca, sample, shard
from distcca.metrics import gapfree_error_topL, population_frame
from distcca.solver import SolverConfig, solve_top_L

model = gen_population(15, 20, delta=0.2, seed=1)
cluster = shard(sample(model, 2000 * 16, seed=1), K=16)
g = cluster.global_moments

res = solve_top_L(cluster, SolverConfig(L=3, T=50, T_prime=10))
basis = res.basis
print("distributed rho:", np.round(basis.rho, 4))
print("pooled rho:     ", np.round(pooled_cca(g, 3).rho, 4))
print("U^T Sxx U:\n", np.round(basis.U.T @ g.Sxx @ basis.U, 10))

frame = population_frame(model)
print("top-3 log error:", np.log(gapfree_error_topL(basis.U, basis.V, frame, 0.2, g.Sxx, g.Syy)))
print("shift per level:", np.round(res.rho_bars, 4))
