"""
Distributed CCA against the pooled estimate
===========================================

Draw a two-view Gaussian sample, spread it over 30 machines and compare
the distributed top pair with classical CCA on the pooled data.
"""
import numpy as np

from distcca import gen_population, pooled_cca, sample, shard
from distcca.metrics import gapfree_error_top, population_frame
from distcca.solver import SolverConfig, solve_top_pair

model = gen_population(15, 20, delta=0.15, seed=0)
print("population correlations:", np.round(model.rho_star[:5], 3))

cluster = shard(sample(model, 2000 * 30, seed=0), K=30)
g = cluster.global_moments

###############################################################################
# The pooled estimate sees every row at once.
pooled = pooled_cca(g, 1)
print("pooled rho_1:", pooled.rho[0])

###############################################################################
# The distributed solve only ever moves d-vectors between machines.
res = solve_top_pair(cluster, SolverConfig(T=50, T_prime=10))
print("distributed rho_1:", res.u @ g.Sxy @ res.v)

frame = population_frame(model)
for name, u, v in (("pooled", pooled.U[:, 0], pooled.V[:, 0]), ("dist", res.u, res.v)):
    err = gapfree_error_top(u, v, frame, 0.15, g.Sxx, g.Syy)
    print(f"{name:>7s} log error: {np.log(err):.3f}")

print("scalars sent:", cluster.ledger.total)
