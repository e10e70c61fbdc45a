"""
How many correlations are real?
===============================

Bartlett's chi-square version of Wilks' lambda on a model with three
non-zero canonical correlations.
"""
import numpy as np

from distcca import gen_population, pooled_cca, sample, shard, wilks_lambda

model = gen_population(15, 20, delta=0.1, seed=0, r=3)
data = sample(model, 60000, seed=0)
rho = pooled_cca(shard(data, 1).global_moments, 15).rho
res = wilks_lambda(rho, data.N, 15, 20)
for k in range(6):
    print(f"k={k + 1}: rho={rho[k]:.4f}  chi2={res.statistic[k]:10.2f}  df={res.df[k]:3d}  "
          f"p={res.p_value[k]:.3g}")
print("significant at 1%:", int(np.sum(res.p_sequential < 0.01)))
