"""
Error against outer iterations
==============================

One replication of the iterations sweep: the distributed error per outer
round next to the three one-shot lines.
"""
from distcca.harness import ExperimentSpec, run_iterations_sweep

spec = ExperimentSpec("iterations", K=(30,), deltas=(0.15,), T=30, T_prime=10,
                      replications=3)
rows = run_iterations_sweep(spec)

for r in rows:
    if r.method != "dist":
        print(f"{r.method:>12s}: {r.mean_log_error:8.3f}")
for r in rows:
    if r.method == "dist" and r.sweep % 5 == 0:
        print(f"   dist T={int(r.sweep):2d}: {r.mean_log_error:8.3f}  ({r.ledger_scalars} scalars)")
