"""
How many local steps between averages?
======================================

At a fixed sample budget S = N*K the bound becomes a function B(K) of the
delay.  A cheap sufficient test predicts when some K > 1 beats K = 1; we
check the prediction against the enumerated minimizer and against runs.
"""

# %%
import numpy as np
import kavg
from kavg import theory

a, b, e = 10.0, 0.1, 0.01
best = theory.optimal_k(a, b, e, delta=0.5, K_max=50)
print("K* =", best.K_star)
print("B(1..8) =", np.round(best.values[:8], 3))

# %%
oracle = kavg.trig_nonconvex(10, 2.0, noise_std=0.3)
w1 = np.zeros(10)  # the local maximum: only gradient noise moves the iterate away
S, P, B, gamma = 256, 8, 1, 0.015
gap = kavg.objective_value(oracle, w1) - oracle.lower_bound_Fstar
print("condition predicts K* > 1:",
      theory.check_kopt_gt1(gap, S, gamma, 0.5, oracle.lipschitz_L, oracle.variance_M, P, B))

# %%
for K in (1, 2, 4, 8, 16):
    plan = kavg.SyncPlan(P, K, S // K, gamma, B)
    runs = [kavg.run_kavg(oracle, plan, w1, s) for s in range(50)]
    print(f"K={K:2d}  mean avg |grad|^2 = {np.mean([r.avg_grad_norm_sq for r in runs]):.4f}")
