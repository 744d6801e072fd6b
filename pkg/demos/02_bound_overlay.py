"""
Empirical gradient norms against the fixed-stepsize bound
=========================================================

For stepsizes that pass the admissibility check the ensemble average of
(1/N) sum |grad F(w_n)|^2 must sit below the bound computed from L, M and
F(w_1) - F*.  We sweep a few (K, P, gamma) points.
"""

# %%
import numpy as np
import kavg
from kavg import theory

oracle = kavg.trig_nonconvex(10, 2.0, noise_std=1.0)
w1 = np.ones(10)
gap = kavg.objective_value(oracle, w1) - oracle.lower_bound_Fstar
B, N, delta = 4, 50, 0.5

# %%
print(f"{'K':>3} {'P':>3} {'gamma':>6} {'admissible':>10} {'empirical':>10} {'bound':>9}")
for K, P, gamma in [(1, 4, 0.1), (4, 8, 0.05), (8, 2, 0.02), (4, 4, 0.15)]:
    ok = theory.check_fixed_stepsize_conditions(oracle.lipschitz_L, gamma, K, delta).admissible
    plan = kavg.SyncPlan(P, K, N, gamma, B, delta)
    emp = np.mean([kavg.run_kavg(oracle, plan, w1, s).avg_grad_norm_sq for s in range(40)])
    bound = theory.theorem1_bound(
        theory.BoundInputs(oracle.lipschitz_L, oracle.variance_M, gap, K, P, B, gamma, delta, N),
        warn=False)
    print(f"{K:3d} {P:3d} {gamma:6.2f} {str(ok):>10} {emp:10.4f} {bound:9.3f}")

# %%
# The bound's noise term shrinks with P; the ASGD bound's staleness term grows linearly.
x = theory.BoundInputs(oracle.lipschitz_L, oracle.variance_M, gap, 4, 1, B, 0.05, delta, N)
for row in theory.scalability_table(x, C0=1.0, C1=1.0, P_values=[1, 2, 4, 8, 16]).rows:
    print(f"P={row.P:2d}  kavg={row.kavg_bound:8.4f}  asgd={row.asgd_bound:8.4f}")
