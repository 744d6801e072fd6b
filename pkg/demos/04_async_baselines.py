"""
Synchronous averaging against stale asynchronous updates
========================================================

Downpour applies each learner's gradient to a shared center that has moved
on by the time the gradient arrives.  With round-robin scheduling the delay
is P - 1 ticks, so a stepsize that is comfortable for K-AVG becomes
unstable as learners are added.
"""

# %%
import numpy as np
import kavg

oracle = kavg.trig_nonconvex(10, 2.0, noise_std=1.0)
w1 = np.full(10, 3.0)
stale = kavg.StalenessModel("round_robin")
elastic = kavg.ElasticParams(rho=0.1, comm_period=1)

# %%
print(f"{'P':>3} {'kavg':>10} {'downpour':>12} {'elastic':>10}")
for P in (2, 4, 8, 16):
    plan = kavg.SyncPlan(P, 1, 100, 0.2, 4)
    res = []
    for run in (lambda s: kavg.run_kavg(oracle, plan, w1, s),
                lambda s: kavg.run_downpour(oracle, plan, stale, w1, s),
                lambda s: kavg.run_elastic(oracle, plan, elastic, w1, s)):
        res.append(np.mean([run(s).final_grad_norm_sq for s in range(10)]))
    print(f"{P:3d} {res[0]:10.4f} {res[1]:12.4g} {res[2]:10.4f}")

# %%
# Every trace is recorded on the same sample budget, so rows line up.
plan = kavg.SyncPlan(4, 2, 3, 0.05, 2)
for name, tr in [("kavg", kavg.run_kavg(oracle, plan, w1, 0)),
                 ("downpour", kavg.run_downpour(oracle, plan, stale, w1, 0)),
                 ("elastic", kavg.run_elastic(oracle, plan, elastic, w1, 0))]:
    print(name, [r.samples_processed for r in tr.rounds])
