"""
K-step averaging on a nonconvex test function
=============================================

Four learners, each taking a few local SGD steps before their parameters
are averaged.  We watch the squared gradient norm fall round by round.
"""

# %%
import numpy as np
import kavg

# F(w) = |w|^2 / 2 + 2 * sum(cos(w)): several stationary points, known L and F*
oracle = kavg.trig_nonconvex(dimension=10, amplitude=2.0, noise_std=1.0)
print("L =", oracle.lipschitz_L, " M =", oracle.variance_M, " F* =", oracle.lower_bound_Fstar)

# %%
# One synchronization round = every learner takes K mini-batch steps, then average.
plan = kavg.SyncPlan(learners_P=4, delay_K=4, rounds_N=40, stepsize_schedule=0.05,
                     batch_schedule=8)
w1 = np.full(10, 3.0)
trace = kavg.run_kavg(oracle, plan, w1, root_seed=0)

for r in trace.rounds[::8]:
    print(f"round {r.round:3d}  |grad|^2 = {r.grad_norm_sq:9.4f}  F = {r.objective:8.3f}"
          f"  samples = {r.samples_processed}")

# %%
# The run is a pure function of its inputs: more threads, same bits.
again = kavg.run_kavg(oracle, plan, w1, root_seed=0, threads=4)
print("identical with 4 threads:", all(np.array_equal(a.w, b.w)
                                        for a, b in zip(trace.rounds, again.rounds)))

# %%
# With P = K = B = 1 the algorithm is plain SGD, draw for draw.
one = kavg.run_kavg(oracle, kavg.SyncPlan(1, 1, 20, 0.05, 1), w1, root_seed=3)
sgd = kavg.run_sequential_sgd(oracle, 0.05, 1, 20, w1, root_seed=3)
print("P=K=B=1 equals SGD:", np.array_equal(one.rounds[-1].w, sgd.rounds[-1].w))
