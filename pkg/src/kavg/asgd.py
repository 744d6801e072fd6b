"""Asynchronous SGD baselines simulated as deterministic event schedules.

Downpour: one central parameter and a logical clock.  At tick ``t`` learner
``t mod P`` applies a mini-batch gradient evaluated at the center as it was
``tau(t)`` ticks earlier.

Elastic averaging: each learner runs SGD and, every ``comm_period`` local
steps, is pulled towards the center while the center is pulled towards the
learners (symmetric elastic force of strength ``rho``).  Both updates use
the values from before the step.

Both record the center once per ``P * K * B_n`` samples, the same budget as a
K-AVG round, so traces of the three algorithms line up row for row.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import oracles, streams
from .engine import RunTrace, SyncPlan, TraceBuilder, _start, average_params
from .errors import ContractViolation
from .oracles import ObjectiveOracle

ROUND_ROBIN = "round_robin"
UNIFORM_RANDOM = "uniform_random"


@dataclass(frozen=True)
class StalenessModel:
    kind: str = ROUND_ROBIN
    max_staleness: Optional[int] = None  # None means P

    def __post_init__(self):
        if self.kind not in (ROUND_ROBIN, UNIFORM_RANDOM):
            raise ContractViolation(f"unknown staleness model {self.kind!r}")
        if self.max_staleness is not None and self.max_staleness < 0:
            raise ContractViolation("max_staleness must be nonnegative")

    def bound(self, P: int) -> int:
        return P if self.max_staleness is None else self.max_staleness

    def tau(self, t: int, P: int, root_seed: int) -> int:
        tmax = self.bound(P)
        if self.kind == ROUND_ROBIN:
            return min(P - 1, tmax)
        gen = streams.block_generator(root_seed, t, domain=streams.STALENESS)
        return int(gen.integers(0, tmax + 1))


@dataclass(frozen=True)
class ElasticParams:
    rho: float
    comm_period: int = 1

    def __post_init__(self):
        if self.rho < 0:
            raise ContractViolation("rho must be nonnegative")
        if self.comm_period < 1:
            raise ContractViolation("comm_period must be a positive integer")


def run_downpour(oracle: ObjectiveOracle, plan: SyncPlan, staleness: StalenessModel, w1,
                 root_seed: int) -> RunTrace:
    """Simulate a Downpour-style parameter server with bounded staleness.

    The trace's ``extras['staleness']`` lists the snapshot age of every
    applied gradient, in tick order.
    """
    P, K, N = plan.learners_P, plan.delay_K, plan.rounds_N
    tmax = staleness.bound(P)
    if tmax > P:
        raise ContractViolation(f"max_staleness {tmax} exceeds the number of learners {P}")
    center = _start(oracle, w1)
    history = deque([center], maxlen=tmax + 1)  # history[-1 - a] is the center a ticks ago
    ages: list[int] = []
    trace = TraceBuilder(oracle)
    trace.push(center, 0, 0)
    samples, t = 0, 0
    for n in range(N):
        gamma, batch = plan.gamma(n + 1), plan.batch(n + 1)
        with np.errstate(all="ignore"):
            for _ in range(P * K):
                age = min(staleness.tau(t, P, root_seed), t)
                snapshot = history[-1 - age]
                g = oracles.minibatch_gradient(oracle, snapshot, root_seed, t, t % P, 0, batch)
                center = center - gamma * g
                history.append(center)
                ages.append(age)
                t += 1
        samples += P * K * batch
        if not trace.push(center, samples, n + 1):
            break
    return trace.finish(N, staleness=ages)


def run_elastic(oracle: ObjectiveOracle, plan: SyncPlan, elastic: ElasticParams, w1,
                root_seed: int) -> RunTrace:
    """Simulate synchronous elastic averaging; the trace follows the center variable.

    ``extras['learners']`` holds the learner parameters at the end of the run.
    """
    P, K, N = plan.learners_P, plan.delay_K, plan.rounds_N
    center = _start(oracle, w1)
    learners = [center.copy() for _ in range(P)]
    trace = TraceBuilder(oracle)
    trace.push(center, 0, 0)
    samples, step = 0, 0
    for n in range(N):
        gamma, batch = plan.gamma(n + 1), plan.batch(n + 1)
        with np.errstate(all="ignore"):
            for k in range(K):
                step += 1
                grads = [oracles.minibatch_gradient(oracle, learners[j], root_seed, n, j, k, batch)
                         for j in range(P)]
                if step % elastic.comm_period == 0:
                    pull = gamma * elastic.rho
                    diffs = [w - center for w in learners]
                    learners = [w - gamma * g - pull * d for w, g, d in zip(learners, grads, diffs)]
                    total = diffs[0].copy()
                    for d in diffs[1:]:
                        total += d
                    center = center + pull * total
                else:
                    learners = [w - gamma * g for w, g in zip(learners, grads)]
        samples += P * K * batch
        finite = all(np.all(np.isfinite(w)) for w in learners)
        if not finite or not trace.push(center, samples, n + 1):
            trace.diverged = True
            break
    return trace.finish(N, learners=learners, learner_mean=average_params(learners))
