"""K-step averaging SGD (K-AVG) over P simulated learners, and plain SGD.

Each global round ``n`` every learner starts from the shared iterate, takes
``K`` mini-batch steps with the round's stepsize and batch size, and the
learner iterates are averaged in ascending learner order.  All randomness
comes from counter-based streams addressed by ``(n, j, k, s)``, so a run is
a pure function of its inputs whatever the thread count.

Trace rows are numbered ``0..N``: row ``r`` holds the shared iterate after
``r`` rounds (row 0 is the starting point).  ``avg_grad_norm_sq`` averages
rows ``0..N-1``, i.e. the ``N`` iterates a round starts from.
"""
from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import oracles
from .errors import ContractViolation
from .oracles import ObjectiveOracle
from .schedules import ScheduleSpec, as_schedule, validate


@dataclass(frozen=True)
class SyncPlan:
    learners_P: int
    delay_K: int
    rounds_N: int
    stepsize_schedule: ScheduleSpec
    batch_schedule: ScheduleSpec = 1
    delta: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "stepsize_schedule", as_schedule(self.stepsize_schedule))
        object.__setattr__(self, "batch_schedule", as_schedule(self.batch_schedule))
        for name in ("learners_P", "delay_K", "rounds_N"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ContractViolation(f"{name} must be a positive integer, got {v!r}")
        if not 0 < self.delta < 1:
            raise ContractViolation("delta must lie in (0, 1)")
        try:
            validate(self.stepsize_schedule, self.rounds_N, "gamma")
            validate(self.batch_schedule, self.rounds_N, "batch")
        except (ValueError, IndexError) as exc:
            raise ContractViolation(str(exc)) from None

    def gamma(self, n: int) -> float:
        """Stepsize of (1-based) round ``n``."""
        return self.stepsize_schedule.gamma(n)

    def batch(self, n: int) -> int:
        return self.batch_schedule.batch(n)


@dataclass
class RoundRecord:
    round: int
    w: np.ndarray
    grad_norm_sq: float
    objective: float
    samples_processed: int
    sync_count: int


@dataclass
class RunTrace:
    rounds: list[RoundRecord]
    avg_grad_norm_sq: float
    final_objective: float
    diverged: bool
    warnings: list[str] = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    @property
    def final_grad_norm_sq(self) -> float:
        return self.rounds[-1].grad_norm_sq if not self.diverged else float("inf")

    def grad_norms(self) -> np.ndarray:
        return np.array([r.grad_norm_sq for r in self.rounds])

    def params(self) -> np.ndarray:
        return np.array([r.w for r in self.rounds])


class TraceBuilder:
    """Accumulates round records and flags divergence (shared with the ASGD baselines)."""

    def __init__(self, oracle: ObjectiveOracle):
        self.oracle = oracle
        self.rows: list[RoundRecord] = []
        self.diverged = False
        self.warnings: list[str] = []

    def push(self, w: np.ndarray, samples: int, syncs: int) -> bool:
        """Record ``w``; returns False (and records nothing) once the run has diverged."""
        with np.errstate(all="ignore"):
            ok = bool(np.all(np.isfinite(w)))
            if ok:
                g = oracles.full_gradient(self.oracle, w)
                gn = float(np.dot(g, g))
                fv = oracles.objective_value(self.oracle, w)
                ok = np.isfinite(gn) and np.isfinite(fv)
        if not ok:
            self.diverged = True
            return False
        if not self.oracle.in_certified_region(w) and not self.warnings:
            self.warnings.append(
                f"iterate left the certified variance box at row {len(self.rows)}")
        self.rows.append(RoundRecord(len(self.rows), w.copy(), gn, fv, samples, syncs))
        return True

    def finish(self, n_rounds: int, **extras) -> RunTrace:
        if self.diverged:
            avg = final = float("inf")
        else:
            avg = float(np.mean([r.grad_norm_sq for r in self.rows[:n_rounds]]))
            final = self.rows[-1].objective
        return RunTrace(self.rows, avg, final, self.diverged, self.warnings, dict(extras))


def _start(oracle: ObjectiveOracle, w1) -> np.ndarray:
    w = np.array(w1, dtype=float)
    if w.shape != (oracle.dimension,):
        raise ContractViolation(f"w1 must have length {oracle.dimension}, got shape {w.shape}")
    return w


def average_params(params: Sequence[np.ndarray]) -> np.ndarray:
    """Arithmetic mean accumulated in ascending index order.

    Uses the running-mean update ``m += (x - m) / (i + 1)``: averaging
    identical vectors then returns that vector bit for bit.
    """
    if len(params) == 0:
        raise ContractViolation("cannot average an empty sequence of parameters")
    first = np.asarray(params[0], dtype=float)
    mean = first.copy()
    with np.errstate(all="ignore"):
        for i, p in enumerate(params[1:], start=1):
            p = np.asarray(p, dtype=float)
            if p.shape != first.shape:
                raise ContractViolation(f"ragged parameters: {p.shape} vs {first.shape}")
            mean += (p - mean) / (i + 1)
    return mean


def _local_steps(oracle, w0, gamma, batch, steps, root_seed, n, j):
    w = w0.copy()
    with np.errstate(all="ignore"):
        for k in range(steps):
            g = oracles.minibatch_gradient(oracle, w, root_seed, n, j, k, batch)
            w = w - gamma * g
    return w


def run_kavg(oracle: ObjectiveOracle, plan: SyncPlan, w1, root_seed: int,
             threads: int = 1) -> RunTrace:
    """Run K-AVG and return its trace.

    ``threads > 1`` simulates the learners of a round concurrently; the
    result is bit-identical to the single-threaded run.
    """
    w = _start(oracle, w1)
    P, K, N = plan.learners_P, plan.delay_K, plan.rounds_N
    trace = TraceBuilder(oracle)
    trace.push(w, 0, 0)
    samples = 0
    pool = ThreadPoolExecutor(threads) if threads > 1 and P > 1 else None
    try:
        for n in range(N):
            gamma, batch = plan.gamma(n + 1), plan.batch(n + 1)

            def learner(j, w=w, gamma=gamma, batch=batch, n=n):
                return _local_steps(oracle, w, gamma, batch, K, root_seed, n, j)

            locals_ = list(pool.map(learner, range(P))) if pool else [learner(j) for j in range(P)]
            w = average_params(locals_)
            samples += K * batch * P
            if not trace.push(w, samples, n + 1):
                break
    finally:
        if pool:
            pool.shutdown()
    return trace.finish(N)


def run_sequential_sgd(oracle: ObjectiveOracle, stepsize_schedule, batch_schedule,
                       total_steps: int, w1, root_seed: int) -> RunTrace:
    """Single-learner mini-batch SGD; every iterate is a trace row.

    Step ``t`` (0-based) draws from lineage ``(t, 0, 0, s)``, which is exactly
    what K-AVG with ``P = K = 1`` uses in round ``t``.
    """
    if int(total_steps) != total_steps or total_steps < 1:
        raise ContractViolation("total_steps must be a positive integer")
    gammas, batches = as_schedule(stepsize_schedule), as_schedule(batch_schedule)
    try:
        validate(gammas, total_steps, "gamma", allow_zero=True)
        validate(batches, total_steps, "batch")
    except (ValueError, IndexError) as exc:
        raise ContractViolation(str(exc)) from None
    w = _start(oracle, w1)
    trace = TraceBuilder(oracle)
    trace.push(w, 0, 0)
    samples = 0
    for t in range(total_steps):
        gamma, batch = gammas.gamma(t + 1), batches.batch(t + 1)
        with np.errstate(all="ignore"):
            g = oracles.minibatch_gradient(oracle, w, root_seed, t, 0, 0, batch)
            w = w - gamma * g
        samples += batch
        if not trace.push(w, samples, 0):
            break
    return trace.finish(total_steps)


# -- export -----------------------------------------------------------------

TRACE_COLUMNS = ("round", "grad_norm_sq", "objective", "samples_processed", "sync_count", "diverged")


def trace_to_csv(trace: RunTrace) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRACE_COLUMNS)
    flag = int(trace.diverged)
    for r in trace.rounds:
        writer.writerow([r.round, repr(r.grad_norm_sq), repr(r.objective),
                         r.samples_processed, r.sync_count, flag])
    return buf.getvalue()


def write_trace_csv(trace: RunTrace, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(trace_to_csv(trace))


def write_params_txt(trace: RunTrace, path) -> None:
    """One parameter vector per line, whitespace-separated decimal floats."""
    with open(path, "w") as fh:
        for r in trace.rounds:
            fh.write(" ".join(repr(float(x)) for x in r.w) + "\n")


def read_params_txt(path) -> np.ndarray:
    with open(path) as fh:
        return np.array([[float(x) for x in line.split()] for line in fh if line.strip()])
