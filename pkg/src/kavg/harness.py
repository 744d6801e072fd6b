"""Config-driven sweeps over (algorithm, K, P, B, gamma, N) grids and seed ensembles.

A config is a JSON document::

    {
      "schema_version": 1,
      "oracle": {"kind": "trig_nonconvex", "dimension": 10, "amplitude": 2, "noise_std": 1},
      "algorithm": ["kavg", "downpour"],
      "grid": {"K": [1, 4], "P": [4], "B": [8], "gamma": [0.05, "step:0.1,0.5,50"], "N": [100]},
      "budget_S": null,
      "delta": 0.5,
      "seeds": {"base": 0, "count": 100},
      "init": {"radius": 3.0},
      "staleness": {"kind": "round_robin", "max_staleness": null},
      "elastic": {"rho": 0.1, "comm_period": 1},
      "output_dir": "out",
      "trace": "full",
      "bound_overlay": true,
      "C0": 1.0, "C1": 1.0
    }

Every grid value may be a scalar or a list.  With ``budget_S`` set, ``N`` is
derived per point as ``S // K`` (fixed-sample-budget sweeps).  Outputs are
``raw.csv`` (one row per trace row per run), ``aggregate.csv`` (one row per
grid point) and, with the overlay flag, ``bounds.csv``.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import theory
from .asgd import ElasticParams, StalenessModel, run_downpour, run_elastic
from .engine import RunTrace, SyncPlan, run_kavg, run_sequential_sgd
from .errors import ConfigError, ContractViolation
from .oracles import ObjectiveOracle, objective_value, oracle_from_dict, oracle_to_dict
from .schedules import Constant, ScheduleSpec, as_schedule, schedule_to_dict

SCHEMA_VERSION = 1
ALGORITHMS = ("kavg", "sgd", "downpour", "elastic")
DEFAULT_BATCH = 32

RAW_COLUMNS = ("config_id", "algorithm", "K", "P", "B", "gamma_spec", "seed", "round",
               "grad_norm_sq", "objective", "samples_processed", "diverged")
AGG_COLUMNS = ("config_id", "n_seeds", "mean_final_grad_norm_sq", "stderr",
               "divergence_fraction", "bound_value")
BOUND_COLUMNS = ("config_id", "algorithm", "K", "P", "B", "gamma_spec", "N", "L", "M", "gap",
                 "admissible", "bound_value")


@dataclass(frozen=True)
class GridPoint:
    config_id: int
    algorithm: str
    K: int
    P: int
    B: ScheduleSpec
    gamma: ScheduleSpec
    N: int

    def plan(self, delta: float) -> SyncPlan:
        return SyncPlan(self.P, self.K, self.N, self.gamma, self.B, delta)


@dataclass
class ExperimentConfig:
    oracle: ObjectiveOracle
    algorithms: list[str]
    K: list[int]
    P: list[int]
    B: list[ScheduleSpec]
    gamma: list[ScheduleSpec]
    N: list[int]
    seeds: list[int]
    w1: np.ndarray
    delta: float = 0.5
    budget_S: Optional[int] = None
    output_dir: Optional[str] = None
    trace: str = "full"  # "full": every row; "final": last row per run
    bound_overlay: bool = False
    staleness: StalenessModel = field(default_factory=StalenessModel)
    elastic: ElasticParams = field(default_factory=lambda: ElasticParams(0.1, 1))
    C0: float = 1.0
    C1: float = 1.0

    def __post_init__(self):
        for name in ("algorithms", "K", "P", "B", "gamma", "N", "seeds"):
            if not getattr(self, name):
                raise ConfigError(f"grid '{name}' is empty")
        for a in self.algorithms:
            if a not in ALGORITHMS:
                raise ConfigError(f"unknown algorithm {a!r}; expected one of {ALGORITHMS}")
        if self.trace not in ("full", "final"):
            raise ConfigError("trace must be 'full' or 'final'")
        if self.budget_S is not None and any(self.budget_S % k for k in self.K):
            raise ConfigError(f"budget_S={self.budget_S} is not a multiple of every K")

    def points(self) -> list[GridPoint]:
        pts = []
        combos = itertools.product(self.algorithms, self.K, self.P, self.B, self.gamma, self.N)
        seen = set()
        for alg, K, P, B, gamma, N in combos:
            if self.budget_S is not None:
                N = self.budget_S // K
            if alg == "sgd":
                # plain SGD: one learner, N*K steps
                N, K, P = N * K, 1, 1
            key = (alg, K, P, B, gamma, N)
            if key in seen:
                continue
            seen.add(key)
            pts.append(GridPoint(len(pts), alg, K, P, B, gamma, N))
        return pts

    @property
    def is_single_point(self) -> bool:
        return len(self.points()) == 1


@dataclass
class RunRow:
    config_id: int
    seed: int
    avg_grad_norm_sq: float
    final_objective: float
    diverged: bool
    samples_processed: int


@dataclass
class AggregateRow:
    config_id: int
    n_seeds: int
    mean_final_grad_norm_sq: float
    stderr: float
    divergence_fraction: float
    bound_value: Optional[float]


@dataclass
class SweepResult:
    points: list[GridPoint]
    runs: list[RunRow]
    aggregates: list[AggregateRow]
    raw_csv: str
    bounds: list[dict] = field(default_factory=list)
    files: dict = field(default_factory=dict)

    def aggregate(self, config_id: int) -> AggregateRow:
        return self.aggregates[config_id]

    def runs_for(self, config_id: int) -> list[RunRow]:
        return [r for r in self.runs if r.config_id == config_id]


# -- config parsing ---------------------------------------------------------

def _listify(x) -> list:
    return list(x) if isinstance(x, (list, tuple)) else [x]


def _ints(name, values) -> list[int]:
    out = []
    for v in _listify(values):
        if isinstance(v, bool) or not isinstance(v, (int, float)) or int(v) != v or v < 1:
            raise ConfigError(f"{name} values must be positive integers, got {v!r}")
        out.append(int(v))
    return out


def config_from_dict(doc: dict[str, Any]) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version!r}")
    if "oracle" not in doc:
        raise ConfigError("config needs an 'oracle' section")
    oracle = oracle_from_dict(doc["oracle"])
    grid = doc.get("grid", {})
    try:
        seeds_doc = doc.get("seeds", {"base": 0, "count": 1})
        if isinstance(seeds_doc, dict):
            base, count = int(seeds_doc.get("base", 0)), int(seeds_doc.get("count", 1))
            if count < 1:
                raise ConfigError("seed count must be >= 1")
            seeds = list(range(base, base + count))
        else:
            seeds = [int(s) for s in _listify(seeds_doc)]

        init = doc.get("init", {"radius": 1.0})
        if "w1" in init:
            w1 = np.array(init["w1"], dtype=float)
            if w1.shape != (oracle.dimension,):
                raise ConfigError(f"init.w1 must have length {oracle.dimension}")
        else:
            w1 = np.full(oracle.dimension, float(init.get("radius", 1.0)))

        st = doc.get("staleness", {})
        el = doc.get("elastic", {})
        cfg = ExperimentConfig(
            oracle=oracle,
            algorithms=[str(a) for a in _listify(doc.get("algorithm", "kavg"))],
            K=_ints("K", grid.get("K", 1)),
            P=_ints("P", grid.get("P", 1)),
            B=[as_schedule(b) for b in _listify(grid.get("B", DEFAULT_BATCH))],
            gamma=[as_schedule(g) for g in _listify(grid["gamma"])],
            N=_ints("N", grid.get("N", 1)),
            seeds=seeds,
            w1=w1,
            delta=float(doc.get("delta", 0.5)),
            budget_S=None if doc.get("budget_S") is None else int(doc["budget_S"]),
            output_dir=doc.get("output_dir"),
            trace=doc.get("trace", "full"),
            bound_overlay=bool(doc.get("bound_overlay", False)),
            staleness=StalenessModel(st.get("kind", "round_robin"), st.get("max_staleness")),
            elastic=ElasticParams(float(el.get("rho", 0.1)), int(el.get("comm_period", 1))),
            C0=float(doc.get("C0", 1.0)),
            C1=float(doc.get("C1", 1.0)),
        )
    except KeyError as exc:
        raise ConfigError(f"config is missing {exc}") from None
    except (ContractViolation, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None
    if not 0 < cfg.delta < 1:
        raise ConfigError("delta must lie in (0, 1)")
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return config_from_dict(doc)


# -- execution --------------------------------------------------------------

def _run_one(cfg: ExperimentConfig, pt: GridPoint, seed: int) -> RunTrace:
    if pt.algorithm == "sgd":
        return run_sequential_sgd(cfg.oracle, pt.gamma, pt.B, pt.N, cfg.w1, seed)
    plan = pt.plan(cfg.delta)
    if pt.algorithm == "kavg":
        return run_kavg(cfg.oracle, plan, cfg.w1, seed)
    if pt.algorithm == "downpour":
        return run_downpour(cfg.oracle, plan, cfg.staleness, cfg.w1, seed)
    return run_elastic(cfg.oracle, plan, cfg.elastic, cfg.w1, seed)


def bound_for_point(cfg: ExperimentConfig, pt: GridPoint) -> dict:
    """Theory overlay for one grid point, from the oracle's certified constants."""
    o = cfg.oracle
    gap = max(objective_value(o, cfg.w1) - o.lower_bound_Fstar, 0.0)
    row = {"config_id": pt.config_id, "algorithm": pt.algorithm, "K": pt.K, "P": pt.P,
           "B": pt.B.label(), "gamma_spec": pt.gamma.label(), "N": pt.N,
           "L": o.lipschitz_L, "M": o.variance_M, "gap": gap}
    if isinstance(pt.gamma, Constant) and isinstance(pt.B, Constant):
        gamma, batch = pt.gamma.gamma(1), pt.B.batch(1)
        check = theory.check_fixed_stepsize_conditions(o.lipschitz_L, gamma, pt.K, cfg.delta)
        inputs = theory.BoundInputs(o.lipschitz_L, o.variance_M, gap, pt.K, pt.P, batch, gamma,
                                    cfg.delta, pt.N)
        value = theory.theorem1_bound(inputs, warn=False)
        admissible = check.admissible
    else:
        value = theory.theorem2_bound(pt.gamma, pt.B, o.lipschitz_L, o.variance_M, gap, pt.K,
                                      pt.P, cfg.delta, pt.N)
        admissible = all(
            theory.check_fixed_stepsize_conditions(o.lipschitz_L, pt.gamma.gamma(j), pt.K,
                                                   cfg.delta).admissible
            for j in range(1, pt.N + 1))
    row["admissible"] = int(admissible)
    row["bound_value"] = value
    return row


def _fmt(x: float) -> str:
    return repr(float(x))


def _raw_rows(pt: GridPoint, seed: int, trace: RunTrace, mode: str):
    rows = trace.rounds if mode == "full" else trace.rounds[-1:]
    flag = int(trace.diverged)
    for r in rows:
        yield (pt.config_id, pt.algorithm, pt.K, pt.P, pt.B.label(), pt.gamma.label(), seed,
               r.round, _fmt(r.grad_norm_sq), _fmt(r.objective), r.samples_processed, flag)


def aggregate_runs(runs: list[RunRow], config_id: int, bound: Optional[float]) -> AggregateRow:
    vals = np.array([r.avg_grad_norm_sq for r in runs], dtype=float)
    n = len(vals)
    with np.errstate(invalid="ignore"):
        mean = float(vals.mean())
        finite = n > 1 and np.all(np.isfinite(vals))
        se = float(vals.std(ddof=1) / math.sqrt(n)) if finite else math.nan
    div = float(np.mean([r.diverged for r in runs]))
    return AggregateRow(config_id, n, mean, se, div, bound)


def _csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    w.writerows(rows)
    return buf.getvalue()


def run_experiment(config: ExperimentConfig, threads: int = 1,
                   output_dir: Optional[str] = None) -> SweepResult:
    """Execute every (grid point, seed) run and write the CSV outputs.

    Runs are independent and deterministic, so ``threads`` only changes wall
    time; output rows are always emitted in (grid point, seed) order.
    """
    pts = config.points()
    jobs = [(pt, s) for pt in pts for s in config.seeds]
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            traces = list(pool.map(lambda job: _run_one(config, *job), jobs))
    else:
        traces = [_run_one(config, *job) for job in jobs]

    runs, raw = [], []
    for (pt, seed), tr in zip(jobs, traces):
        runs.append(RunRow(pt.config_id, seed, tr.avg_grad_norm_sq, tr.final_objective,
                           tr.diverged, tr.rounds[-1].samples_processed))
        raw.extend(_raw_rows(pt, seed, tr, config.trace))

    bounds = [bound_for_point(config, pt) for pt in pts] if config.bound_overlay else []
    aggs = []
    for pt in pts:
        b = bounds[pt.config_id]["bound_value"] if bounds else None
        aggs.append(aggregate_runs([r for r in runs if r.config_id == pt.config_id], pt.config_id, b))

    result = SweepResult(pts, runs, aggs, _csv(RAW_COLUMNS, raw), bounds)
    out = output_dir or config.output_dir
    if out:
        write_outputs(result, out)
    return result


def aggregate_csv(result: SweepResult) -> str:
    rows = [(a.config_id, a.n_seeds, _fmt(a.mean_final_grad_norm_sq), _fmt(a.stderr),
             _fmt(a.divergence_fraction), "" if a.bound_value is None else _fmt(a.bound_value))
            for a in result.aggregates]
    return _csv(AGG_COLUMNS, rows)


def write_outputs(result: SweepResult, out_dir) -> dict:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        files = {"raw": out / "raw.csv", "aggregate": out / "aggregate.csv"}
        files["raw"].write_text(result.raw_csv)
        files["aggregate"].write_text(aggregate_csv(result))
        if result.bounds:
            files["bounds"] = out / "bounds.csv"
            files["bounds"].write_text(_csv(BOUND_COLUMNS, [
                [b[c] if c != "bound_value" else _fmt(b[c]) for c in BOUND_COLUMNS]
                for b in result.bounds]))
    except OSError as exc:
        raise ConfigError(f"cannot write outputs to {out_dir}: {exc}") from None
    result.files = {k: str(v) for k, v in files.items()}
    return result.files


def verify_aggregates(raw_csv: str, aggregate_csv_text: str) -> bool:
    """Recompute every aggregate row from the raw CSV; True when all match exactly.

    Needs a raw CSV written with ``trace='full'`` (the per-run average is
    recomputed from the round rows).
    """
    per_run: dict[tuple, list] = {}
    meta: dict[tuple, tuple] = {}
    for row in csv.DictReader(io.StringIO(raw_csv)):
        key = (int(row["config_id"]), int(row["seed"]))
        per_run.setdefault(key, []).append(float(row["grad_norm_sq"]))
        meta[key] = (row["algorithm"], int(row["diverged"]), int(row["round"]))
    runs: dict[int, list[RunRow]] = {}
    for key, g in per_run.items():
        alg, div, _ = meta[key]
        n_rounds = len(g) - 1
        avg = math.inf if div else float(np.mean(g[:n_rounds]))
        runs.setdefault(key[0], []).append(RunRow(key[0], key[1], avg, math.nan, bool(div), 0))
    for row in csv.DictReader(io.StringIO(aggregate_csv_text)):
        cid = int(row["config_id"])
        agg = aggregate_runs(runs[cid], cid, None)
        if agg.n_seeds != int(row["n_seeds"]):
            return False
        for name in ("mean_final_grad_norm_sq", "stderr", "divergence_fraction"):
            a, b = getattr(agg, name), float(row[name])
            if not (a == b or (math.isnan(a) and math.isnan(b))):
                return False
    return True


def config_to_dict(cfg: ExperimentConfig) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "oracle": oracle_to_dict(cfg.oracle),
        "algorithm": list(cfg.algorithms),
        "grid": {"K": cfg.K, "P": cfg.P, "B": [schedule_to_dict(b) for b in cfg.B],
                 "gamma": [schedule_to_dict(g) for g in cfg.gamma], "N": cfg.N},
        "budget_S": cfg.budget_S,
        "delta": cfg.delta,
        "seeds": list(cfg.seeds),
        "init": {"w1": cfg.w1.tolist()},
        "staleness": {"kind": cfg.staleness.kind, "max_staleness": cfg.staleness.max_staleness},
        "elastic": {"rho": cfg.elastic.rho, "comm_period": cfg.elastic.comm_period},
        "output_dir": cfg.output_dir,
        "trace": cfg.trace,
        "bound_overlay": cfg.bound_overlay,
        "C0": cfg.C0,
        "C1": cfg.C1,
    }
