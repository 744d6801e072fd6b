import csv
import io
import json

import numpy as np
import pytest

from kavg import harness, oracles
from kavg.engine import run_sequential_sgd, trace_to_csv
from kavg.errors import ConfigError


def _doc(**over):
    doc = {
        "schema_version": 1,
        "oracle": {"kind": "trig_nonconvex", "dimension": 4, "amplitude": 2, "noise_std": 1},
        "algorithm": "kavg",
        "grid": {"K": [1, 2], "P": [2], "B": [4], "gamma": [0.05], "N": [5]},
        "seeds": {"base": 0, "count": 3},
        "init": {"radius": 1.5},
        "bound_overlay": True,
    }
    doc.update(over)
    return doc


def _rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_kavg_unit_point_matches_sgd_trace():
    doc = _doc(grid={"K": 1, "P": 1, "B": 1, "gamma": 0.05, "N": 12}, seeds=[42])
    kav = harness.run_experiment(harness.config_from_dict(doc))
    sgd = harness.run_experiment(harness.config_from_dict(dict(doc, algorithm="sgd")))
    drop = lambda rows: [{k: v for k, v in r.items() if k != "algorithm"} for r in rows]
    assert drop(_rows(kav.raw_csv)) == drop(_rows(sgd.raw_csv))

    o = oracles.trig_nonconvex(4, 2, 1)
    trace = run_sequential_sgd(o, 0.05, 1, 12, np.full(4, 1.5), 42)
    engine_rows = _rows(trace_to_csv(trace))
    for h, e in zip(_rows(kav.raw_csv), engine_rows):
        for col in ("round", "grad_norm_sq", "objective", "samples_processed", "diverged"):
            assert h[col] == e[col]


def test_sgd_points_use_matching_budget():
    cfg = harness.config_from_dict(_doc(algorithm=["kavg", "sgd"],
                                        grid={"K": 4, "P": 1, "B": 2, "gamma": 0.1, "N": 5}))
    pts = cfg.points()
    assert [(p.algorithm, p.K, p.P, p.N) for p in pts] == [("kavg", 4, 1, 5), ("sgd", 1, 1, 20)]
    res = harness.run_experiment(cfg)
    assert res.runs_for(0)[0].samples_processed == res.runs_for(1)[0].samples_processed


def test_budget_sweep_points():
    cfg = harness.config_from_dict(_doc(budget_S=16, grid={"K": [1, 2, 4, 8, 16], "P": 2,
                                                           "gamma": 0.01}))
    assert [(p.K, p.N) for p in cfg.points()] == [(1, 16), (2, 8), (4, 4), (8, 2), (16, 1)]
    assert all(p.B.batch(1) == harness.DEFAULT_BATCH for p in cfg.points())
    with pytest.raises(ConfigError):
        harness.config_from_dict(_doc(budget_S=10, grid={"K": [4], "gamma": 0.1}))


def test_outputs_and_aggregate_integrity(tmp_path):
    cfg = harness.config_from_dict(_doc(algorithm=["kavg", "downpour", "elastic"]))
    res = harness.run_experiment(cfg, output_dir=str(tmp_path))
    raw = (tmp_path / "raw.csv").read_text()
    agg = (tmp_path / "aggregate.csv").read_text()
    assert raw.splitlines()[0] == ",".join(harness.RAW_COLUMNS)
    assert agg.splitlines()[0] == ",".join(harness.AGG_COLUMNS)
    assert len(_rows(raw)) == 6 * 3 * 6
    assert harness.verify_aggregates(raw, agg)
    a0 = res.aggregate(0)
    vals = [r.avg_grad_norm_sq for r in res.runs_for(0)]
    assert a0.mean_final_grad_norm_sq == np.mean(vals)
    assert a0.stderr == pytest.approx(np.std(vals, ddof=1) / np.sqrt(3), rel=1e-12)
    bounds = _rows((tmp_path / "bounds.csv").read_text())
    assert len(bounds) == 6 and {b["admissible"] for b in bounds} == {"1"}


def test_tampered_aggregate_is_detected(tmp_path):
    res = harness.run_experiment(harness.config_from_dict(_doc()), output_dir=str(tmp_path))
    agg = harness.aggregate_csv(res).splitlines()
    parts = agg[1].split(",")
    parts[2] = repr(float(parts[2]) * (1 + 1e-9))
    agg[1] = ",".join(parts)
    assert not harness.verify_aggregates(res.raw_csv, "\n".join(agg) + "\n")


def test_bound_overlay_uses_certified_constants():
    cfg = harness.config_from_dict(_doc(grid={"K": 2, "P": 2, "B": 4, "gamma": 0.05, "N": 5}))
    row = harness.bound_for_point(cfg, cfg.points()[0])
    o = cfg.oracle
    gap = oracles.objective_value(o, cfg.w1) - o.lower_bound_Fstar
    assert row["gap"] == gap and row["L"] == 3.0 and row["M"] == 4.0
    from kavg import theory
    assert row["bound_value"] == theory.theorem1_bound(
        theory.BoundInputs(3.0, 4.0, gap, 2, 2, 4, 0.05, 0.5, 5))
    cfg2 = harness.config_from_dict(_doc(grid={"K": 2, "P": 2, "B": 4, "gamma": "step:0.05,0.5,2",
                                               "N": 5}))
    assert harness.bound_for_point(cfg2, cfg2.points()[0])["bound_value"] > row["bound_value"]


def test_final_trace_mode():
    res = harness.run_experiment(harness.config_from_dict(_doc(trace="final")))
    rows = _rows(res.raw_csv)
    assert len(rows) == 2 * 3 and {r["round"] for r in rows} == {"5"}


def test_divergence_is_recorded_not_fatal():
    doc = _doc(oracle={"kind": "quadratic", "eigenvalues": [1, 1], "noise_std": 0.1},
               algorithm="downpour", grid={"K": 1, "P": 16, "B": 1, "gamma": 0.3, "N": 500},
               seeds=[0, 1])
    res = harness.run_experiment(harness.config_from_dict(doc))
    agg = res.aggregate(0)
    assert agg.divergence_fraction == 1.0 and agg.mean_final_grad_norm_sq == float("inf")
    assert np.isnan(agg.stderr)
    assert harness.verify_aggregates(res.raw_csv, harness.aggregate_csv(res))


def test_threads_do_not_change_output():
    cfg = harness.config_from_dict(_doc(algorithm=["kavg", "downpour"]))
    assert harness.run_experiment(cfg).raw_csv == harness.run_experiment(cfg, threads=4).raw_csv


@pytest.mark.parametrize("doc", [
    _doc(schema_version=2),
    _doc(algorithm="hogwild"),
    _doc(grid={"K": [], "gamma": 0.1}),
    _doc(grid={"K": [0], "gamma": 0.1}),
    _doc(grid={"K": 1}),
    _doc(seeds={"base": 0, "count": 0}),
    _doc(oracle={"kind": "cubic"}),
    _doc(delta=1.5),
    _doc(trace="sparse"),
    _doc(init={"w1": [1, 2]}),
    {"grid": {"gamma": 0.1}},
    [],
])
def test_config_errors(doc):
    with pytest.raises(ConfigError):
        harness.config_from_dict(doc)


def test_load_config_roundtrip(tmp_path):
    p = tmp_path / "c.json"
    cfg = harness.config_from_dict(_doc(grid={"K": 2, "P": 2, "gamma": "power:0.1,0.5", "N": 3}))
    p.write_text(json.dumps(harness.config_to_dict(cfg)))
    back = harness.load_config(p)
    assert back.points() == cfg.points()
    assert np.array_equal(back.w1, cfg.w1)
    with pytest.raises(ConfigError):
        harness.load_config(tmp_path / "missing.json")
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(ConfigError):
        harness.load_config(tmp_path / "bad.json")


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(ConfigError):
        harness.run_experiment(harness.config_from_dict(_doc()), output_dir=str(blocker / "sub"))
