import json
import math

import numpy as np
import pytest

from centralvr.optimizers import OptConfig, run_centralvr
from centralvr.trace import COLUMNS, TraceRecord, Tracker, export_trace, load_trace


def rec(e=0):
    return TraceRecord(e, 10 * e, 0.1 ** e, math.nan if e == 0 else 1 / 3, float(e), 0.0)


def test_csv_one_record(tmp_path):
    path = tmp_path / "t.csv"
    export_trace([rec()], "csv", path)
    lines = path.read_text().splitlines()
    assert len(lines) == 2
    assert lines[0] == "epoch,grad_evals,rel_grad_norm,suboptimality,virtual_time,wall_time_s"


def test_csv_columns_and_round_trip(tmp_path):
    records = [rec(e) for e in range(5)]
    path = tmp_path / "t.csv"
    export_trace(records, "csv", path)
    for line in path.read_text().splitlines():
        assert len(line.split(",")) == 6
    back = load_trace(path)
    assert back[1:] == records[1:]
    assert math.isnan(back[0].suboptimality)
    assert "0.3333333333333333" in path.read_text()


def test_json_round_trip(tmp_path):
    records = [rec(e) for e in range(1, 4)]
    path = tmp_path / "t.json"
    export_trace(records, "json", path)
    assert load_trace(path) == records
    assert list(json.loads(path.read_text())[0]) == list(COLUMNS)


def test_export_errors(tmp_path):
    with pytest.raises(ValueError):
        export_trace([], "csv", tmp_path / "x.csv")
    with pytest.raises(ValueError):
        export_trace([rec()], "xml", tmp_path / "x.xml")
    with pytest.raises(OSError):
        export_trace([rec()], "csv", tmp_path / "missing" / "x.csv")


def test_metrics_leave_optimizer_alone(toy_logistic):
    cfg = OptConfig(0.3, epochs=4, wall_clock=False)
    with_ref = run_centralvr(toy_logistic, cfg, x_star=np.zeros(toy_logistic.d))
    without = run_centralvr(toy_logistic, cfg)
    assert np.array_equal(with_ref.x, without.x)
    assert [r.rel_grad_norm for r in with_ref.trace] == [r.rel_grad_norm for r in without.trace]


def test_tracker_first_record(toy_ridge):
    t = Tracker(toy_ridge, np.ones(5))
    r = t.record(0, np.ones(5), 0, 0.0)
    assert r.rel_grad_norm == 1.0 and math.isnan(r.suboptimality)
