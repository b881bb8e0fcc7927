import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hedgegad.baselines import BaselineConfig
from hedgegad.csbm import CsbmParams, generate
from hedgegad.evaluation import (MetricsReport, accuracy, attack_sweep, auc, average_precision, rows_to_csv,
                                 summarize)

from oracles import brute_ap, brute_auc, random_metric_instance


def test_auc_examples():
    assert auc([0.9, 0.8, 0.3, 0.2], [1, 1, 0, 0]) == 1.0
    assert auc([0.9, 0.8, 0.6, 0.2], [1, 0, 1, 0]) == 0.75
    assert auc([0.5] * 6, [1, 0, 1, 0, 0, 1]) == 0.5


def test_ap_examples():
    assert average_precision([0.9, 0.8, 0.3, 0.2], [1, 1, 0, 0]) == 1.0
    assert average_precision([0.9, 0.8, 0.6, 0.2], [1, 0, 1, 0]) == pytest.approx(5 / 6, abs=1e-15)
    assert average_precision([0.9, 0.8, 0.7, 0.1], [0, 0, 0, 1]) == 0.25


def test_ap_ties_break_by_index():
    # tied scores: the earlier index ranks first
    assert average_precision([0.5, 0.5], [1, 0]) == 1.0
    assert average_precision([0.5, 0.5], [0, 1]) == 0.5


def test_metric_errors():
    with pytest.raises(ValueError):
        auc([0.1, 0.2], [1, 1])
    with pytest.raises(ValueError):
        average_precision([0.1, 0.2], [0, 0])
    with pytest.raises(ValueError):
        auc([0.1, 0.2], [0, 2])
    with pytest.raises(ValueError):
        accuracy([], [])


def test_metrics_match_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(200):
        s, y = random_metric_instance(rng)
        assert abs(auc(s, y) - brute_auc(s, y)) <= 1e-12
        assert abs(average_precision(s, y) - brute_ap(s, y)) <= 1e-12


@given(st.lists(st.integers(-40, 40), min_size=2, max_size=40), st.integers(0, 2**31))
@settings(max_examples=80, deadline=None)
def test_auc_invariant_under_monotone_transform(steps, seed):
    # scores on a 1/8 grid so exp stays strictly increasing in floating point
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, len(steps))
    y[0], y[1] = 0, 1
    s = np.array(steps) / 8.0
    assert auc(np.exp(s) * 3 + 1, y) == pytest.approx(auc(s, y), abs=1e-15)
    assert abs(auc(s, y) - brute_auc(list(s), list(y))) <= 1e-12
    assert abs(average_precision(s, y) - brute_ap(list(s), list(y))) <= 1e-12


def test_report_excludes_timing_by_default():
    r = MetricsReport(1.0, 1.0, 1.0, {"train": 1}, "abc", 0, 3.2)
    assert "wall_clock_seconds" not in r.to_dict()
    assert r.to_dict(include_timing=True)["wall_clock_seconds"] == 3.2


def test_csv_and_summary():
    rows = [{"ratio": 0.0, "seed": 0, "model": "gcn", "accuracy": 0.5},
            {"ratio": 0.0, "seed": 1, "model": "gcn", "accuracy": 0.7}]
    text = rows_to_csv(rows, ["ratio", "seed", "model", "accuracy", "auc"])
    assert text.splitlines()[0] == "ratio,seed,model,accuracy,auc"
    assert text.splitlines()[1] == "0.0,0,gcn,0.5,"
    mean, std = summarize(rows)[(0.0, "gcn")]
    assert mean == pytest.approx(0.6) and std == pytest.approx(0.1)


def test_sweep_ratio_zero_equals_plain_run_and_chv_grows():
    from hedgegad.baselines import train_baseline
    from hedgegad.graph import make_split
    g = generate(CsbmParams((1.0, 0.0), (0.0, 1.0), 10, 0.9, 0.9, 40, 0)).graph
    cfg = BaselineConfig(kind="gcn", hidden_dim=8, epochs=20)
    rows, chv_rows = attack_sweep(g, {"gcn": cfg}, (0.0, 0.05, 0.10), (0, 1), target_class=0)
    assert len(rows) == 6 and len(chv_rows) == 6
    plain = train_baseline(g, cfg, make_split(g, (0.4, 0.3, 0.3), 0)).report
    first = rows[0]
    assert first["ratio"] == 0.0 and first["seed"] == 0
    assert first["auc"] == plain.auc and first["accuracy"] == plain.accuracy
    means = [np.mean([r["chv"] for r in chv_rows if r["ratio"] == q]) for q in (0.0, 0.05, 0.10)]
    assert means[0] <= means[1] <= means[2]
