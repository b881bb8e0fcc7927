"""Ranking metrics, run reports and the attack-ratio sweep."""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import rankdata

DEFAULT_RATIOS = (0.0, 0.01, 0.03, 0.05, 0.07, 0.10)


@dataclass
class MetricsReport:
    auc: float | None
    ap: float | None
    accuracy: float | None
    split_sizes: dict
    config_hash: str
    seed: int
    wall_clock_seconds: float
    best_epoch: int = -1
    train_auc: float | None = None
    train_accuracy: float | None = None
    val_score: float | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self, include_timing: bool = False) -> dict:
        d = asdict(self)
        if not include_timing:
            d.pop("wall_clock_seconds")
        return d


def _binary(labels) -> np.ndarray:
    y = np.asarray(labels)
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be binary (0/1)")
    return y.astype(bool)


def auc(scores, labels) -> float:
    """Probability that a random positive outranks a random negative, ties counting 1/2."""
    s = np.asarray(scores, dtype=np.float64)
    y = _binary(labels)
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs at least one positive and one negative")
    ranks = rankdata(s)  # average ranks give ties half credit
    return float((ranks[y].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def average_precision(scores, labels) -> float:
    """Mean precision at each positive's rank, ordering by descending score.

    Tied scores are ordered by ascending node index.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = _binary(labels)
    if not y.any():
        raise ValueError("AP needs at least one positive")
    order = np.lexsort((np.arange(len(s)), -s))
    hits = y[order]
    ranks = np.flatnonzero(hits) + 1
    return float((np.arange(1, len(ranks) + 1) / ranks).mean())


def accuracy(pred, labels) -> float:
    pred, labels = np.asarray(pred), np.asarray(labels)
    if len(labels) == 0:
        raise ValueError("accuracy of an empty set")
    return float((pred == labels).mean())


# -- sweeps -----------------------------------------------------------------

SWEEP_FIELDS = ["ratio", "seed", "model", "accuracy", "auc", "ap", "chv"]


def attack_sweep(graph, model_configs: dict, ratios=DEFAULT_RATIOS, seeds=(0,), *,
                 target_class: int = 1, kind: str = "heterophily", split_ratios=(0.4, 0.3, 0.3)):
    """Attack the graph at each ratio and seed, retrain every model, collect metrics.

    ``model_configs`` maps a row name to a HedgeConfig or BaselineConfig.
    Returns ``(rows, chv_rows)``: one metrics row per (ratio, seed, model) and
    one CHV row per (ratio, seed).
    """
    from .attack import AttackConfig, attack
    from .baselines import BaselineConfig, train_baseline
    from .graph import make_split
    from .hedge import train as train_hedge
    from .homophily import class_homophily_variance

    rows, chv_rows = [], []
    for ratio in ratios:
        for seed in seeds:
            attacked = attack(graph, AttackConfig(target_class, ratio, seed, kind)).graph
            chv = class_homophily_variance(attacked).chv
            chv_rows.append({"ratio": ratio, "seed": seed, "chv": chv})
            split = make_split(attacked, split_ratios, seed)
            for name, cfg in model_configs.items():
                if isinstance(cfg, BaselineConfig):
                    report = train_baseline(attacked, cfg, split).report
                else:
                    report = train_hedge(attacked, cfg, split).report
                rows.append({"ratio": ratio, "seed": seed, "model": name, "accuracy": report.accuracy,
                             "auc": report.auc, "ap": report.ap, "chv": chv})
    return rows, chv_rows


def rows_to_csv(rows, fields) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: ("" if r.get(k) is None else r.get(k)) for k in fields})
    return buf.getvalue()


def summarize(rows, key: str = "accuracy") -> dict:
    """Mean and std of ``key`` per (ratio, model)."""
    out = {}
    for r in rows:
        out.setdefault((r["ratio"], r.get("model")), []).append(r[key])
    return {k: (float(np.mean(v)), float(np.std(v))) for k, v in out.items()}
