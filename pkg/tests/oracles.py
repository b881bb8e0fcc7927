"""Independent reference implementations used by the unit and acceptance tests."""

import numpy as np


def brute_auc(scores, labels):
    """Pairwise count over every positive/negative pair, ties worth one half."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for p in pos:
        for q in neg:
            total += 1.0 if p > q else 0.5 if p == q else 0.0
    return total / (len(pos) * len(neg))


def brute_ap(scores, labels):
    """Walk the ranking (score descending, index ascending on ties) accumulating precision at hits."""
    n = len(scores)
    order = sorted(range(n), key=lambda i: (-scores[i], i))
    hits, acc = 0, 0.0
    for rank, i in enumerate(order, 1):
        if labels[i] == 1:
            hits += 1
            acc += hits / rank
    return acc / hits


def random_metric_instance(rng):
    """Scores with deliberate ties and labels containing both classes, at most 50 nodes."""
    n = int(rng.integers(2, 51))
    labels = rng.integers(0, 2, n)
    labels[0], labels[-1] = 0, 1
    rng.shuffle(labels)
    levels = int(rng.integers(1, n + 1))
    scores = rng.integers(0, levels, n) / max(levels, 1) + (rng.random() < 0.5) * rng.random(n) * 1e-3
    return np.asarray(scores, dtype=np.float64), labels
