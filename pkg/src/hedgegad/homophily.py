"""Node homophily, Class Homophily Variance (CHV) and weighted density curves."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .graph import MultiRelationGraph, NeighborhoodView, UNLABELED

log = logging.getLogger(__name__)

GRID_SIZE = 200
FALLBACK_BANDWIDTH = 0.05


@dataclass
class HomophilyProfile:
    per_node_h: np.ndarray  # NaN where undefined
    per_class_mean: np.ndarray
    chv: float
    in_class_var: np.ndarray
    mean_in_class_var: float
    weighted_mean: float

    def to_dict(self) -> dict:
        return {
            "chv": self.chv,
            "per_class_mean": [float(x) for x in self.per_class_mean],
            "in_class_var": [float(x) for x in self.in_class_var],
            "mean_in_class_var": self.mean_in_class_var,
            "weighted_mean": self.weighted_mean,
            "num_defined": int(np.isfinite(self.per_node_h).sum()),
            "per_node_h": [None if not np.isfinite(x) else float(x) for x in self.per_node_h],
        }


@dataclass
class DensityCurve:
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float
    weights_note: str

    def to_csv(self) -> str:
        lines = ["h,density"]
        lines += [f"{g!r},{d!r}" for g, d in zip(self.grid.tolist(), self.density.tolist())]
        return "\n".join(lines) + "\n"


def _as_view(graph, relation_view) -> NeighborhoodView:
    if isinstance(graph, NeighborhoodView):
        return graph
    if isinstance(graph, MultiRelationGraph):
        return graph.view(relation_view)
    raise TypeError(f"expected a graph or NeighborhoodView, got {type(graph).__name__}")


def _node_h(labels, nb, y) -> float:
    nl = labels[nb]
    nl = nl[nl != UNLABELED]
    if len(nl) == 0:
        return np.nan
    return np.count_nonzero(nl == y) / len(nl)


def node_homophily(graph, node: int, relation_view="union"):
    """Fraction of labeled neighbors sharing ``node``'s label, or None if it has none."""
    view = _as_view(graph, relation_view)
    y = view.labels[node]
    if y == UNLABELED:
        raise ValueError(f"node {node} is unlabeled; its homophily is undefined")
    h = _node_h(view.labels, view.neighbors[node], y)
    return None if np.isnan(h) else float(h)


def homophily_values(graph, relation_view="union") -> np.ndarray:
    """H(v) for every node; NaN for unlabeled nodes and nodes without labeled neighbors."""
    view = _as_view(graph, relation_view)
    labels = view.labels
    out = np.full(view.num_nodes, np.nan)
    for v, nb in enumerate(view.neighbors):
        if labels[v] != UNLABELED:
            out[v] = _node_h(labels, nb, labels[v])
    return out


def _class_weights(labels: np.ndarray, defined: np.ndarray) -> np.ndarray:
    """Per-node weight 1/p where p is the node's class share among defined nodes."""
    lab = labels[defined]
    counts = np.bincount(lab)
    p = counts[lab] / len(lab)
    return 1.0 / p


def class_homophily_variance(graph, relation_view="union", *, require_all_classes: bool = True) -> HomophilyProfile:
    """Compute the full homophily profile of a graph.

    Per-class means average H(v) over nodes where it is defined; CHV is the
    population variance of those means with each class counted once.

    Raises:
        ValueError: if a class has no node with defined homophily.
    """
    view = _as_view(graph, relation_view)
    h = homophily_values(view)
    labels = view.labels
    defined = np.isfinite(h)
    K = view.num_classes
    means = np.full(K, np.nan)
    in_var = np.full(K, np.nan)
    for c in range(K):
        hc = h[defined & (labels == c)]
        if len(hc) == 0:
            if require_all_classes:
                raise ValueError(f"class {c} has no node with defined homophily")
            continue
        means[c] = hc.sum() / len(hc)
        in_var[c] = ((hc - means[c]) ** 2).sum() / len(hc)
    present = np.isfinite(means)
    m = means[present]
    mu = m.sum() / len(m)
    chv = float(((m - mu) ** 2).sum() / len(m))
    return HomophilyProfile(
        per_node_h=h,
        per_class_mean=means,
        chv=chv,
        in_class_var=in_var,
        mean_in_class_var=float(in_var[present].mean()),
        weighted_mean=_weighted_mean(h, labels, defined),
    )


def _weighted_mean(h, labels, defined) -> float:
    w = _class_weights(labels, defined)
    return float((w * h[defined]).sum() / w.sum())


def weighted_mean_homophily(graph, relation_view="union") -> float:
    """Class-balanced mean of H(v): each node weighted by the inverse of its class share."""
    view = _as_view(graph, relation_view)
    h = homophily_values(view)
    defined = np.isfinite(h)
    if not defined.any():
        raise ValueError("no node has defined homophily")
    return _weighted_mean(h, view.labels, defined)


def _weighted_quantile(x, w, q):
    order = np.argsort(x, kind="stable")
    x, w = x[order], w[order]
    cdf = (np.cumsum(w) - 0.5 * w) / w.sum()
    return np.interp(q, cdf, x)


def silverman_bandwidth(x, w) -> float:
    """Silverman's rule of thumb using weighted moments and Kish's effective size."""
    w = w / w.sum()
    mean = (w * x).sum()
    std = np.sqrt((w * (x - mean) ** 2).sum())
    q25, q75 = _weighted_quantile(x, w, [0.25, 0.75])
    iqr = (q75 - q25) / 1.34
    spread = min(std, iqr) if iqr > 0 else std
    n_eff = 1.0 / (w ** 2).sum()
    return float(0.9 * spread * n_eff ** -0.2)


def weighted_density_curve(graph, relation_view="union", bandwidth: float | None = None) -> DensityCurve:
    """Class-balanced Gaussian KDE of node homophily on a 200-point grid over [0, 1].

    The curve is renormalized so its trapezoidal mass on [0, 1] is one.
    """
    view = _as_view(graph, relation_view)
    h = homophily_values(view)
    defined = np.isfinite(h)
    if defined.sum() < 2:
        raise ValueError("need at least two nodes with defined homophily")
    x = h[defined]
    w = _class_weights(view.labels, defined)
    if bandwidth is None:
        bandwidth = silverman_bandwidth(x, w)
        if not bandwidth > 0:
            log.warning("degenerate homophily sample; falling back to bandwidth %.2f", FALLBACK_BANDWIDTH)
            bandwidth = FALLBACK_BANDWIDTH
    if bandwidth <= 0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth}")
    grid = np.linspace(0.0, 1.0, GRID_SIZE)
    z = (grid[:, None] - x[None, :]) / bandwidth
    dens = (np.exp(-0.5 * z * z) * w[None, :]).sum(axis=1)
    mass = np.trapezoid(dens, grid)
    dens = dens / mass if mass > 0 else dens
    return DensityCurve(grid, dens, float(bandwidth), "w_i = 1 / (class share of node i)")
