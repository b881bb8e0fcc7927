"""CSBM-C: two-class contextual SBM with per-class homophily, plus closed-form oracles."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .graph import MultiRelationGraph, NeighborhoodView, build_graph


@dataclass(frozen=True)
class CsbmParams:
    mu0: tuple
    mu1: tuple
    d: int
    h0: float
    h1: float
    n_per_class: int = 100
    seed: int = 0

    def __post_init__(self):
        mu0 = tuple(float(x) for x in np.ravel(self.mu0))
        mu1 = tuple(float(x) for x in np.ravel(self.mu1))
        object.__setattr__(self, "mu0", mu0)
        object.__setattr__(self, "mu1", mu1)
        if len(mu0) < 1 or len(mu0) != len(mu1):
            raise ValueError(f"mu0 and mu1 must have equal length >= 1, got {len(mu0)} and {len(mu1)}")
        if mu0 == mu1:
            raise ValueError("mu0 and mu1 must differ")
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"d must be a positive integer, got {self.d}")
        for name in ("h0", "h1"):
            h = getattr(self, name)
            if not 0.0 <= h <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {h}")

    @property
    def dim(self) -> int:
        return len(self.mu0)

    def same_count(self, k: int) -> int:
        """Exact number of same-class neighbors for a class-k node."""
        h = self.h0 if k == 0 else self.h1
        hd = h * self.d
        s = int(round(hd))
        if abs(hd - s) > 1e-9 or s + int(round((1 - h) * self.d)) != self.d:
            raise ValueError(
                f"h{k}*d = {hd:g} is not an integer; choose d so that h{k}*d is whole")
        return s

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class CsbmOracle:
    boundary_distance: float
    theoretical_chv: float
    midpoint: np.ndarray
    direction: np.ndarray

    def to_dict(self) -> dict:
        return {
            "boundary_distance": self.boundary_distance,
            "theoretical_chv": self.theoretical_chv,
            "midpoint": self.midpoint.tolist(),
            "direction": self.direction.tolist(),
        }


@dataclass
class CsbmSample:
    """A generated graph plus the exact directed out-neighborhoods it was built from."""

    params: CsbmParams
    graph: MultiRelationGraph
    out_neighbors: np.ndarray  # (n, d)

    def out_view(self) -> NeighborhoodView:
        return NeighborhoodView(tuple(self.out_neighbors), self.graph.labels, 2)


def oracle(params: CsbmParams) -> CsbmOracle:
    mu0, mu1 = np.array(params.mu0), np.array(params.mu1)
    h0, h1 = params.h0, params.h1
    gap = np.linalg.norm(mu0 - mu1)
    return CsbmOracle(
        boundary_distance=float(abs(h0 + h1 - 1) * gap / 2),
        theoretical_chv=float((h0 - h1) ** 2 / 4),
        midpoint=((1 + h0 - h1) * mu0 + (1 - h0 + h1) * mu1) / 2,
        direction=(mu0 - mu1) / gap,
    )


def _sample_out_neighbors(params: CsbmParams, rng) -> np.ndarray:
    n = params.n_per_class
    d = params.d
    out = np.empty((2 * n, d), dtype=np.int64)
    for k in (0, 1):
        same = params.same_count(k)
        cross = d - same
        if same > n - 1 or cross > n:
            raise ValueError(
                f"n_per_class={n} is too small to draw {same} same-class and {cross} cross-class neighbors")
        own, other = k * n, (1 - k) * n
        for i in range(n):
            s = rng.choice(n - 1, size=same, replace=False)
            s = s + (s >= i)  # skip self
            c = rng.choice(n, size=cross, replace=False)
            out[own + i, :same] = own + s
            out[own + i, same:] = other + c
    return out


def generate(params: CsbmParams) -> CsbmSample:
    """Sample a CSBM-C graph.

    Class-k nodes get ``x ~ N(mu_k, I)`` and exactly ``h_k * d`` same-class and
    ``(1 - h_k) * d`` cross-class out-neighbors drawn without replacement. The
    union of all drawn pairs, symmetrized, forms the single relation of the
    returned graph.
    """
    for k in (0, 1):
        params.same_count(k)
    rng = np.random.default_rng(params.seed)
    n = params.n_per_class
    labels = np.repeat([0, 1], n)
    means = np.array([params.mu0, params.mu1])
    features = means[labels] + rng.standard_normal((2 * n, params.dim))
    out = _sample_out_neighbors(params, rng)
    src = np.repeat(np.arange(2 * n), params.d)
    edges = np.column_stack([src, out.ravel()])
    graph = build_graph(2 * n, [edges], features, labels, 2)
    return CsbmSample(params, graph, out)


@dataclass
class AggregationReport:
    signed_distance: tuple  # per class, w.(E[h] - m), empirical
    abs_error: float  # | |signed distance of class 0| - boundary_distance |
    standard_error: tuple  # per class, exact given the sampled structure
    class_gap: float  # mean projection of class 0 minus class 1
    class_gap_se: float
    projected_variance: tuple  # per class
    misclassification_rate: float
    oracle: CsbmOracle = field(repr=False)

    def within(self, n_se: float = 3.0) -> bool:
        return self.abs_error <= n_se * self.standard_error[0]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["oracle"] = self.oracle.to_dict()
        return d


def gcn_aggregate_mean_check(params: CsbmParams, samples: int = 10_000, seed: int | None = None) -> AggregationReport:
    """Monte-Carlo check of the one-hop mean aggregation against the boundary-distance oracle.

    ``samples`` nodes (half per class) are drawn; each representation is the
    mean of its exact out-neighbor features. Standard errors are exact given
    the drawn structure: the class-mean projection is ``sum_j c_j w.eps_j``
    with independent unit-variance ``w.eps_j``, so its variance is ``sum c_j^2``.
    """
    if samples < 1000:
        raise ValueError("samples must be >= 1000")
    p = replace(params, n_per_class=samples // 2, seed=params.seed if seed is None else seed)
    orc = oracle(p)
    rng = np.random.default_rng(p.seed)
    n = p.n_per_class
    labels = np.repeat([0, 1], n)
    means = np.array([p.mu0, p.mu1])
    x = means[labels] + rng.standard_normal((2 * n, p.dim))
    out = _sample_out_neighbors(p, rng)
    h = x[out].mean(axis=1)
    proj = (h - orc.midpoint) @ orc.direction

    signed, se, pvar, coeffs = [], [], [], []
    for k in (0, 1):
        sel = labels == k
        signed.append(float(proj[sel].mean()))
        counts = np.bincount(out[sel].ravel(), minlength=2 * n) / (sel.sum() * p.d)
        coeffs.append(counts)
        se.append(float(np.sqrt((counts ** 2).sum())))
        pvar.append(float(proj[sel].var(ddof=1)))
    gap_coeffs = coeffs[0] - coeffs[1]

    s = np.sign(p.h0 + p.h1 - 1)
    pred0 = (proj > 0) if s >= 0 else (proj < 0)
    mis = np.where(labels == 0, ~pred0, pred0).mean()
    return AggregationReport(
        signed_distance=tuple(signed),
        abs_error=abs(abs(signed[0]) - orc.boundary_distance),
        standard_error=tuple(se),
        class_gap=signed[0] - signed[1],
        class_gap_se=float(np.sqrt((gap_coeffs ** 2).sum())),
        projected_variance=tuple(pvar),
        misclassification_rate=float(mis),
        oracle=orc,
    )
