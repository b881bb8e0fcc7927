"""Finite-difference suites for the autodiff primitives and the end-to-end HedGe loss."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .autodiff import Tensor, gradcheck
from .nn import spmm

PRIMITIVE_TOL = 1e-6
END_TO_END_TOL = 1e-4
STEP = 1e-5


def _weighted(out: Tensor, w: np.ndarray) -> Tensor:
    return ad.masked_sum(out, w)


def primitive_cases(rng) -> dict:
    """Name -> (loss_fn, params) on random 3x4 inputs, each loss a random weighting of the output."""
    x = Tensor(rng.standard_normal((3, 4)))
    y = Tensor(rng.standard_normal((3, 4)))
    m = Tensor(rng.standard_normal((4, 3)))
    pos = Tensor(rng.uniform(0.5, 2.0, (3, 4)))
    # keep relu/clamp inputs away from their kinks so central differences stay valid
    kinked = Tensor(np.sign(rng.standard_normal((3, 4))) * rng.uniform(0.1, 1.0, (3, 4)))
    col = Tensor(rng.standard_normal((3, 1)))
    row = Tensor(rng.standard_normal((1, 4)))
    idx = np.array([2, 0, 2, 1])
    S = sp.csr_matrix(rng.standard_normal((5, 3)) * (rng.random((5, 3)) < 0.6))
    W = {k: rng.standard_normal(s) for k, s in
         [("34", (3, 4)), ("33", (3, 3)), ("31", (3, 1)), ("38", (3, 8)), ("44", (4, 4)),
          ("43", (4, 3)), ("54", (5, 4)), ("11", (1, 1))]}

    return {
        "matmul": (lambda: _weighted(ad.matmul(x, m), W["33"]), [x, m]),
        "add": (lambda: _weighted(ad.add(x, y), W["34"]), [x, y]),
        "add_broadcast": (lambda: _weighted(ad.add(ad.add(x, col), row), W["34"]), [x, col, row]),
        "sub": (lambda: _weighted(ad.sub(x, y), W["34"]), [x, y]),
        "scale": (lambda: _weighted(ad.scale(x, -2.5), W["34"]), [x]),
        "shift": (lambda: _weighted(ad.shift(x, 0.7), W["34"]), [x]),
        "transpose": (lambda: _weighted(ad.transpose(x), W["43"]), [x]),
        "concat_cols": (lambda: _weighted(ad.concat_cols([x, y]), W["38"]), [x, y]),
        "row_mean": (lambda: _weighted(ad.row_mean(x), W["31"]), [x]),
        "row_sum": (lambda: _weighted(ad.row_sum(x), W["31"]), [x]),
        "softmax_rows": (lambda: _weighted(ad.softmax_rows(x), W["34"]), [x]),
        "relu": (lambda: _weighted(ad.relu(kinked), W["34"]), [kinked]),
        "sigmoid": (lambda: _weighted(ad.sigmoid(x), W["34"]), [x]),
        "layer_norm_rows": (lambda: _weighted(ad.layer_norm_rows(x), W["34"]), [x]),
        "mul": (lambda: _weighted(ad.mul(x, y), W["34"]), [x, y]),
        "mul_broadcast": (lambda: _weighted(ad.mul(x, col), W["34"]), [x, col]),
        "gather_rows": (lambda: _weighted(ad.gather_rows(x, idx), W["44"]), [x]),
        "scatter_add_rows": (lambda: _weighted(ad.scatter_add_rows(ad.transpose(x), idx, 3), W["33"]), [x]),
        "log": (lambda: _weighted(ad.log(pos), W["34"]), [pos]),
        "square": (lambda: _weighted(ad.square(x), W["34"]), [x]),
        "masked_sum": (lambda: ad.masked_sum(ad.square(x), W["34"] > 0), [x]),
        "clamp": (lambda: _weighted(ad.clamp(kinked, -0.05, 2.0), W["34"]), [kinked]),
        "safe_rsqrt": (lambda: _weighted(ad.safe_rsqrt(pos), W["34"]), [pos]),
        "spmm": (lambda: _weighted(spmm(S, x), W["54"]), [x]),
    }


def primitive_suite(seed: int = 0) -> dict:
    """Max relative error per primitive."""
    rng = np.random.default_rng(seed)
    return {name: gradcheck(fn, params, STEP) for name, (fn, params) in primitive_cases(rng).items()}


def small_hedge_problem(seed: int = 0, edgeless: bool = False, aggregator: str = "sage"):
    """A 12-node CSBM-C graph with a HedGe model, frozen Gumbel noise and a fixed train subset."""
    from .csbm import CsbmParams, generate
    from .graph import make_split
    from .hedge import HedgeConfig, HedgeModel

    graph = generate(CsbmParams((1.0, 0.0), (0.0, 1.0), 4, 0.75, 0.25, 6, seed)).graph
    split = make_split(graph, (0.5, 0.25, 0.25), seed)
    cfg = HedgeConfig(layers=2, hidden_dim=4, pe_eigvecs=2, tau=1.0, lambda_edge=3.0, alpha=1.0,
                      beta=1e-3, seed=seed, downsample_ratio=0.5, edgeless=edgeless,
                      original_aggregator=aggregator, standardize=True)
    model = HedgeModel(graph, cfg, split)
    rng = np.random.default_rng(seed + 1)
    n = graph.num_nodes
    model.noise_override = [(ad.gumbel_noise((n, n), rng).data, ad.gumbel_noise((n, n), rng).data)
                            for _ in range(cfg.layers)]
    subset = np.sort(rng.choice(split.train, size=len(split.train) // 2, replace=False))
    return model, subset


def end_to_end(seed: int = 0, edgeless: bool = False, aggregator: str = "sage") -> float:
    """Max relative error of the soft-path HedGe loss gradient over every parameter entry."""
    model, subset = small_hedge_problem(seed, edgeless, aggregator)
    return gradcheck(lambda: model.loss(subset, mode="soft")[0], list(model.params.values()), STEP)


def run_all(seed: int = 0) -> dict:
    prims = primitive_suite(seed)
    e2e = {
        "hedge_sage": end_to_end(seed),
        "hedge_gcn": end_to_end(seed, aggregator="gcn"),
        "hedge_edgeless": end_to_end(seed, edgeless=True),
    }
    ok = max(prims.values()) < PRIMITIVE_TOL and max(e2e.values()) < END_TO_END_TOL
    return {"primitives": prims, "end_to_end": e2e, "primitive_tol": PRIMITIVE_TOL,
            "end_to_end_tol": END_TO_END_TOL, "passed": bool(ok)}
