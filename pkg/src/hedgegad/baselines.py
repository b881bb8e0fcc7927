"""GCN, GraphSAGE and MLP reference classifiers on the shared autodiff core."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .graph import MultiRelationGraph, SplitMask, make_split
from .nn import FitResult, cross_entropy, fit, glorot, l2_penalty, linear, mean_aggregator, spmm, \
    sym_norm_adjacency, zeros

KINDS = ("gcn", "sage", "mlp")


@dataclass
class BaselineConfig:
    kind: str = "gcn"
    layers: int = 2
    hidden_dim: int = 32
    lr: float = 0.01
    seed: int = 0
    epochs: int = 200
    eval_every: int = 10
    beta: float = 1e-4
    split: tuple = (0.4, 0.3, 0.3)
    split_seed: int = 0

    def __post_init__(self):
        self.split = tuple(self.split)
        if self.kind not in KINDS:
            raise ValueError(f"baseline kind must be one of {KINDS}, got {self.kind!r}")
        if self.layers < 1:
            raise ValueError(f"layers must be >= 1, got {self.layers}")
        if not self.lr > 0 or self.epochs < 1:
            raise ValueError("lr must be > 0 and epochs >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "BaselineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["split"] = list(self.split)
        return d

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


class BaselineModel:
    """Stack of propagate-then-transform layers followed by a linear classifier.

    All relations are merged into one neighborhood for gcn and sage.
    """

    def __init__(self, graph: MultiRelationGraph, cfg: BaselineConfig):
        self.graph = graph
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        nbrs = graph.union_neighbors()
        n = graph.num_nodes
        if cfg.kind == "gcn":
            self.prop = sym_norm_adjacency(nbrs, n, self_loops=True)
        elif cfg.kind == "sage":
            self.prop = mean_aggregator(nbrs, n)
        else:
            self.prop = None
        self.X = Tensor(graph.features)
        self.params = {}
        din = graph.num_features
        for k in range(cfg.layers):
            self.params[f"layer{k}.W"] = glorot(rng, din, cfg.hidden_dim, f"layer{k}.W")
            self.params[f"layer{k}.b"] = zeros((1, cfg.hidden_dim), f"layer{k}.b")
            din = cfg.hidden_dim
        self.params["out.W"] = glorot(rng, din, graph.label_arity, "out.W")
        self.params["out.b"] = zeros((1, graph.label_arity), "out.b")

    def forward(self):
        h = self.X
        for k in range(self.cfg.layers):
            if self.prop is not None:
                h = spmm(self.prop, h)
            h = ad.relu(linear(h, self.params[f"layer{k}.W"], self.params[f"layer{k}.b"]))
        return linear(h, self.params["out.W"], self.params["out.b"]), h

    def loss(self, subset, epoch: int = 0):
        logits, _ = self.forward()
        labels = self.graph.labels
        lc = cross_entropy(logits, subset, labels[subset])
        total = lc
        if self.cfg.beta:
            total = ad.add(total, ad.scale(l2_penalty(list(self.params.values())), self.cfg.beta))
        return total, {"loss_ce": lc.item()}

    def predict(self):
        logits, h = self.forward()
        z = logits.data - logits.data.max(axis=1, keepdims=True)
        probs = np.exp(z)
        probs /= probs.sum(axis=1, keepdims=True)
        return probs, {"embeddings": h.data}


def train_baseline(graph: MultiRelationGraph, cfg: BaselineConfig, split: SplitMask | None = None) -> FitResult:
    if split is None:
        split = make_split(graph, cfg.split, cfg.split_seed)
    model = BaselineModel(graph, cfg)
    res = fit(model, graph, split, epochs=cfg.epochs, lr=cfg.lr, eval_every=cfg.eval_every,
              seed=cfg.seed, downsample_ratio=None, config_hash=cfg.digest())
    res.extras["model"] = model
    return res
