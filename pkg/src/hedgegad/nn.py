"""Layers, losses, Adam and the shared full-batch training loop."""

from __future__ import annotations

import copy
import json
import logging
import os
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .autodiff import Tensor
from .evaluation import MetricsReport, accuracy, auc, average_precision

log = logging.getLogger(__name__)


class NumericError(RuntimeError):
    """Non-finite loss or parameter during training."""


def glorot(rng, fan_in: int, fan_out: int, name: str) -> Tensor:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-limit, limit, (fan_in, fan_out)), requires_grad=True, name=name)


def zeros(shape, name: str) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True, name=name)


def ones(shape, name: str) -> Tensor:
    return Tensor(np.ones(shape), requires_grad=True, name=name)


def linear(x: Tensor, W: Tensor, b: Tensor | None = None) -> Tensor:
    y = ad.matmul(x, W)
    return ad.add(y, b) if b is not None else y


def spmm(S: sp.spmatrix, x: Tensor) -> Tensor:
    """Constant sparse matrix times tensor."""
    if S.shape[1] != x.shape[0]:
        raise ad.ShapeError(f"spmm: {S.shape} @ {x.shape}")
    St = S.T.tocsr()
    return ad._record(np.asarray(S @ x.data), (x,), lambda g: (np.asarray(St @ g),))


def mean_aggregator(neighbors, n: int) -> sp.csr_matrix:
    """Row-stochastic matrix averaging each node with its neighbors (self included)."""
    rows, cols = [], []
    for v, nb in enumerate(neighbors):
        rows.append(np.full(len(nb) + 1, v))
        cols.append(np.concatenate([[v], nb]))
    rows, cols = np.concatenate(rows), np.concatenate(cols)
    deg = np.array([len(nb) + 1 for nb in neighbors], dtype=np.float64)
    return sp.csr_matrix((1.0 / deg[rows], (rows, cols)), shape=(n, n))


def sym_norm_adjacency(neighbors, n: int, self_loops: bool) -> sp.csr_matrix:
    """``D^-1/2 A D^-1/2``; isolated rows stay zero when ``self_loops`` is false."""
    rows = [np.full(len(nb), v) for v, nb in enumerate(neighbors)]
    cols = list(neighbors)
    if self_loops:
        rows.append(np.arange(n))
        cols.append(np.arange(n))
    rows = np.concatenate(rows).astype(np.int64) if rows else np.zeros(0, np.int64)
    cols = np.concatenate(cols).astype(np.int64) if cols else np.zeros(0, np.int64)
    A = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    deg = np.asarray(A.sum(axis=1)).ravel()
    dinv = np.zeros(n)
    dinv[deg > 0] = deg[deg > 0] ** -0.5
    return sp.csr_matrix(sp.diags(dinv) @ A @ sp.diags(dinv))


def cross_entropy(logits: Tensor, nodes, targets, reduction: str = "mean") -> Tensor:
    """Negative log-likelihood of ``targets`` at rows ``nodes`` under softmax(logits).

    ``reduction`` is ``"mean"`` (divide by the number of nodes) or ``"sum"``.
    """
    if reduction not in ("mean", "sum"):
        raise ValueError(f"reduction must be 'mean' or 'sum', got {reduction!r}")
    nodes = np.asarray(nodes)
    mask = np.zeros(logits.shape)
    mask[nodes, np.asarray(targets)] = 1.0
    logp = ad.log(ad.softmax_rows(logits))
    scale = -1.0 / len(nodes) if reduction == "mean" else -1.0
    return ad.scale(ad.masked_sum(logp, mask), scale)


def l2_penalty(params) -> Tensor:
    acc = None
    for p in params:
        term = ad.total(ad.square(p))
        acc = term if acc is None else ad.add(acc, term)
    return acc


class Adam:
    def __init__(self, params, lr=0.01, betas=(0.9, 0.999), eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def state_dict(self) -> dict:
        return {"t": self.t, "m": [m.copy() for m in self.m], "v": [v.copy() for v in self.v]}


def class_balanced_subset(labels, train, ratio, rng) -> np.ndarray:
    """Equal-per-class draw of about ``ratio * |train|`` nodes, capped by the minority class."""
    train = np.asarray(train)
    y = labels[train]
    classes = np.unique(y)
    per_class = int(ratio * len(train)) // len(classes)
    per_class = max(1, min(per_class, min(int((y == c).sum()) for c in classes)))
    picks = [rng.choice(train[y == c], size=per_class, replace=False) for c in classes]
    return np.sort(np.concatenate(picks))


def score_nodes(probs: np.ndarray, labels: np.ndarray, nodes: np.ndarray) -> dict:
    y = labels[nodes]
    out = {"accuracy": accuracy(probs[nodes].argmax(axis=1), y)}
    if probs.shape[1] == 2 and len(np.unique(y)) == 2:
        out["auc"] = auc(probs[nodes, 1], y)
        out["ap"] = average_precision(probs[nodes, 1], y)
    return out


@dataclass
class FitResult:
    params: dict
    best_epoch: int
    history: list
    report: MetricsReport
    probs: np.ndarray
    extras: dict = field(default_factory=dict)


def _check_finite(params: dict, epoch: int) -> None:
    for name, p in params.items():
        if not np.all(np.isfinite(p.data)):
            raise NumericError(f"non-finite values in parameter {name!r} at epoch {epoch}")


def fit(model, graph, split, *, epochs: int, lr: float, eval_every: int, seed: int,
        downsample_ratio: float | None, config_hash: str = "", rng_subset=None) -> FitResult:
    """Full-batch Adam training with periodic validation and best-checkpoint selection.

    ``model`` provides ``params`` (name -> Tensor), ``loss(subset, epoch)``
    returning ``(loss, info)`` and ``predict()`` returning ``(probs, extras)``.
    Binary tasks select on validation AUC, multi-class ones on accuracy.
    """
    start = time.perf_counter()
    params = model.params
    opt = Adam(params.values(), lr=lr)
    labels = graph.labels
    if rng_subset is None:
        rng_subset = np.random.default_rng(seed)
    binary = graph.label_arity == 2
    best = (-np.inf, -1, None)
    history = []
    if len(split.train) == 0:
        raise ValueError("empty training set")

    for epoch in range(1, epochs + 1):
        if downsample_ratio is None:
            subset = split.train
        else:
            subset = class_balanced_subset(labels, split.train, downsample_ratio, rng_subset)
        opt.zero_grad()
        with ad.Tape() as tape:
            loss, info = model.loss(subset, epoch)
        value = loss.item()
        if not np.isfinite(value):
            raise NumericError(f"non-finite loss {value} at epoch {epoch}")
        ad.backward(tape, loss, list(params.values()))
        opt.step()
        _check_finite(params, epoch)
        row = {"epoch": epoch, "loss": value, **info}
        if epoch % eval_every == 0 or epoch == epochs:
            probs, _ = model.predict()
            sc = score_nodes(probs, labels, split.val) if len(split.val) else {}
            key = sc.get("auc" if binary else "accuracy", sc.get("accuracy", -value))
            row["val_score"] = key
            if key > best[0]:
                best = (key, epoch, {k: p.data.copy() for k, p in params.items()})
        history.append(row)

    for k, arr in best[2].items():
        params[k].data[...] = arr
    probs, extras = model.predict()
    test = score_nodes(probs, labels, split.test) if len(split.test) else {}
    train_sc = score_nodes(probs, labels, split.train)
    report = MetricsReport(
        auc=test.get("auc"), ap=test.get("ap"), accuracy=test.get("accuracy"),
        split_sizes={"train": len(split.train), "val": len(split.val), "test": len(split.test)},
        config_hash=config_hash, seed=seed, wall_clock_seconds=time.perf_counter() - start,
        best_epoch=best[1], train_auc=train_sc.get("auc"), train_accuracy=train_sc["accuracy"],
        val_score=float(best[0]))
    return FitResult(params, best[1], history, report, probs, extras)


# -- checkpoints ------------------------------------------------------------

def save_checkpoint(params: dict, directory: str, stem: str = "checkpoint") -> None:
    """Flat little-endian float64 blob of named tensors plus a JSON manifest."""
    manifest = {"dtype": "float64-le", "tensors": []}
    offset = 0
    with open(os.path.join(directory, f"{stem}.bin"), "wb") as fh:
        for name in sorted(params):
            arr = np.ascontiguousarray(params[name].data, dtype="<f8")
            fh.write(arr.tobytes())
            manifest["tensors"].append({"name": name, "shape": list(arr.shape), "offset": offset})
            offset += arr.nbytes
    with open(os.path.join(directory, f"{stem}.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")


def load_checkpoint(directory: str, stem: str = "checkpoint") -> dict:
    with open(os.path.join(directory, f"{stem}.json"), encoding="utf-8") as fh:
        manifest = json.load(fh)
    blob = open(os.path.join(directory, f"{stem}.bin"), "rb").read()
    out = {}
    for t in manifest["tensors"]:
        count = int(np.prod(t["shape"]))
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=t["offset"])
        out[t["name"]] = arr.reshape(t["shape"]).copy()
    return out


def copy_params(params: dict) -> dict:
    return copy.deepcopy({k: v.data for k, v in params.items()})
