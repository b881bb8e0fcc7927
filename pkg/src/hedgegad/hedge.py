"""HedGe: positional encodings, attention-based edge generation and relation fusion."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .graph import MultiRelationGraph, SplitMask, make_split
from .nn import (FitResult, cross_entropy, fit, glorot, l2_penalty, linear, mean_aggregator, ones,
                 spmm, sym_norm_adjacency, zeros)

ESGS_EPS = 1e-6
EIG_RESIDUAL_TOL = 1e-8
MAX_NODES = 2000


class ConfigError(ValueError):
    pass


class EigenError(RuntimeError):
    pass


@dataclass
class HedgeConfig:
    layers: int = 2
    hidden_dim: int = 32
    pe_eigvecs: int = 4
    tau: float = 1.0
    lambda_edge: float = 10.0
    alpha: float = 1.0
    beta: float = 1e-4
    label_embed_dim: int | None = None  # must equal f + R + R*pe_eigvecs when set
    original_aggregator: str = "sage"
    seed: int = 0
    downsample_ratio: float = 0.5
    edgeless: bool = False
    epochs: int = 200
    lr: float = 0.01
    eval_every: int = 10
    split: tuple = (0.4, 0.3, 0.3)
    split_seed: int = 0
    standardize: bool = True  # z-score the concatenated X/degree/Laplacian columns
    ce_reduction: str = "mean"  # "mean" or "sum" over the epoch subset

    def __post_init__(self):
        self.split = tuple(self.split)
        self.validate()

    def validate(self) -> None:
        if not self.tau > 0:
            raise ConfigError(f"tau must be > 0, got {self.tau}")
        if not self.lambda_edge > 0:
            raise ConfigError(f"lambda_edge must be > 0, got {self.lambda_edge}")
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError(f"alpha and beta must be >= 0, got alpha={self.alpha}, beta={self.beta}")
        if self.layers < 1 or self.hidden_dim < 1 or self.pe_eigvecs < 0:
            raise ConfigError("layers and hidden_dim must be >= 1 and pe_eigvecs >= 0")
        if not 0 < self.downsample_ratio <= 1:
            raise ConfigError(f"downsample_ratio must lie in (0, 1], got {self.downsample_ratio}")
        if self.original_aggregator not in ("sage", "gcn"):
            raise ConfigError(f"original_aggregator must be 'sage' or 'gcn', got {self.original_aggregator!r}")
        if self.ce_reduction not in ("mean", "sum"):
            raise ConfigError(f"ce_reduction must be 'mean' or 'sum', got {self.ce_reduction!r}")
        if self.epochs < 1 or self.eval_every < 1 or not self.lr > 0:
            raise ConfigError("epochs and eval_every must be >= 1 and lr > 0")

    @classmethod
    def from_dict(cls, d: dict) -> "HedgeConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["split"] = list(self.split)
        return d

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


# -- positional encodings ---------------------------------------------------

def degree_pe(graph: MultiRelationGraph) -> np.ndarray:
    return np.column_stack([graph.degrees(r) for r in range(graph.num_relations)]).astype(np.float64)


def normalized_laplacian(neighbors, n: int) -> np.ndarray:
    A = np.zeros((n, n))
    for v, nb in enumerate(neighbors):
        A[v, nb] = 1.0
    deg = A.sum(axis=1)
    dinv = np.zeros(n)
    dinv[deg > 0] = deg[deg > 0] ** -0.5
    return np.eye(n) - dinv[:, None] * A * dinv[None, :]


def laplacian_eigenvectors(neighbors, n: int, k: int):
    """Eigenpairs 1..k (ascending) of the normalized Laplacian, skipping the trivial one."""
    if n <= k:
        raise ConfigError(f"need more than {k} nodes for {k} Laplacian eigenvectors, got {n}")
    L = normalized_laplacian(neighbors, n)
    vals, vecs = np.linalg.eigh(L)
    vals, vecs = vals[1:k + 1], vecs[:, 1:k + 1]
    resid = np.linalg.norm(L @ vecs - vecs * vals[None, :], axis=0)
    if resid.size and resid.max() > EIG_RESIDUAL_TOL:
        raise EigenError(f"eigensolver residual {resid.max():.3e} exceeds {EIG_RESIDUAL_TOL:g}")
    return vals, vecs


def laplacian_pe(graph: MultiRelationGraph, k_pe: int, sign_seed=0) -> np.ndarray:
    """Per relation, the first ``k_pe`` non-trivial eigenvectors with random signs, concatenated."""
    rng = sign_seed if isinstance(sign_seed, np.random.Generator) else np.random.default_rng(sign_seed)
    blocks = []
    for r in range(graph.num_relations):
        if k_pe == 0:
            continue
        _, vecs = laplacian_eigenvectors(graph.relations[r], graph.num_nodes, k_pe)
        signs = rng.choice([-1.0, 1.0], size=k_pe)
        blocks.append(vecs * signs[None, :])
    if not blocks:
        return np.zeros((graph.num_nodes, 0))
    return np.concatenate(blocks, axis=1)


def standardize_columns(x: np.ndarray) -> np.ndarray:
    """Zero-mean, unit-variance columns; constant columns are only centered."""
    mu = x.mean(axis=0, keepdims=True)
    sd = x.std(axis=0, keepdims=True)
    return (x - mu) / np.where(sd > 0, sd, 1.0)


def label_codes(labels, split: SplitMask, epoch_subset, num_classes: int) -> np.ndarray:
    """Label-encoding index per node: the true label for train nodes outside
    this epoch's subset, ``num_classes`` (unknown) for everything else."""
    subset = np.asarray(epoch_subset, dtype=np.int64)
    if not np.isin(subset, split.train).all():
        raise ValueError("epoch subset must be drawn from the training set")
    codes = np.full(len(labels), num_classes, dtype=np.int64)
    visible = np.setdiff1d(split.train, subset)
    codes[visible] = labels[visible]
    return codes


def label_pe(labels, split: SplitMask, epoch_subset, table: Tensor, num_classes: int | None = None) -> Tensor:
    if num_classes is None:
        num_classes = table.shape[0] - 1
    return ad.gather_rows(table, label_codes(labels, split, epoch_subset, num_classes))


def fuse_pe(X, deg_pe, lap_pe, lab_pe: Tensor) -> Tensor:
    """``Concat(X, degree PE, Laplacian PE) + label PE``."""
    base = np.concatenate([np.asarray(X), np.asarray(deg_pe), np.asarray(lap_pe)], axis=1)
    if lab_pe.shape != base.shape:
        raise ad.ShapeError(f"label encoding width {lab_pe.shape[1]} != concatenation width {base.shape[1]}")
    return ad.add(Tensor(base), lab_pe)


# -- layer pieces -----------------------------------------------------------

def attention_coefficients(h: Tensor, W_q: Tensor, W_k: Tensor) -> Tensor:
    q = ad.matmul(h, W_q)
    k = ad.matmul(h, W_k)
    scores = ad.scale(ad.matmul(q, ad.transpose(k)), 1.0 / np.sqrt(W_k.shape[1]))
    return ad.softmax_rows(scores)


@dataclass
class EdgeSample:
    p: Tensor  # soft edge probabilities
    adjacency: Tensor  # A^G, hard in forward unless sampled in soft mode
    hard: np.ndarray  # 0/1 symmetric, zero diagonal
    clamped: int
    directed: np.ndarray | None = None  # raw per-pair draws e_ij before symmetrizing


def esgs_sample(a: Tensor, lam: float, tau: float, noise=None, mode: str = "hard") -> EdgeSample:
    """Edge-specific Gumbel-Softmax over every node pair.

    ``noise`` is ``(G1, G2)`` arrays, an int seed or a Generator. ``mode`` is
    ``"hard"`` (straight-through), ``"soft"`` (A^G built from p) or ``"map"``
    (deterministic ``lambda * a > 0.5`` decode, no noise, no gradient).
    """
    n = a.shape[0]
    raw = lam * a.data
    clamped = int(((raw < ESGS_EPS) | (raw > 1 - ESGS_EPS)).sum())
    off_diag = 1.0 - np.eye(n)
    if mode == "map":
        e = (np.clip(raw, ESGS_EPS, 1 - ESGS_EPS) > 0.5).astype(np.float64)
        hard = np.maximum(e, e.T) * off_diag
        return EdgeSample(Tensor(np.clip(raw, ESGS_EPS, 1 - ESGS_EPS)), Tensor(hard), hard, clamped, e)

    if noise is None or isinstance(noise, (int, np.integer, np.random.Generator)):
        rng = noise if isinstance(noise, np.random.Generator) else np.random.default_rng(noise)
        g1 = ad.gumbel_noise((n, n), rng).data
        g2 = ad.gumbel_noise((n, n), rng).data
    else:
        g1, g2 = (np.asarray(g, dtype=np.float64) for g in noise)
    q = ad.clamp(ad.scale(a, lam), ESGS_EPS, 1 - ESGS_EPS)
    l1 = ad.add(ad.log(q), g1)
    l2 = ad.add(ad.log(ad.shift(ad.scale(q, -1.0), 1.0)), g2)
    p = ad.sigmoid(ad.scale(ad.sub(l1, l2), 1.0 / tau))
    e = (l1.data > l2.data).astype(np.float64)
    if mode == "soft":
        E = p
    elif mode == "hard":
        E = ad.straight_through(e, p)
    else:
        raise ValueError(f"unknown sampling mode {mode!r}")
    # OR of the two directions; equals min(e_ij + e_ji, 1) on 0/1 values
    A = ad.sub(ad.add(E, ad.transpose(E)), ad.mul(E, ad.transpose(E)))
    A = ad.mul(A, off_diag)
    hard = np.maximum(e, e.T) * off_diag
    return EdgeSample(p, A, hard, clamped, e)


def generated_gcn(h: Tensor, A: Tensor, W_g: Tensor, activation=ad.relu) -> Tensor:
    """``sigma(D^-1/2 A D^-1/2 h W_g)`` on the generated graph; isolated rows give zeros."""
    dinv = ad.safe_rsqrt(ad.row_sum(A))
    A_hat = ad.mul(ad.mul(A, dinv), ad.transpose(dinv))
    return activation(ad.matmul(A_hat, ad.matmul(h, W_g)))


def original_aggregate(h: Tensor, aggregator, W_s: Tensor, activation=ad.relu) -> Tensor:
    """``sigma(MEAN({h_v} u N_r(v)) W_s)`` with a precomputed sparse aggregator."""
    return activation(ad.matmul(spmm(aggregator, h), W_s))


def attention_sum(a: Tensor, h: Tensor, W_v: Tensor) -> Tensor:
    return ad.matmul(a, ad.matmul(h, W_v))


def fuse_layer(branches, ln_gain, ln_bias, ffn) -> Tensor:
    """``FFN(LN(mean over relations of Concat(branches_r)))``."""
    per_rel = [ad.concat_cols(list(b)) for b in branches]
    z = ad.layer_norm_rows(ad.mean_of(per_rel))
    z = ad.add(ad.mul(z, ln_gain), ln_bias)
    W1, b1, W2, b2 = ffn
    return linear(ad.relu(linear(z, W1, b1)), W2, b2)


def penalty(attn_maps, cross_mask: np.ndarray) -> Tensor:
    """Sum of squared attention over ordered train pairs with differing labels."""
    acc = None
    for a in attn_maps:
        term = ad.masked_sum(ad.square(a), cross_mask)
        acc = term if acc is None else ad.add(acc, term)
    return acc


def cross_class_mask(labels, train, n: int) -> np.ndarray:
    mask = np.zeros((n, n))
    t = np.asarray(train)
    y = labels[t]
    diff = (y[:, None] != y[None, :]).astype(np.float64)
    mask[np.ix_(t, t)] = diff
    return mask


def losses(logits: Tensor, attn_maps, labels, subset, alpha: float, beta: float, params,
           cross_mask: np.ndarray, reduction: str = "mean"):
    """Return ``(L, L_c, L_p)``: cross-entropy over ``subset`` plus weighted penalty and L2."""
    subset = np.asarray(subset)
    if len(subset) == 0:
        raise ValueError("empty training subset")
    lc = cross_entropy(logits, subset, labels[subset], reduction)
    lp = penalty(attn_maps, cross_mask) if attn_maps else Tensor(0.0)
    total = lc
    if alpha:
        total = ad.add(total, ad.scale(lp, alpha))
    if beta:
        total = ad.add(total, ad.scale(l2_penalty(params), beta))
    return total, lc, lp


# -- model ------------------------------------------------------------------

class HedgeModel:
    """Parameters plus a forward pass over one fixed graph and split."""

    def __init__(self, graph: MultiRelationGraph, config: HedgeConfig, split: SplitMask):
        if graph.num_nodes > MAX_NODES:
            raise ConfigError(f"dense attention supports at most {MAX_NODES} nodes, got {graph.num_nodes}")
        if graph.label_arity < 2:
            raise ConfigError("need at least two classes")
        self.graph = graph
        self.config = config
        self.split = split
        ss = np.random.SeedSequence(config.seed)
        init_ss, gumbel_ss, subset_ss, sign_ss = ss.spawn(4)
        self.rng_init = np.random.default_rng(init_ss)
        self.rng_gumbel = np.random.default_rng(gumbel_ss)
        self.rng_subset = np.random.default_rng(subset_ss)
        self.rng_sign = np.random.default_rng(sign_ss)

        n, R, K = graph.num_nodes, graph.num_relations, graph.label_arity
        self.num_classes = K
        self.base = np.concatenate(
            [graph.features, degree_pe(graph), laplacian_pe(graph, config.pe_eigvecs, self.rng_sign)], axis=1)
        if config.standardize:
            self.base = standardize_columns(self.base)
        d_in = self.base.shape[1]
        if config.label_embed_dim is not None and config.label_embed_dim != d_in:
            raise ConfigError(
                f"label_embed_dim={config.label_embed_dim} must equal f + R + R*pe_eigvecs = {d_in}")
        self.aggregators = []
        for r in range(R):
            if config.original_aggregator == "sage":
                self.aggregators.append(mean_aggregator(graph.relations[r], n))
            else:
                self.aggregators.append(sym_norm_adjacency(graph.relations[r], n, self_loops=False))
        self.cross_mask = cross_class_mask(graph.labels, split.train, n)
        self.params = self._init_params(d_in, R, K)
        self.noise_override = None  # list of (G1, G2) per layer, for frozen-noise checks

    def _init_params(self, d_in, R, K) -> dict:
        cfg, rng = self.config, self.rng_init
        hid = cfg.hidden_dim
        p = {"E": Tensor(rng.normal(0, 0.1, (K + 1, d_in)), requires_grad=True, name="E")}
        width = 2 * hid if cfg.edgeless else 3 * hid
        for k in range(cfg.layers):
            din = d_in if k == 0 else hid
            pre = f"layer{k}."
            p[pre + "W_q"] = glorot(rng, din, hid, pre + "W_q")
            p[pre + "W_k"] = glorot(rng, din, hid, pre + "W_k")
            p[pre + "W_v"] = glorot(rng, din, hid, pre + "W_v")
            for r in range(R):
                p[pre + f"W_g{r}"] = glorot(rng, din, hid, pre + f"W_g{r}")
                if not cfg.edgeless:
                    p[pre + f"W_s{r}"] = glorot(rng, din, hid, pre + f"W_s{r}")
            p[pre + "ln_gain"] = ones((1, width), pre + "ln_gain")
            p[pre + "ln_bias"] = zeros((1, width), pre + "ln_bias")
            p[pre + "ffn_W1"] = glorot(rng, width, 2 * hid, pre + "ffn_W1")
            p[pre + "ffn_b1"] = zeros((1, 2 * hid), pre + "ffn_b1")
            p[pre + "ffn_W2"] = glorot(rng, 2 * hid, hid, pre + "ffn_W2")
            p[pre + "ffn_b2"] = zeros((1, hid), pre + "ffn_b2")
        p["cls_W1"] = glorot(rng, hid, hid, "cls_W1")
        p["cls_b1"] = zeros((1, hid), "cls_b1")
        p["cls_W2"] = glorot(rng, hid, K, "cls_W2")
        p["cls_b2"] = zeros((1, K), "cls_b2")
        return p

    def forward(self, codes: np.ndarray, mode: str = "hard"):
        """Run all layers. Returns ``(logits, embeddings, attention maps, edge samples)``."""
        cfg, P = self.config, self.params
        h = ad.add(Tensor(self.base), ad.gather_rows(P["E"], codes))
        attn, samples = [], []
        for k in range(cfg.layers):
            pre = f"layer{k}."
            a = attention_coefficients(h, P[pre + "W_q"], P[pre + "W_k"])
            noise = self.noise_override[k] if self.noise_override is not None else self.rng_gumbel
            sample = esgs_sample(a, cfg.lambda_edge, cfg.tau, noise, mode)
            h_a = attention_sum(a, h, P[pre + "W_v"])
            branches = []
            for r in range(self.graph.num_relations):
                h_g = generated_gcn(h, sample.adjacency, P[pre + f"W_g{r}"])
                if cfg.edgeless:
                    branches.append((h_g, h_a))
                else:
                    h_o = original_aggregate(h, self.aggregators[r], P[pre + f"W_s{r}"])
                    branches.append((h_g, h_o, h_a))
            ffn = (P[pre + "ffn_W1"], P[pre + "ffn_b1"], P[pre + "ffn_W2"], P[pre + "ffn_b2"])
            h = fuse_layer(branches, P[pre + "ln_gain"], P[pre + "ln_bias"], ffn)
            attn.append(a)
            samples.append(sample)
        logits = linear(ad.relu(linear(h, P["cls_W1"], P["cls_b1"])), P["cls_W2"], P["cls_b2"])
        return logits, h, attn, samples

    def loss(self, subset, epoch: int = 0, mode: str = "hard"):
        labels = self.graph.labels
        codes = label_codes(labels, self.split, subset, self.num_classes)
        logits, _, attn, samples = self.forward(codes, mode)
        total, lc, lp = losses(logits, attn, labels, subset, self.config.alpha, self.config.beta,
                               list(self.params.values()), self.cross_mask, self.config.ce_reduction)
        info = {"loss_ce": lc.item(), "loss_penalty": lp.item(),
                "clamped": sum(s.clamped for s in samples),
                "generated_edges": int(sum(s.hard.sum() for s in samples) // 2)}
        return total, info

    def eval_codes(self) -> np.ndarray:
        return label_codes(self.graph.labels, self.split, np.zeros(0, np.int64), self.num_classes)

    def predict(self):
        logits, h, attn, samples = self.forward(self.eval_codes(), mode="map")
        z = logits.data - logits.data.max(axis=1, keepdims=True)
        probs = np.exp(z)
        probs /= probs.sum(axis=1, keepdims=True)
        return probs, {"embeddings": h.data, "attention": [a.data for a in attn],
                       "generated": [s.hard for s in samples]}

    def load_params(self, arrays: dict) -> None:
        for k, arr in arrays.items():
            if k not in self.params:
                raise KeyError(f"unknown parameter {k!r} in checkpoint")
            if self.params[k].shape != arr.shape:
                raise ad.ShapeError(f"parameter {k!r}: checkpoint shape {arr.shape} != {self.params[k].shape}")
            self.params[k].data[...] = arr


@dataclass
class HedgeState:
    model: HedgeModel
    best_epoch: int
    epoch: int

    @property
    def params(self) -> dict:
        return self.model.params


@dataclass
class HedgeRun:
    state: HedgeState
    history: list
    report: object
    probs: np.ndarray
    extras: dict = field(default_factory=dict)


def train(graph: MultiRelationGraph, config: HedgeConfig, split: SplitMask | None = None) -> HedgeRun:
    """Train HedGe full-batch; the returned state holds the best-validation parameters."""
    if split is None:
        split = make_split(graph, config.split, config.split_seed)
    model = HedgeModel(graph, config, split)
    res: FitResult = fit(model, graph, split, epochs=config.epochs, lr=config.lr,
                         eval_every=config.eval_every, seed=config.seed,
                         downsample_ratio=config.downsample_ratio, config_hash=config.digest(),
                         rng_subset=model.rng_subset)
    _, extras = model.predict()
    state = HedgeState(model, res.best_epoch, config.epochs)
    return HedgeRun(state, res.history, res.report, res.probs, extras)


def generated_graph(graph: MultiRelationGraph, hard: np.ndarray) -> MultiRelationGraph:
    """Wrap a 0/1 generated adjacency as a single-relation graph over the same nodes."""
    iu, ju = np.nonzero(np.triu(hard, 1))
    nbrs = [np.zeros(0, np.int64) for _ in range(graph.num_nodes)]
    rows = {}
    for i, j in zip(iu.tolist(), ju.tolist()):
        rows.setdefault(i, []).append(j)
        rows.setdefault(j, []).append(i)
    for v, nb in rows.items():
        nbrs[v] = np.array(sorted(nb), dtype=np.int64)
    return MultiRelationGraph(graph.num_nodes, [nbrs], graph.features, graph.labels, graph.label_arity)
