"""Seeded edge perturbations: the Heterophily Attack and a random rewiring attack."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graph import MultiRelationGraph, validate


class AttackError(ValueError):
    pass


@dataclass(frozen=True)
class AttackConfig:
    target_class: int = 0
    ratio: float = 0.1
    seed: int = 0
    kind: str = "heterophily"

    def __post_init__(self):
        if not 0.0 <= self.ratio <= 1.0:
            raise ValueError(f"ratio must lie in [0, 1], got {self.ratio}")
        if self.kind not in ("heterophily", "random"):
            raise ValueError(f"unknown attack kind {self.kind!r}")


@dataclass
class AttackResult:
    graph: MultiRelationGraph
    num_modifications: int
    removed: np.ndarray  # (k, 2), i < j
    added: np.ndarray  # (m, 2), i < j

    @property
    def edge_count_grew(self) -> bool:
        return len(self.added) > len(self.removed)


def heterophily_attack(graph: MultiRelationGraph, cfg: AttackConfig, relation: int = 0) -> AttackResult:
    """Remove intra-target-class edges and add target/non-target edges.

    The number of modifications is ``floor(upper_edges * ratio)``. Up to that
    many intra-class edges are removed, then exactly that many new cross edges
    are added by rejection sampling, so the edge count grows whenever fewer
    intra-class edges were available than modifications requested.
    """
    if cfg.kind != "heterophily":
        raise ValueError("heterophily_attack requires kind='heterophily'")
    labels = graph.labels
    if not 0 <= cfg.target_class < graph.label_arity:
        raise ValueError(f"target_class {cfg.target_class} outside 0..{graph.label_arity - 1}")
    rng = np.random.default_rng(cfg.seed)
    n = graph.num_nodes
    edges = graph.edge_array(relation)
    num_mod = math.floor(len(edges) * cfg.ratio)

    i_idx = np.flatnonzero(labels == cfg.target_class)
    j_idx = np.flatnonzero(labels != cfg.target_class)
    if len(i_idx) == 0 or len(j_idx) == 0:
        raise AttackError("graph needs nodes both inside and outside the target class")

    in_target = labels == cfg.target_class
    intra = np.flatnonzero(in_target[edges[:, 0]] & in_target[edges[:, 1]])
    n_remove = min(num_mod, len(intra))
    drop = np.sort(rng.choice(intra, size=n_remove, replace=False)) if n_remove else np.zeros(0, np.int64)
    keep = np.ones(len(edges), dtype=bool)
    keep[drop] = False
    removed = edges[drop]

    present = {(int(a), int(b)) for a, b in edges[keep]}
    existing_cross = sum(1 for a, b in present if in_target[a] != in_target[b])
    free = len(i_idx) * len(j_idx) - existing_cross
    if free < num_mod:
        raise AttackError(
            f"only {free} cross-class non-edges available, {num_mod} additions requested "
            f"(shortfall {num_mod - free})")

    added = []
    budget = n * n
    attempts = 0
    for _ in range(num_mod):
        while True:
            attempts += 1
            if attempts > budget:
                raise AttackError(
                    f"retry budget of {budget} exhausted after {len(added)} of {num_mod} additions")
            i = int(i_idx[rng.integers(len(i_idx))])
            j = int(j_idx[rng.integers(len(j_idx))])
            key = (i, j) if i < j else (j, i)
            if key not in present:
                present.add(key)
                added.append(key)
                break

    added_arr = np.array(added, dtype=np.int64).reshape(-1, 2)
    new_edges = np.concatenate([edges[keep], added_arr]) if len(added_arr) else edges[keep]
    out = graph.with_relation(relation, new_edges)
    validate(out)
    return AttackResult(out, num_mod, removed, added_arr)


def random_attack(graph: MultiRelationGraph, cfg: AttackConfig, relation: int = 0) -> AttackResult:
    """Delete ``floor(ratio * |E|)`` random edges, then add as many random non-edges.

    Added pairs are drawn from pairs that were not edges of the input graph,
    so deleted edges are never restored.
    """
    if cfg.kind != "random":
        raise ValueError("random_attack requires kind='random'")
    rng = np.random.default_rng(cfg.seed)
    n = graph.num_nodes
    edges = graph.edge_array(relation)
    m = math.floor(cfg.ratio * len(edges))
    free = n * (n - 1) // 2 - len(edges)
    if free < m:
        raise AttackError(f"graph too dense: {free} non-edges available, {m} additions requested")
    drop = np.sort(rng.choice(len(edges), size=m, replace=False)) if m else np.zeros(0, np.int64)
    keep = np.ones(len(edges), dtype=bool)
    keep[drop] = False

    original = {(int(a), int(b)) for a, b in edges}
    added = set()
    if m:
        if free <= 4 * m:
            iu, ju = np.triu_indices(n, k=1)
            cand = [(int(a), int(b)) for a, b in zip(iu, ju) if (int(a), int(b)) not in original]
            pick = rng.choice(len(cand), size=m, replace=False)
            added = {cand[k] for k in pick}
        else:
            while len(added) < m:
                a, b = (int(x) for x in rng.integers(n, size=2))
                if a == b:
                    continue
                key = (a, b) if a < b else (b, a)
                if key not in original and key not in added:
                    added.add(key)
    added_arr = np.array(sorted(added), dtype=np.int64).reshape(-1, 2)
    new_edges = np.concatenate([edges[keep], added_arr])
    out = graph.with_relation(relation, new_edges)
    validate(out)
    return AttackResult(out, m, edges[drop], added_arr)


def attack(graph: MultiRelationGraph, cfg: AttackConfig, relation: int = 0) -> AttackResult:
    if cfg.kind == "heterophily":
        return heterophily_attack(graph, cfg, relation)
    return random_attack(graph, cfg, relation)
