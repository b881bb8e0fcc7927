"""Multi-relation graph container, validation, splits and file I/O.

A graph holds ``n`` nodes, ``R`` undirected simple relations stored as sorted
per-node neighbor arrays, an ``n x f`` feature matrix and integer labels where
``-1`` marks an unlabeled node.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)

UNLABELED = -1


class GraphError(ValueError):
    """Raised for malformed input files or graphs violating the invariants."""


@dataclass(frozen=True, eq=False)
class NeighborhoodView:
    """Labels plus one neighbor array per node.

    This is what the homophily metrics consume. The arrays need not be
    symmetric, which lets directed out-neighborhoods (e.g. CSBM-C samples)
    be measured with the same code as undirected graphs.
    """

    neighbors: tuple
    labels: np.ndarray
    num_classes: int

    @property
    def num_nodes(self) -> int:
        return len(self.neighbors)


@dataclass(eq=False)
class MultiRelationGraph:
    num_nodes: int
    relations: list  # list[list[np.ndarray]]
    features: np.ndarray
    labels: np.ndarray
    label_arity: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim == 1:
            self.features = self.features.reshape(-1, 1)
        self.labels = np.asarray(self.labels, dtype=np.int64)

    @property
    def num_relations(self) -> int:
        return len(self.relations)

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    @property
    def labeled_mask(self) -> np.ndarray:
        return self.labels != UNLABELED

    def degree(self, node: int, relation: int = 0) -> int:
        if not 0 <= node < self.num_nodes:
            raise IndexError(f"node {node} out of range for n={self.num_nodes}")
        if not 0 <= relation < self.num_relations:
            raise IndexError(f"relation {relation} out of range for R={self.num_relations}")
        return len(self.relations[relation][node])

    def degrees(self, relation: int = 0) -> np.ndarray:
        return np.array([len(nb) for nb in self.relations[relation]], dtype=np.int64)

    def num_edges(self, relation: int = 0) -> int:
        return int(self.degrees(relation).sum()) // 2

    def edge_array(self, relation: int = 0) -> np.ndarray:
        """Undirected edges as an ``(m, 2)`` array with ``i < j``, sorted."""
        rows = []
        for i, nb in enumerate(self.relations[relation]):
            upper = nb[nb > i]
            if len(upper):
                rows.append(np.column_stack([np.full(len(upper), i), upper]))
        if not rows:
            return np.zeros((0, 2), dtype=np.int64)
        return np.concatenate(rows).astype(np.int64)

    def directed_edges(self, relation: int = 0) -> tuple[np.ndarray, np.ndarray]:
        """Both orientations of every edge as ``(src, dst)`` arrays."""
        deg = self.degrees(relation)
        dst = np.repeat(np.arange(self.num_nodes), deg)
        if deg.sum():
            src = np.concatenate(self.relations[relation]).astype(np.int64)
        else:
            src = np.zeros(0, dtype=np.int64)
        return src, dst

    def union_neighbors(self) -> list:
        if self.num_relations == 1:
            return list(self.relations[0])
        out = []
        for v in range(self.num_nodes):
            out.append(np.unique(np.concatenate([rel[v] for rel in self.relations])))
        return out

    def view(self, relation_view="union") -> NeighborhoodView:
        """Neighborhood view for metrics: ``"union"`` or a relation index."""
        if relation_view == "union" or relation_view is None:
            nbrs = self.union_neighbors()
        else:
            r = int(relation_view)
            if not 0 <= r < self.num_relations:
                raise IndexError(f"relation {r} out of range for R={self.num_relations}")
            nbrs = list(self.relations[r])
        return NeighborhoodView(tuple(nbrs), self.labels, self.label_arity)

    def with_relation(self, relation: int, edges: np.ndarray) -> "MultiRelationGraph":
        """Copy of the graph with one relation replaced by an edge list."""
        rels = list(self.relations)
        rels[relation] = neighbors_from_edges(self.num_nodes, edges)
        return MultiRelationGraph(self.num_nodes, rels, self.features, self.labels, self.label_arity)

    def equals(self, other: "MultiRelationGraph") -> bool:
        if self.num_nodes != other.num_nodes or self.num_relations != other.num_relations:
            return False
        if self.label_arity != other.label_arity:
            return False
        if not np.array_equal(self.labels, other.labels):
            return False
        if self.features.shape != other.features.shape or not np.array_equal(self.features, other.features):
            return False
        for a, b in zip(self.relations, other.relations):
            if any(not np.array_equal(x, y) for x, y in zip(a, b)):
                return False
        return True


@dataclass(frozen=True)
class SplitMask:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    seed: int
    ratios: tuple = field(default=(0.4, 0.3, 0.3))


def neighbors_from_edges(n: int, edges, *, return_stats: bool = False):
    """Symmetrize, deduplicate and strip self-loops from an edge list.

    Returns sorted neighbor arrays. With ``return_stats`` also returns the
    number of self-loops dropped.
    """
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if len(edges) and (edges.min() < 0 or edges.max() >= n):
        bad = edges[(edges < 0) | (edges >= n)][0]
        raise GraphError(f"node index {int(bad)} out of range for n={n}")
    loops = edges[:, 0] == edges[:, 1]
    n_loops = int(loops.sum())
    edges = edges[~loops]
    both = np.concatenate([edges, edges[:, ::-1]])
    both = np.unique(both, axis=0) if len(both) else both
    counts = np.bincount(both[:, 0], minlength=n) if len(both) else np.zeros(n, dtype=np.int64)
    splits = np.cumsum(counts)[:-1]
    nbrs = np.split(both[:, 1], splits) if len(both) else [np.zeros(0, dtype=np.int64) for _ in range(n)]
    nbrs = [np.asarray(nb, dtype=np.int64) for nb in nbrs]
    if return_stats:
        return nbrs, n_loops
    return nbrs


def build_graph(n, relations_edges, features=None, labels=None, label_arity=None) -> MultiRelationGraph:
    """Build a validated graph from one edge list per relation."""
    if features is None:
        features = np.zeros((n, 0))
    if labels is None:
        labels = np.full(n, UNLABELED)
    labels = np.asarray(labels, dtype=np.int64)
    if label_arity is None:
        label_arity = int(labels.max()) + 1 if (labels >= 0).any() else 0
    rels = []
    for edges in relations_edges:
        nbrs, loops = neighbors_from_edges(n, edges, return_stats=True)
        if loops:
            log.warning("dropped %d self-loop(s)", loops)
        rels.append(nbrs)
    g = MultiRelationGraph(n, rels, features, labels, label_arity)
    validate(g)
    return g


def validate(graph: MultiRelationGraph) -> None:
    """Check every MultiRelationGraph invariant; raise GraphError on the first failure."""
    n = graph.num_nodes
    if graph.features.shape[0] != n:
        raise GraphError(f"feature matrix has {graph.features.shape[0]} rows, expected {n}")
    if graph.labels.shape != (n,):
        raise GraphError(f"labels have shape {graph.labels.shape}, expected ({n},)")
    bad = (graph.labels < UNLABELED) | (graph.labels >= max(graph.label_arity, 0))
    bad &= graph.labels != UNLABELED
    if bad.any():
        raise GraphError(f"label {int(graph.labels[bad][0])} outside 0..{graph.label_arity - 1}")
    for r, rel in enumerate(graph.relations):
        if len(rel) != n:
            raise GraphError(f"relation {r} has {len(rel)} neighbor lists, expected {n}")
        for v, nb in enumerate(rel):
            if len(nb) == 0:
                continue
            if nb.min() < 0 or nb.max() >= n:
                raise GraphError(f"relation {r}: node {v} has neighbor index out of range")
            if np.any(np.diff(nb) <= 0):
                raise GraphError(f"relation {r}: neighbors of node {v} not strictly sorted (duplicate edge?)")
            if np.any(nb == v):
                raise GraphError(f"relation {r}: self-loop at node {v}")
        src, dst = graph.directed_edges(r)
        fwd = set(zip(src.tolist(), dst.tolist()))
        if any((d, s) not in fwd for s, d in fwd):
            raise GraphError(f"relation {r} is not symmetric")


def make_split(graph: MultiRelationGraph, ratios=(0.4, 0.3, 0.3), seed: int = 0) -> SplitMask:
    """Stratified train/val/test split over labeled nodes.

    Per class, split sizes are ``round(ratio * class_size)``; a positive ratio
    always gets at least one node.
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or min(ratios) < 0 or sum(ratios) > 1 + 1e-12:
        raise ValueError(f"ratios must be three nonnegative numbers summing to <= 1, got {ratios}")
    rng = np.random.default_rng(seed)
    parts = ([], [], [])
    for c in range(graph.label_arity):
        members = np.flatnonzero(graph.labels == c)
        counts = [int(round(r * len(members))) for r in ratios]
        counts = [max(1, k) if r > 0 else 0 for k, r in zip(counts, ratios)]
        while sum(counts) > len(members) and counts[2] > (1 if ratios[2] > 0 else 0):
            counts[2] -= 1
        if sum(counts) > len(members) or len(members) == 0:
            raise ValueError(
                f"class {c} has {len(members)} labeled node(s), too few for split slots {counts}")
        perm = rng.permutation(members)
        start = 0
        for part, k in zip(parts, counts):
            part.append(perm[start:start + k])
            start += k
    train, val, test = (np.sort(np.concatenate(p)).astype(np.int64) if p else np.zeros(0, np.int64)
                        for p in parts)
    return SplitMask(train, val, test, seed, ratios)


# -- file I/O ---------------------------------------------------------------

def read_edge_tsv(path) -> np.ndarray:
    edges = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise GraphError(f"{path}:{lineno}: expected two node indices, got {line!r}")
            try:
                edges.append((int(parts[0]), int(parts[1])))
            except ValueError:
                raise GraphError(f"{path}:{lineno}: non-integer node index in {line!r}") from None
    return np.array(edges, dtype=np.int64).reshape(-1, 2)


def write_edge_tsv(path, edges) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i, j in np.asarray(edges).reshape(-1, 2):
            fh.write(f"{int(i)}\t{int(j)}\n")


def load_graph(path, format: str | None = None, num_nodes: int | None = None) -> MultiRelationGraph:
    """Load a graph from a JSON envelope or a single edge-tsv file.

    For edge-tsv input the node count is ``num_nodes`` if given, otherwise one
    more than the largest index seen.
    """
    path = os.fspath(path)
    if format is None:
        format = "json" if path.endswith(".json") else "edge-tsv"
    if format == "edge-tsv":
        edges = read_edge_tsv(path)
        n = num_nodes if num_nodes is not None else (int(edges.max()) + 1 if len(edges) else 0)
        return build_graph(n, [edges])
    if format != "json":
        raise ValueError(f"unknown graph format {format!r}")

    with open(path, encoding="utf-8") as fh:
        try:
            env = json.load(fh)
        except json.JSONDecodeError as exc:
            raise GraphError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
    base = os.path.dirname(path)

    def resolve(p):
        return p if os.path.isabs(p) else os.path.join(base, p)

    if "n" not in env:
        raise GraphError(f"{path}: envelope is missing 'n'")
    n = int(env["n"])
    relations = [read_edge_tsv(resolve(p)) for p in env.get("relations", [])]
    if not relations:
        relations = [np.zeros((0, 2), dtype=np.int64)]
    if env.get("features"):
        features = np.loadtxt(resolve(env["features"]), delimiter="\t", ndmin=2, dtype=np.float64)
        if features.size == 0:
            features = np.zeros((0, int(env.get("f", 0))))
    else:
        features = np.zeros((n, int(env.get("f", 0))))
    if features.shape[0] != n:
        raise GraphError(f"feature file has {features.shape[0]} rows, expected n={n}")
    if "f" in env and features.shape[1] != int(env["f"]):
        raise GraphError(f"feature file has {features.shape[1]} columns, expected f={env['f']}")
    if env.get("labels"):
        labels = np.loadtxt(resolve(env["labels"]), dtype=np.int64, ndmin=1)
        if labels.shape[0] != n:
            raise GraphError(f"label file has {labels.shape[0]} rows, expected n={n}")
    else:
        labels = np.full(n, UNLABELED)
    k = env.get("K")
    return build_graph(n, relations, features, labels, None if k is None else int(k))


def save_graph(graph: MultiRelationGraph, path, name: str | None = None) -> None:
    """Write the JSON envelope plus sidecar relation/feature/label files."""
    path = os.fspath(path)
    base = os.path.dirname(path) or "."
    os.makedirs(base, exist_ok=True)
    stem = name or os.path.splitext(os.path.basename(path))[0]
    rel_files = []
    for r in range(graph.num_relations):
        fname = f"{stem}.rel{r}.tsv"
        write_edge_tsv(os.path.join(base, fname), graph.edge_array(r))
        rel_files.append(fname)
    feat_file = f"{stem}.features.tsv"
    with open(os.path.join(base, feat_file), "w", encoding="utf-8") as fh:
        for row in graph.features:
            fh.write("\t".join(repr(float(x)) for x in row) + "\n")
    label_file = f"{stem}.labels.txt"
    with open(os.path.join(base, label_file), "w", encoding="utf-8") as fh:
        fh.writelines(f"{int(y)}\n" for y in graph.labels)
    env = {
        "n": graph.num_nodes,
        "f": graph.num_features,
        "K": graph.label_arity,
        "relations": rel_files,
        "features": feat_file,
        "labels": label_file,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(env, fh, indent=2)
        fh.write("\n")


def degree(graph: MultiRelationGraph, node: int, relation: int = 0) -> int:
    return graph.degree(node, relation)


def union_graph(graph: MultiRelationGraph) -> MultiRelationGraph:
    """Single-relation graph whose edges are the union of all relations."""
    nbrs = graph.union_neighbors()
    return MultiRelationGraph(graph.num_nodes, [nbrs], graph.features, graph.labels, graph.label_arity)


def relabel(graph: MultiRelationGraph, perm: Sequence[int]) -> MultiRelationGraph:
    """Permute class ids: class ``c`` becomes ``perm[c]``."""
    perm = np.asarray(perm, dtype=np.int64)
    labels = np.where(graph.labels >= 0, perm[np.maximum(graph.labels, 0)], UNLABELED)
    return MultiRelationGraph(graph.num_nodes, graph.relations, graph.features, labels, graph.label_arity)
