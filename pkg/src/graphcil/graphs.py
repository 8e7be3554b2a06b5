"""Graph container, adjacency normalization, and subgraph utilities."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import torch

# torch's sparse CSR support works fine here but announces its beta
# status once per process; keep run output clean.
warnings.filterwarnings("ignore", message="Sparse CSR tensor support is in beta state")
warnings.filterwarnings("ignore", message="Sparse invariant checks are implicitly disabled")

UNLABELED = -1


@dataclass
class Graph:
    """Undirected attributed graph with integer node labels.

    Edges are stored once per pair with endpoints sorted (u < v) and
    duplicates merged. Self-loops are rejected; normalization adds the
    diagonal explicitly. ``labels`` uses -1 for unlabeled nodes.
    """

    num_nodes: int
    features: np.ndarray
    edges: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.features = np.ascontiguousarray(np.asarray(self.features, dtype=np.float64))
        self.labels = np.asarray(self.labels, dtype=np.int64).ravel()
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if edges.size:
            lo = np.minimum(edges[:, 0], edges[:, 1])
            hi = np.maximum(edges[:, 0], edges[:, 1])
            edges = np.unique(np.stack([lo, hi], axis=1), axis=0)
        self.edges = edges
        self.validate()

    def validate(self):
        if self.num_nodes < 0:
            raise ValueError("num_nodes must be nonnegative")
        if self.features.ndim != 2 or self.features.shape[0] != self.num_nodes:
            raise ValueError(
                f"features must be (num_nodes, f), got {self.features.shape} "
                f"for {self.num_nodes} nodes"
            )
        if not np.isfinite(self.features).all():
            raise ValueError("features contain non-finite values")
        if self.labels.shape[0] != self.num_nodes:
            raise ValueError("labels length must equal num_nodes")
        if self.labels.size and self.labels.min() < UNLABELED:
            raise ValueError("labels must be class ids >= 0 or the -1 sentinel")
        if self.edges.size:
            if self.edges.min() < 0 or self.edges.max() >= self.num_nodes:
                raise ValueError("edge endpoint out of range")
            if (self.edges[:, 0] == self.edges[:, 1]).any():
                raise ValueError("self-loops are not allowed")

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])

    @property
    def feature_dim(self) -> int:
        return int(self.features.shape[1])

    def classes(self) -> np.ndarray:
        """Sorted distinct labels, the -1 sentinel excluded."""
        vals = np.unique(self.labels)
        return vals[vals >= 0]


def normalize_adjacency(graph: Graph, dtype=torch.float64) -> torch.Tensor:
    """Symmetric renormalized adjacency with self-loops, as sparse CSR.

    Entry (i, j) is 1 / sqrt(d_i * d_j) where d counts the self-loop.
    Endpoints are re-checked so a graph mutated after construction
    still fails loudly.
    """
    n = graph.num_nodes
    e = graph.edges
    if e.size and (e.min() < 0 or e.max() >= n):
        raise ValueError("edge endpoint out of range")
    diag = np.arange(n, dtype=np.int64)
    rows = np.concatenate([e[:, 0], e[:, 1], diag])
    cols = np.concatenate([e[:, 1], e[:, 0], diag])
    deg = np.bincount(rows, minlength=n).astype(np.float64)
    dinv = 1.0 / np.sqrt(deg)
    vals = dinv[rows] * dinv[cols]
    idx = torch.from_numpy(np.stack([rows, cols]))
    coo = torch.sparse_coo_tensor(idx, torch.as_tensor(vals, dtype=dtype), (n, n))
    return coo.coalesce().to_sparse_csr()


def neighbor_lists(graph: Graph) -> list[list[int]]:
    nbrs: list[list[int]] = [[] for _ in range(graph.num_nodes)]
    for u, v in graph.edges:
        nbrs[u].append(int(v))
        nbrs[v].append(int(u))
    return nbrs


def induced_subgraph(graph: Graph, node_ids) -> tuple[Graph, np.ndarray]:
    """Subgraph on ``node_ids`` (kept in the given order).

    Returns the subgraph and the original ids of its nodes, so row i of
    the subgraph corresponds to ``orig_ids[i]`` in the parent.
    """
    ids = np.asarray(node_ids, dtype=np.int64).ravel()
    if ids.size == 0:
        raise ValueError("node_ids must be non-empty")
    if ids.min() < 0 or ids.max() >= graph.num_nodes:
        raise ValueError("node id out of range")
    if np.unique(ids).size != ids.size:
        raise ValueError("node_ids contains duplicates")
    local = np.full(graph.num_nodes, -1, dtype=np.int64)
    local[ids] = np.arange(ids.size)
    e = graph.edges
    if e.size:
        keep = (local[e[:, 0]] >= 0) & (local[e[:, 1]] >= 0)
        sub_edges = np.stack([local[e[keep, 0]], local[e[keep, 1]]], axis=1)
    else:
        sub_edges = np.empty((0, 2), dtype=np.int64)
    sub = Graph(
        num_nodes=int(ids.size),
        features=graph.features[ids],
        edges=sub_edges,
        labels=graph.labels[ids],
    )
    return sub, ids


def ego_subgraph(graph: Graph, center: int, hops: int = 2,
                 nbrs: list[list[int]] | None = None) -> tuple[Graph, int, np.ndarray]:
    """Induced subgraph on the ``hops``-hop neighborhood of ``center``.

    Returns (subgraph, local index of the center, original node ids).
    Nodes are ordered by ascending original id for determinism.
    """
    if not 0 <= center < graph.num_nodes:
        raise ValueError("center out of range")
    if hops < 0:
        raise ValueError("hops must be nonnegative")
    if nbrs is None:
        nbrs = neighbor_lists(graph)
    seen = {int(center)}
    frontier = [int(center)]
    for _ in range(hops):
        nxt = []
        for u in frontier:
            for v in nbrs[u]:
                if v not in seen:
                    seen.add(v)
                    nxt.append(v)
        frontier = nxt
    ids = np.array(sorted(seen), dtype=np.int64)
    sub, orig = induced_subgraph(graph, ids)
    center_local = int(np.searchsorted(ids, center))
    return sub, center_local, orig


def disjoint_union(graphs: list[Graph]) -> tuple[Graph, np.ndarray]:
    """Stack graphs into one with no edges between components.

    Returns the union and the node offset of each component.
    """
    if not graphs:
        raise ValueError("need at least one graph")
    fdim = graphs[0].feature_dim
    for g in graphs:
        if g.feature_dim != fdim:
            raise ValueError("feature widths differ across components")
    offsets = np.cumsum([0] + [g.num_nodes for g in graphs[:-1]]).astype(np.int64)
    edges = [g.edges + off for g, off in zip(graphs, offsets) if g.edges.size]
    union = Graph(
        num_nodes=sum(g.num_nodes for g in graphs),
        features=np.concatenate([g.features for g in graphs], axis=0),
        edges=np.concatenate(edges, axis=0) if edges else np.empty((0, 2), dtype=np.int64),
        labels=np.concatenate([g.labels for g in graphs]),
    )
    return union, offsets
