"""Dataset IO: plain-text graph files, npz conversion, synthetic graphs."""

from __future__ import annotations

import json
import os

import numpy as np

from .graphs import Graph


def load_graph(features_path, edges_path, labels_path,
               min_class_size: int | None = None) -> Graph:
    """Assemble a Graph from three whitespace-delimited text files.

    features: one row per node. edges: two integer columns, one
    undirected edge per line. labels: one integer per node, -1 for
    unlabeled. Node order is positional and must agree across files.

    ``min_class_size`` drops every class with fewer labeled nodes than
    the threshold (their nodes leave the graph entirely; remaining
    nodes are re-indexed, class ids keep their original values).
    """
    features = np.loadtxt(features_path, dtype=np.float64, ndmin=2)
    labels = np.loadtxt(labels_path, dtype=np.int64, ndmin=1)
    raw_edges = np.loadtxt(edges_path, dtype=np.int64, ndmin=2)
    if raw_edges.size == 0:
        raw_edges = np.empty((0, 2), dtype=np.int64)
    if raw_edges.shape[1] != 2:
        raise ValueError("edge file must have exactly two columns")
    if features.shape[0] != labels.shape[0]:
        raise ValueError(
            f"{features.shape[0]} feature rows vs {labels.shape[0]} labels"
        )
    g = Graph(num_nodes=features.shape[0], features=features,
              edges=raw_edges, labels=labels)
    if min_class_size is None:
        return g
    keep_classes = {int(c) for c in g.classes()
                    if (g.labels == c).sum() >= min_class_size}
    keep = np.flatnonzero(np.isin(g.labels, sorted(keep_classes)))
    if keep.size == 0:
        raise ValueError("min_class_size removed every node")
    from .graphs import induced_subgraph
    sub, _ = induced_subgraph(g, keep)
    return sub


def save_graph(graph: Graph, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    np.savetxt(os.path.join(out_dir, "features.txt"), graph.features, fmt="%.10g")
    np.savetxt(os.path.join(out_dir, "edges.txt"), graph.edges, fmt="%d")
    np.savetxt(os.path.join(out_dir, "labels.txt"), graph.labels, fmt="%d")


def convert_npz(npz_path, out_dir) -> Graph:
    """Convert a CSR-packed npz node-classification graph to text files.

    Expects the common layout: adj_{data,indices,indptr,shape} plus
    either attr_{data,indices,indptr,shape} or a dense attr_matrix, and
    a labels array.
    """
    data = np.load(npz_path, allow_pickle=True)
    files = set(data.files)

    def csr_to_dense(prefix):
        vals = data[f"{prefix}_data"]
        indices = data[f"{prefix}_indices"]
        indptr = data[f"{prefix}_indptr"]
        shape = tuple(int(s) for s in data[f"{prefix}_shape"])
        dense = np.zeros(shape, dtype=np.float64)
        for i in range(shape[0]):
            cols = indices[indptr[i]:indptr[i + 1]]
            dense[i, cols] = vals[indptr[i]:indptr[i + 1]]
        return dense

    if "attr_matrix" in files:
        features = np.asarray(data["attr_matrix"], dtype=np.float64)
    elif "attr_data" in files:
        features = csr_to_dense("attr")
    else:
        raise ValueError("npz file has no recognizable feature matrix")
    labels = np.asarray(data["labels"], dtype=np.int64)

    indices = data["adj_indices"]
    indptr = data["adj_indptr"]
    n = int(data["adj_shape"][0])
    rows = np.repeat(np.arange(n), np.diff(indptr))
    cols = indices
    mask = rows != cols
    edges = np.stack([rows[mask], cols[mask]], axis=1)
    g = Graph(num_nodes=n, features=features, edges=edges, labels=labels)
    save_graph(g, out_dir)
    return g


def make_blob_graph(num_classes: int, nodes_per_class: int, feat_dim: int,
                    class_sep: float = 1.0, noise: float = 1.0,
                    intra_p: float = 0.05, inter_p: float = 0.002,
                    seed: int = 0) -> Graph:
    """Homophilous benchmark graph: Gaussian feature blobs over a
    stochastic block model.

    Class c's features are N(mu_c, noise^2 I) with mu_c = class_sep *
    N(0, I). Edges appear independently with probability ``intra_p``
    inside a class and ``inter_p`` across classes.
    """
    if num_classes < 2 or nodes_per_class < 1 or feat_dim < 1:
        raise ValueError("need >= 2 classes, >= 1 node per class, >= 1 feature")
    for name, p in (("intra_p", intra_p), ("inter_p", inter_p)):
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"{name} must be a probability")
    rng = np.random.default_rng(seed)
    n = num_classes * nodes_per_class
    labels = np.repeat(np.arange(num_classes), nodes_per_class)
    means = class_sep * rng.standard_normal((num_classes, feat_dim))
    features = means[labels] + noise * rng.standard_normal((n, feat_dim))

    blocks = []
    starts = np.arange(num_classes) * nodes_per_class
    for a in range(num_classes):
        for b in range(a, num_classes):
            p = intra_p if a == b else inter_p
            if p == 0.0:
                continue
            if a == b:
                iu, ju = np.triu_indices(nodes_per_class, k=1)
                hit = rng.random(iu.size) < p
                if hit.any():
                    blocks.append(np.stack([starts[a] + iu[hit],
                                            starts[a] + ju[hit]], axis=1))
            else:
                hit = rng.random((nodes_per_class, nodes_per_class)) < p
                ii, jj = np.nonzero(hit)
                if ii.size:
                    blocks.append(np.stack([starts[a] + ii, starts[b] + jj], axis=1))
    edges = (np.concatenate(blocks, axis=0) if blocks
             else np.empty((0, 2), dtype=np.int64))
    return Graph(num_nodes=n, features=features, edges=edges, labels=labels)


def write_blob_dataset(out_dir, **kwargs) -> Graph:
    """Generate a blob graph, save it, and record the recipe alongside."""
    g = make_blob_graph(**kwargs)
    save_graph(g, out_dir)
    with open(os.path.join(out_dir, "meta.json"), "w") as fh:
        json.dump({"generator": "blob_graph", **{k: v for k, v in kwargs.items()}},
                  fh, indent=2, sort_keys=True)
    return g
