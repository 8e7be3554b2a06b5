"""Two-layer GCN encoder over normalized sparse adjacency."""

from __future__ import annotations

import math

import numpy as np
import torch
from torch import nn

from .graphs import Graph, normalize_adjacency


class GcnEncoder(nn.Module):
    """Spectral-style graph convolution, two layers, no biases.

    forward computes A_hat @ relu(A_hat @ X @ W1) @ W2 with the
    symmetric renormalized adjacency. No nonlinearity after the second
    layer, so node embeddings live in an unconstrained real space.
    """

    def __init__(self, in_dim: int, hidden_dim: int, out_dim: int, dtype=torch.float64):
        super().__init__()
        if min(in_dim, hidden_dim, out_dim) <= 0:
            raise ValueError("encoder widths must be positive")
        self.in_dim = in_dim
        self.hidden_dim = hidden_dim
        self.out_dim = out_dim
        self.lin1 = nn.Linear(in_dim, hidden_dim, bias=False, dtype=dtype)
        self.lin2 = nn.Linear(hidden_dim, out_dim, bias=False, dtype=dtype)

    @property
    def dtype(self):
        return self.lin1.weight.dtype

    def reset_parameters(self, generator: torch.Generator):
        """Re-draw weights from the usual fan-in uniform, seeded."""
        for lin in (self.lin1, self.lin2):
            bound = 1.0 / math.sqrt(lin.in_features)
            with torch.no_grad():
                lin.weight.uniform_(-bound, bound, generator=generator)

    def forward(self, adj: torch.Tensor, x: torch.Tensor) -> torch.Tensor:
        h = torch.sparse.mm(adj, self.lin1(x))
        h = torch.relu(h)
        return torch.sparse.mm(adj, self.lin2(h))


def encode_nodes(graph: Graph, encoder: GcnEncoder, node_ids,
                 adj: torch.Tensor | None = None) -> torch.Tensor:
    """Embed the requested nodes; row i corresponds to node_ids[i].

    Runs the full-graph forward (message passing needs every node) and
    slices. Pass a precomputed ``adj`` to avoid renormalizing.
    """
    ids = np.asarray(node_ids, dtype=np.int64).ravel()
    if ids.size == 0:
        raise ValueError("node_ids must be non-empty")
    if ids.min() < 0 or ids.max() >= graph.num_nodes:
        raise ValueError("node id out of range")
    if graph.feature_dim != encoder.in_dim:
        raise ValueError(
            f"feature width {graph.feature_dim} does not match encoder input {encoder.in_dim}"
        )
    if adj is None:
        adj = normalize_adjacency(graph, dtype=encoder.dtype)
    x = torch.as_tensor(graph.features, dtype=encoder.dtype)
    z = encoder(adj, x)
    return z[torch.from_numpy(ids)]
