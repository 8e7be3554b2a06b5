"""Shared test utilities: finite-difference gradient checks and fixtures."""

import numpy as np
import torch

from graphcil import Cvae, GcnEncoder, Graph, PrototypeTable


def grad_relative_error(build_loss, params, eps=1e-6):
    """Compare autograd against central finite differences.

    ``build_loss`` must be a deterministic closure (reseed any sampling
    inside it) returning a scalar tensor built from ``params``. Returns
    ||g_analytic - g_fd|| / max(||g_analytic||, ||g_fd||) over the
    concatenation of every parameter's gradient.
    """
    for p in params:
        p.grad = None
    loss = build_loss()
    loss.backward()
    analytic = [torch.zeros_like(p) if p.grad is None else p.grad.detach().clone()
                for p in params]

    fd = []
    with torch.no_grad():
        for p in params:
            g = torch.zeros_like(p)
            flat = p.view(-1)
            gf = g.view(-1)
            for i in range(flat.numel()):
                orig = float(flat[i])
                flat[i] = orig + eps
                f_plus = float(build_loss())
                flat[i] = orig - eps
                f_minus = float(build_loss())
                flat[i] = orig
                gf[i] = (f_plus - f_minus) / (2.0 * eps)
            fd.append(g)

    num = torch.cat([(a - f).ravel() for a, f in zip(analytic, fd)]).norm()
    den = max(torch.cat([a.ravel() for a in analytic]).norm(),
              torch.cat([f.ravel() for f in fd]).norm(),
              torch.tensor(1e-30, dtype=torch.float64))
    return float(num / den)


def seeded_cvae(embed_dim, latent_dim=None, seed=0, dtype=torch.float64):
    cvae = Cvae(embed_dim, latent_dim, dtype=dtype)
    cvae.reset_parameters(torch.Generator().manual_seed(seed))
    return cvae


def seeded_encoder(in_dim, hidden_dim, out_dim, seed=0, dtype=torch.float64):
    enc = GcnEncoder(in_dim, hidden_dim, out_dim, dtype=dtype)
    enc.reset_parameters(torch.Generator().manual_seed(seed))
    return enc


def seeded_table(latent_dim, classes, seed=0, dtype=torch.float64):
    table = PrototypeTable(latent_dim, dtype=dtype)
    table.register_classes(classes, seed=seed)
    return table


def random_graph(num_nodes, feat_dim, edge_prob, num_classes, seed=0):
    """Erdos-Renyi graph with random features and labels."""
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(num_nodes, k=1)
    hit = rng.random(iu.size) < edge_prob
    edges = np.stack([iu[hit], ju[hit]], axis=1)
    return Graph(
        num_nodes=num_nodes,
        features=rng.standard_normal((num_nodes, feat_dim)),
        edges=edges,
        labels=rng.integers(0, num_classes, size=num_nodes),
    )


def path_graph(num_nodes, feat_dim=3, seed=0):
    rng = np.random.default_rng(seed)
    edges = np.stack([np.arange(num_nodes - 1), np.arange(1, num_nodes)], axis=1)
    return Graph(
        num_nodes=num_nodes,
        features=rng.standard_normal((num_nodes, feat_dim)),
        edges=edges,
        labels=np.zeros(num_nodes, dtype=np.int64),
    )
