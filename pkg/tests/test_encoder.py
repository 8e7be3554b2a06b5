import numpy as np
import pytest
import torch

from graphcil import GcnEncoder, Graph, encode_nodes

from helpers import random_graph, seeded_encoder
from oracles import dense_gcn_forward


def identity_encoder(dim):
    enc = GcnEncoder(dim, dim, dim)
    with torch.no_grad():
        enc.lin1.weight.copy_(torch.eye(dim, dtype=torch.float64))
        enc.lin2.weight.copy_(torch.eye(dim, dtype=torch.float64))
    return enc


def test_isolated_node_identity_weights_passthrough():
    feats = np.array([[0.3, 1.2, 0.0]])
    g = Graph(num_nodes=1, features=feats, edges=[], labels=[0])
    out = encode_nodes(g, identity_encoder(3), [0])
    assert np.allclose(out.detach().numpy(), feats, atol=1e-15)


def test_zero_features_zero_embeddings():
    g = Graph(num_nodes=4, features=np.zeros((4, 3)),
              edges=[[0, 1], [2, 3]], labels=[0, 0, 1, 1])
    enc = seeded_encoder(3, 5, 2, seed=7)
    out = encode_nodes(g, enc, [0, 1, 2, 3])
    assert np.allclose(out.detach().numpy(), 0.0)


def test_triangle_matches_dense_oracle():
    g = Graph(num_nodes=3,
              features=np.random.default_rng(0).standard_normal((3, 4)),
              edges=[[0, 1], [1, 2], [0, 2]], labels=[0, 1, 0])
    enc = seeded_encoder(4, 6, 5, seed=1)
    out = encode_nodes(g, enc, [0, 1, 2]).detach().numpy()
    want = dense_gcn_forward(3, g.edges, g.features,
                             enc.lin1.weight.detach().numpy(),
                             enc.lin2.weight.detach().numpy())
    assert np.allclose(out, want, atol=1e-10)


def test_random_graphs_match_dense_oracle():
    for seed in range(5):
        g = random_graph(11, 4, 0.3, 3, seed=seed)
        enc = seeded_encoder(4, 6, 5, seed=seed + 100)
        out = encode_nodes(g, enc, np.arange(11)).detach().numpy()
        want = dense_gcn_forward(11, g.edges, g.features,
                                 enc.lin1.weight.detach().numpy(),
                                 enc.lin2.weight.detach().numpy())
        assert np.allclose(out, want, atol=1e-10)


def test_permutation_equivariance():
    for seed in range(5):
        g = random_graph(10, 3, 0.35, 2, seed=seed)
        enc = seeded_encoder(3, 4, 4, seed=seed)
        rng = np.random.default_rng(seed + 50)
        perm = rng.permutation(10)
        feats = np.empty_like(g.features)
        feats[perm] = g.features
        labels = np.empty_like(g.labels)
        labels[perm] = g.labels
        g2 = Graph(num_nodes=10, features=feats,
                   edges=perm[g.edges] if g.edges.size else g.edges,
                   labels=labels)
        ids = np.array([0, 3, 9])
        a = encode_nodes(g, enc, ids).detach().numpy()
        b = encode_nodes(g2, enc, perm[ids]).detach().numpy()
        assert np.allclose(a, b, atol=1e-12)


def test_duplicated_components_encode_identically():
    from graphcil import disjoint_union

    g = random_graph(8, 3, 0.4, 2, seed=2)
    doubled, _ = disjoint_union([g, g])
    enc = seeded_encoder(3, 5, 4, seed=9)
    out = encode_nodes(doubled, enc, np.arange(16)).detach().numpy()
    assert np.allclose(out[:8], out[8:], atol=1e-12)


def test_node_subset_rows_align():
    g = random_graph(9, 3, 0.3, 2, seed=4)
    enc = seeded_encoder(3, 4, 4, seed=4)
    full = encode_nodes(g, enc, np.arange(9)).detach().numpy()
    some = encode_nodes(g, enc, [6, 1]).detach().numpy()
    assert np.allclose(some[0], full[6])
    assert np.allclose(some[1], full[1])


def test_empty_node_ids_rejected():
    g = random_graph(5, 3, 0.3, 2, seed=0)
    with pytest.raises(ValueError):
        encode_nodes(g, seeded_encoder(3, 4, 4), [])


def test_feature_width_mismatch_rejected():
    g = random_graph(5, 3, 0.3, 2, seed=0)
    with pytest.raises(ValueError):
        encode_nodes(g, seeded_encoder(4, 4, 4), [0])


def test_reset_parameters_is_seeded():
    a = seeded_encoder(3, 4, 5, seed=11)
    b = seeded_encoder(3, 4, 5, seed=11)
    assert torch.equal(a.lin1.weight, b.lin1.weight)
    assert torch.equal(a.lin2.weight, b.lin2.weight)


def test_encoder_rejects_nonpositive_widths():
    with pytest.raises(ValueError):
        GcnEncoder(0, 4, 4)
