import numpy as np
import pytest
import torch

from graphcil import Cvae, ModelState, PrototypeTable, TeacherSnapshot, sample_latent
from graphcil.model import load_checkpoint, save_checkpoint

from helpers import seeded_cvae, seeded_encoder, seeded_table
from oracles import mlp_two_layer


def zeroed_cvae(dim):
    cvae = Cvae(dim)
    with torch.no_grad():
        for p in cvae.parameters():
            p.zero_()
    return cvae


def test_encode_zero_network_gives_standard_posterior():
    cvae = zeroed_cvae(3)
    mu, sigma = cvae.encode(torch.randn(4, 3, dtype=torch.float64))
    assert np.allclose(mu.detach().numpy(), 0.0)
    assert np.allclose(sigma.detach().numpy(), 1.0)


def test_encode_matches_dense_oracle():
    cvae = seeded_cvae(5, latent_dim=4, seed=3)
    z = torch.randn(6, 5, dtype=torch.float64,
                    generator=torch.Generator().manual_seed(8))
    mu, sigma = cvae.encode(z)
    x = z.numpy()
    hidden = np.maximum(
        x @ cvae.enc_hidden.weight.detach().numpy().T
        + cvae.enc_hidden.bias.detach().numpy(), 0.0)
    want_mu = hidden @ cvae.enc_mu.weight.detach().numpy().T \
        + cvae.enc_mu.bias.detach().numpy()
    want_logvar = hidden @ cvae.enc_logvar.weight.detach().numpy().T \
        + cvae.enc_logvar.bias.detach().numpy()
    assert np.allclose(mu.detach().numpy(), want_mu, atol=1e-10)
    assert np.allclose(sigma.detach().numpy(), np.exp(0.5 * want_logvar), atol=1e-10)


def test_encode_rejects_nan():
    cvae = seeded_cvae(3)
    z = torch.zeros(2, 3, dtype=torch.float64)
    z[0, 1] = float("nan")
    with pytest.raises(ValueError):
        cvae.encode(z)


def test_sigma_always_positive():
    cvae = seeded_cvae(4, seed=5)
    z = 100.0 * torch.randn(10, 4, dtype=torch.float64,
                            generator=torch.Generator().manual_seed(1))
    _, sigma = cvae.encode(z)
    assert (sigma > 0).all()


def test_decode_zero_network_gives_zero():
    cvae = zeroed_cvae(3)
    out = cvae.decode(torch.randn(2, 3, dtype=torch.float64))
    assert np.allclose(out.detach().numpy(), 0.0)


def test_decode_matches_dense_oracle():
    cvae = seeded_cvae(5, latent_dim=4, seed=9)
    h = torch.randn(3, 4, dtype=torch.float64,
                    generator=torch.Generator().manual_seed(2))
    out = cvae.decode(h).detach().numpy()
    want = mlp_two_layer(h.numpy(),
                         cvae.dec_hidden.weight.detach().numpy(),
                         cvae.dec_hidden.bias.detach().numpy(),
                         cvae.dec_out.weight.detach().numpy(),
                         cvae.dec_out.bias.detach().numpy())
    assert np.allclose(out, want, atol=1e-10)


def test_decode_rejects_non_finite():
    cvae = seeded_cvae(3)
    h = torch.zeros(1, 3, dtype=torch.float64)
    h[0, 0] = float("inf")
    with pytest.raises(ValueError):
        cvae.decode(h)


def test_cvae_rejects_nonpositive_dims():
    with pytest.raises(ValueError):
        Cvae(0)
    with pytest.raises(ValueError):
        Cvae(3, latent_dim=-1)


def test_sample_latent_arithmetic():
    mu = torch.tensor([1.0, 2.0], dtype=torch.float64)
    sigma = torch.tensor([1.0, 2.0], dtype=torch.float64)
    eps = torch.tensor([3.0, -1.0], dtype=torch.float64)
    out = sample_latent(mu, sigma, eps)
    assert out.tolist() == [4.0, 0.0]


def test_sample_latent_zero_eps_returns_mu():
    mu = torch.randn(5, dtype=torch.float64)
    out = sample_latent(mu, torch.rand(5, dtype=torch.float64) + 0.1,
                        torch.zeros(5, dtype=torch.float64))
    assert torch.equal(out, mu)


def test_sample_latent_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        sample_latent(torch.zeros(3), torch.ones(3), torch.zeros(4))


def test_sample_latent_monte_carlo_mean():
    gen = torch.Generator().manual_seed(0)
    mu = torch.tensor([0.5, -1.0, 2.0], dtype=torch.float64)
    sigma = torch.tensor([1.0, 0.5, 2.0], dtype=torch.float64)
    n = 200_000
    eps = torch.randn((n, 3), generator=gen, dtype=torch.float64)
    draws = sample_latent(mu.expand(n, 3), sigma.expand(n, 3), eps)
    bound = 3.0 * sigma.numpy() / np.sqrt(n)
    assert (np.abs(draws.mean(0).numpy() - mu.numpy()) < bound).all()


def test_register_classes_and_lookup():
    table = PrototypeTable(4)
    table.register_classes([3, 1, 7], seed=0)
    assert len(table) == 3
    assert table.class_ids() == [1, 3, 7]
    assert 3 in table and 5 not in table
    assert table.get(7).shape == (4,)


def test_register_duplicate_rejected():
    table = seeded_table(4, [0, 1])
    with pytest.raises(ValueError):
        table.register_classes([1], seed=5)
    with pytest.raises(ValueError):
        table.register_classes([2, 2], seed=5)


def test_register_same_seed_identical():
    a = seeded_table(6, [0, 1, 2], seed=42)
    b = seeded_table(6, [0, 1, 2], seed=42)
    for c in (0, 1, 2):
        assert torch.equal(a.get(c), b.get(c))


def test_register_preserves_existing_prototypes():
    table = seeded_table(4, [0, 1], seed=1)
    before = table.get(0).detach().clone()
    table.register_classes([2], seed=99)
    assert torch.equal(table.get(0), before)
    assert len(table) == 3


def test_matrix_orders_ascending():
    table = seeded_table(3, [5, 1, 3], seed=0)
    m = table.matrix()
    assert torch.equal(m[0], table.get(1))
    assert torch.equal(m[1], table.get(3))
    assert torch.equal(m[2], table.get(5))
    m2 = table.matrix([5, 1])
    assert torch.equal(m2[0], table.get(5))


def test_matrix_empty_request_rejected():
    table = PrototypeTable(3)
    with pytest.raises(ValueError):
        table.matrix()


def test_teacher_snapshot_is_frozen_copy():
    enc = seeded_encoder(3, 4, 4, seed=0)
    cvae = seeded_cvae(4, seed=0)
    teacher = TeacherSnapshot.capture(enc, cvae)
    before = teacher.encoder.lin1.weight.detach().clone()
    with torch.no_grad():
        enc.lin1.weight.add_(1.0)
    assert torch.equal(teacher.encoder.lin1.weight, before)
    assert all(not p.requires_grad for p in teacher.encoder.parameters())
    assert all(not p.requires_grad for p in teacher.cvae.parameters())


def test_checkpoint_roundtrip(tmp_path):
    enc = seeded_encoder(3, 4, 5, seed=2)
    cvae = seeded_cvae(5, seed=2)
    table = seeded_table(5, [0, 2], seed=2)
    state = ModelState(enc, cvae, table, completed_tasks=2)
    path = tmp_path / "ckpt.npz"
    save_checkpoint(state, path)
    loaded = load_checkpoint(path)
    assert loaded.completed_tasks == 2
    assert loaded.prototypes.class_ids() == [0, 2]
    assert torch.equal(loaded.encoder.lin1.weight, enc.lin1.weight)
    assert torch.equal(loaded.cvae.dec_out.bias, cvae.dec_out.bias)
    assert torch.equal(loaded.prototypes.get(2), table.get(2))
    z = torch.randn(3, 3, dtype=torch.float64,
                    generator=torch.Generator().manual_seed(5))
    adj = torch.eye(3, dtype=torch.float64).to_sparse_csr()
    assert torch.equal(enc(adj, z), loaded.encoder(adj, z))
