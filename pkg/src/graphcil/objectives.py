"""Training objectives: VAE evidence bound, hypersphere BCE, distillation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .batches import OOD_LABEL, EmbeddingBatch
from .model import Cvae, PrototypeTable, sample_latent

# RBF similarities are clamped away from {0, 1} before the logs.
PROB_CLAMP = 1e-7


@dataclass(frozen=True)
class LossWeights:
    """Scalar weights: reconstruction inside the VAE bound, distillation outside."""

    lambda_reconst: float = 10.0
    lambda_kd: float = 1.0

    def __post_init__(self):
        for name in ("lambda_reconst", "lambda_kd"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and nonnegative")


def kl_to_prototype(mu: torch.Tensor, sigma: torch.Tensor,
                    prototype: torch.Tensor) -> torch.Tensor:
    """KL(N(mu, diag sigma^2) || N(prototype, I)), closed form.

    Reduces over the last dimension; leading batch dimensions pass
    through, so vectors give a scalar tensor and (n, d) inputs give
    per-row divergences.
    """
    if mu.shape != sigma.shape or mu.shape != prototype.shape:
        raise ValueError("mu, sigma, prototype must share one shape")
    if (sigma <= 0).any():
        raise ValueError("sigma must be positive")
    var = sigma**2
    return 0.5 * (var + (mu - prototype) ** 2 - 1.0 - torch.log(var)).sum(-1)


def _prototype_rows(table: PrototypeTable, labels: torch.Tensor) -> torch.Tensor:
    """Stack table rows aligned with a label vector."""
    ids = table.class_ids()
    lookup = torch.full((max(ids) + 2,), -1, dtype=torch.int64)
    for row, c in enumerate(ids):
        lookup[c] = row
    if labels.numel() and (labels.max() > max(ids) or labels.min() < 0):
        raise ValueError("batch contains a class with no prototype")
    rows = lookup[labels]
    if (rows < 0).any():
        raise ValueError("batch contains a class with no prototype")
    return table.matrix()[rows]


def cvae_bound_loss(batch: EmbeddingBatch, cvae: Cvae, table: PrototypeTable,
                    weights: LossWeights, generator: torch.Generator) -> torch.Tensor:
    """Negative evidence bound with class prototypes as latent priors.

    Per sample: lambda_reconst * ||z - decode(h)||^2 + KL(posterior ||
    N(p_c, I)) with one reparameterized draw h per sample, averaged
    over the batch. Rows must all carry a known class label; OOD rows
    are rejected because no prototype can anchor them.
    """
    if len(batch) == 0:
        raise ValueError("batch is empty")
    if (batch.labels == OOD_LABEL).any():
        raise ValueError("OOD rows have no prototype prior")
    if len(table) == 0:
        raise ValueError("prototype table is empty")
    mu, sigma = cvae.encode(batch.z)
    eps = torch.randn(mu.shape, generator=generator, dtype=mu.dtype)
    h = sample_latent(mu, sigma, eps)
    recon = ((batch.z - cvae.decode(h)) ** 2).sum(-1)
    kl = kl_to_prototype(mu, sigma, _prototype_rows(table, batch.labels))
    return (weights.lambda_reconst * recon + kl).mean()


def hypersphere_loss(batch: EmbeddingBatch, cvae: Cvae,
                     table: PrototypeTable) -> torch.Tensor:
    """Multi-class BCE on RBF similarity to every prototype.

    Similarity l = exp(-||mu(z) - p_c||^2) is clamped to
    [1e-7, 1 - 1e-7]. Labeled rows are pulled onto their own prototype
    and pushed off the rest; OOD-labeled rows are pushed off all of
    them. Sum over classes, mean over rows.
    """
    if len(batch) == 0:
        raise ValueError("batch is empty")
    if len(table) == 0:
        raise ValueError("prototype table is empty")
    classes = torch.tensor(table.class_ids(), dtype=torch.int64)
    mu, _ = cvae.encode(batch.z)
    protos = table.matrix()
    d2 = ((mu[:, None, :] - protos[None, :, :]) ** 2).sum(-1)
    sim = torch.exp(-d2).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
    y = (batch.labels[:, None] == classes[None, :]).to(sim.dtype)
    per_class = -(y * torch.log(sim) + (1.0 - y) * torch.log1p(-sim))
    return per_class.sum(-1).mean()


def distillation_loss(student: torch.Tensor, teacher: torch.Tensor) -> torch.Tensor:
    """Mean squared L2 distance between aligned embedding rows."""
    if student.shape != teacher.shape:
        raise ValueError("student and teacher embeddings must align row for row")
    if student.shape[0] == 0:
        raise ValueError("no rows to distill")
    return ((teacher - student) ** 2).sum(-1).mean()


def total_loss(hypersphere: torch.Tensor, cvae_bound: torch.Tensor,
               distill: torch.Tensor | None, weights: LossWeights) -> torch.Tensor:
    """Weighted sum of the three terms; distill may be absent (first task).

    A non-finite component fails fast, named.
    """
    for name, term in (("hypersphere", hypersphere), ("cvae_bound", cvae_bound),
                       ("distill", distill)):
        if term is None:
            continue
        if not torch.isfinite(term).all():
            raise ValueError(f"non-finite loss term: {name}")
    out = hypersphere + cvae_bound
    if distill is not None:
        out = out + weights.lambda_kd * distill
    return out


def absorbing_ce_loss(batch: EmbeddingBatch, cvae: Cvae, table: PrototypeTable,
                      unknown_prototype: torch.Tensor) -> torch.Tensor:
    """Ablation head: cross-entropy over negative squared distances.

    One extra prototype absorbs every OOD-labeled row, replacing the
    per-class hypersphere objective.
    """
    if len(batch) == 0:
        raise ValueError("batch is empty")
    if len(table) == 0:
        raise ValueError("prototype table is empty")
    classes = table.class_ids()
    mu, _ = cvae.encode(batch.z)
    protos = torch.cat([table.matrix(), unknown_prototype[None, :]])
    d2 = ((mu[:, None, :] - protos[None, :, :]) ** 2).sum(-1)
    lookup = {c: i for i, c in enumerate(classes)}
    lookup[OOD_LABEL] = len(classes)
    targets = torch.tensor([lookup[int(c)] for c in batch.labels], dtype=torch.int64)
    return F.cross_entropy(-d2, targets)
