"""Pseudo-sample synthesis: prior-decoded inliers and mixed outliers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .batches import OOD_LABEL, PSEUDO_ID, PSEUDO_OOD, EmbeddingBatch, make_batch, cat_batches
from .model import Cvae


@dataclass(frozen=True)
class MixConfig:
    """Knobs for synthetic sample generation.

    beta parameterizes the symmetric Beta distribution for mixing
    coefficients. Counts are per task; the outlier pool is rebuilt every
    ``regen_interval`` epochs.
    """

    beta: float = 5.0
    count_id: int = 300
    count_ood: int = 100
    regen_interval: int = 20

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.count_id < 0 or self.count_ood < 0:
            raise ValueError("sample counts must be nonnegative")
        if self.regen_interval < 1:
            raise ValueError("regen_interval must be >= 1")


def _split_counts(total: int, classes: list[int]) -> dict[int, int]:
    """Even split of ``total`` across classes, remainder to lowest ids."""
    base, rem = divmod(total, len(classes))
    ordered = sorted(classes)
    return {c: base + (1 if i < rem else 0) for i, c in enumerate(ordered)}


def generate_pseudo_id(table, old_classes, total: int, cvae: Cvae,
                       generator: torch.Generator, per_class: bool = False) -> EmbeddingBatch:
    """Replay embeddings for old classes via prior draws through the decoder.

    For class c: h = p_c + eps with eps ~ N(0, I), then z = decode(h).
    ``total`` is split evenly over ``old_classes`` (remainder to the
    lowest ids); with ``per_class`` it is the count for every class.
    Output is detached: pseudo-inliers are data, not a gradient path.
    """
    classes = sorted(int(c) for c in old_classes)
    if len(set(classes)) != len(classes):
        raise ValueError("duplicate class ids")
    if not classes:
        raise ValueError("no old classes to replay")
    for c in classes:
        if c not in table:
            raise ValueError(f"class {c} has no prototype")
    counts = ({c: total for c in classes} if per_class
              else _split_counts(total, classes))
    parts = []
    for c in classes:
        k = counts[c]
        if k == 0:
            continue
        proto = table.get(c).detach()
        eps = torch.randn((k, table.latent_dim), generator=generator, dtype=proto.dtype)
        with torch.no_grad():
            z = cvae.decode(proto[None, :] + eps)
        parts.append(make_batch(z, c, PSEUDO_ID))
    if not parts:
        d = cvae.embed_dim
        return EmbeddingBatch(torch.empty((0, d), dtype=cvae.dtype),
                              torch.empty(0, dtype=torch.int64),
                              np.empty(0, dtype=np.str_))
    return cat_batches(parts)


def mix_pair(z1: torch.Tensor, z2: torch.Tensor, alpha: float) -> torch.Tensor:
    """Convex combination alpha * z1 + (1 - alpha) * z2."""
    if z1.shape != z2.shape:
        raise ValueError("mixed embeddings must share a shape")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    return alpha * z1 + (1.0 - alpha) * z2


def generate_pseudo_ood(pool: EmbeddingBatch, count: int, config: MixConfig,
                        rng: np.random.Generator,
                        return_pairs: bool = False):
    """Outliers built by mixing embeddings of two different classes.

    Pairs are rejection-sampled from ``pool`` until the labels differ;
    coefficients come from Beta(beta, beta). Rows carry the OOD label
    sentinel. Optionally also returns the (i, j, alpha) provenance of
    each mixture.
    """
    if count < 0:
        raise ValueError("count must be nonnegative")
    if (pool.labels == OOD_LABEL).any():
        raise ValueError("mixing pool must not contain OOD rows")
    n = len(pool)
    if n == 0 or torch.unique(pool.labels).numel() < 2:
        raise ValueError("mixing pool needs at least two distinct classes")
    z = pool.z.detach()
    labels = pool.labels.numpy()
    rows = []
    pairs = []
    for _ in range(count):
        while True:
            i = int(rng.integers(n))
            j = int(rng.integers(n))
            if labels[i] != labels[j]:
                break
        alpha = float(rng.beta(config.beta, config.beta))
        rows.append(mix_pair(z[i], z[j], alpha))
        pairs.append((i, j, alpha))
    if rows:
        mixed = torch.stack(rows)
    else:
        mixed = torch.empty((0, pool.dim), dtype=z.dtype)
    out = make_batch(mixed, OOD_LABEL, PSEUDO_OOD)
    if return_pairs:
        return out, pairs
    return out
