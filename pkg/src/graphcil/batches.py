"""Labeled embedding batches with per-row provenance tags."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

REAL = "real"
PSEUDO_ID = "pseudo_id"
PSEUDO_OOD = "pseudo_ood"
EXEMPLAR = "exemplar"

PROVENANCE_TAGS = (REAL, PSEUDO_ID, PSEUDO_OOD, EXEMPLAR)

# Label sentinel for out-of-distribution rows. Only pseudo-OOD rows may
# carry it, and they must.
OOD_LABEL = -1


@dataclass
class EmbeddingBatch:
    """Rows of embeddings with labels and a provenance tag per row.

    ``node_ids`` is optional traceability back to graph nodes; synthetic
    rows leave it at -1.
    """

    z: torch.Tensor
    labels: torch.Tensor
    provenance: np.ndarray
    node_ids: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.z.dim() != 2:
            raise ValueError("z must be (n, d)")
        n = self.z.shape[0]
        self.labels = torch.as_tensor(self.labels, dtype=torch.int64)
        if self.labels.shape != (n,):
            raise ValueError("labels must be (n,)")
        self.provenance = np.asarray(self.provenance, dtype=np.str_).ravel()
        if self.provenance.shape != (n,):
            raise ValueError("provenance must be (n,)")
        bad = set(np.unique(self.provenance)) - set(PROVENANCE_TAGS)
        if bad:
            raise ValueError(f"unknown provenance tags: {sorted(bad)}")
        if self.node_ids is None:
            self.node_ids = np.full(n, -1, dtype=np.int64)
        self.node_ids = np.asarray(self.node_ids, dtype=np.int64).ravel()
        if self.node_ids.shape != (n,):
            raise ValueError("node_ids must be (n,)")
        is_ood_label = (self.labels == OOD_LABEL).numpy()
        is_ood_tag = self.provenance == PSEUDO_OOD
        if (is_ood_label != is_ood_tag).any():
            raise ValueError("the OOD label sentinel and the pseudo_ood tag must coincide")

    def __len__(self) -> int:
        return int(self.z.shape[0])

    @property
    def dim(self) -> int:
        return int(self.z.shape[1])

    def select(self, mask: np.ndarray) -> "EmbeddingBatch":
        idx = np.flatnonzero(np.asarray(mask))
        t_idx = torch.from_numpy(idx)
        return EmbeddingBatch(self.z[t_idx], self.labels[t_idx],
                              self.provenance[idx], self.node_ids[idx])

    def detach(self) -> "EmbeddingBatch":
        return EmbeddingBatch(self.z.detach(), self.labels, self.provenance, self.node_ids)


def make_batch(z: torch.Tensor, labels, tag: str, node_ids=None) -> EmbeddingBatch:
    """Batch with one provenance tag for every row.

    ``labels`` may be a scalar (broadcast) or a per-row sequence.
    """
    n = z.shape[0]
    lab = torch.as_tensor(labels, dtype=torch.int64)
    if lab.dim() == 0:
        lab = lab.repeat(n)
    return EmbeddingBatch(z, lab, np.full(n, tag), node_ids)


def cat_batches(batches: list[EmbeddingBatch]) -> EmbeddingBatch:
    parts = [b for b in batches if len(b) > 0]
    if not parts:
        raise ValueError("cannot concatenate empty batch list")
    if len(parts) == 1:
        return parts[0]
    return EmbeddingBatch(
        torch.cat([b.z for b in parts]),
        torch.cat([b.labels for b in parts]),
        np.concatenate([b.provenance for b in parts]),
        np.concatenate([b.node_ids for b in parts]),
    )
