"""Latent-variable model over node embeddings: VAE, prototypes, teacher."""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .encoder import GcnEncoder

# Log-variance clamp keeps sigma in [e^-5, e^5]; wider ranges overflow
# the RBF terms long before they help.
LOGVAR_MIN = -10.0
LOGVAR_MAX = 10.0


def _check_finite(x: torch.Tensor, name: str):
    if not torch.isfinite(x).all():
        raise ValueError(f"{name} contains non-finite values")


class Cvae(nn.Module):
    """Variational autoencoder over encoder embeddings.

    Class conditioning enters only through the per-class latent prior
    (see the loss module), never as a label input, so the same network
    encodes and decodes every class. Encoder: one hidden layer then mu
    and log-variance heads. Decoder mirrors it back to embedding space.
    """

    def __init__(self, embed_dim: int, latent_dim: int | None = None, dtype=torch.float64):
        super().__init__()
        if embed_dim <= 0:
            raise ValueError("embed_dim must be positive")
        latent_dim = embed_dim if latent_dim is None else latent_dim
        if latent_dim <= 0:
            raise ValueError("latent_dim must be positive")
        self.embed_dim = embed_dim
        self.latent_dim = latent_dim
        self.enc_hidden = nn.Linear(embed_dim, embed_dim, dtype=dtype)
        self.enc_mu = nn.Linear(embed_dim, latent_dim, dtype=dtype)
        self.enc_logvar = nn.Linear(embed_dim, latent_dim, dtype=dtype)
        self.dec_hidden = nn.Linear(latent_dim, embed_dim, dtype=dtype)
        self.dec_out = nn.Linear(embed_dim, embed_dim, dtype=dtype)

    @property
    def dtype(self):
        return self.enc_hidden.weight.dtype

    def reset_parameters(self, generator: torch.Generator):
        for lin in (self.enc_hidden, self.enc_mu, self.enc_logvar,
                    self.dec_hidden, self.dec_out):
            bound = 1.0 / math.sqrt(lin.in_features)
            with torch.no_grad():
                lin.weight.uniform_(-bound, bound, generator=generator)
                lin.bias.uniform_(-bound, bound, generator=generator)

    def encode(self, z: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Posterior parameters (mu, sigma) for each row of z."""
        _check_finite(z, "z")
        hidden = torch.relu(self.enc_hidden(z))
        mu = self.enc_mu(hidden)
        logvar = self.enc_logvar(hidden).clamp(LOGVAR_MIN, LOGVAR_MAX)
        sigma = torch.exp(0.5 * logvar)
        return mu, sigma

    def decode(self, h: torch.Tensor) -> torch.Tensor:
        """Reconstruct an embedding from a latent code."""
        _check_finite(h, "h")
        return self.dec_out(torch.relu(self.dec_hidden(h)))


def sample_latent(mu: torch.Tensor, sigma: torch.Tensor, eps: torch.Tensor) -> torch.Tensor:
    """Reparameterized draw mu + sigma * eps. Shapes must agree."""
    if mu.shape != sigma.shape or mu.shape != eps.shape:
        raise ValueError("mu, sigma, eps must share one shape")
    return mu + sigma * eps


class PrototypeTable(nn.Module):
    """Learnable per-class latent centers, keyed by class id.

    Registration is append-only: re-registering a class is an error.
    Stacked views (``matrix``) order classes ascending by id unless an
    explicit order is given.
    """

    def __init__(self, latent_dim: int, dtype=torch.float64):
        super().__init__()
        if latent_dim <= 0:
            raise ValueError("latent_dim must be positive")
        self.latent_dim = latent_dim
        self._dtype = dtype
        self._store = nn.ParameterDict()

    def __len__(self) -> int:
        return len(self._store)

    def __contains__(self, class_id: int) -> bool:
        return str(int(class_id)) in self._store

    def class_ids(self) -> list[int]:
        return sorted(int(k) for k in self._store.keys())

    def get(self, class_id: int) -> nn.Parameter:
        key = str(int(class_id))
        if key not in self._store:
            raise KeyError(f"class {class_id} has no prototype")
        return self._store[key]

    def register_classes(self, new_classes, seed: int):
        """Add prototypes for new classes, drawn N(0, I/latent_dim).

        The draw consumes from a generator seeded with ``seed`` in the
        order given, so identical calls yield identical prototypes.
        """
        new_classes = [int(c) for c in new_classes]
        if len(set(new_classes)) != len(new_classes):
            raise ValueError("duplicate class ids in registration")
        for c in new_classes:
            if c < 0:
                raise ValueError("class ids must be nonnegative")
            if c in self:
                raise ValueError(f"class {c} already registered")
        gen = torch.Generator().manual_seed(int(seed))
        scale = 1.0 / math.sqrt(self.latent_dim)
        for c in new_classes:
            init = torch.randn(self.latent_dim, generator=gen, dtype=self._dtype) * scale
            self._store[str(c)] = nn.Parameter(init)
        return self

    def matrix(self, classes=None) -> torch.Tensor:
        """Prototypes stacked as rows, ascending class id by default."""
        ids = self.class_ids() if classes is None else [int(c) for c in classes]
        if not ids:
            raise ValueError("no classes requested")
        return torch.stack([self.get(c) for c in ids])


@dataclass(frozen=True)
class TeacherSnapshot:
    """Frozen copies of the encoder and VAE from a finished task."""

    encoder: GcnEncoder
    cvae: Cvae

    @staticmethod
    def capture(encoder: GcnEncoder, cvae: Cvae) -> "TeacherSnapshot":
        enc = copy.deepcopy(encoder)
        vae = copy.deepcopy(cvae)
        for m in (enc, vae):
            m.eval()
            m.requires_grad_(False)
        return TeacherSnapshot(enc, vae)


@dataclass
class ModelState:
    """Everything the training engine mutates across tasks."""

    encoder: GcnEncoder
    cvae: Cvae
    prototypes: PrototypeTable
    teacher: TeacherSnapshot | None = None
    # Single absorbing center used only by the no-hypersphere ablation.
    unknown_prototype: nn.Parameter | None = None
    completed_tasks: int = 0


def save_checkpoint(state: ModelState, path):
    """Serialize parameters and prototype class ids to one npz file."""
    arrays = {}
    for prefix, module in (("encoder", state.encoder), ("cvae", state.cvae)):
        for name, tensor in module.state_dict().items():
            arrays[f"{prefix}.{name}"] = tensor.detach().numpy()
    for c in state.prototypes.class_ids():
        arrays[f"prototype.{c}"] = state.prototypes.get(c).detach().numpy()
    if state.unknown_prototype is not None:
        arrays["unknown_prototype"] = state.unknown_prototype.detach().numpy()
    meta = {
        "in_dim": state.encoder.in_dim,
        "hidden_dim": state.encoder.hidden_dim,
        "out_dim": state.encoder.out_dim,
        "embed_dim": state.cvae.embed_dim,
        "latent_dim": state.cvae.latent_dim,
        "dtype": str(state.encoder.dtype).replace("torch.", ""),
        "classes": state.prototypes.class_ids(),
        "completed_tasks": state.completed_tasks,
    }
    arrays["meta"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    np.savez(path, **arrays)


def load_checkpoint(path) -> ModelState:
    """Rebuild a ModelState (teacher excluded) from ``save_checkpoint`` output."""
    data = np.load(path)
    meta = json.loads(bytes(data["meta"]).decode())
    dtype = getattr(torch, meta["dtype"])
    encoder = GcnEncoder(meta["in_dim"], meta["hidden_dim"], meta["out_dim"], dtype=dtype)
    cvae = Cvae(meta["embed_dim"], meta["latent_dim"], dtype=dtype)
    enc_sd = {k.split(".", 1)[1]: torch.from_numpy(data[k]).to(dtype)
              for k in data.files if k.startswith("encoder.")}
    vae_sd = {k.split(".", 1)[1]: torch.from_numpy(data[k]).to(dtype)
              for k in data.files if k.startswith("cvae.")}
    encoder.load_state_dict(enc_sd)
    cvae.load_state_dict(vae_sd)
    table = PrototypeTable(meta["latent_dim"], dtype=dtype)
    table.register_classes(meta["classes"], seed=0)
    with torch.no_grad():
        for c in meta["classes"]:
            table.get(c).copy_(torch.from_numpy(data[f"prototype.{c}"]).to(dtype))
    unknown = None
    if "unknown_prototype" in data.files:
        unknown = nn.Parameter(torch.from_numpy(data["unknown_prototype"]).to(dtype))
    return ModelState(encoder, cvae, table, teacher=None,
                      unknown_prototype=unknown,
                      completed_tasks=int(meta["completed_tasks"]))
