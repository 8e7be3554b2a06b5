"""Run configuration: YAML schema, validation, engine-config assembly."""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Optional

import yaml

from .datasets import load_graph
from .engine import ABSORBING_CE, EngineConfig
from .graphs import Graph
from .objectives import LossWeights


class ConfigError(ValueError):
    """Invalid run configuration; message names the offending key."""


# Ablation names accepted by the CLI, mapped onto config surgery.
ABLATIONS = ("no-kd", "no-phsc", "no-id", "no-ood")


@dataclass
class RunConfig:
    """Flat, file-backed description of one experiment.

    Scientifically meaningful keys (loss weights, sample counts, epoch
    budget, seeds) have no silent defaults and must appear in the file.
    Only presentation-level knobs (method variant names, precision,
    split fractions, model widths, learning rate) carry documented
    defaults.
    """

    features_path: str
    edges_path: str
    labels_path: str
    knowns_per_task: list
    unknowns_per_task: list
    seeds: list
    output_dir: str
    epochs: int
    ood_interval: int
    pseudo_id_count: int
    pseudo_ood_count: int
    lambda_reconst: float
    lambda_kd: float
    exemplars_per_class: int
    split_fractions: list = None
    learning_rate: float = 1e-3
    beta: float = 5.0
    exemplar_method: str = "cm"
    hidden_dim: int = 256
    embed_dim: int = 256
    precision: str = "float64"
    min_class_size: Optional[int] = None
    pseudo_id_per_class: bool = False

    def __post_init__(self):
        if self.split_fractions is None:
            self.split_fractions = [0.4, 0.2, 0.4]
        self._check()

    def _check(self):
        def fail(key, why):
            raise ConfigError(f"config key '{key}': {why}")

        for key in ("features_path", "edges_path", "labels_path", "output_dir"):
            v = getattr(self, key)
            if not isinstance(v, str) or not v:
                fail(key, "must be a non-empty path string")
        for key in ("knowns_per_task", "unknowns_per_task", "seeds"):
            v = getattr(self, key)
            if not isinstance(v, list) or not v or not all(
                    isinstance(x, int) and not isinstance(x, bool) for x in v):
                fail(key, "must be a non-empty list of integers")
        if len(self.knowns_per_task) != len(self.unknowns_per_task):
            fail("unknowns_per_task", "length must match knowns_per_task")
        if any(u < 1 for u in self.unknowns_per_task):
            fail("unknowns_per_task", "every task needs >= 1 unknown class")
        if any(k < 1 for k in self.knowns_per_task):
            fail("knowns_per_task", "every task needs >= 1 known class")
        if len(set(self.seeds)) != len(self.seeds):
            fail("seeds", "seeds must be distinct")
        sf = self.split_fractions
        if (not isinstance(sf, list) or len(sf) != 3
                or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in sf)):
            fail("split_fractions", "must be three numbers")
        if any(float(x) <= 0 for x in sf) or abs(sum(float(x) for x in sf) - 1.0) > 1e-9:
            fail("split_fractions", "must be positive and sum to 1")
        for key in ("epochs", "ood_interval", "hidden_dim", "embed_dim"):
            v = getattr(self, key)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                fail(key, "must be a positive integer")
        for key in ("pseudo_id_count", "pseudo_ood_count", "exemplars_per_class"):
            v = getattr(self, key)
            if not isinstance(v, int) or isinstance(v, bool) or v < 0:
                fail(key, "must be a nonnegative integer")
        for key in ("learning_rate", "beta"):
            v = getattr(self, key)
            if not isinstance(v, (int, float)) or isinstance(v, bool) or not v > 0:
                fail(key, "must be a positive number")
        for key in ("lambda_reconst", "lambda_kd"):
            v = getattr(self, key)
            if not isinstance(v, (int, float)) or isinstance(v, bool) or v < 0:
                fail(key, "must be a nonnegative number")
        if self.exemplar_method not in ("cm", "mf"):
            fail("exemplar_method", "must be 'cm' or 'mf'")
        if self.precision not in ("float64", "float32"):
            fail("precision", "must be 'float64' or 'float32'")
        if self.min_class_size is not None and (
                not isinstance(self.min_class_size, int) or self.min_class_size < 1):
            fail("min_class_size", "must be a positive integer or omitted")
        if not isinstance(self.pseudo_id_per_class, bool):
            fail("pseudo_id_per_class", "must be true or false")

    def engine_config(self, seed: int, ablation: str | None = None) -> EngineConfig:
        """Engine knobs for one seed, optionally with an ablation applied."""
        lam_kd = float(self.lambda_kd)
        h = self.pseudo_id_count
        l = self.pseudo_ood_count
        head = None
        if ablation is not None:
            if ablation not in ABLATIONS:
                raise ConfigError(f"unknown ablation '{ablation}', pick from {ABLATIONS}")
            if ablation == "no-kd":
                lam_kd = 0.0
            elif ablation == "no-id":
                h = 0
            elif ablation == "no-ood":
                l = 0
            elif ablation == "no-phsc":
                head = ABSORBING_CE
        return EngineConfig(
            epochs=self.epochs,
            learning_rate=float(self.learning_rate),
            ood_interval=self.ood_interval,
            pseudo_id_count=h,
            pseudo_ood_count=l,
            weights=LossWeights(lambda_reconst=float(self.lambda_reconst),
                                lambda_kd=lam_kd),
            exemplars_per_class=self.exemplars_per_class,
            exemplar_method=self.exemplar_method,
            seed=int(seed),
            hidden_dim=self.hidden_dim,
            embed_dim=self.embed_dim,
            beta=float(self.beta),
            precision=self.precision,
            pseudo_id_per_class=self.pseudo_id_per_class,
            ablation=head,
        )

    def load_dataset(self) -> Graph:
        return load_graph(self.features_path, self.edges_path, self.labels_path,
                          min_class_size=self.min_class_size)


def load_config(path) -> RunConfig:
    """Parse and validate a YAML run config; unknown keys are errors."""
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict):
        raise ConfigError("config file must hold a mapping of keys to values")
    allowed = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    required = {
        "features_path", "edges_path", "labels_path", "knowns_per_task",
        "unknowns_per_task", "seeds", "output_dir", "epochs", "ood_interval",
        "pseudo_id_count", "pseudo_ood_count", "lambda_reconst", "lambda_kd",
        "exemplars_per_class",
    }
    missing = sorted(required - set(raw))
    if missing:
        raise ConfigError(f"missing required config keys: {missing}")
    return RunConfig(**raw)
