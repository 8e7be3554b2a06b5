"""Class-incremental node classification on graphs with open-set recognition.

Training replays generated pseudo-inliers for old classes, synthesizes
pseudo-outliers by cross-class mixing, and classifies by distance to
learnable class prototypes in a VAE latent space.
"""

from .batches import EXEMPLAR, OOD_LABEL, PSEUDO_ID, PSEUDO_OOD, REAL, EmbeddingBatch, cat_batches, make_batch
from .config import ConfigError, RunConfig, load_config
from .datasets import load_graph, make_blob_graph, save_graph
from .encoder import GcnEncoder, encode_nodes
from .engine import (EngineConfig, RunReport, evaluate_task, run_sequence,
                     softmax_threshold_baseline, train_task)
from .graphs import Graph, disjoint_union, ego_subgraph, induced_subgraph, normalize_adjacency
from .metrics import (MetricsReport, ScoredPrediction, auc_roc, closed_set_accuracy,
                      open_set_score, oscr, score_batch)
from .model import (Cvae, ModelState, PrototypeTable, TeacherSnapshot,
                    load_checkpoint, sample_latent, save_checkpoint)
from .objectives import (LossWeights, absorbing_ce_loss, cvae_bound_loss,
                         distillation_loss, hypersphere_loss, kl_to_prototype, total_loss)
from .synth import MixConfig, generate_pseudo_id, generate_pseudo_ood, mix_pair
from .tasks import (ExemplarStore, TaskSpec, build_task_sequence,
                    select_exemplars_cm, select_exemplars_mf, sequence_manifest)

__version__ = "0.1.0"
