"""Task stream construction, node splits, and exemplar selection."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import torch

from .batches import EmbeddingBatch
from .graphs import Graph, ego_subgraph, neighbor_lists


@dataclass
class TaskSpec:
    """One step of the incremental stream.

    ``known_classes`` are the classes introduced at this task (their
    nodes form the training graph). ``cumulative_known`` accumulates
    every class introduced so far. ``unknown_classes`` appear only at
    evaluation time, never in any training structure. Node id arrays
    index the full graph.
    """

    task_index: int
    known_classes: tuple
    cumulative_known: tuple
    unknown_classes: tuple
    train_ids: np.ndarray
    val_ids: np.ndarray
    test_known_ids: np.ndarray
    test_unknown_ids: np.ndarray

    def validate(self):
        if self.task_index < 1:
            raise ValueError("task_index is 1-based")
        known = set(self.known_classes)
        unknown = set(self.unknown_classes)
        if known & unknown:
            raise ValueError("known and unknown classes overlap")
        if not known.issubset(self.cumulative_known):
            raise ValueError("cumulative_known must contain this task's classes")
        ids = [self.train_ids, self.val_ids, self.test_known_ids]
        flat = np.concatenate([np.asarray(a) for a in ids]) if ids else np.empty(0)
        if np.unique(flat).size != flat.size:
            raise ValueError("train/val/test-known splits overlap")
        if np.intersect1d(flat, self.test_unknown_ids).size:
            raise ValueError("unknown test nodes overlap known splits")


def _split_sizes(n: int, fractions) -> tuple[int, int, int]:
    """Largest-remainder apportionment, every part >= 1."""
    raw = [n * f for f in fractions]
    base = [int(x) for x in raw]
    rem = n - sum(base)
    order = sorted(range(3), key=lambda i: raw[i] - base[i], reverse=True)
    for i in range(rem):
        base[order[i]] += 1
    for i in range(3):
        while base[i] == 0:
            donor = max(range(3), key=lambda j: base[j])
            base[donor] -= 1
            base[i] += 1
    return tuple(base)


def build_task_sequence(graph: Graph, knowns_per_task, unknowns_per_task,
                        split_fractions, seed: int) -> list[TaskSpec]:
    """Carve a disjoint-class task stream out of one labeled graph.

    Classes are shuffled once (seeded), then consumed in order: task t
    introduces ``knowns_per_task[t]`` known classes, of which the
    previous task's unknowns are promoted first, plus fresh classes.
    Each used class gets a fixed train/val/test node split drawn once.

    Raises if the layout is inconsistent: unpromotable unknowns, not
    enough classes in the graph, a used class with fewer than 3 nodes,
    or bad fractions.
    """
    knowns = [int(k) for k in knowns_per_task]
    unknowns = [int(u) for u in unknowns_per_task]
    if len(knowns) != len(unknowns) or not knowns:
        raise ValueError("knowns_per_task and unknowns_per_task must have equal nonzero length")
    if any(k < 1 for k in knowns) or any(u < 0 for u in unknowns):
        raise ValueError("per-task class counts out of range")
    fr = [float(f) for f in split_fractions]
    if len(fr) != 3 or any(f <= 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
        raise ValueError("split_fractions must be three positive numbers summing to 1")
    for t in range(1, len(knowns)):
        if knowns[t] < unknowns[t - 1]:
            raise ValueError(
                f"task {t + 1} introduces {knowns[t]} classes but must promote "
                f"{unknowns[t - 1]} unknowns from the previous task"
            )
    # fresh knowns at task t = knowns[t] - unknowns[t-1]; total distinct
    # classes consumed = sum(fresh) + sum(unknowns).
    fresh = [knowns[0]] + [knowns[t] - unknowns[t - 1] for t in range(1, len(knowns))]
    consumed = sum(fresh) + sum(unknowns)
    classes = graph.classes()
    if consumed > classes.size:
        raise ValueError(f"layout consumes {consumed} classes, graph has {classes.size}")

    rng = np.random.default_rng(seed)
    order = [int(c) for c in rng.permutation(classes)]
    cursor = 0
    known_sets: list[list[int]] = []
    unknown_sets: list[list[int]] = []
    prev_unknown: list[int] = []
    for t in range(len(knowns)):
        new = list(prev_unknown)
        take = fresh[t]
        new.extend(order[cursor:cursor + take])
        cursor += take
        u = order[cursor:cursor + unknowns[t]]
        cursor += unknowns[t]
        known_sets.append(new)
        unknown_sets.append(list(u))
        prev_unknown = list(u)

    used = sorted({c for s in known_sets + unknown_sets for c in s})
    splits = {}
    for c in used:
        nodes = np.flatnonzero(graph.labels == c)
        if nodes.size < 3:
            raise ValueError(f"class {c} has {nodes.size} nodes, need >= 3 for a 3-way split")
        perm = nodes[rng.permutation(nodes.size)]
        n_tr, n_va, n_te = _split_sizes(nodes.size, fr)
        splits[c] = (
            np.sort(perm[:n_tr]),
            np.sort(perm[n_tr:n_tr + n_va]),
            np.sort(perm[n_tr + n_va:]),
        )

    out = []
    cumulative: list[int] = []
    for t in range(len(knowns)):
        cumulative = cumulative + [c for c in known_sets[t] if c not in cumulative]
        spec = TaskSpec(
            task_index=t + 1,
            known_classes=tuple(known_sets[t]),
            cumulative_known=tuple(sorted(cumulative)),
            unknown_classes=tuple(unknown_sets[t]),
            train_ids=np.concatenate([splits[c][0] for c in known_sets[t]]),
            val_ids=np.concatenate([splits[c][1] for c in known_sets[t]]),
            test_known_ids=np.concatenate([splits[c][2] for c in known_sets[t]]),
            test_unknown_ids=(np.concatenate([splits[c][2] for c in unknown_sets[t]])
                              if unknown_sets[t] else np.empty(0, dtype=np.int64)),
        )
        spec.validate()
        out.append(spec)
    return out


def _class_rows(batch: EmbeddingBatch, class_id: int) -> tuple[torch.Tensor, np.ndarray]:
    """Rows of one class, sorted by ascending node id for determinism."""
    mask = (batch.labels == class_id).numpy()
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        raise ValueError(f"no rows for class {class_id}")
    order = np.argsort(batch.node_ids[idx], kind="stable")
    idx = idx[order]
    return batch.z[torch.from_numpy(idx)].detach(), batch.node_ids[idx]


def select_exemplars_cm(batch: EmbeddingBatch, per_class: int) -> dict[int, list[int]]:
    """Coverage-maximizing pick: start at the point farthest from the
    class mean, then repeatedly take the point whose distance to the
    chosen set is largest (max-min)."""
    if per_class < 1:
        raise ValueError("per_class must be >= 1")
    out = {}
    for c in sorted(set(int(v) for v in batch.labels.tolist())):
        z, ids = _class_rows(batch, c)
        k = min(per_class, ids.size)
        center = z.mean(0, keepdim=True)
        d_center = ((z - center) ** 2).sum(-1)
        chosen = [int(torch.argmax(d_center))]
        min_d = ((z - z[chosen[0]]) ** 2).sum(-1)
        while len(chosen) < k:
            min_d[chosen] = -1.0
            nxt = int(torch.argmax(min_d))
            chosen.append(nxt)
            min_d = torch.minimum(min_d, ((z - z[nxt]) ** 2).sum(-1))
        out[c] = [int(ids[i]) for i in chosen]
    return out


def select_exemplars_mf(batch: EmbeddingBatch, per_class: int) -> dict[int, list[int]]:
    """Mean-first pick: the k nodes nearest the class mean, ascending
    node id on ties."""
    if per_class < 1:
        raise ValueError("per_class must be >= 1")
    out = {}
    for c in sorted(set(int(v) for v in batch.labels.tolist())):
        z, ids = _class_rows(batch, c)
        k = min(per_class, ids.size)
        center = z.mean(0, keepdim=True)
        d = ((z - center) ** 2).sum(-1).numpy()
        order = np.argsort(d, kind="stable")[:k]
        out[c] = [int(ids[i]) for i in order]
    return out


@dataclass
class Exemplar:
    """A stored node: its 2-hop ego subgraph plus bookkeeping ids."""

    class_id: int
    node_id: int
    subgraph: Graph
    center_local: int
    orig_ids: np.ndarray


@dataclass
class ExemplarStore:
    """Per-class exemplar subgraphs accumulated across tasks."""

    per_class: dict[int, list[Exemplar]] = field(default_factory=dict)

    def classes(self) -> list[int]:
        return sorted(self.per_class.keys())

    def add_from_graph(self, graph: Graph, class_id: int, node_ids, orig_of_local,
                       hops: int = 2):
        """Extract and store ego subgraphs around the given local node ids.

        ``orig_of_local`` maps the graph's local ids back to full-graph
        ids for traceability.
        """
        if class_id in self.per_class:
            raise ValueError(f"class {class_id} already has exemplars")
        nbrs = neighbor_lists(graph)
        items = []
        for local in node_ids:
            sub, center, orig_local = ego_subgraph(graph, int(local), hops, nbrs)
            items.append(Exemplar(
                class_id=int(class_id),
                node_id=int(orig_of_local[int(local)]),
                subgraph=sub,
                center_local=center,
                orig_ids=np.asarray(orig_of_local)[orig_local],
            ))
        self.per_class[int(class_id)] = items

    def all_exemplars(self) -> list[Exemplar]:
        return [e for c in self.classes() for e in self.per_class[c]]

    def total(self) -> int:
        return sum(len(v) for v in self.per_class.values())

    def manifest(self) -> dict:
        """JSON-ready summary: which nodes were kept for which class."""
        return {
            str(c): [
                {"node_id": e.node_id,
                 "subgraph_nodes": e.subgraph.num_nodes,
                 "subgraph_edges": e.subgraph.num_edges}
                for e in self.per_class[c]
            ]
            for c in self.classes()
        }


def write_manifest(store: ExemplarStore, path):
    with open(path, "w") as fh:
        json.dump(store.manifest(), fh, indent=2, sort_keys=True)


def sequence_manifest(tasks: list[TaskSpec], seed: int) -> list[dict]:
    """One human-readable record per task: class ids, split sizes, seed.

    Enough to reconstruct the exact stream with build_task_sequence.
    """
    return [
        {
            "task_index": t.task_index,
            "seed": int(seed),
            "known_classes": [int(c) for c in t.known_classes],
            "cumulative_known": [int(c) for c in t.cumulative_known],
            "unknown_classes": [int(c) for c in t.unknown_classes],
            "num_train": int(t.train_ids.size),
            "num_val": int(t.val_ids.size),
            "num_test_known": int(t.test_known_ids.size),
            "num_test_unknown": int(t.test_unknown_ids.size),
        }
        for t in tasks
    ]
