"""Typed hypergraph built from labeled instances.

Nodes are ordered users, then contexts, then activities. Every instance
becomes the node set {its user, its positive context, its positive
activities}; identical node sets merge into one hyperedge. Hyperedges are
typed by which node types they touch:

* ``UCA`` -- user, one context, one or more activities
* ``UC``  -- user and context, no activity reported positive
* ``UA``  -- user and activities, no context reported positive
"""

from __future__ import annotations

import csv
import enum
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .data import POSITIVE, LabeledInstance, LabelSpace
from .errors import ConfigError, ConstructionError


class NodeType(enum.IntEnum):
    USER = 0
    CONTEXT = 1
    ACTIVITY = 2


class EdgeType(str, enum.Enum):
    UCA = "UCA"
    UC = "UC"
    UA = "UA"


EDGE_TYPES = (EdgeType.UCA, EdgeType.UC, EdgeType.UA)


@dataclass(frozen=True)
class NodeId:
    node_type: NodeType
    local_index: int
    global_index: int


@dataclass(frozen=True, eq=False)
class Hyperedge:
    key: tuple[int, ...]
    edge_type: EdgeType
    instance_count: int
    prototype: np.ndarray | None = None


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SubHypergraph:
    """Incidence structure for one edge type (``edge_type`` None = all edges)."""

    edge_type: EdgeType | None
    incidence: np.ndarray
    edge_weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "incidence", _readonly(self.incidence))
        object.__setattr__(self, "edge_weights", _readonly(self.edge_weights))

    @property
    def num_nodes(self) -> int:
        return self.incidence.shape[0]

    @property
    def num_edges(self) -> int:
        return self.incidence.shape[1]

    @cached_property
    def node_degrees(self) -> np.ndarray:
        return _readonly(self.incidence @ self.edge_weights)

    @cached_property
    def edge_degrees(self) -> np.ndarray:
        return _readonly(self.incidence.sum(axis=0))

    def propagation(self, normalization: str = "symmetric") -> np.ndarray:
        """|V| x |V| operator of one convolution step before the weight matrix.

        symmetric: Dv^-1/2 Inc W De^-1 Inc^T Dv^-1/2
        row:       Dv^-1   Inc W De^-1 Inc^T

        Nodes of zero degree get 0 in place of the inverse degree, so they
        neither send nor receive anything.
        """
        cache = self.__dict__.setdefault("_prop_cache", {})
        if normalization in cache:
            return cache[normalization]
        dv = self.node_degrees
        inv_dv = np.divide(1.0, dv, out=np.zeros_like(dv), where=dv > 0)
        de = self.edge_degrees
        inv_de = np.divide(1.0, de, out=np.zeros_like(de), where=de > 0)
        core = (self.incidence * (self.edge_weights * inv_de)) @ self.incidence.T
        if normalization == "symmetric":
            left = right = np.sqrt(inv_dv)
        elif normalization == "row":
            left, right = inv_dv, np.ones_like(dv)
        else:
            raise ConfigError(f"unknown normalization {normalization!r}",
                              key="model.normalization")
        op = _readonly(left[:, None] * core * right[None, :])
        cache[normalization] = op
        return op


def incidence(sub: SubHypergraph) -> np.ndarray:
    return sub.incidence.copy()


@dataclass(frozen=True, eq=False)
class HeteroHypergraph:
    num_users: int
    label_space: LabelSpace
    edges: tuple[Hyperedge, ...]
    init_embeddings: np.ndarray
    edge_weighting: str = "uniform"
    skipped_instances: int = 0
    subgraphs: dict[EdgeType, SubHypergraph] = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "init_embeddings", _readonly(self.init_embeddings))
        subs = {}
        for et in EDGE_TYPES:
            subs[et] = self._sub([e for e in self.edges if e.edge_type is et], et)
        object.__setattr__(self, "subgraphs", subs)

    def _sub(self, edges: Sequence[Hyperedge], et: EdgeType | None) -> SubHypergraph:
        inc = np.zeros((self.num_nodes, len(edges)))
        for j, e in enumerate(edges):
            inc[list(e.key), j] = 1.0
        if self.edge_weighting == "uniform":
            w = np.ones(len(edges))
        elif self.edge_weighting == "count":
            w = np.array([float(e.instance_count) for e in edges])
        else:
            raise ConfigError(f"unknown edge weighting {self.edge_weighting!r}",
                              key="graph.edge_weighting")
        return SubHypergraph(et, inc, w)

    @cached_property
    def union(self) -> SubHypergraph:
        """All edges in one incidence structure (no edge-type split)."""
        return self._sub(self.edges, None)

    @property
    def num_contexts(self) -> int:
        return self.label_space.num_contexts

    @property
    def num_activities(self) -> int:
        return self.label_space.num_activities

    @property
    def num_nodes(self) -> int:
        return self.num_users + self.num_contexts + self.num_activities

    @property
    def blocks(self) -> tuple[int, int, int]:
        return (self.num_users, self.num_contexts, self.num_activities)

    @cached_property
    def node_types(self) -> np.ndarray:
        return np.repeat([NodeType.USER, NodeType.CONTEXT, NodeType.ACTIVITY],
                         self.blocks).astype(np.int64)

    @cached_property
    def node_names(self) -> list[str]:
        return ([f"u{i}" for i in range(self.num_users)]
                + list(self.label_space.context_names) + list(self.label_space.activity_names))

    def node(self, global_index: int) -> NodeId:
        t = NodeType(int(self.node_types[global_index]))
        offset = (0, self.num_users, self.num_users + self.num_contexts)[t]
        return NodeId(t, global_index - offset, global_index)

    @cached_property
    def unobserved_nodes(self) -> list[int]:
        """Nodes that no hyperedge touches; their init rows are zero."""
        seen = {v for e in self.edges for v in e.key}
        return [v for v in range(self.num_nodes) if v not in seen]

    def edge_counts(self) -> dict[EdgeType, int]:
        c = Counter(e.edge_type for e in self.edges)
        return {et: c.get(et, 0) for et in EDGE_TYPES}


def edge_type_of(key: Iterable[int], num_users: int, num_contexts: int) -> EdgeType:
    users = contexts = 0
    has_a = False
    for v in key:
        if v < num_users:
            users += 1
        elif v < num_users + num_contexts:
            contexts += 1
        else:
            has_a = True
    if users != 1 or contexts > 1 or not (contexts or has_a):
        raise ConstructionError(
            f"node set {tuple(key)} is not a valid hyperedge "
            "(needs one user, at most one context; run resolve_conflicts first)")
    has_c = contexts == 1
    if has_c and has_a:
        return EdgeType.UCA
    return EdgeType.UC if has_c else EdgeType.UA


def instance_key(inst: LabeledInstance, num_users: int, num_contexts: int) -> tuple[int, ...]:
    """Sorted global node indices the instance connects."""
    ctx = np.flatnonzero(inst.context_labels == POSITIVE)
    act = np.flatnonzero(inst.activity_labels == POSITIVE)
    return tuple([int(inst.user)] + [num_users + int(c) for c in ctx]
                 + [num_users + num_contexts + int(a) for a in act])


def build_hypergraph(
    instances: Sequence[LabeledInstance],
    space: LabelSpace,
    num_users: int | None = None,
    edge_weighting: str = "uniform",
) -> HeteroHypergraph:
    """Deduplicate instance node sets into typed hyperedges.

    Instances that touch only their user are skipped and counted. Node init
    rows are the mean features of the non-skipped instances touching the
    node; untouched nodes get zero rows.
    """
    if len(instances) == 0:
        raise ConstructionError("cannot build a hypergraph from zero instances")
    max_user = max(int(i.user) for i in instances)
    if num_users is None:
        num_users = max_user + 1
    if min(int(i.user) for i in instances) < 0 or max_user >= num_users:
        raise ConstructionError(f"user ids must lie in [0, {num_users})")
    C = space.num_contexts
    dim = len(instances[0].features)
    V = num_users + C + space.num_activities

    groups: dict[tuple[int, ...], list[int]] = defaultdict(list)
    skipped = 0
    for n, inst in enumerate(instances):
        key = instance_key(inst, num_users, C)
        if len(key) < 2:
            skipped += 1
            continue
        groups[key].append(n)
    if not groups:
        raise ConstructionError("no instance connects its user to any context or activity")

    feats = np.array([i.features for i in instances], dtype=np.float64)
    sums = np.zeros((V, dim))
    counts = np.zeros(V)
    edges = []
    for key in sorted(groups):
        idx = groups[key]
        block = feats[idx]
        edge_sum = block.sum(axis=0)
        for v in key:
            sums[v] += edge_sum
            counts[v] += len(idx)
        edges.append(Hyperedge(key, edge_type_of(key, num_users, C), len(idx),
                               block.mean(axis=0)))
    init = np.divide(sums, counts[:, None], out=np.zeros_like(sums), where=counts[:, None] > 0)
    return HeteroHypergraph(num_users, space, tuple(edges), init, edge_weighting, skipped)


# --------------------------------------------------------------- reporting

@dataclass
class EdgeDistributionReport:
    counts: dict[EdgeType, int]
    percentages: dict[EdgeType, float]

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def to_text(self) -> str:
        lines = [f"unique hyperedges: {self.total}"]
        for et in EDGE_TYPES:
            lines.append(f"{et.value}\t{self.counts[et]}\t{self.percentages[et]:.10f}%")
        return "\n".join(lines) + "\n"


def edge_statistics(g: HeteroHypergraph) -> EdgeDistributionReport:
    counts = g.edge_counts()
    n = sum(counts.values())
    pct = {et: (100.0 * c / n if n else 0.0) for et, c in counts.items()}
    return EdgeDistributionReport(counts, pct)


def degree_histograms(g: HeteroHypergraph) -> dict[NodeType, Counter]:
    """Per node type: degree (number of hyperedges touching the node) -> node count."""
    deg = g.union.incidence.sum(axis=1).astype(int)
    hist: dict[NodeType, Counter] = {t: Counter() for t in NodeType}
    for v, d in enumerate(deg):
        hist[NodeType(int(g.node_types[v]))][int(d)] += 1
    return hist


def write_graph_report(g: HeteroHypergraph, path: str | Path) -> None:
    stats = edge_statistics(g)
    lines = [stats.to_text().rstrip("\n"),
             f"nodes: users={g.num_users} contexts={g.num_contexts} "
             f"activities={g.num_activities}",
             f"skipped instances: {g.skipped_instances}",
             f"unobserved nodes: {', '.join(g.node_names[v] for v in g.unobserved_nodes) or '-'}",
             "degree histograms (degree:count):"]
    for t, hist in degree_histograms(g).items():
        cells = " ".join(f"{d}:{c}" for d, c in sorted(hist.items()))
        lines.append(f"  {t.name.lower()}\t{cells}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_edge_table(g: HeteroHypergraph, path: str | Path) -> None:
    """One row per hyperedge: type, members joined by ';', instance_count."""
    names = g.node_names
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["type", "members", "instance_count"])
        for e in g.edges:
            w.writerow([e.edge_type.value, ";".join(names[v] for v in e.key), e.instance_count])


def read_edge_table(path: str | Path) -> list[tuple[str, tuple[str, ...], int]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))[1:]
    return [(r[0], tuple(r[1].split(";")), int(r[2])) for r in rows]
