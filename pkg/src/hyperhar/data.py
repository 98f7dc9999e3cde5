"""Labeled-instance tables: ingestion, conflict resolution, splitting,
normalization and a synthetic generator with known structure.

Labels are tri-state int8 codes: ``POSITIVE`` (1), ``NEGATIVE`` (0) and
``MISSING`` (-1). Instances are assumed to be pre-windowed feature vectors
(the source recordings used 3 s windows with a 1.5 s step; raw streams are
not handled here).
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError
from .numerics import make_rng

POSITIVE = 1
NEGATIVE = 0
MISSING = -1

_MOVING = ("Running", "Walking", "Jogging", "Exercising", "Stairs-up", "Stairs-down",
           "Stairs-Going Up", "Stairs-Going Down")
# Sleeping excludes every locomotion label; only pairs whose names exist in a
# label space take effect.
DEFAULT_EXCLUSIVE_GROUPS: tuple[frozenset[str], ...] = tuple(
    frozenset({"Sleeping", m}) for m in _MOVING
)


@dataclass(frozen=True)
class LabelSpace:
    context_names: tuple[str, ...]
    activity_names: tuple[str, ...]
    exclusive_groups: tuple[frozenset[str], ...] = DEFAULT_EXCLUSIVE_GROUPS

    def __post_init__(self):
        object.__setattr__(self, "context_names", tuple(self.context_names))
        object.__setattr__(self, "activity_names", tuple(self.activity_names))
        object.__setattr__(
            self, "exclusive_groups",
            tuple(sorted({frozenset(g) for g in self.exclusive_groups}, key=sorted)),
        )
        names = self.context_names + self.activity_names
        if len(set(names)) != len(names):
            raise ConfigError("label names must be unique across contexts and activities",
                              key="labels")
        if not self.context_names or not self.activity_names:
            raise ConfigError("need at least one context and one activity label", key="labels")

    @property
    def num_contexts(self) -> int:
        return len(self.context_names)

    @property
    def num_activities(self) -> int:
        return len(self.activity_names)

    @property
    def num_labels(self) -> int:
        return self.num_contexts + self.num_activities

    @property
    def names(self) -> tuple[str, ...]:
        return self.context_names + self.activity_names

    def exclusive_index_groups(self) -> list[list[int]]:
        """Activity-index groups for the exclusive sets fully present here."""
        pos = {n: i for i, n in enumerate(self.activity_names)}
        return [sorted(pos[n] for n in g) for g in self.exclusive_groups
                if len(g) >= 2 and all(n in pos for n in g)]

    def to_dict(self) -> dict:
        return {
            "contexts": list(self.context_names),
            "activities": list(self.activity_names),
            "exclusive_groups": sorted(sorted(g) for g in self.exclusive_groups),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LabelSpace":
        return cls(tuple(d["contexts"]), tuple(d["activities"]),
                   tuple(frozenset(g) for g in d.get("exclusive_groups", [])))


@dataclass(frozen=True, eq=False)
class LabeledInstance:
    user: int
    features: np.ndarray
    context_labels: np.ndarray
    activity_labels: np.ndarray

    @property
    def context_missing(self) -> bool:
        return bool(np.all(self.context_labels == MISSING))

    @property
    def activity_missing(self) -> bool:
        return bool(np.all(self.activity_labels == MISSING))

    def labels(self) -> np.ndarray:
        return np.concatenate([self.context_labels, self.activity_labels])


def stack(instances: Sequence[LabeledInstance]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(users, features N x M, labels N x H) arrays for a list of instances."""
    users = np.array([i.user for i in instances], dtype=np.int64)
    feats = np.array([i.features for i in instances], dtype=np.float64)
    labels = np.array([i.labels() for i in instances], dtype=np.int8)
    return users, feats, labels


# ---------------------------------------------------------------- conflicts

@dataclass
class RejectionReport:
    multiple_contexts: int = 0
    exclusive_activities: int = 0

    @property
    def total(self) -> int:
        return self.multiple_contexts + self.exclusive_activities


def conflict_rule(inst: LabeledInstance, space: LabelSpace) -> int | None:
    """1 if several contexts are positive, 2 if an exclusive activity group
    has two positives, else None."""
    if int(np.sum(inst.context_labels == POSITIVE)) > 1:
        return 1
    pos = inst.activity_labels == POSITIVE
    for group in space.exclusive_index_groups():
        if int(pos[group].sum()) > 1:
            return 2
    return None


def resolve_conflicts(
    instances: Iterable[LabeledInstance], space: LabelSpace
) -> tuple[list[LabeledInstance], RejectionReport]:
    report = RejectionReport()
    kept = []
    for inst in instances:
        rule = conflict_rule(inst, space)
        if rule == 1:
            report.multiple_contexts += 1
        elif rule == 2:
            report.exclusive_activities += 1
        else:
            kept.append(inst)
    return kept, report


# -------------------------------------------------------------------- split

@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.6
    val_fraction: float = 0.2
    test_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        fr = (self.train_fraction, self.val_fraction, self.test_fraction)
        if any(f < 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
            raise ConfigError(f"split fractions must be nonnegative and sum to 1, got {fr}",
                              key="split")


@dataclass
class Split:
    train: list[LabeledInstance]
    val: list[LabeledInstance]
    test: list[LabeledInstance]


def split(instances: Sequence[LabeledInstance], spec: SplitSpec) -> Split:
    """Seeded uniform partition; val/test sizes are rounded, train takes the rest."""
    n = len(instances)
    if n < 5:
        raise ConfigError(f"need at least 5 instances to split, got {n}", key="split")
    n_val = int(math.floor(n * spec.val_fraction + 0.5))
    n_test = int(math.floor(n * spec.test_fraction + 0.5))
    order = make_rng(spec.seed).permutation(n)
    val_idx = order[:n_val]
    test_idx = order[n_val:n_val + n_test]
    train_idx = order[n_val + n_test:]
    pick = lambda idx: [instances[i] for i in sorted(idx)]  # noqa: E731
    return Split(pick(train_idx), pick(val_idx), pick(test_idx))


# ------------------------------------------------------------ normalization

@dataclass
class Normalizer:
    mu: np.ndarray
    s: np.ndarray
    degenerate: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    mode: str = "zscore"

    def transform(self, features: np.ndarray) -> np.ndarray:
        return (np.asarray(features, dtype=np.float64) - self.mu) / self.s


def fit_normalizer(train: Sequence[LabeledInstance], mode: str = "zscore") -> Normalizer:
    """Per-feature statistics from the training set only.

    ``zscore`` uses mean and population standard deviation; ``minmax``
    maps the training range onto [0, 1]. Features whose scale is below
    1e-12 get scale 1 and are flagged in ``degenerate``.
    """
    if len(train) == 0:
        raise ConfigError("cannot fit a normalizer on an empty training set", key="normalize")
    x = np.array([i.features for i in train], dtype=np.float64)
    if mode == "zscore":
        mu = x.mean(axis=0)
        s = x.std(axis=0)
    elif mode == "minmax":
        mu = x.min(axis=0)
        s = x.max(axis=0) - mu
    else:
        raise ConfigError(f"unknown normalization mode {mode!r}", key="normalize.mode")
    degenerate = s < 1e-12
    s = np.where(degenerate, 1.0, s)
    return Normalizer(mu, s, degenerate, mode)


def apply_normalizer(norm: Normalizer, instances: Sequence[LabeledInstance]) -> list[LabeledInstance]:
    return [replace(i, features=norm.transform(i.features)) for i in instances]


# ---------------------------------------------------------------- synthetic

@dataclass(frozen=True)
class SynthConfig:
    num_users: int = 8
    num_contexts: int = 4
    num_activities: int = 6
    num_features: int = 32
    noise_sigma: float = 0.1
    num_instances: int = 2000
    instances_per_combination: int | None = None
    p_missing_context: float = 0.2
    p_missing_activity: float = 0.2
    p_cooccur: float = 0.3
    seed: int = 0

    def __post_init__(self):
        for key in ("num_users", "num_contexts", "num_activities", "num_features"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key} must be >= 1", key=f"synth.{key}")
        for key in ("p_missing_context", "p_missing_activity", "p_cooccur"):
            v = getattr(self, key)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{key} must be in [0, 1], got {v}", key=f"synth.{key}")
        if self.p_missing_context + self.p_missing_activity > 1.0 + 1e-12:
            raise ConfigError("p_missing_context + p_missing_activity must not exceed 1",
                              key="synth.p_missing_activity")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0", key="synth.noise_sigma")
        if self.instances_per_combination is None and self.num_instances < 1:
            raise ConfigError("num_instances must be >= 1", key="synth.num_instances")

    def label_space(self) -> LabelSpace:
        return LabelSpace(
            tuple(f"ctx{i}" for i in range(self.num_contexts)),
            tuple(f"act{i}" for i in range(self.num_activities)),
            (),
        )


@dataclass
class SyntheticData:
    instances: list[LabeledInstance]
    prototypes: np.ndarray  # |V| x M, rows users -> contexts -> activities
    node_names: list[str]
    label_space: LabelSpace
    num_users: int


def generate_synthetic(cfg: SynthConfig, space: LabelSpace | None = None) -> SyntheticData:
    """Draw unit-norm node prototypes and instances built from them.

    Each instance has one user, one context and one or two activities (the
    second with probability ``p_cooccur``, never from an exclusive group of
    the first). Its features are the mean of the chosen prototypes plus
    N(0, noise_sigma^2) noise. At most one label category is blanked out.
    """
    space = space or cfg.label_space()
    if space.num_contexts != cfg.num_contexts or space.num_activities != cfg.num_activities:
        raise ConfigError("label space does not match the configured label counts", key="labels")
    rng = make_rng(cfg.seed)
    U, C, A, M = cfg.num_users, cfg.num_contexts, cfg.num_activities, cfg.num_features
    protos = rng.standard_normal((U + C + A, M))
    protos /= np.linalg.norm(protos, axis=1, keepdims=True)
    exclusive = space.exclusive_index_groups()

    def compatible(a1: int, a2: int) -> bool:
        return not any(a1 in g and a2 in g for g in exclusive)

    if cfg.instances_per_combination is not None:
        combos = [c for c in itertools.product(range(U), range(C), range(A))
                  for _ in range(cfg.instances_per_combination)]
    else:
        combos = [None] * cfg.num_instances

    instances = []
    for combo in combos:
        if combo is None:
            u, c, a1 = int(rng.integers(U)), int(rng.integers(C)), int(rng.integers(A))
        else:
            u, c, a1 = combo
        acts = [a1]
        if A > 1 and rng.random() < cfg.p_cooccur:
            options = [a for a in range(A) if a != a1 and compatible(a1, a)]
            if options:
                acts.append(int(options[rng.integers(len(options))]))
        chosen = [u, U + c] + [U + C + a for a in acts]
        x = protos[chosen].mean(axis=0) + rng.normal(0.0, cfg.noise_sigma, M)

        ctx = np.full(C, NEGATIVE, dtype=np.int8)
        ctx[c] = POSITIVE
        act = np.full(A, NEGATIVE, dtype=np.int8)
        act[acts] = POSITIVE
        r = rng.random()
        if r < cfg.p_missing_context:
            ctx[:] = MISSING
        elif r < cfg.p_missing_context + cfg.p_missing_activity:
            act[:] = MISSING
        instances.append(LabeledInstance(u, x, ctx, act))

    names = [f"u{i}" for i in range(U)] + list(space.context_names) + list(space.activity_names)
    return SyntheticData(instances, protos, names, space, U)


# ------------------------------------------------------------------- files

def _fmt(v: float) -> str:
    return repr(float(v))


def write_instances(path: str | Path, instances: Sequence[LabeledInstance],
                    space: LabelSpace, num_features: int | None = None) -> None:
    """Header ``user,f0..f{M-1},<contexts>,<activities>``; labels 1/0/empty."""
    if num_features is None:
        num_features = len(instances[0].features) if instances else 0
    code = {POSITIVE: "1", NEGATIVE: "0", MISSING: ""}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["user"] + [f"f{i}" for i in range(num_features)] + list(space.names))
        for inst in instances:
            w.writerow([str(inst.user)] + [_fmt(v) for v in inst.features]
                       + [code[int(v)] for v in inst.labels()])


def _parse_block(cells: list[str], lineno: int) -> np.ndarray:
    vals = np.full(len(cells), MISSING, dtype=np.int8)
    if all(c.strip() == "" for c in cells):
        return vals
    for k, c in enumerate(cells):
        c = c.strip()
        if c in ("", "0"):
            vals[k] = NEGATIVE  # unreported inside a reported category
        elif c == "1":
            vals[k] = POSITIVE
        else:
            raise ConfigError(f"line {lineno}: label value must be 1, 0 or empty, got {c!r}",
                              key="instances")
    return vals


def read_instances(path: str | Path, space: LabelSpace) -> list[LabeledInstance]:
    """Parse an instance file.

    A category (contexts or activities) with every cell empty is missing;
    otherwise its empty cells are read as negative.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigError(f"{path}: empty instance file", key="instances") from None
        col = {name: i for i, name in enumerate(header)}
        if "user" not in col:
            raise ConfigError(f"{path}: missing 'user' column", key="instances")
        feat_cols = []
        while f"f{len(feat_cols)}" in col:
            feat_cols.append(col[f"f{len(feat_cols)}"])
        missing = [n for n in space.names if n not in col]
        if missing:
            raise ConfigError(f"{path}: label columns not found: {missing}", key="labels")
        ctx_cols = [col[n] for n in space.context_names]
        act_cols = [col[n] for n in space.activity_names]
        out = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                user = int(row[col["user"]])
                feats = np.array([float(row[i]) for i in feat_cols])
            except ValueError as exc:
                raise ConfigError(f"{path} line {lineno}: {exc}", key="instances") from None
            out.append(LabeledInstance(
                user, feats,
                _parse_block([row[i] for i in ctx_cols], lineno),
                _parse_block([row[i] for i in act_cols], lineno),
            ))
    return out


def write_prototypes(path: str | Path, names: Sequence[str], protos: np.ndarray) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node"] + [f"f{i}" for i in range(protos.shape[1])])
        for name, row in zip(names, protos):
            w.writerow([name] + [_fmt(v) for v in row])


def read_prototypes(path: str | Path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))[1:]
    return [r[0] for r in rows], np.array([[float(v) for v in r[1:]] for r in rows])
