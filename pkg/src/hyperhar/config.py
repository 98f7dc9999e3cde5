"""INI run configuration: one section per pipeline stage, every key typed.

Unknown sections or keys are rejected with a ConfigError naming them, so a
typo never silently falls back to a default.
"""

from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Callable

from .data import DEFAULT_EXCLUSIVE_GROUPS, LabelSpace, SplitSpec, SynthConfig
from .errors import ConfigError
from .losses import LossConfig
from .model import ModelConfig
from .trainer import TrainConfig

NORMALIZE_MODES = ("zscore", "minmax")
EDGE_WEIGHTINGS = ("uniform", "count")


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _opt(parse: Callable[[str], Any]) -> Callable[[str], Any]:
    def inner(s: str):
        return None if s.strip().lower() in ("", "none") else parse(s)
    return inner


def _str(s: str) -> str:
    return s.strip()


def _names(s: str) -> tuple[str, ...]:
    return tuple(p.strip() for p in s.split(",") if p.strip())


def _ints(s: str) -> tuple[int, ...]:
    return tuple(int(p) for p in _names(s))


def _groups(s: str) -> tuple[frozenset[str], ...]:
    """``a|b; a|c`` -> ({a, b}, {a, c})."""
    out = []
    for g in s.split(";"):
        members = [m.strip() for m in g.split("|") if m.strip()]
        if members:
            out.append(frozenset(members))
    return tuple(out)


SCHEMA: dict[str, dict[str, Callable[[str], Any]]] = {
    "data": {"instances": _str, "prototypes": _str, "labels_file": _str},
    "synth": {
        "num_users": int, "num_contexts": int, "num_activities": int, "num_features": int,
        "noise_sigma": float, "num_instances": int, "instances_per_combination": _opt(int),
        "p_missing_context": float, "p_missing_activity": float, "p_cooccur": float,
        "seed": int,
    },
    "labels": {"contexts": _names, "activities": _names, "exclusive_groups": _groups},
    "split": {"train_fraction": float, "val_fraction": float, "test_fraction": float,
              "seed": int},
    "normalize": {"mode": _str},
    "graph": {"num_users": _opt(int), "edge_weighting": _str},
    "model": {
        "num_layers": int, "embed_dim": int, "head_dim": _opt(int), "dropout": float,
        "activation": _str, "head_activation": _opt(_str), "normalization": _str,
        "enable_edge_hetero": _bool, "enable_contrastive": _bool,
    },
    "loss": {"lambda1": float, "lambda2": float, "bce_weight_mode": _str},
    "train": {
        "learning_rate": float, "batch_size": int, "epochs": int, "optimizer": _str,
        "beta1": float, "beta2": float, "eps": float, "seed": int,
        "early_stop_patience": _opt(int), "select_best": _bool, "threshold": float,
    },
    "sweep": {"num_layers": _ints, "embed_dim": _ints},
}


@dataclass(frozen=True)
class SweepSpec:
    num_layers: tuple[int, ...] = (1, 2, 3, 4)
    embed_dim: tuple[int, ...] = ()


@dataclass(frozen=True)
class RunConfig:
    """Everything a command needs; mirrors the INI sections."""

    instances: str | None = None
    prototypes: str | None = None
    labels_file: str | None = None
    synth: SynthConfig = field(default_factory=SynthConfig)
    labels: LabelSpace | None = None
    split: SplitSpec = field(default_factory=SplitSpec)
    normalize_mode: str = "zscore"
    num_users: int | None = None
    edge_weighting: str = "uniform"
    train: TrainConfig = field(default_factory=TrainConfig)
    sweep: SweepSpec = field(default_factory=SweepSpec)

    def __post_init__(self):
        if self.normalize_mode not in NORMALIZE_MODES:
            raise ConfigError(f"normalize.mode must be one of {NORMALIZE_MODES}",
                              key="normalize.mode")
        if self.edge_weighting not in EDGE_WEIGHTINGS:
            raise ConfigError(f"graph.edge_weighting must be one of {EDGE_WEIGHTINGS}",
                              key="graph.edge_weighting")

    def with_seed(self, seed: int) -> "RunConfig":
        """One seed for generator, split and training."""
        return replace(self, synth=replace(self.synth, seed=seed),
                       split=replace(self.split, seed=seed),
                       train=replace(self.train, seed=seed))

    def to_dict(self) -> dict:
        d = {
            "data": {"instances": self.instances, "prototypes": self.prototypes,
                     "labels_file": self.labels_file},
            "synth": asdict(self.synth),
            "labels": self.labels.to_dict() if self.labels else None,
            "split": asdict(self.split),
            "normalize": {"mode": self.normalize_mode},
            "graph": {"num_users": self.num_users, "edge_weighting": self.edge_weighting},
            "sweep": {"num_layers": list(self.sweep.num_layers),
                      "embed_dim": list(self.sweep.embed_dim)},
        }
        d.update(train_config_to_dict(self.train))
        return d


def train_config_to_dict(cfg: TrainConfig) -> dict:
    t = {f.name: getattr(cfg, f.name) for f in fields(cfg) if f.name not in ("loss", "model")}
    t["beta1"], t["beta2"] = t.pop("betas")
    return {"train": t, "model": cfg.model.to_dict(), "loss": asdict(cfg.loss)}


def train_config_from_dict(d: dict) -> TrainConfig:
    t = dict(d["train"])
    t["betas"] = (float(t.pop("beta1")), float(t.pop("beta2")))
    return TrainConfig(**t, model=ModelConfig(**d["model"]), loss=LossConfig(**d["loss"]))


def _construct(cls, kwargs: dict, section: str):
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}]: {exc}", key=section) from None


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}", key="config") from None

    values: dict[str, dict[str, Any]] = {}
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"{source}: unknown section [{sec}]", key=sec)
        values[sec] = {}
        for key, raw in cp.items(sec):
            if key not in SCHEMA[sec]:
                raise ConfigError(f"{source}: unknown key {sec}.{key}", key=f"{sec}.{key}")
            try:
                values[sec][key] = SCHEMA[sec][key](raw)
            except ValueError as exc:
                raise ConfigError(f"{source}: bad value for {sec}.{key}: {exc}",
                                  key=f"{sec}.{key}") from None
    get = lambda s: values.get(s, {})  # noqa: E731

    labels = None
    if "labels" in values:
        lv = get("labels")
        if "contexts" not in lv or "activities" not in lv:
            raise ConfigError("[labels] needs both contexts and activities", key="labels")
        labels = LabelSpace(lv["contexts"], lv["activities"],
                            lv.get("exclusive_groups", DEFAULT_EXCLUSIVE_GROUPS))

    tv = dict(get("train"))
    betas = TrainConfig().betas
    tv["betas"] = (tv.pop("beta1", betas[0]), tv.pop("beta2", betas[1]))
    model = _construct(ModelConfig, get("model"), "model")
    loss = _construct(LossConfig, get("loss"), "loss")
    train = _construct(TrainConfig, {**tv, "model": model, "loss": loss}, "train")
    gv = get("graph")
    return RunConfig(
        instances=get("data").get("instances"),
        prototypes=get("data").get("prototypes"),
        labels_file=get("data").get("labels_file"),
        synth=_construct(SynthConfig, get("synth"), "synth"),
        labels=labels,
        split=_construct(SplitSpec, get("split"), "split"),
        normalize_mode=get("normalize").get("mode", "zscore"),
        num_users=gv.get("num_users"),
        edge_weighting=gv.get("edge_weighting", "uniform"),
        train=train,
        sweep=_construct(SweepSpec, get("sweep"), "sweep"),
    )


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}", key="config") from None
    return parse_config(text, str(p))


def labels_to_ini(space: LabelSpace) -> str:
    groups = "; ".join("|".join(sorted(g)) for g in sorted(sorted(g) for g in space.exclusive_groups))
    return ("[labels]\n"
            f"contexts = {', '.join(space.context_names)}\n"
            f"activities = {', '.join(space.activity_names)}\n"
            f"exclusive_groups = {groups}\n")


def read_labels_ini(path: str | Path) -> LabelSpace:
    cfg = load_config(path)
    if cfg.labels is None:
        raise ConfigError(f"{path}: no [labels] section", key="labels")
    return cfg.labels


def _fmt_value(v: Any) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (tuple, list)):
        return ", ".join(str(x) for x in v)
    return str(v)


def to_ini(cfg: RunConfig) -> str:
    """INI text that ``parse_config`` turns back into an equal RunConfig."""
    d = cfg.to_dict()
    lines: list[str] = []
    for sec in SCHEMA:
        if sec == "labels":
            if cfg.labels is not None:
                lines.append(labels_to_ini(cfg.labels).rstrip("\n"))
                lines.append("")
            continue
        items = [(k, v) for k, v in d[sec].items() if not (sec == "data" and v is None)]
        if sec == "sweep" and not cfg.sweep.embed_dim:
            items = [(k, v) for k, v in items if k != "embed_dim"]
        if not items:
            continue
        lines.append(f"[{sec}]")
        lines.extend(f"{k} = {_fmt_value(v)}" for k, v in items)
        lines.append("")
    return "\n".join(lines)
