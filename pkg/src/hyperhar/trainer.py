"""Training loop, evaluation, and the ablation runner."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import numerics as nx
from .data import (LabeledInstance, LabelSpace, Normalizer, SplitSpec, apply_normalizer,
                   Split, fit_normalizer, resolve_conflicts, split, stack)
from .errors import ConfigError, HyperHarError, NumericError
from .graph import HeteroHypergraph, build_hypergraph
from .losses import LossConfig, bce_loss, class_weights, contrastive_loss
from .metrics import MetricsReport, evaluate_predictions
from .model import HypergraphModel, ModelConfig, ModelParams
from .optim import RAdam, make_optimizer

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 256
    epochs: int = 200
    optimizer: str = "radam"
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    seed: int = 0
    early_stop_patience: int | None = None
    select_best: bool = True
    threshold: float = 0.5
    loss: LossConfig = field(default_factory=LossConfig)
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if not self.learning_rate >= 0:  # 0 is allowed: a frozen run
            raise ConfigError("learning_rate must be >= 0", key="train.learning_rate")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1", key="train.batch_size")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1", key="train.epochs")
        if self.optimizer not in ("radam", "adam"):
            raise ConfigError("optimizer must be 'radam' or 'adam'", key="train.optimizer")
        if self.early_stop_patience is not None and self.early_stop_patience < 1:
            raise ConfigError("early_stop_patience must be >= 1", key="train.early_stop_patience")

    @property
    def effective_loss(self) -> LossConfig:
        if not self.model.enable_contrastive:
            return replace(self.loss, lambda1=0.0, lambda2=0.0)
        return self.loss


@dataclass
class EpochLog:
    epoch: int
    train_bce: float
    train_contrastive: float
    val_mcc: float

    def to_tsv(self) -> str:
        return f"{self.epoch}\t{self.train_bce:.6f}\t{self.train_contrastive:.6f}\t{self.val_mcc:.6f}"


@dataclass
class TrainState:
    model: HypergraphModel
    optimizer: RAdam
    config: TrainConfig
    epoch: int = 0
    best_val_mcc: float = -math.inf
    best_epoch: int = 0
    best_params: ModelParams | None = None
    history: list[EpochLog] = field(default_factory=list)

    def best_model(self) -> HypergraphModel:
        """Model with the selected checkpoint's parameters (final ones if
        selection is disabled)."""
        if self.best_params is None or not self.config.select_best:
            return self.model
        return HypergraphModel(self.model.graph, self.model.config, self.best_params)


def _arrays(instances: Sequence[LabeledInstance]) -> tuple[np.ndarray, np.ndarray]:
    _, X, Y = stack(instances)
    return X, Y


def train(g: HeteroHypergraph, train_set: Sequence[LabeledInstance],
          val_set: Sequence[LabeledInstance], cfg: TrainConfig) -> TrainState:
    """Minibatch training of graph and head parameters against BCE + contrastive.

    The full graph is recomputed for every batch. Validation runs in eval
    mode after each epoch; the best overall-MCC parameters are kept.
    """
    if len(train_set) == 0:
        raise ConfigError("training set is empty", key="train")
    X, Y = _arrays(train_set)
    if X.shape[1] != g.init_embeddings.shape[1]:
        raise ConfigError(f"features have {X.shape[1]} columns, graph was built with "
                          f"{g.init_embeddings.shape[1]}", key="train")
    loss_cfg = cfg.effective_loss
    weights = class_weights(Y) if loss_cfg.bce_weight_mode == "inverse_frequency" else None

    seeds = np.random.SeedSequence(cfg.seed).spawn(3)
    init_rng, shuffle_rng, dropout_rng = (np.random.Generator(np.random.PCG64(s)) for s in seeds)
    params = ModelParams.init(cfg.model, X.shape[1], init_rng)
    model = HypergraphModel(g, cfg.model, params)
    opt = make_optimizer(cfg.optimizer, cfg.learning_rate, cfg.betas, cfg.eps)
    state = TrainState(model, opt, cfg)
    Xv, Yv = _arrays(val_set) if len(val_set) else (None, None)
    node_types = g.node_types
    names = params.names()
    stale = 0

    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(len(X))
        bce_sum = con_sum = 0.0
        nbatches = 0
        for b, start in enumerate(range(0, len(X), cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            with nx.Tape() as tape:
                probs, emb = model.forward(nx.Matrix(X[idx]), dropout_rng, training=True)
                bce = bce_loss(probs, Y[idx], loss_cfg, weights)
                con = contrastive_loss(emb, node_types, loss_cfg)
                loss = nx.add(bce, con)
            value = loss.item()
            if not math.isfinite(value):
                raise NumericError(f"non-finite loss at epoch {epoch}, batch {b}: "
                                   f"bce={bce.item()}, contrastive={con.item()}")
            grads = tape.gradients(loss, list(params))
            opt.step({k: params[k].data for k in names}, {k: grads[params[k]] for k in names})
            bce_sum += bce.item()
            con_sum += con.item()
            nbatches += 1

        state.epoch = epoch
        val_mcc = (evaluate_model(model, Xv, Yv, g.label_space, cfg.threshold).overall_mcc
                   if Xv is not None else float("nan"))
        state.history.append(EpochLog(epoch, bce_sum / nbatches, con_sum / nbatches, val_mcc))
        log.debug("epoch %d bce %.5f con %.5f val_mcc %.4f", epoch,
                 bce_sum / nbatches, con_sum / nbatches, val_mcc)
        if Xv is not None and val_mcc > state.best_val_mcc:
            state.best_val_mcc = val_mcc
            state.best_epoch = epoch
            state.best_params = params.copy()
            stale = 0
        else:
            stale += 1
        if cfg.early_stop_patience is not None and stale >= cfg.early_stop_patience:
            break
    if state.best_params is None:
        state.best_params = params.copy()
        state.best_epoch = state.epoch
    return state


def evaluate_model(model: HypergraphModel, X: np.ndarray, Y: np.ndarray, space: LabelSpace,
                   threshold: float = 0.5, batch_size: int = 1024) -> MetricsReport:
    if space != model.graph.label_space:
        raise ConfigError("dataset label space does not match the model", key="labels")
    return evaluate_predictions(model.predict_proba(X, batch_size), Y, space, threshold)


def evaluate(state: TrainState | HypergraphModel, dataset: Sequence[LabeledInstance],
             space: LabelSpace | None = None, threshold: float | None = None) -> MetricsReport:
    """Eval-mode metrics of the selected checkpoint on ``dataset``."""
    if isinstance(state, TrainState):
        model = state.best_model()
        threshold = state.config.threshold if threshold is None else threshold
    else:
        model = state
    X, Y = _arrays(dataset)
    return evaluate_model(model, X, Y, space or model.graph.label_space,
                          0.5 if threshold is None else threshold)


# ------------------------------------------------------------ experiments

@dataclass
class Prepared:
    """Conflict-resolved, split, normalized data and the train-set graph."""

    graph: HeteroHypergraph
    normalizer: Normalizer
    train: list[LabeledInstance]
    val: list[LabeledInstance]
    test: list[LabeledInstance]
    raw: Split
    rejected: int

    @property
    def raw_test(self) -> list[LabeledInstance]:
        return self.raw.test


def prepare(instances: Sequence[LabeledInstance], space: LabelSpace, split_spec: SplitSpec,
            num_users: int | None = None, normalize_mode: str = "zscore",
            edge_weighting: str = "uniform") -> Prepared:
    clean, report = resolve_conflicts(instances, space)
    if num_users is None:
        num_users = max(int(i.user) for i in clean) + 1
    parts = split(clean, split_spec)
    norm = fit_normalizer(parts.train, normalize_mode)
    tr = apply_normalizer(norm, parts.train)
    g = build_hypergraph(tr, space, num_users, edge_weighting)
    return Prepared(g, norm, tr, apply_normalizer(norm, parts.val),
                    apply_normalizer(norm, parts.test), parts, report.total)


@dataclass
class RunResult:
    state: TrainState
    test_report: MetricsReport
    prepared: Prepared


def run_experiment(instances: Sequence[LabeledInstance], space: LabelSpace, cfg: TrainConfig,
                   split_spec: SplitSpec | None = None, num_users: int | None = None,
                   prepared: Prepared | None = None) -> RunResult:
    prepared = prepared or prepare(instances, space, split_spec or SplitSpec(seed=cfg.seed),
                                   num_users)
    state = train(prepared.graph, prepared.train, prepared.val, cfg)
    return RunResult(state, evaluate(state, prepared.test), prepared)


ABLATION_VARIANTS = ("full", "w/o EH", "w/o CL")


def ablation_configs(cfg: TrainConfig) -> dict[str, TrainConfig]:
    return {
        "full": cfg,
        "w/o EH": replace(cfg, model=replace(cfg.model, enable_edge_hetero=False)),
        "w/o CL": replace(cfg, loss=replace(cfg.loss, lambda1=0.0, lambda2=0.0)),
    }


@dataclass
class AblationRow:
    variant: str
    report: MetricsReport | None
    error: str | None = None
    result: RunResult | None = None


@dataclass
class AblationTable:
    rows: list[AblationRow]

    def to_csv(self) -> str:
        head = ("variant,context_mcc,context_macf1,activity_mcc,activity_macf1,"
                "overall_mcc,overall_macf1,delta_overall_mcc,delta_overall_macf1,status")
        lines = [head]
        base = self.rows[0].report if self.rows and self.rows[0].report else None
        for r in self.rows:
            if r.report is None:
                lines.append(f"{r.variant},,,,,,,,,error: {r.error}")
                continue
            rep = r.report
            if base is not None:
                dm = f"{rep.overall_avg.mcc - base.overall_avg.mcc:.6f}"
                df = f"{rep.overall_avg.macro_f1 - base.overall_avg.macro_f1:.6f}"
            else:
                dm = df = ""
            lines.append(
                f"{r.variant},{rep.context_avg.mcc:.6f},{rep.context_avg.macro_f1:.6f},"
                f"{rep.activity_avg.mcc:.6f},{rep.activity_avg.macro_f1:.6f},"
                f"{rep.overall_avg.mcc:.6f},{rep.overall_avg.macro_f1:.6f},{dm},{df},ok")
        return "\n".join(lines) + "\n"


def run_ablation(prepared: Prepared, cfg: TrainConfig,
                 variants: dict[str, TrainConfig] | None = None) -> AblationTable:
    """Train full, w/o EH and w/o CL from the same seed on the same split.

    A variant that fails is recorded with its error; the others still run.
    """
    variants = variants or ablation_configs(cfg)
    rows = []
    for name, vcfg in variants.items():
        try:
            res = run_experiment((), prepared.graph.label_space, vcfg, prepared=prepared)
        except HyperHarError as exc:
            log.warning("ablation variant %s failed: %s", name, exc)
            rows.append(AblationRow(name, None, str(exc)))
            continue
        rows.append(AblationRow(name, res.test_report, None, res))
    return AblationTable(rows)
