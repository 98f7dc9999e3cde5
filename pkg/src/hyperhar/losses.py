"""Training objective: masked multi-label BCE plus a pairwise node-type
contrastive term on node embeddings."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .data import MISSING, POSITIVE
from .errors import ConfigError, ShapeError
from .numerics import Matrix

LOG_FLOOR = 1e-12


class AllTargetsMissingWarning(UserWarning):
    """Every target in a BCE batch was missing; the loss is 0."""


@dataclass(frozen=True)
class LossConfig:
    lambda1: float = 0.03  # same-type pull
    lambda2: float = 0.01  # cross-type push
    bce_weight_mode: str = "mask"

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigError("lambda1 and lambda2 must be >= 0", key="loss.lambda1")
        if self.bce_weight_mode not in ("mask", "inverse_frequency"):
            raise ConfigError("bce_weight_mode must be 'mask' or 'inverse_frequency'",
                              key="loss.bce_weight_mode")

    @property
    def contrastive_enabled(self) -> bool:
        return self.lambda1 > 0 or self.lambda2 > 0


def class_weights(targets: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-label (positive, negative) weights n / (2 n_class) over reported targets.

    A class absent from the training targets gets weight 1.
    """
    t = np.asarray(targets)
    n = (t != MISSING).sum(axis=0).astype(np.float64)
    npos = (t == POSITIVE).sum(axis=0).astype(np.float64)
    nneg = n - npos
    wpos = np.divide(n, 2 * npos, out=np.ones_like(n), where=npos > 0)
    wneg = np.divide(n, 2 * nneg, out=np.ones_like(n), where=nneg > 0)
    return wpos, wneg


def bce_weights(targets: np.ndarray, cfg: LossConfig,
                weights: tuple[np.ndarray, np.ndarray] | None = None) -> np.ndarray:
    """omega_{n,c}: 0 on missing targets, else 1 or the class weight."""
    t = np.asarray(targets)
    omega = (t != MISSING).astype(np.float64)
    if cfg.bce_weight_mode == "inverse_frequency":
        if weights is None:
            raise ConfigError("inverse_frequency mode needs class weights from the train set",
                              key="loss.bce_weight_mode")
        wpos, wneg = weights
        omega = omega * np.where(t == POSITIVE, wpos[None, :], wneg[None, :])
    return omega


def bce_loss(probs: Matrix, targets: np.ndarray, cfg: LossConfig | None = None,
             weights: tuple[np.ndarray, np.ndarray] | None = None) -> Matrix:
    """-(1/N) sum_n sum_c omega [y log p + (1-y) log(1-p)], N = batch size."""
    cfg = cfg or LossConfig()
    t = np.asarray(targets)
    if t.shape != probs.shape:
        raise ShapeError(f"bce: probs {probs.shape} vs targets {t.shape}")
    omega = bce_weights(t, cfg, weights)
    if not omega.any():
        warnings.warn("all BCE targets are missing", AllTargetsMissingWarning, stacklevel=2)
        return nx.scale(nx.total(probs), 0.0)
    y = (t == POSITIVE).astype(np.float64)
    ones = Matrix(np.ones(probs.shape))
    pos = nx.mul(Matrix(omega * y), nx.log(probs, LOG_FLOOR))
    neg = nx.mul(Matrix(omega * (1.0 - y)), nx.log(nx.sub(ones, probs), LOG_FLOOR))
    return nx.scale(nx.total(nx.add(pos, neg)), -1.0 / probs.rows)


def nonzero_rows(emb: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Indices of rows with norm above ``tol``; the rest are left out of pairs."""
    return np.flatnonzero(np.linalg.norm(emb, axis=1) > tol)


def pair_weights(node_types: np.ndarray, cfg: LossConfig) -> np.ndarray:
    t = np.asarray(node_types)
    w = np.where(t[:, None] == t[None, :], cfg.lambda1, -cfg.lambda2).astype(np.float64)
    np.fill_diagonal(w, 0.0)
    return w


def contrastive_loss(node_embeddings: Matrix, node_types: np.ndarray,
                     cfg: LossConfig | None = None) -> Matrix:
    """(1/(n(n-1))) sum_{i != j} W(i,j) (1 - cos(v_i, v_j)).

    W is lambda1 for same-type pairs and -lambda2 otherwise. Zero-norm rows
    are dropped and n counts the remaining rows.
    """
    cfg = cfg or LossConfig()
    if node_embeddings.cols == 0:
        raise ShapeError("contrastive loss needs embedding dimension >= 1")
    keep = nonzero_rows(node_embeddings.data)
    n = len(keep)
    if n < 2 or not cfg.contrastive_enabled:
        return nx.scale(nx.total(node_embeddings), 0.0)
    W = pair_weights(np.asarray(node_types)[keep], cfg)
    unit = nx.row_normalize(nx.take_rows(node_embeddings, keep))
    cos = nx.matmul(unit, nx.transpose(unit))
    weighted = nx.total(nx.mul(Matrix(W), cos))
    # sum W (1 - cos) = sum W - sum W cos
    return nx.scale(nx.sub(Matrix([[W.sum()]]), weighted), 1.0 / (n * (n - 1)))


def total_loss(probs: Matrix, targets: np.ndarray, node_embeddings: Matrix,
               node_types: np.ndarray, cfg: LossConfig | None = None,
               weights: tuple[np.ndarray, np.ndarray] | None = None) -> Matrix:
    return nx.add(bce_loss(probs, targets, cfg, weights),
                  contrastive_loss(node_embeddings, node_types, cfg))
