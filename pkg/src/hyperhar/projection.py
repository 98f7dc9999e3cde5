"""Node-embedding diagnostics: type separation score and a 2-D PCA view.

PCA stands in for UMAP here; the 2-D picture is presentation only, the
separation score is computed in the full embedding space.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ProjectionError

TYPE_NAMES = ("user", "context", "activity")
TYPE_COLORS = ("red", "green", "blue")


def cosine_matrix(emb: np.ndarray) -> np.ndarray:
    """Pairwise cosine similarity; pairs involving a zero row count as 0."""
    emb = np.asarray(emb, dtype=np.float64)
    norms = np.linalg.norm(emb, axis=1)
    unit = np.divide(emb, norms[:, None], out=np.zeros_like(emb), where=norms[:, None] > 0)
    return unit @ unit.T


def separation_score(emb: np.ndarray, node_types: Sequence[int]) -> float:
    """Mean intra-type cosine minus mean inter-type cosine over pairs i != j."""
    t = np.asarray(node_types)
    cos = cosine_matrix(emb)
    off = ~np.eye(len(t), dtype=bool)
    same = (t[:, None] == t[None, :]) & off
    diff = t[:, None] != t[None, :]
    intra = cos[same].mean() if same.any() else 0.0
    inter = cos[diff].mean() if diff.any() else 0.0
    return float(intra - inter)


def pca_2d(emb: np.ndarray) -> np.ndarray:
    """Project rows onto the top two principal axes (sign fixed so that the
    largest-magnitude loading of each axis is positive)."""
    emb = np.asarray(emb, dtype=np.float64)
    if emb.shape[0] < 3:
        raise ProjectionError(f"need at least 3 nodes to project, got {emb.shape[0]}")
    centered = emb - emb.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    axes = vt[:2]
    for k in range(axes.shape[0]):
        j = np.argmax(np.abs(axes[k]))
        if axes[k, j] < 0:
            axes[k] = -axes[k]
    coords = centered @ axes.T
    if coords.shape[1] < 2:
        coords = np.hstack([coords, np.zeros((coords.shape[0], 2 - coords.shape[1]))])
    # collapse round-off so coincident points print identically
    coords[np.abs(coords) < 1e-12] = 0.0
    return coords


def write_coordinates(path: str | Path, names: Sequence[str], node_types: Sequence[int],
                      coords: np.ndarray) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["name", "type", "x", "y"])
        for n, t, (x, y) in zip(names, node_types, coords):
            w.writerow([n, TYPE_NAMES[int(t)], f"{x:.6f}", f"{y:.6f}"])


def write_scatter_svg(path: str | Path, names: Sequence[str], node_types: Sequence[int],
                      coords: np.ndarray, title: str = "") -> None:
    """Self-contained SVG scatter, colored by node type."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "hyperhar"
    t = np.asarray(node_types)
    fig, ax = plt.subplots(figsize=(5, 5))
    for k, (label, color) in enumerate(zip(TYPE_NAMES, TYPE_COLORS)):
        sel = t == k
        if sel.any():
            ax.scatter(coords[sel, 0], coords[sel, 1], c=color, label=label, s=30)
    for n, (x, y) in zip(names, coords):
        ax.annotate(n, (x, y), fontsize=6, xytext=(2, 2), textcoords="offset points")
    ax.set_xlabel("PC 1")
    ax.set_ylabel("PC 2")
    ax.set_title(title or "node embeddings (PCA projection)")
    ax.legend(loc="best", fontsize=7)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
