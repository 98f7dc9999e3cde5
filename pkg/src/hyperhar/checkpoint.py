"""Single-file model checkpoint.

Layout (all integers unsigned little-endian, floats little-endian float64)::

    magic        8 bytes   b"HHARCKPT"
    version      u32
    header_len   u32
    header       header_len bytes of UTF-8 JSON (sorted keys)
    count        u32       number of matrices
    per matrix:
      name_len   u16
      name       name_len bytes UTF-8
      rows       u32
      cols       u32
      data       rows * cols float64, row-major

The JSON header holds the training configuration, the label space, the
seed, the graph's edge list, the normalizer mode and the selected epoch.
Matrices hold every model parameter plus ``graph.init_embeddings``,
``graph.prototypes``, ``normalizer.mu``, ``normalizer.s`` and
``normalizer.degenerate`` (0/1).
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .config import train_config_from_dict, train_config_to_dict
from .data import LabelSpace, Normalizer
from .errors import ConfigError
from .graph import EdgeType, HeteroHypergraph, Hyperedge
from .model import HypergraphModel, ModelParams
from .numerics import make_rng
from .trainer import TrainConfig

MAGIC = b"HHARCKPT"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    model: HypergraphModel
    train_config: TrainConfig
    normalizer: Normalizer
    best_epoch: int = 0
    best_val_mcc: float = float("nan")

    @property
    def graph(self) -> HeteroHypergraph:
        return self.model.graph

    @property
    def label_space(self) -> LabelSpace:
        return self.model.graph.label_space


def _header(ck: Checkpoint) -> dict:
    g = ck.graph
    return {
        "tool_version": __version__,
        "seed": ck.train_config.seed,
        "config": train_config_to_dict(ck.train_config),
        "label_space": g.label_space.to_dict(),
        "graph": {
            "num_users": g.num_users,
            "edge_weighting": g.edge_weighting,
            "skipped_instances": g.skipped_instances,
            "edges": [[e.edge_type.value, list(e.key), e.instance_count] for e in g.edges],
        },
        "normalizer": {"mode": ck.normalizer.mode},
        "best_epoch": ck.best_epoch,
        "best_val_mcc": ck.best_val_mcc,
    }


def _matrices(ck: Checkpoint) -> dict[str, np.ndarray]:
    g = ck.graph
    out = dict(ck.model.params.arrays())
    out["graph.init_embeddings"] = g.init_embeddings
    out["graph.prototypes"] = (np.vstack([e.prototype for e in g.edges]) if g.edges
                               else np.zeros((0, g.init_embeddings.shape[1])))
    n = ck.normalizer
    out["normalizer.mu"] = np.atleast_2d(n.mu)
    out["normalizer.s"] = np.atleast_2d(n.s)
    deg = n.degenerate if n.degenerate.size else np.zeros(len(n.mu), dtype=bool)
    out["normalizer.degenerate"] = np.atleast_2d(deg.astype(np.float64))
    return out


def dumps(ck: Checkpoint) -> bytes:
    buf = io.BytesIO()
    header = json.dumps(_header(ck), sort_keys=True, allow_nan=True).encode("utf-8")
    buf.write(MAGIC)
    buf.write(struct.pack("<II", FORMAT_VERSION, len(header)))
    buf.write(header)
    mats = _matrices(ck)
    buf.write(struct.pack("<I", len(mats)))
    for name, arr in mats.items():
        arr = np.asarray(arr, dtype="<f8")
        if arr.ndim != 2:
            raise ValueError(f"{name}: checkpoint matrices must be 2-D")
        raw = name.encode("utf-8")
        buf.write(struct.pack("<H", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<II", *arr.shape))
        buf.write(np.ascontiguousarray(arr).tobytes())
    return buf.getvalue()


class _Reader:
    def __init__(self, data: bytes, source: str):
        self.data, self.pos, self.source = data, 0, source

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ConfigError(f"{self.source}: truncated checkpoint", key="checkpoint")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def loads(data: bytes, source: str = "<bytes>") -> Checkpoint:
    r = _Reader(data, source)
    if r.take(len(MAGIC)) != MAGIC:
        raise ConfigError(f"{source}: not a checkpoint file (bad magic)", key="checkpoint")
    version, hlen = r.unpack("<II")
    if version != FORMAT_VERSION:
        raise ConfigError(f"{source}: unsupported checkpoint version {version}",
                          key="checkpoint")
    header = json.loads(r.take(hlen).decode("utf-8"))
    (count,) = r.unpack("<I")
    mats: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = r.unpack("<H")
        name = r.take(nlen).decode("utf-8")
        rows, cols = r.unpack("<II")
        mats[name] = np.frombuffer(r.take(8 * rows * cols), dtype="<f8").reshape(rows, cols).copy()

    cfg = train_config_from_dict(header["config"])
    space = LabelSpace.from_dict(header["label_space"])
    gh = header["graph"]
    protos = mats["graph.prototypes"]
    edges = tuple(Hyperedge(tuple(key), EdgeType(et), int(cnt), protos[j].copy())
                  for j, (et, key, cnt) in enumerate(gh["edges"]))
    graph = HeteroHypergraph(int(gh["num_users"]), space, edges, mats["graph.init_embeddings"],
                             gh["edge_weighting"], int(gh["skipped_instances"]))
    params = ModelParams.init(cfg.model, graph.init_embeddings.shape[1], make_rng(0))
    missing = [k for k in params.names() if k not in mats]
    if missing:
        raise ConfigError(f"{source}: checkpoint lacks parameters {missing}", key="checkpoint")
    params.load_arrays(mats)
    norm = Normalizer(mats["normalizer.mu"][0], mats["normalizer.s"][0],
                      mats["normalizer.degenerate"][0] > 0.5, header["normalizer"]["mode"])
    return Checkpoint(HypergraphModel(graph, cfg.model, params), cfg, norm,
                      int(header["best_epoch"]), float(header["best_val_mcc"]))


def save(ck: Checkpoint, path: str | Path) -> None:
    Path(path).write_bytes(dumps(ck))


def load(path: str | Path) -> Checkpoint:
    p = Path(path)
    try:
        data = p.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read checkpoint {p}: {exc}", key="checkpoint") from None
    return loads(data, str(p))
