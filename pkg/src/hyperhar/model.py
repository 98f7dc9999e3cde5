"""Forward pass: per-type projections, per-edge-type hypergraph convolutions
summed into one node representation, stacked layers, and a dot-product
multi-label head for contexts and activities.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Iterator

import numpy as np

from . import numerics as nx
from .errors import ConfigError, ShapeError
from .graph import EDGE_TYPES, HeteroHypergraph, SubHypergraph
from .numerics import Matrix

NODE_BLOCKS = ("u", "c", "a")
HEADS = ("c", "a")


@dataclass(frozen=True)
class LayerConfig:
    in_dim: int
    out_dim: int
    dropout_p: float = 0.1
    activation: str = "leaky_relu"

    def __post_init__(self):
        if self.in_dim < 1 or self.out_dim < 1:
            raise ConfigError(f"layer dims must be >= 1, got {self.in_dim}->{self.out_dim}",
                              key="model.embed_dim")


@dataclass(frozen=True)
class ModelConfig:
    num_layers: int = 2
    embed_dim: int = 64
    head_dim: int | None = None
    dropout: float = 0.1
    activation: str = "leaky_relu"
    head_activation: str | None = "tanh"
    normalization: str = "symmetric"
    enable_edge_hetero: bool = True
    enable_contrastive: bool = True

    def __post_init__(self):
        if self.num_layers < 1:
            raise ConfigError("num_layers must be >= 1", key="model.num_layers")
        if self.embed_dim < 1:
            raise ConfigError("embed_dim must be >= 1", key="model.embed_dim")
        if self.head_dim is not None and self.head_dim < 1:
            raise ConfigError("head_dim must be >= 1", key="model.head_dim")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must be in [0, 1)", key="model.dropout")
        if self.activation not in nx.ACTIVATIONS:
            raise ConfigError(f"activation must be one of {nx.ACTIVATIONS}",
                              key="model.activation")
        if self.head_activation is not None and self.head_activation not in nx.ACTIVATIONS:
            raise ConfigError(f"head_activation must be one of {nx.ACTIVATIONS}",
                              key="model.head_activation")
        if self.normalization not in ("symmetric", "row"):
            raise ConfigError("normalization must be 'symmetric' or 'row'",
                              key="model.normalization")

    @property
    def resolved_head_activation(self) -> str:
        return self.head_activation or self.activation

    @property
    def resolved_head_dim(self) -> int:
        return self.head_dim or self.embed_dim

    def layers(self, num_features: int) -> list[LayerConfig]:
        dims = [num_features] + [self.embed_dim] * self.num_layers
        return [LayerConfig(dims[i], dims[i + 1], self.dropout, self.activation)
                for i in range(self.num_layers)]

    def to_dict(self) -> dict:
        return asdict(self)


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


@dataclass
class ModelParams:
    """All learnable matrices, keyed by a dotted name.

    Graph parameters (``layer{l}.*``) form theta_g; head parameters
    (``head.*``) form theta_c.
    """

    tensors: dict[str, Matrix] = field(default_factory=dict)

    @classmethod
    def init(cls, config: ModelConfig, num_features: int, rng: np.random.Generator) -> "ModelParams":
        p: dict[str, Matrix] = {}

        def new(name, arr):
            p[name] = Matrix(arr, requires_grad=True, name=name)

        for l, lc in enumerate(config.layers(num_features)):
            for t in NODE_BLOCKS:
                new(f"layer{l}.proj.{t}.weight", _glorot(rng, lc.in_dim, lc.out_dim))
                new(f"layer{l}.proj.{t}.bias", np.zeros((1, lc.out_dim)))
            if config.enable_edge_hetero:
                for et in EDGE_TYPES:
                    new(f"layer{l}.hgc.{et.value}", _glorot(rng, lc.out_dim, lc.out_dim))
            else:
                new(f"layer{l}.hgc.shared", _glorot(rng, lc.out_dim, lc.out_dim))
        h = config.resolved_head_dim
        for t in HEADS:
            new(f"head.x.{t}.weight", _glorot(rng, num_features, h))
            new(f"head.x.{t}.bias", np.zeros((1, h)))
            new(f"head.v.{t}.weight", _glorot(rng, config.embed_dim, h))
            new(f"head.v.{t}.bias", np.zeros((1, h)))
        return cls(p)

    def __getitem__(self, name: str) -> Matrix:
        return self.tensors[name]

    def __iter__(self) -> Iterator[Matrix]:
        return iter(self.tensors.values())

    def __len__(self) -> int:
        return len(self.tensors)

    def names(self) -> list[str]:
        return list(self.tensors)

    def graph_params(self) -> list[Matrix]:
        return [m for k, m in self.tensors.items() if k.startswith("layer")]

    def head_params(self) -> list[Matrix]:
        return [m for k, m in self.tensors.items() if k.startswith("head.")]

    def copy(self) -> "ModelParams":
        return ModelParams({k: Matrix(m.data, requires_grad=True, name=k)
                            for k, m in self.tensors.items()})

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: m.data.copy() for k, m in self.tensors.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for k, m in self.tensors.items():
            if arrays[k].shape != m.shape:
                raise ShapeError(f"{k}: expected {m.shape}, got {arrays[k].shape}")
            m.data = np.array(arrays[k], dtype=np.float64)


def _linear(x: Matrix, w: Matrix, b: Matrix) -> Matrix:
    return nx.add_row(nx.matmul(x, w), b)


def _act_drop(x: Matrix, kind: str, p: float, rng, training: bool) -> Matrix:
    return nx.dropout(nx.activation(x, kind), p, rng, training)


def hetero_project(
    V: Matrix,
    params: ModelParams,
    layer: int,
    blocks: tuple[int, int, int],
    lc: LayerConfig,
    rng: np.random.Generator | None = None,
    training: bool = False,
) -> Matrix:
    """Type-specific linear map, activation and dropout on each node block."""
    if sum(blocks) != V.rows:
        raise ShapeError(f"node blocks {blocks} do not cover {V.rows} rows")
    out = []
    start = 0
    for t, n in zip(NODE_BLOCKS, blocks):
        part = nx.rows(V, start, start + n)
        lin = _linear(part, params[f"layer{layer}.proj.{t}.weight"],
                      params[f"layer{layer}.proj.{t}.bias"])
        out.append(_act_drop(lin, lc.activation, lc.dropout_p, rng, training))
        start += n
    return nx.vstack(out)


def hgc_forward(sub: SubHypergraph, X: Matrix, theta: Matrix,
                normalization: str = "symmetric") -> Matrix:
    """Degree-normalized hypergraph convolution ``P X theta``."""
    if X.rows != sub.num_nodes:
        raise ShapeError(f"hgc: X has {X.rows} rows, graph has {sub.num_nodes} nodes")
    P = Matrix(sub.propagation(normalization))
    return nx.matmul(nx.matmul(P, X), theta)


def graph_forward(
    g: HeteroHypergraph,
    params: ModelParams,
    config: ModelConfig,
    rng: np.random.Generator | None = None,
    training: bool = False,
) -> Matrix:
    """Final node embeddings after ``config.num_layers`` stacked layers."""
    num_features = g.init_embeddings.shape[1]
    V = Matrix(g.init_embeddings)
    for l, lc in enumerate(config.layers(num_features)):
        H = hetero_project(V, params, l, g.blocks, lc, rng, training)
        if config.enable_edge_hetero:
            parts = [
                _act_drop(hgc_forward(g.subgraphs[et], H, params[f"layer{l}.hgc.{et.value}"],
                                      config.normalization),
                          lc.activation, lc.dropout_p, rng, training)
                for et in EDGE_TYPES
            ]
            V = parts[0]
            for p in parts[1:]:
                V = nx.add(V, p)
        else:
            V = _act_drop(hgc_forward(g.union, H, params[f"layer{l}.hgc.shared"],
                                      config.normalization),
                          lc.activation, lc.dropout_p, rng, training)
    return V


def classify(
    x_batch: Matrix,
    node_embeddings: Matrix,
    params: ModelParams,
    config: ModelConfig,
    blocks: tuple[int, int, int],
    rng: np.random.Generator | None = None,
    training: bool = False,
) -> Matrix:
    """Probabilities (batch x H), columns ordered contexts then activities."""
    nu, nc, na = blocks
    if node_embeddings.rows != nu + nc + na:
        raise ShapeError(f"node embeddings have {node_embeddings.rows} rows, blocks {blocks}")
    starts = {"c": nu, "a": nu + nc}
    sizes = {"c": nc, "a": na}
    logits = []
    for t in HEADS:
        wx, wv = params[f"head.x.{t}.weight"], params[f"head.v.{t}.weight"]
        if wx.cols != wv.cols:
            raise ShapeError(f"head {t}: signal dim {wx.cols} != node dim {wv.cols}")
        xt = _act_drop(_linear(x_batch, wx, params[f"head.x.{t}.bias"]),
                       config.resolved_head_activation, config.dropout, rng, training)
        vt = nx.rows(node_embeddings, starts[t], starts[t] + sizes[t])
        vt = _act_drop(_linear(vt, wv, params[f"head.v.{t}.bias"]),
                       config.resolved_head_activation, config.dropout, rng, training)
        logits.append(nx.matmul(xt, nx.transpose(vt)))
    return nx.activation(nx.hstack(logits), "sigmoid")


@dataclass
class HypergraphModel:
    graph: HeteroHypergraph
    config: ModelConfig
    params: ModelParams

    @property
    def num_features(self) -> int:
        return self.graph.init_embeddings.shape[1]

    def node_embeddings(self, rng=None, training: bool = False) -> Matrix:
        return graph_forward(self.graph, self.params, self.config, rng, training)

    def forward(self, x_batch: Matrix, rng=None, training: bool = False) -> tuple[Matrix, Matrix]:
        """(probabilities, node embeddings) for one batch."""
        emb = self.node_embeddings(rng, training)
        probs = classify(x_batch, emb, self.params, self.config, self.graph.blocks, rng, training)
        return probs, emb

    def predict_proba(self, X: np.ndarray, batch_size: int = 1024) -> np.ndarray:
        """Eval-mode probabilities for a feature array (N x M)."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.num_features:
            raise ShapeError(f"expected N x {self.num_features} features, got {X.shape}")
        emb = self.node_embeddings()
        out = [classify(Matrix(X[i:i + batch_size]), emb, self.params, self.config,
                        self.graph.blocks).data
               for i in range(0, len(X), batch_size)]
        H = self.graph.num_contexts + self.graph.num_activities
        return np.vstack(out) if out else np.zeros((0, H))
