"""GNN architectures (GCN, GAT, GraphSAGE) and embedding discriminators.

Every model is a flat container of named parameter Tensors plus a forward
pass recorded on the active tape. Forward returns the penultimate node
embedding (the activated output feeding the final layer, before dropout)
together with the output logits; the embedding is what discriminators and
hidden-layer regression consume.

Conventions, fixed across architectures:
  * weights use Glorot uniform init, biases start at zero;
  * dropout (when enabled) is applied to the input of every layer;
  * the final layer emits raw logits with no activation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import (
    Array,
    Tensor,
    add,
    dropout,
    elu,
    gather_rows,
    hconcat,
    leaky_relu,
    matmul,
    relu,
    scale,
)
from .sparse import (
    SparseAdjacency,
    edge_softmax,
    normalize_adjacency,
    spmm,
    weighted_spmm,
)

ARCHITECTURES = ("gcn", "gat", "sage")


@dataclass
class ModelConfig:
    arch: str
    in_dim: int
    layer_dims: list[int]            # per-layer widths; for GAT these are per-head
    heads: list[int] | None = None   # GAT only, one entry per layer
    dropout: float = 0.0

    def __post_init__(self):
        if self.arch not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {self.arch!r}")
        if self.in_dim <= 0 or not self.layer_dims or any(d <= 0 for d in self.layer_dims):
            raise ValueError("layer dimensions must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.arch == "gat":
            if self.heads is None or len(self.heads) != len(self.layer_dims):
                raise ValueError("gat needs one head count per layer")
            if any(h <= 0 for h in self.heads):
                raise ValueError("head counts must be positive")
        elif self.heads is not None:
            raise ValueError(f"heads only apply to gat, not {self.arch}")

    @property
    def num_layers(self) -> int:
        return len(self.layer_dims)

    @property
    def out_dim(self) -> int:
        return self.layer_dims[-1]

    @property
    def embedding_dim(self) -> int:
        """Width of the penultimate embedding the forward pass exposes."""
        if self.num_layers == 1:
            return self.in_dim
        if self.arch == "gat":
            return self.layer_dims[-2] * self.heads[-2]
        return self.layer_dims[-2]


class GraphContext:
    """Per-graph cache of the adjacency variants the layers consume."""

    def __init__(self, adjacency: SparseAdjacency):
        self.adjacency = adjacency
        self._sym = None
        self._loops = None
        self._rw = None

    @classmethod
    def from_graph(cls, graph) -> GraphContext:
        return cls(graph.adjacency())

    @property
    def num_nodes(self) -> int:
        return self.adjacency.num_nodes

    def sym_normalized(self) -> SparseAdjacency:
        if self._sym is None:
            self._sym = normalize_adjacency(self.adjacency)
        return self._sym

    def with_self_loops(self) -> SparseAdjacency:
        if self._loops is None:
            self._loops = self.adjacency.with_self_loops()
        return self._loops

    def rw_normalized(self) -> SparseAdjacency:
        if self._rw is None:
            self._rw = self.adjacency.normalized_rw()
        return self._rw


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int,
                   shape: tuple[int, int]) -> Array:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def _param(data: Array, name: str) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


# ---------------------------------------------------------------------------
# layers
# ---------------------------------------------------------------------------

class GCNLayer:
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, name: str):
        self.weight = _param(glorot_uniform(rng, in_dim, out_dim, (in_dim, out_dim)),
                             f"{name}.W")
        self.bias = _param(np.zeros((1, out_dim)), f"{name}.b")

    def params(self) -> list[Tensor]:
        return [self.weight, self.bias]

    def forward(self, ctx: GraphContext, x: Tensor) -> Tensor:
        return add(spmm(ctx.sym_normalized(), matmul(x, self.weight)), self.bias)


class SAGELayer:
    """Mean-of-neighbors aggregation concatenated with the node's own state."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, name: str):
        self.weight = _param(glorot_uniform(rng, 2 * in_dim, out_dim, (2 * in_dim, out_dim)),
                             f"{name}.W")
        self.bias = _param(np.zeros((1, out_dim)), f"{name}.b")

    def params(self) -> list[Tensor]:
        return [self.weight, self.bias]

    def forward(self, ctx: GraphContext, x: Tensor) -> Tensor:
        neighbors = spmm(ctx.rw_normalized(), x)  # isolated nodes aggregate to zero
        return add(matmul(hconcat([x, neighbors]), self.weight), self.bias)


class GATLayer:
    """Multi-head attention over the self-loop-augmented adjacency.

    Hidden layers concatenate their heads; the final layer averages them.
    Raw per-edge scores pass through leaky_relu(0.2) before the row softmax.
    """

    def __init__(self, in_dim: int, out_dim: int, heads: int, concat: bool,
                 rng: np.random.Generator, name: str):
        self.concat = concat
        self.heads = []
        for h in range(heads):
            w = _param(glorot_uniform(rng, in_dim, out_dim, (in_dim, out_dim)),
                       f"{name}.h{h}.W")
            a_dst = _param(glorot_uniform(rng, out_dim, 1, (out_dim, 1)),
                           f"{name}.h{h}.a_dst")
            a_src = _param(glorot_uniform(rng, out_dim, 1, (out_dim, 1)),
                           f"{name}.h{h}.a_src")
            b = _param(np.zeros((1, out_dim)), f"{name}.h{h}.b")
            self.heads.append((w, a_dst, a_src, b))

    def params(self) -> list[Tensor]:
        return [p for head in self.heads for p in head]

    def forward(self, ctx: GraphContext, x: Tensor) -> Tensor:
        adj = ctx.with_self_loops()
        rows, cols = adj.edge_arrays()
        outs = []
        for w, a_dst, a_src, b in self.heads:
            wh = matmul(x, w)
            dst_score = matmul(wh, a_dst)
            src_score = matmul(wh, a_src)
            edge_score = leaky_relu(
                add(gather_rows(dst_score, rows), gather_rows(src_score, cols)), 0.2)
            alpha = edge_softmax(edge_score, adj)
            outs.append(add(weighted_spmm(alpha, wh, adj), b))
        if self.concat:
            return hconcat(outs) if len(outs) > 1 else outs[0]
        result = outs[0]
        for o in outs[1:]:
            result = add(result, o)
        return scale(result, 1.0 / len(outs))


# ---------------------------------------------------------------------------
# models
# ---------------------------------------------------------------------------

class GNNModel:
    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        self.config = config
        self.layers = []
        d_in = config.in_dim
        for i, d_out in enumerate(config.layer_dims):
            name = f"layers.{i}"
            last = i == config.num_layers - 1
            if config.arch == "gcn":
                layer = GCNLayer(d_in, d_out, rng, name)
                d_in = d_out
            elif config.arch == "sage":
                layer = SAGELayer(d_in, d_out, rng, name)
                d_in = d_out
            else:
                h = config.heads[i]
                layer = GATLayer(d_in, d_out, h, concat=not last, rng=rng, name=name)
                d_in = d_out * h if not last else d_out
            self.layers.append(layer)

    def params(self) -> list[Tensor]:
        return [p for layer in self.layers for p in layer.params()]

    def _activate(self, t: Tensor) -> Tensor:
        return elu(t) if self.config.arch == "gat" else relu(t)

    def forward(self, ctx: GraphContext, x: Tensor | Array, training: bool = False,
                rng: np.random.Generator | None = None) -> tuple[Tensor, Tensor]:
        """Returns (embedding, logits): the penultimate activation before the
        final layer's input dropout, and the raw output logits."""
        if not isinstance(x, Tensor):
            x = Tensor(np.asarray(x, dtype=np.float64))
        if training and self.config.dropout > 0 and rng is None:
            raise ValueError("training forward with dropout needs an rng")
        h = x
        embedding = x
        for i, layer in enumerate(self.layers):
            embedding = h
            h = dropout(h, self.config.dropout, training, rng)
            h = layer.forward(ctx, h)
            if i < len(self.layers) - 1:
                h = self._activate(h)
        return embedding, h

    def state_dict(self) -> dict[str, Array]:
        return {p.name: p.data.copy() for p in self.params()}

    def load_state(self, state: dict[str, Array]) -> None:
        load_state(self.params(), state)


class Discriminator:
    """GCN stack scoring node embeddings with a single raw logit per node.

    hidden_dims may be empty (one linear graph-convolution straight to the
    logit). No dropout anywhere.
    """

    def __init__(self, in_dim: int, hidden_dims: list[int], rng: np.random.Generator):
        self.in_dim = in_dim
        self.hidden_dims = list(hidden_dims)
        self.layers = []
        d_in = in_dim
        for i, d_out in enumerate(self.hidden_dims + [1]):
            self.layers.append(GCNLayer(d_in, d_out, rng, f"disc.{i}"))
            d_in = d_out

    def params(self) -> list[Tensor]:
        return [p for layer in self.layers for p in layer.params()]

    def forward(self, ctx: GraphContext, h: Tensor) -> Tensor:
        out = h
        for i, layer in enumerate(self.layers):
            out = layer.forward(ctx, out)
            if i < len(self.layers) - 1:
                out = relu(out)
        return out

    def state_dict(self) -> dict[str, Array]:
        return {p.name: p.data.copy() for p in self.params()}

    def load_state(self, state: dict[str, Array]) -> None:
        load_state(self.params(), state)


def load_state(params: list[Tensor], state: dict[str, Array]) -> None:
    by_name = {p.name: p for p in params}
    if set(by_name) != set(state):
        missing = sorted(set(by_name) - set(state))
        extra = sorted(set(state) - set(by_name))
        raise ValueError(f"state mismatch: missing {missing}, unexpected {extra}")
    for name, p in by_name.items():
        data = np.asarray(state[name], dtype=np.float64)
        if data.shape != p.data.shape:
            raise ValueError(f"{name}: shape {data.shape} != {p.data.shape}")
        p.data = data.copy()


def count_parameters(obj) -> int:
    """Total scalar count across an iterable of Tensors or anything with
    .params()."""
    params = obj.params() if hasattr(obj, "params") else obj
    return int(sum(p.data.size for p in params))


def group_parameter_count(num_students: int, student_params: int,
                          disc_params: int) -> int:
    """Whole-group total: every student brings its own discriminator."""
    return num_students * (student_params + disc_params)


def default_discriminator_hidden(arch: str, multi_label: bool) -> list[int]:
    """Discriminator depth used when a config does not pin one: GCN students
    get a single linear scoring layer; attention/sampling students get one
    hidden layer, 16 wide on citation-style tasks and 64 wide on multi-label
    protein-style tasks."""
    if arch == "gcn":
        return []
    return [64] if multi_label else [16]
