"""Graph attention classifier over feature graphs.

Two attention layers (scores conditioned on both endpoints, LeakyReLU
before the attention vector), per-graph node normalisation, a global
pooling stage with four variants including the learned weighted mean in
plain and tessellated form, and a two-layer classifier head.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from fgat.diffcore import (
    Tensor,
    add,
    concat,
    div,
    elu,
    gather,
    leaky_relu,
    matmul,
    mul,
    pow_scalar,
    relu,
    reshape,
    segment_softmax,
    slice_rows,
    sub,
    tmax,
    tmean,
    tsum,
)
from fgat.exceptions import ContractError, FmapFormatError, ShapeError
from fgat.graphbuild import FeatureGraph

__all__ = [
    "ModelConfig",
    "GatLayerParams",
    "NormParams",
    "PoolParams",
    "ClassifierParams",
    "ModelState",
    "POOL_MODES",
    "init_model",
    "gat_attention",
    "gat_layer",
    "node_norm",
    "global_pool",
    "tessellated_pool",
    "classify",
    "forward",
    "snapshot",
    "save_checkpoint",
    "load_checkpoint",
]

POOL_MODES = ("max", "add", "mean", "wmean")

CHECKPOINT_MAGIC = b"FGCK"
CHECKPOINT_VERSION = 1


@dataclass
class ModelConfig:
    """Architecture hyper-parameters, echoed into checkpoints."""

    in_dim: int
    num_classes: int
    grid: tuple[int, int]
    heads: int = 4
    channels: int = 128
    pool: str = "wmean"
    tessellated: bool = False
    classifier_hidden: int = 128
    leaky_slope: float = 0.2
    norm_eps: float = 1e-5
    separate_value_weights: bool = False
    k: int = 8
    normalize_coords: bool = False

    def __post_init__(self):
        self.grid = tuple(self.grid)
        if self.pool not in POOL_MODES:
            raise ContractError(f"pool mode must be one of {POOL_MODES}, got {self.pool!r}")
        if self.heads < 1 or self.channels < 1 or self.classifier_hidden < 1:
            raise ContractError("heads, channels and classifier_hidden must be positive")
        if self.tessellated and self.pool == "wmean":
            h, w = self.grid
            if h % 2 or w % 2:
                raise ContractError(f"tessellated pooling needs an even grid, got {h}x{w}")

    @property
    def num_nodes(self) -> int:
        return self.grid[0] * self.grid[1]

    @property
    def pool_weight_size(self) -> int:
        """Side length M of the pooling weight matrix (wmean only)."""
        if self.tessellated:
            return (self.grid[0] // 2) * (self.grid[1] // 2)
        return self.num_nodes

    def to_dict(self) -> dict:
        d = self.__dict__.copy()
        d["grid"] = list(self.grid)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


@dataclass
class GatLayerParams:
    """Per-head paired weight [dst | src] and attention vector."""

    w: list[Tensor]  # each (2 * in_dim, channels)
    a: list[Tensor]  # each (channels,)
    v: list[Tensor] | None  # separate value transforms, each (in_dim, channels)
    leaky_slope: float

    @property
    def heads(self) -> int:
        return len(self.w)


@dataclass
class NormParams:
    gamma: Tensor  # (channels,)
    beta: Tensor  # (channels,)
    eps: float


@dataclass
class PoolParams:
    mode: str
    tessellated: bool = False
    weight: Tensor | None = None

    def __post_init__(self):
        if self.mode == "wmean" and self.weight is None:
            raise ContractError("wmean pooling requires a weight matrix")
        if self.mode != "wmean" and self.weight is not None:
            raise ContractError(f"{self.mode} pooling carries no weights")


@dataclass
class ClassifierParams:
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor


@dataclass
class ModelState:
    """All trainable parameters plus the architecture config."""

    config: ModelConfig
    gat_layers: list[GatLayerParams]
    norm: NormParams
    pool: PoolParams
    classifier: ClassifierParams

    def parameters(self) -> list[Tensor]:
        """Canonical flat parameter order, shared by optimiser and checkpoints."""
        params: list[Tensor] = []
        for layer in self.gat_layers:
            for head in range(layer.heads):
                params.append(layer.w[head])
                params.append(layer.a[head])
                if layer.v is not None:
                    params.append(layer.v[head])
        params.extend([self.norm.gamma, self.norm.beta])
        if self.pool.weight is not None:
            params.append(self.pool.weight)
        params.extend(
            [self.classifier.w1, self.classifier.b1, self.classifier.w2, self.classifier.b2]
        )
        return params

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_model(config: ModelConfig, seed: int | np.random.Generator = 0) -> ModelState:
    """Fresh parameters; the pooling weight starts as the identity so the
    learned mean pool begins exactly at plain mean pooling."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    layers = []
    in_dim = config.in_dim
    for _ in range(2):
        w = [
            Tensor(_glorot(rng, 2 * in_dim, config.channels, (2 * in_dim, config.channels)), True)
            for _ in range(config.heads)
        ]
        a = [
            Tensor(_glorot(rng, config.channels, 1, (config.channels,)), True)
            for _ in range(config.heads)
        ]
        v = None
        if config.separate_value_weights:
            v = [
                Tensor(_glorot(rng, in_dim, config.channels, (in_dim, config.channels)), True)
                for _ in range(config.heads)
            ]
        layers.append(GatLayerParams(w=w, a=a, v=v, leaky_slope=config.leaky_slope))
        in_dim = config.heads * config.channels

    width = config.heads * config.channels
    norm = NormParams(
        gamma=Tensor(np.ones(width), True),
        beta=Tensor(np.zeros(width), True),
        eps=config.norm_eps,
    )

    weight = None
    if config.pool == "wmean":
        # near-identity: starts close to plain mean pooling, but the noise is
        # needed because normalisation zeroes every channel's node mean, which
        # makes an exact-identity weighting (and its ReLU path) a fixed point
        m = config.pool_weight_size
        weight = Tensor(np.eye(m) + 0.02 * rng.standard_normal((m, m)), True)
    pool = PoolParams(mode=config.pool, tessellated=config.tessellated, weight=weight)

    hidden = config.classifier_hidden
    classifier = ClassifierParams(
        w1=Tensor(_glorot(rng, width, hidden, (width, hidden)), True),
        b1=Tensor(np.full(hidden, 0.01), True),
        w2=Tensor(_glorot(rng, hidden, config.num_classes, (hidden, config.num_classes)), True),
        b2=Tensor(np.zeros(config.num_classes), True),
    )
    return ModelState(config=config, gat_layers=layers, norm=norm, pool=pool, classifier=classifier)


# ---------------------------------------------------------------------------
# layers


def _split_edges(edges: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    edges = np.asarray(edges, dtype=np.int64)
    return edges[:, 0], edges[:, 1]


class _EdgeSelectors:
    """Constant selection/aggregation matrices for one edge array.

    Row selection by edge endpoint and per-destination aggregation are
    expressed as matmuls with cached 0/1 matrices, which keeps both the
    forward and the reverse pass in dense linear algebra.
    """

    def __init__(self, edges: np.ndarray, num_nodes: int):
        src, dst = _split_edges(edges)
        num_edges = src.shape[0]
        take_src = np.zeros((num_edges, num_nodes))
        take_src[np.arange(num_edges), src] = 1.0
        take_dst = np.zeros((num_edges, num_nodes))
        take_dst[np.arange(num_edges), dst] = 1.0
        self.src = src
        self.dst = dst
        self.take_src = Tensor(take_src)
        self.take_dst = Tensor(take_dst)
        self.sum_by_dst = Tensor(take_dst.T.copy())


_SELECTOR_CACHE: dict[tuple[int, int], tuple[np.ndarray, _EdgeSelectors]] = {}


def _selectors(edges: np.ndarray, num_nodes: int) -> _EdgeSelectors:
    key = (id(edges), num_nodes)
    hit = _SELECTOR_CACHE.get(key)
    # the cached edges array is pinned in the value, so the id stays valid
    if hit is None or hit[0] is not edges:
        hit = (edges, _EdgeSelectors(edges, num_nodes))
        _SELECTOR_CACHE[key] = hit
    return hit[1]


def _head_terms(
    h: Tensor,
    sel: _EdgeSelectors,
    w: Tensor,
    a: Tensor,
    v: Tensor | None,
    slope: float,
) -> tuple[Tensor, Tensor]:
    """Attention coefficients and per-edge value rows for one head."""
    in_dim = h.shape[1]
    if w.shape[0] != 2 * in_dim:
        raise ShapeError(f"gat: weight rows {w.shape[0]} != 2 * node width {in_dim}")
    num_nodes = h.shape[0]
    dst_rows = matmul(sel.take_dst, matmul(h, slice_rows(w, 0, in_dim)))
    src_rows = matmul(sel.take_src, matmul(h, slice_rows(w, in_dim, 2 * in_dim)))
    pre = leaky_relu(add(dst_rows, src_rows), slope)
    scores = reshape(matmul(pre, reshape(a, (a.shape[0], 1))), (sel.src.shape[0],))
    alpha = segment_softmax(scores, sel.dst, num_nodes)
    value_rows = src_rows if v is None else matmul(sel.take_src, matmul(h, v))
    return alpha, value_rows


def _checked_selectors(edges: np.ndarray, num_nodes: int, op: str) -> _EdgeSelectors:
    sel = _selectors(np.asarray(edges, dtype=np.int64), num_nodes)
    indeg = np.bincount(sel.dst, minlength=num_nodes)
    if (indeg == 0).any():
        missing = int(np.flatnonzero(indeg == 0)[0])
        raise ContractError(f"{op}: node {missing} has no in-edges, cannot normalise")
    return sel


def gat_attention(h: Tensor, edges: np.ndarray, params: GatLayerParams) -> list[Tensor]:
    """Per-head edge attention coefficients, normalised over each node's in-edges."""
    sel = _checked_selectors(edges, h.shape[0], "gat_attention")
    alphas = []
    for head in range(params.heads):
        v = params.v[head] if params.v is not None else None
        alpha, _ = _head_terms(h, sel, params.w[head], params.a[head], v, params.leaky_slope)
        alphas.append(alpha)
    return alphas


def gat_layer(
    h: Tensor, edges: np.ndarray, params: GatLayerParams, activation: str | None = "elu"
) -> Tensor:
    """Attention-weighted neighbourhood aggregation; head outputs concatenated."""
    sel = _checked_selectors(edges, h.shape[0], "gat_layer")
    outputs = []
    for head in range(params.heads):
        v = params.v[head] if params.v is not None else None
        alpha, value_rows = _head_terms(h, sel, params.w[head], params.a[head], v, params.leaky_slope)
        messages = mul(value_rows, reshape(alpha, (alpha.shape[0], 1)))
        outputs.append(matmul(sel.sum_by_dst, messages))
    out = concat(outputs, axis=1) if len(outputs) > 1 else outputs[0]
    if activation == "elu":
        return elu(out)
    if activation is None:
        return out
    raise ContractError(f"gat_layer: unknown activation {activation!r}")


def node_norm(h: Tensor, params: NormParams) -> Tensor:
    """Standardise each channel across the graph's nodes, then affine."""
    if h.shape[0] < 2:
        raise ContractError("node_norm: need at least 2 nodes for a variance")
    mu = tmean(h, axis=0, keepdims=True)
    centered = sub(h, mu)
    var = tmean(mul(centered, centered), axis=0, keepdims=True)
    scaled = div(centered, pow_scalar(add(var, Tensor(params.eps)), 0.5))
    return add(mul(scaled, params.gamma), params.beta)


def global_pool(h: Tensor, params: PoolParams, grid: tuple[int, int] | None = None) -> Tensor:
    """Reduce (N, C) node values to a (C,) graph vector."""
    if params.mode == "max":
        return tmax(h, axis=0)
    if params.mode == "add":
        return tsum(h, axis=0)
    if params.mode == "mean":
        return tmean(h, axis=0)
    if params.tessellated:
        if grid is None:
            raise ContractError("tessellated pooling needs the grid dims")
        return tessellated_pool(h, grid, params)
    m = params.weight.shape[0]
    if h.shape[0] != m:
        raise ShapeError(f"wmean pool: node count {h.shape[0]} != weight size {m}")
    return tmean(matmul(params.weight, h), axis=0)


def _tile_indices(grid: tuple[int, int]) -> list[np.ndarray]:
    """Row-major node indices of the four spatial quadrants, in TL TR BL BR order."""
    h, w = grid
    th, tw = h // 2, w // 2
    rows = np.arange(th)
    cols = np.arange(tw)
    tiles = []
    for qy in (0, 1):
        for qx in (0, 1):
            grid_rows = (qy * th + rows)[:, None] * w + (qx * tw + cols)[None, :]
            tiles.append(grid_rows.reshape(-1))
    return tiles


def tessellated_pool(h: Tensor, grid: tuple[int, int], params: PoolParams) -> Tensor:
    """Weighted mean pool with one shared weight matrix over the 4 quadrants."""
    gh, gw = grid
    if gh % 2 or gw % 2:
        raise ContractError(f"tessellated_pool: grid {gh}x{gw} must have even sides")
    if h.shape[0] != gh * gw:
        raise ShapeError(f"tessellated_pool: node count {h.shape[0]} != grid {gh}x{gw}")
    m = (gh // 2) * (gw // 2)
    if params.weight.shape != (m, m):
        raise ShapeError(f"tessellated_pool: weight {params.weight.shape} != ({m}, {m})")
    weighted = [matmul(params.weight, gather(h, idx)) for idx in _tile_indices(grid)]
    return tmean(concat(weighted, axis=0), axis=0)


def classify(pooled: Tensor, params: ClassifierParams) -> Tensor:
    """Two affine layers with an inner ReLU; input is (B, C), output (B, classes)."""
    if pooled.shape[1] != params.w1.shape[0]:
        raise ShapeError(f"classify: input width {pooled.shape[1]} != {params.w1.shape[0]}")
    hidden = relu(add(matmul(pooled, params.w1), params.b1))
    return add(matmul(hidden, params.w2), params.b2)


def _forward_single(graph: FeatureGraph, state: ModelState) -> Tensor:
    if graph.num_features != state.config.in_dim:
        raise ShapeError(
            f"forward: graph has {graph.num_features} features, model expects {state.config.in_dim}"
        )
    h = Tensor(graph.node_features)
    last = len(state.gat_layers) - 1
    for i, layer in enumerate(state.gat_layers):
        h = gat_layer(h, graph.edges, layer, activation="elu" if i < last else None)
    h = node_norm(h, state.norm)
    pooled = global_pool(h, state.pool, graph.grid)
    return classify(reshape(pooled, (1, pooled.shape[0])), state.classifier)


def forward(graphs: FeatureGraph | list[FeatureGraph], state: ModelState) -> Tensor:
    """Logits over all classes: (num_classes,) for one graph, (B, num_classes)
    for a batch. Batching is a disjoint union; graphs never interact, so the
    batched rows are bit-identical to the corresponding single-graph calls."""
    if isinstance(graphs, FeatureGraph):
        out = _forward_single(graphs, state)
        return reshape(out, (out.shape[1],))
    rows = [_forward_single(g, state) for g in graphs]
    return concat(rows, axis=0) if len(rows) > 1 else rows[0]


# ---------------------------------------------------------------------------
# snapshots and checkpoints


def snapshot(state: ModelState) -> ModelState:
    """Frozen deep copy: same values, no gradient tracking."""

    def frozen(t: Tensor) -> Tensor:
        return Tensor(t.data.copy())

    layers = [
        GatLayerParams(
            w=[frozen(t) for t in layer.w],
            a=[frozen(t) for t in layer.a],
            v=[frozen(t) for t in layer.v] if layer.v is not None else None,
            leaky_slope=layer.leaky_slope,
        )
        for layer in state.gat_layers
    ]
    norm = NormParams(gamma=frozen(state.norm.gamma), beta=frozen(state.norm.beta), eps=state.norm.eps)
    pool = PoolParams(
        mode=state.pool.mode,
        tessellated=state.pool.tessellated,
        weight=frozen(state.pool.weight) if state.pool.weight is not None else None,
    )
    clf = ClassifierParams(
        w1=frozen(state.classifier.w1),
        b1=frozen(state.classifier.b1),
        w2=frozen(state.classifier.w2),
        b2=frozen(state.classifier.b2),
    )
    return ModelState(config=state.config, gat_layers=layers, norm=norm, pool=pool, classifier=clf)


def save_checkpoint(state: ModelState, path) -> None:
    """Versioned binary blob: magic, config echo, parameters as f64 LE."""
    cfg = json.dumps(state.config.to_dict(), sort_keys=True).encode()
    parts = [CHECKPOINT_MAGIC, struct.pack("<HI", CHECKPOINT_VERSION, len(cfg)), cfg]
    for p in state.parameters():
        parts.append(np.ascontiguousarray(p.data, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path) -> ModelState:
    blob = Path(path).read_bytes()
    if len(blob) < 10 or blob[:4] != CHECKPOINT_MAGIC:
        raise FmapFormatError(f"{path}: not a model checkpoint (bad magic)")
    version, cfg_len = struct.unpack_from("<HI", blob, 4)
    if version != CHECKPOINT_VERSION:
        raise FmapFormatError(f"{path}: unsupported checkpoint version {version}")
    offset = 10
    if offset + cfg_len > len(blob):
        raise FmapFormatError(f"{path}: truncated config at byte {offset}")
    config = ModelConfig.from_dict(json.loads(blob[offset : offset + cfg_len].decode()))
    offset += cfg_len

    state = init_model(config, seed=0)
    for p in state.parameters():
        nbytes = 8 * p.size
        if offset + nbytes > len(blob):
            raise FmapFormatError(f"{path}: truncated parameters at byte {offset}")
        p.data[...] = np.frombuffer(blob, dtype="<f8", count=p.size, offset=offset).reshape(
            p.data.shape
        )
        offset += nbytes
    if offset != len(blob):
        raise FmapFormatError(f"{path}: {len(blob) - offset} trailing bytes")
    return state
