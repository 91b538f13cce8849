"""Feature maps to spatial graphs.

Coarse scales are upsampled by plain value repetition (no interpolation),
per-position features are concatenated across scales and suffixed with the
(x, y) grid coordinate, and edges connect each node to its k nearest
spatial neighbours, symmetrised, with self-loops.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from fgat.exceptions import ContractError
from fgat.featio import FeatureSample

__all__ = [
    "FeatureGraph",
    "upsample_repeat",
    "knn_edges",
    "build_graph",
    "build_graphs",
    "GraphBuilder",
]

THREADS_ENV = "FGAT_THREADS"


@dataclass
class FeatureGraph:
    """Node features, integer grid coordinates, directed edge list."""

    node_features: np.ndarray  # (N, D) float64
    coords: np.ndarray  # (N, 2) int64, columns are (x, y)
    edges: np.ndarray  # (E, 2) int64, rows are (src, dst)
    grid: tuple[int, int]  # (H, W) of the finest scale

    @property
    def num_nodes(self) -> int:
        return self.node_features.shape[0]

    @property
    def num_features(self) -> int:
        return self.node_features.shape[1]


def upsample_repeat(feature_map: np.ndarray, factor: int) -> np.ndarray:
    """Replicate each value into a ``factor``-sized block per spatial axis.

    Accepts (C, H, W) maps (spatial axes 1 and 2), plain (H, W) maps, or a
    1-D row, e.g. [1, 4] doubled gives [1, 1, 4, 4]. No interpolation:
    each value contributes independently.
    """
    if factor < 1:
        raise ContractError(f"upsample_repeat: factor must be >= 1, got {factor}")
    arr = np.asarray(feature_map)
    if arr.ndim not in (1, 2, 3):
        raise ContractError(f"upsample_repeat: expected 1-3 dims, got {arr.shape}")
    if factor == 1:
        return arr.copy()
    for axis in range(arr.ndim - min(arr.ndim, 2), arr.ndim):
        arr = np.repeat(arr, factor, axis=axis)
    return arr


def knn_edges(coords: np.ndarray, k: int) -> np.ndarray:
    """Symmetrised k-nearest-neighbour edges plus self-loops.

    Distance ties are broken by ascending node index so grid graphs come
    out identical regardless of iteration order. Rows are sorted
    lexicographically by (src, dst).
    """
    coords = np.asarray(coords, dtype=np.float64)
    n = coords.shape[0]
    if k < 1:
        raise ContractError(f"knn_edges: k must be positive, got {k}")
    if k >= n:
        raise ContractError(f"knn_edges: k={k} must be smaller than the node count {n}")

    delta = coords[:, None, :] - coords[None, :, :]
    dist2 = np.einsum("ijk,ijk->ij", delta, delta)
    pairs: set[tuple[int, int]] = set()
    index = np.arange(n)
    for i in range(n):
        # stable sort on (distance, node index); position 0 is node i itself
        order = np.lexsort((index, dist2[i]))
        neighbours = order[order != i][:k]
        for j in neighbours:
            pairs.add((i, int(j)))
            pairs.add((int(j), i))
    for i in range(n):
        pairs.add((i, i))
    return np.array(sorted(pairs), dtype=np.int64)


_EDGE_CACHE: dict[tuple[int, int, int], np.ndarray] = {}


def _grid_edges(h: int, w: int, k: int) -> np.ndarray:
    """Edges depend only on the grid geometry, so memoise per (h, w, k)."""
    key = (h, w, k)
    if key not in _EDGE_CACHE:
        idx = np.arange(h * w)
        coords = np.stack([idx % w, idx // w], axis=1)
        _EDGE_CACHE[key] = knn_edges(coords, k)
    return _EDGE_CACHE[key]


def _upsample_factor(fine: tuple[int, int], coarse: tuple[int, int], scale_idx: int) -> int:
    fh, fw = fine
    ch, cw = coarse
    if fh % ch != 0 or fw % cw != 0 or fh // ch != fw // cw:
        raise ContractError(
            f"build_graph: scale {scale_idx} ({ch}x{cw}) has no integer "
            f"upsample factor to the finest scale ({fh}x{fw})"
        )
    return fh // ch


def build_graph(sample: FeatureSample, k: int = 8, normalize_coords: bool = False) -> FeatureGraph:
    """Construct the node matrix and spatial k-NN edges for one sample.

    Node order is row-major over the finest grid; each node carries the
    concatenated per-position features of every scale followed by its
    (x, y) coordinate as raw integer-valued floats (or scaled to [0, 1]
    when ``normalize_coords`` is set).
    """
    h, w = sample.scales[0].shape[1:]
    stacked = np.concatenate(
        [
            upsample_repeat(s, _upsample_factor((h, w), s.shape[1:], i))
            for i, s in enumerate(sample.scales)
        ],
        axis=0,
    )
    features = stacked.transpose(1, 2, 0).reshape(h * w, -1)

    idx = np.arange(h * w)
    xs = (idx % w).astype(np.float64)
    ys = (idx // w).astype(np.float64)
    coords = np.stack([idx % w, idx // w], axis=1).astype(np.int64)
    if normalize_coords:
        xs = xs / max(w - 1, 1)
        ys = ys / max(h - 1, 1)
    node_features = np.concatenate([features, xs[:, None], ys[:, None]], axis=1)

    return FeatureGraph(
        node_features=node_features,
        coords=coords,
        edges=_grid_edges(h, w, k),
        grid=(h, w),
    )


def _thread_budget() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        raise ContractError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None


def build_graphs(
    samples: list[FeatureSample],
    k: int = 8,
    normalize_coords: bool = False,
    threads: int | None = None,
) -> list[FeatureGraph]:
    """Construct graphs for many samples, optionally with a worker pool.

    Worker count defaults to the ``FGAT_THREADS`` environment variable
    (1 when unset). Output order always matches input order.
    """
    threads = _thread_budget() if threads is None else max(1, threads)
    if threads == 1 or len(samples) < 2:
        return [build_graph(s, k, normalize_coords) for s in samples]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda s: build_graph(s, k, normalize_coords), samples))


class GraphBuilder(BaseEstimator, TransformerMixin):
    """Stateless transformer from feature samples to feature graphs."""

    def __init__(self, k: int = 8, normalize_coords: bool = False):
        self.k = k
        self.normalize_coords = normalize_coords

    def fit(self, X, y=None):
        return self

    def transform(self, X) -> list[FeatureGraph]:
        return build_graphs(X, k=self.k, normalize_coords=self.normalize_coords)
