"""Central finite-difference verification of every differentiable component.

Each component builds a small loss on a toy graph; its analytic gradients
are compared elementwise against central differences. The relative error
uses a small floor in the denominator so near-zero gradients are compared
absolutely.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from fgat.diffcore import Tensor, add, backward, mul, tsum
from fgat.diffcore.tensor import _accumulate, _result
from fgat.featio import FeatureSample
from fgat.graphbuild import build_graph
from fgat.harness import ce_loss, lwf_loss
from fgat.model import (
    ModelConfig,
    PoolParams,
    classify,
    forward,
    gat_attention,
    gat_layer,
    global_pool,
    init_model,
    node_norm,
    snapshot,
)

__all__ = ["ComponentReport", "numeric_gradient", "max_rel_error", "check_loss", "run_all"]

DEFAULT_TOLERANCE = 1e-4
DEFAULT_STEP = 1e-5


@dataclass
class ComponentReport:
    name: str
    max_rel_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def numeric_gradient(build_loss: Callable[[], Tensor], param: Tensor, h: float = DEFAULT_STEP) -> np.ndarray:
    """Central differences of the scalar loss wrt every element of ``param``."""
    grad = np.zeros_like(param.data)
    flat = param.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = build_loss().item()
        flat[i] = orig - h
        down = build_loss().item()
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * h)
    return grad


def max_rel_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-5) -> float:
    """Elementwise |a - n| / max(|a|, |n|, floor), maximised.

    The floor turns the comparison absolute for near-zero gradients; central
    differences at h=1e-5 carry intrinsic noise around |f| * 1e-11, so
    tolerance * floor must sit safely above that.
    """
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / scale))


def check_loss(
    build_loss: Callable[[], Tensor],
    params: list[Tensor],
    h: float = DEFAULT_STEP,
) -> float:
    """Worst relative error across all checked tensors."""
    for p in params:
        p.zero_grad()
    backward(build_loss())
    analytic = [p.grad.copy() for p in params]
    for p in params:
        p.zero_grad()
    worst = 0.0
    for p, a in zip(params, analytic):
        n = numeric_gradient(build_loss, p, h)
        worst = max(worst, max_rel_error(a, n))
    return worst


def _projection(rng: np.random.Generator, shape) -> Tensor:
    return Tensor(rng.uniform(0.5, 1.5, size=shape))


def _scalarize(out: Tensor, proj: Tensor) -> Tensor:
    return tsum(mul(out, proj))


def _toy_setup(seed: int, grid: tuple[int, int] = (3, 3), pool: str = "wmean", tessellated: bool = False):
    """A tiny model plus matching graph; everything small enough to difference."""
    rng = np.random.default_rng(seed)
    h, w = grid
    sample = FeatureSample(scales=[rng.standard_normal((2, h, w))], label=0)
    graph = build_graph(sample, k=3)
    config = ModelConfig(
        in_dim=4,
        num_classes=3,
        grid=grid,
        heads=2,
        channels=3,
        pool=pool,
        tessellated=tessellated,
        classifier_hidden=5,
    )
    state = init_model(config, rng)
    # spread the pooling weight away from the identity so its gradient is generic
    if state.pool.weight is not None:
        state.pool.weight.data += 0.1 * rng.standard_normal(state.pool.weight.shape)
    return rng, graph, state


def run_all(seed: int = 0, tolerance: float = DEFAULT_TOLERANCE, include_fault: bool = False) -> list[ComponentReport]:
    """Check every differentiable component; returns one report per component."""
    reports: list[ComponentReport] = []

    def check(name: str, build_loss, params):
        reports.append(ComponentReport(name, check_loss(build_loss, params), tolerance))

    # attention coefficients
    rng, graph, state = _toy_setup(seed)
    layer = state.gat_layers[0]
    h_in = Tensor(graph.node_features.copy(), requires_grad=True)
    projs = [_projection(rng, (graph.edges.shape[0],)) for _ in range(layer.heads)]

    def attention_loss():
        alphas = gat_attention(h_in, graph.edges, layer)
        total = _scalarize(alphas[0], projs[0])
        for alpha, proj in zip(alphas[1:], projs[1:]):
            total = add(total, _scalarize(alpha, proj))
        return total

    check("gat_attention", attention_loss, [h_in, *layer.w, *layer.a])

    # full attention layer update
    rng, graph, state = _toy_setup(seed + 1)
    layer = state.gat_layers[0]
    h_in = Tensor(graph.node_features.copy(), requires_grad=True)
    proj = _projection(rng, (graph.num_nodes, layer.heads * layer.w[0].shape[1]))
    check(
        "gat_layer",
        lambda: _scalarize(gat_layer(h_in, graph.edges, layer, activation="elu"), proj),
        [h_in, *layer.w, *layer.a],
    )

    # node normalisation
    rng, graph, state = _toy_setup(seed + 2)
    h_norm = Tensor(rng.standard_normal((graph.num_nodes, 6)), requires_grad=True)
    proj = _projection(rng, (graph.num_nodes, 6))
    check(
        "node_norm",
        lambda: _scalarize(node_norm(h_norm, state.norm), proj),
        [h_norm, state.norm.gamma, state.norm.beta],
    )

    # pooling modes
    for mode in ("max", "add", "mean"):
        rng, graph, state = _toy_setup(seed + 3)
        h_pool = Tensor(rng.standard_normal((graph.num_nodes, 4)), requires_grad=True)
        proj = _projection(rng, (4,))
        pool = PoolParams(mode=mode)
        check(
            f"pool_{mode}",
            lambda h=h_pool, p=pool, pr=proj, g=graph: _scalarize(global_pool(h, p, g.grid), pr),
            [h_pool],
        )

    rng, graph, state = _toy_setup(seed + 4)
    h_pool = Tensor(rng.standard_normal((graph.num_nodes, 4)), requires_grad=True)
    proj = _projection(rng, (4,))
    check(
        "pool_wmean",
        lambda: _scalarize(global_pool(h_pool, state.pool, graph.grid), proj),
        [h_pool, state.pool.weight],
    )

    rng, graph, state = _toy_setup(seed + 5, grid=(4, 4), tessellated=True)
    h_pool = Tensor(rng.standard_normal((graph.num_nodes, 4)), requires_grad=True)
    proj = _projection(rng, (4,))
    check(
        "pool_wmean_tessellated",
        lambda: _scalarize(global_pool(h_pool, state.pool, graph.grid), proj),
        [h_pool, state.pool.weight],
    )

    # classifier head
    rng, graph, state = _toy_setup(seed + 6)
    clf = state.classifier
    x = Tensor(rng.standard_normal((2, clf.w1.shape[0])), requires_grad=True)
    proj = _projection(rng, (2, clf.w2.shape[1]))
    check(
        "classifier",
        lambda: _scalarize(classify(x, clf), proj),
        [x, clf.w1, clf.b1, clf.w2, clf.b2],
    )

    # losses
    rng = np.random.default_rng(seed + 7)
    logits = Tensor(rng.standard_normal((4, 5)), requires_grad=True)
    labels = rng.integers(0, 5, size=4)
    check("ce_loss", lambda: ce_loss(logits, labels), [logits])

    logits_new = Tensor(rng.standard_normal((4, 5)), requires_grad=True)
    logits_old = Tensor(rng.standard_normal((4, 5)))
    check("lwf_loss", lambda: lwf_loss(logits_new, logits_old, 2.0), [logits_new])

    # whole model through the combined training loss
    rng, graph, state = _toy_setup(seed + 8)
    frozen = snapshot(state)
    for p in frozen.parameters():
        p.data += 0.3 * rng.standard_normal(p.data.shape)
    label = np.array([1])

    def full_loss():
        from fgat.diffcore import reshape

        logits = forward(graph, state)
        logits2 = reshape(logits, (1, logits.shape[0]))
        old = forward(graph, frozen)
        old2 = Tensor(old.data.reshape(1, -1))
        return add(ce_loss(logits2, label), lwf_loss(logits2, old2, 2.0) * 0.7)

    check("full_model", full_loss, state.parameters())

    if include_fault:
        # deliberately wrong-sign backward; the checker must flag it
        x = Tensor(np.array([0.7, -0.3, 1.2]), requires_grad=True)

        def negated_sum(t: Tensor) -> Tensor:
            out = _result(
                t.data.sum(keepdims=True), (t,), lambda: _accumulate(t, -out.grad.sum())
            )
            return out

        check("selftest_fault", lambda: negated_sum(mul(x, x)), [x])

    return reports
