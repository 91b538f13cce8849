"""Accuracy matrix bookkeeping and the benchmark metrics."""

import numpy as np
import pytest

from fgat.exceptions import ContractError
from fgat.featio import gen_synthetic
from fgat.harness import GraphCache
from fgat.metrics import AccuracyMatrix, average_accuracy, average_forgetting, evaluate_task
from fgat.model import ModelConfig, init_model


def constant_model(num_classes=10, favourite=None):
    """A model whose logits do not depend on the input graph."""
    config = ModelConfig(
        in_dim=3, num_classes=num_classes, grid=(2, 2), heads=1, channels=2,
        pool="mean", classifier_hidden=3, k=2,
    )
    state = init_model(config, 0)
    state.classifier.w2.data[...] = 0.0
    state.classifier.b2.data[...] = 0.0
    if favourite is not None:
        state.classifier.b2.data[favourite] = 10.0
    return state


def graph_cache():
    return GraphCache(k=2)


def test_perfect_predictor_scores_one():
    state = constant_model(num_classes=4, favourite=2)
    samples = gen_synthetic(4, 5, [(1, 2, 2)], 1.0, seed=0)
    only_twos = [s for s in samples if s.label == 2]
    assert evaluate_task(state, only_twos, graph_cache()) == 1.0


def test_constant_logits_hit_tie_break_share():
    # all-equal logits resolve to class 0; a balanced 10-class set scores 0.1
    state = constant_model(num_classes=10)
    samples = gen_synthetic(10, 4, [(1, 2, 2)], 1.0, seed=1)
    assert evaluate_task(state, samples, graph_cache()) == pytest.approx(0.1)


def test_accuracy_is_order_independent():
    state = constant_model(num_classes=4, favourite=1)
    samples = gen_synthetic(4, 6, [(1, 2, 2)], 1.0, seed=2)
    cache = graph_cache()
    forward_order = evaluate_task(state, samples, cache)
    backward_order = evaluate_task(state, list(reversed(samples)), cache)
    assert forward_order == backward_order


def test_empty_test_set_rejected():
    with pytest.raises(ContractError):
        evaluate_task(constant_model(), [], graph_cache())


# --- metric functions -----------------------------------------------------------


def test_average_accuracy_worked_example():
    matrix = AccuracyMatrix()
    matrix.add_row([0.9])
    matrix.add_row([0.5, 0.8])
    assert average_accuracy(matrix) == pytest.approx(0.65)


def test_average_accuracy_extremes():
    assert average_accuracy([[1.0], [1.0, 1.0]]) == 1.0
    assert average_accuracy([[0.0], [0.0, 0.0]]) == 0.0


def test_average_forgetting_worked_example():
    assert average_forgetting([[0.9], [0.5, 0.8]]) == pytest.approx(0.4)


def test_average_forgetting_zero_without_degradation():
    assert average_forgetting([[0.7], [0.7, 0.9]]) == 0.0


def test_average_forgetting_uniform_drop():
    matrix = [[0.9], [0.6, 0.8], [0.7, 0.6, 0.95]]
    assert average_forgetting(matrix) == pytest.approx(0.2)


def test_average_forgetting_needs_two_tasks():
    with pytest.raises(ContractError):
        average_forgetting([[0.5]])


def test_matrix_row_length_enforced():
    matrix = AccuracyMatrix()
    matrix.add_row([0.5])
    with pytest.raises(ContractError):
        matrix.add_row([0.5])
    with pytest.raises(ContractError):
        matrix.add_row([0.5, 0.6, 0.7])


def test_matrix_rejects_out_of_range_accuracy():
    matrix = AccuracyMatrix()
    with pytest.raises(ContractError):
        matrix.add_row([1.5])


def test_matrix_round_trips_through_dict():
    matrix = AccuracyMatrix()
    matrix.add_row([0.25])
    matrix.add_row([0.5, 0.75])
    assert AccuracyMatrix.from_dict(matrix.to_dict()) == matrix


@pytest.mark.parametrize("seed", range(10))
def test_metric_bounds_on_random_matrices(seed):
    rng = np.random.default_rng(seed)
    t = rng.integers(2, 6)
    rows = [list(rng.uniform(0, 1, size=i + 1)) for i in range(t)]
    assert 0.0 <= average_accuracy(rows) <= 1.0
    assert -1.0 <= average_forgetting(rows) <= 1.0
