"""Accuracy-matrix bookkeeping and the two benchmark metrics.

The matrix is lower-triangular: row i holds the accuracy on every task
j <= i after training through task i. Average accuracy is the mean of the
final row; average forgetting is the mean drop from each task's
just-trained accuracy to its final accuracy (positive means forgetting).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from fgat.diffcore import no_grad
from fgat.exceptions import ContractError
from fgat.featio import FeatureSample
from fgat.harness import GraphCache
from fgat.model import ModelState, forward

__all__ = [
    "AccuracyMatrix",
    "evaluate_task",
    "average_accuracy",
    "average_forgetting",
]


@dataclass
class AccuracyMatrix:
    """Lower-triangular accuracy records; row i has exactly i + 1 entries."""

    rows: list[list[float]] = field(default_factory=list)

    def add_row(self, row: list[float]) -> None:
        row = [float(v) for v in row]
        if len(row) != len(self.rows) + 1:
            raise ContractError(
                f"AccuracyMatrix: row {len(self.rows)} must have {len(self.rows) + 1} entries, "
                f"got {len(row)}"
            )
        for v in row:
            if not 0.0 <= v <= 1.0:
                raise ContractError(f"AccuracyMatrix: accuracy {v} outside [0, 1]")
        self.rows.append(row)

    @property
    def num_tasks(self) -> int:
        return len(self.rows)

    def to_dict(self) -> dict:
        return {"rows": self.rows}

    @classmethod
    def from_dict(cls, d: dict) -> "AccuracyMatrix":
        m = cls()
        for row in d["rows"]:
            m.add_row(row)
        return m


def _rows_of(matrix) -> list[list[float]]:
    return matrix.rows if isinstance(matrix, AccuracyMatrix) else [list(r) for r in matrix]


def evaluate_task(state: ModelState, samples: list[FeatureSample], cache: GraphCache) -> float:
    """Fraction of argmax-correct predictions over the full class vector.

    Ties resolve to the lowest class index. No task identity is used.
    """
    if not samples:
        raise ContractError("evaluate_task: empty test set")
    correct = 0
    with no_grad():
        for s in samples:
            logits = forward(cache.get(s), state)
            if int(np.argmax(logits.data)) == s.label:
                correct += 1
    return correct / len(samples)


def average_accuracy(matrix) -> float:
    """Mean accuracy over all tasks at the end of the sequence."""
    rows = _rows_of(matrix)
    if not rows:
        raise ContractError("average_accuracy: empty matrix")
    final = rows[-1]
    if len(final) != len(rows):
        raise ContractError("average_accuracy: final row is incomplete")
    return float(np.mean(final))


def average_forgetting(matrix) -> float:
    """Mean drop on past tasks from just-trained accuracy to final accuracy.

    Positive values mean performance was lost; 0 means none.
    """
    rows = _rows_of(matrix)
    t = len(rows)
    if t < 2:
        raise ContractError("average_forgetting: need at least 2 tasks")
    final = rows[-1]
    drops = [rows[j][j] - final[j] for j in range(t - 1)]
    return float(np.mean(drops))
