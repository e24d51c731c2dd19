"""Evaluation measures: concordance correlation, SSE and Pearson's r."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConstantInputError, LengthMismatchError, TooFewSamplesError


def _pair(pred, truth, min_len: int = 1) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(pred, dtype=float).ravel()
    y = np.asarray(truth, dtype=float).ravel()
    if x.size != y.size:
        raise LengthMismatchError(f"lengths differ: {x.size} vs {y.size}")
    if x.size < min_len:
        raise TooFewSamplesError(f"need at least {min_len} pairs, got {x.size}")
    return x, y


def ccc(pred, truth) -> float:
    """Concordance correlation coefficient with population moments.

    Two identical constant sequences score 1; a zero covariance with a
    positive denominator scores 0.
    """
    x, y = _pair(pred, truth, 2)
    mx, my = x.mean(), y.mean()
    dx, dy = x - mx, y - my
    cov = np.mean(dx * dy)
    denom = np.mean(dx * dx) + np.mean(dy * dy) + (mx - my) ** 2
    if denom == 0.0:
        return 1.0
    return float(2.0 * cov / denom)


def sse(pred, truth) -> float:
    x, y = _pair(pred, truth)
    r = x - y
    return float(r @ r)


def pearson(x, y) -> float:
    x, y = _pair(x, y, 2)
    dx, dy = x - x.mean(), y - y.mean()
    sx, sy = np.sqrt(np.mean(dx * dx)), np.sqrt(np.mean(dy * dy))
    if sx == 0.0 or sy == 0.0:
        raise ConstantInputError("Pearson correlation is undefined for a constant input")
    return float(np.clip(np.mean(dx * dy) / (sx * sy), -1.0, 1.0))


@dataclass(frozen=True)
class EvalResult:
    ccc: float
    sse: float
    pearson_r: float
    n: int


def evaluate(pred, truth) -> EvalResult:
    x, y = _pair(pred, truth, 2)
    try:
        r = pearson(x, y)
    except ConstantInputError:
        r = 0.0
    return EvalResult(ccc(x, y), sse(x, y), r, x.size)


def partition_ccc(preds: Sequence, truths: Sequence, mode: str = "concat") -> float:
    """CCC over a partition of per-subject sequences.

    ``concat`` scores the concatenation of all subjects (used for model
    selection); ``mean`` averages per-subject scores.
    """
    if len(preds) != len(truths) or not preds:
        raise LengthMismatchError("need matching, non-empty lists of sequences")
    if mode == "concat":
        return ccc(np.concatenate([np.ravel(p) for p in preds]), np.concatenate([np.ravel(t) for t in truths]))
    if mode == "mean":
        return float(np.mean([ccc(p, t) for p, t in zip(preds, truths)]))
    raise ValueError(f"unknown mode {mode!r}")
