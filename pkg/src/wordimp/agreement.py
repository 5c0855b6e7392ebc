"""Agreement statistics for aligned score sequences.

The headline statistic is Lin's concordance correlation coefficient,
which multiplies Pearson correlation by a penalty for location and scale
differences:

    ccc = 2 * r * sd_x * sd_y / ((mean_y - mean_x)^2 + sd_x^2 + sd_y^2)

so it reaches 1.0 only when the two sequences agree exactly, not merely
when they are linearly related.  Standard deviations are population
(divide-by-n) throughout, matching Lin's original estimator.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class DegenerateVarianceError(ValueError):
    """Correlation is undefined because one sequence has zero variance."""


@dataclass(frozen=True)
class ScorePair:
    """Two score sequences over the same tokens (e.g. two annotators)."""

    x: tuple[float, ...]
    y: tuple[float, ...]

    def __init__(self, x: Sequence[float], y: Sequence[float]):
        object.__setattr__(self, "x", tuple(float(v) for v in x))
        object.__setattr__(self, "y", tuple(float(v) for v in y))
        if len(self.x) != len(self.y):
            raise ValueError(f"length mismatch: {len(self.x)} vs {len(self.y)}")
        if not self.x:
            raise ValueError("empty score pair")

    def __len__(self) -> int:
        return len(self.x)


@dataclass(frozen=True)
class AgreementStats:
    mean_x: float
    mean_y: float
    sd_x: float
    sd_y: float
    pearson: float
    ccc: float
    n: int


def pool_pairs(pairs: Iterable[ScorePair]) -> ScorePair:
    """Concatenate token-level pairs into one corpus-level pair."""
    xs: list[float] = []
    ys: list[float] = []
    for pair in pairs:
        xs.extend(pair.x)
        ys.extend(pair.y)
    if not xs:
        raise ValueError("empty overlap: no shared utterances to pool")
    return ScorePair(xs, ys)


def summary_stats(values: Sequence[float]) -> tuple[float, float]:
    """Mean and population standard deviation."""
    if len(values) == 0:
        raise ValueError("empty sequence")
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std())


def pearson(pair: ScorePair) -> float:
    """Population-covariance Pearson correlation, clamped into [-1, 1]."""
    if len(pair) < 2:
        raise ValueError("need at least two points")
    x = np.asarray(pair.x)
    y = np.asarray(pair.y)
    sd_x = float(x.std())
    sd_y = float(y.std())
    if sd_x == 0.0 or sd_y == 0.0:
        raise DegenerateVarianceError("zero variance in at least one sequence")
    cov = float(((x - x.mean()) * (y - y.mean())).mean())
    return float(np.clip(cov / (sd_x * sd_y), -1.0, 1.0))


def concordance(pair: ScorePair) -> AgreementStats:
    """Full agreement summary including the concordance coefficient."""
    x = np.asarray(pair.x)
    y = np.asarray(pair.y)
    mean_x, sd_x = float(x.mean()), float(x.std())
    mean_y, sd_y = float(y.mean()), float(y.std())
    r = pearson(pair)
    ccc = 2.0 * r * sd_x * sd_y / ((mean_y - mean_x) ** 2 + sd_x**2 + sd_y**2)
    ccc = float(np.clip(ccc, -1.0, 1.0))
    return AgreementStats(
        mean_x=mean_x,
        mean_y=mean_y,
        sd_x=sd_x,
        sd_y=sd_y,
        pearson=r,
        ccc=ccc,
        n=len(pair),
    )
