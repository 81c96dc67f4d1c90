"""Binary predictors with 0-1 loss, exact empirical risk minimization, exact risk.

Two function classes: one-dimensional thresholds x -> 1[x >= theta], and
explicit finite classes given by per-observation loss tables on a finite
support.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np

from .distributions import FiniteSupport, Marginal, Observation, ThresholdConcept

__all__ = [
    "ThresholdClass",
    "FiniteExplicitClass",
    "FunctionClass",
    "ThresholdHypothesis",
    "FiniteHypothesis",
    "Hypothesis",
    "loss",
    "erm",
    "threshold_erm",
    "risk",
    "inf_risk",
    "initial_hypothesis",
    "finite_class_from_json",
    "load_finite_class",
]


@dataclass(frozen=True)
class ThresholdClass:
    """All thresholds theta in [0,1] predicting 1[x >= theta]; dimension 1."""

    d: int = 1

    def __post_init__(self) -> None:
        if self.d != 1:
            raise ValueError("threshold classes have dimension exactly 1")


@dataclass(frozen=True)
class FiniteExplicitClass:
    """Finite class given by loss tables: tables[i][j] = loss of member i at support[j].

    ``d`` is the declared complexity used by window rules; it must satisfy
    1 <= d <= max(1, ceil(log2 |class|)).
    """

    support: tuple[Observation, ...]
    tables: tuple[tuple[float, ...], ...]
    d: int = 1

    def __post_init__(self) -> None:
        if len(self.tables) == 0:
            raise ValueError("class must contain at least one member")
        if len(self.support) == 0:
            raise ValueError("support must be non-empty")
        if len(set(self.support)) != len(self.support):
            raise ValueError("support contains duplicate observations")
        for row in self.tables:
            if len(row) != len(self.support):
                raise ValueError("every loss table must cover the whole support")
            for value in row:
                if not 0.0 <= value <= 1.0:
                    raise ValueError(f"losses must lie in [0,1], got {value}")
        cap = max(1, math.ceil(math.log2(len(self.tables)))) if len(self.tables) > 1 else 1
        if not 1 <= self.d <= cap:
            raise ValueError(f"declared dimension must lie in [1, {cap}], got {self.d}")

    def __len__(self) -> int:
        return len(self.tables)

    def table_array(self) -> np.ndarray:
        return np.asarray(self.tables, dtype=float)

    def support_index(self, z: Observation) -> int:
        try:
            return self.support.index(Observation(float(z.x), int(z.y)))
        except ValueError:
            raise ValueError(f"observation {z!r} lies outside the class support") from None


FunctionClass = Union[ThresholdClass, FiniteExplicitClass]


@dataclass(frozen=True)
class ThresholdHypothesis:
    theta: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError(f"theta must lie in [0,1], got {self.theta}")

    def predict(self, x: float) -> int:
        return 1 if x >= self.theta else 0


@dataclass(frozen=True)
class FiniteHypothesis:
    function_class: FiniteExplicitClass
    index: int

    def __post_init__(self) -> None:
        if not 0 <= self.index < len(self.function_class):
            raise ValueError(f"index {self.index} outside class of size {len(self.function_class)}")


Hypothesis = Union[ThresholdHypothesis, FiniteHypothesis]


def loss(h: Hypothesis, z: Observation) -> float:
    """Loss of hypothesis h at observation z; 0-1 loss for thresholds."""
    if isinstance(h, ThresholdHypothesis):
        if not 0.0 <= z.x <= 1.0:
            raise ValueError(f"x must lie in [0,1], got {z.x}")
        if z.y not in (0, 1):
            raise ValueError(f"y must be 0 or 1, got {z.y}")
        return float(h.predict(z.x) != z.y)
    if isinstance(h, FiniteHypothesis):
        j = h.function_class.support_index(z)
        return float(h.function_class.tables[h.index][j])
    raise TypeError(f"unsupported hypothesis {type(h).__name__}")


def initial_hypothesis(function_class: FunctionClass) -> Hypothesis:
    """Smallest-parameter class member, used as the fixed t=1 predictor."""
    if isinstance(function_class, ThresholdClass):
        return ThresholdHypothesis(0.0)
    return FiniteHypothesis(function_class, 0)


def threshold_erm(xs: np.ndarray, ys: np.ndarray) -> tuple[float, int]:
    """Exact 0-1 ERM over all thresholds; returns (theta, error count).

    Sweeps the n+1 distinct labelings induced by candidate cuts
    {0} | {x_i} | {midpoints of consecutive sorted x} | {1} in O(n log n).
    Ties prefer the smallest threshold.  The result depends only on the
    multiset of points.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys)
    n = xs.size
    if n == 0:
        raise ValueError("erm needs at least one point")
    order = np.argsort(xs, kind="stable")
    x = xs[order]
    y = ys[order]
    # ones_before[j] = #{i < j : y=1}; loss at cut j = ones_before[j] + zeros at i >= j
    ones_before = np.concatenate(([0], np.cumsum(y)))
    total_ones = int(ones_before[-1])
    zeros_from = (n - total_ones) - (np.arange(n + 1) - ones_before)
    losses = ones_before + zeros_from
    # cut j classifies sorted points [0,j) as 0 and [j,n) as 1; it is realizable
    # by some theta in [0,1] iff the corresponding x-interval is non-empty
    reachable = np.empty(n + 1, dtype=bool)
    reachable[0] = True
    reachable[1:n] = x[:-1] < x[1:]
    reachable[n] = x[-1] < 1.0
    best = int(np.argmin(np.where(reachable, losses, n + 1)))
    if best == 0:
        theta = 0.0
    elif best == n:
        theta = 1.0
    else:
        theta = 0.5 * (x[best - 1] + x[best])
    return theta, int(losses[best])


def _as_arrays(points: Sequence[Observation] | Iterable[Observation]) -> tuple[np.ndarray, np.ndarray]:
    pts = list(points)
    if len(pts) == 0:
        raise ValueError("erm needs at least one point")
    xs = np.array([p.x for p in pts], dtype=float)
    ys = np.array([p.y for p in pts], dtype=np.int64)
    return xs, ys


def erm(function_class: FunctionClass, points: Sequence[Observation]) -> Hypothesis:
    """Exact empirical risk minimizer over the class; ties break to the
    smallest parameter (thresholds) or smallest index (finite classes)."""
    if isinstance(function_class, ThresholdClass):
        xs, ys = _as_arrays(points)
        if np.any(xs < 0.0) or np.any(xs > 1.0):
            raise ValueError("x values must lie in [0,1]")
        if np.any((ys != 0) & (ys != 1)):
            raise ValueError("labels must be 0 or 1")
        theta, _ = threshold_erm(xs, ys)
        return ThresholdHypothesis(theta)
    if isinstance(function_class, FiniteExplicitClass):
        pts = list(points)
        if len(pts) == 0:
            raise ValueError("erm needs at least one point")
        idx = finite_erm_indices(
            function_class,
            np.array([function_class.support_index(z) for z in pts], dtype=np.int64),
        )
        return FiniteHypothesis(function_class, idx)
    raise TypeError(f"unsupported function class {type(function_class).__name__}")


def finite_erm_indices(function_class: FiniteExplicitClass, support_indices: np.ndarray) -> int:
    """ERM over a finite class given points as support indices."""
    # canonical point order makes the float sums a function of the multiset
    cols = np.sort(np.asarray(support_indices, dtype=np.int64))
    sums = function_class.table_array()[:, cols].sum(axis=1)
    return int(np.argmin(sums))


def risk(h: Hypothesis, marginal: Marginal) -> float:
    """Exact expected loss of h under the marginal."""
    if isinstance(h, ThresholdHypothesis):
        if not isinstance(marginal, ThresholdConcept):
            raise ValueError("threshold hypotheses require ThresholdConcept marginals")
        return marginal.eta + (1.0 - 2.0 * marginal.eta) * abs(h.theta - marginal.theta)
    if isinstance(h, FiniteHypothesis):
        if not isinstance(marginal, FiniteSupport):
            raise ValueError("finite hypotheses require FiniteSupport marginals")
        if marginal.support != h.function_class.support:
            raise ValueError("marginal support must match the class support")
        return float(marginal.prob_array @ h.function_class.table_array()[h.index])
    raise TypeError(f"unsupported hypothesis {type(h).__name__}")


def inf_risk(function_class: FunctionClass, marginal: Marginal) -> float:
    """Exact infimum of risk over the class (the per-step benchmark)."""
    if isinstance(function_class, ThresholdClass):
        if not isinstance(marginal, ThresholdConcept):
            raise ValueError("threshold classes require ThresholdConcept marginals")
        # attained at theta = theta*; |theta - theta*| contributes nothing
        return marginal.eta
    if isinstance(function_class, FiniteExplicitClass):
        if not isinstance(marginal, FiniteSupport):
            raise ValueError("finite explicit classes require FiniteSupport marginals")
        if marginal.support != function_class.support:
            raise ValueError("marginal support must match the class support")
        return float(np.min(function_class.table_array() @ marginal.prob_array))
    raise TypeError(f"unsupported function class {type(function_class).__name__}")


def finite_class_from_json(payload: dict) -> FiniteExplicitClass:
    """Build a finite class from {"support": [[x,y],...], "tables": [[...]], "d": int}."""
    support = tuple(Observation(float(x), int(y)) for x, y in payload["support"])
    tables = tuple(tuple(float(v) for v in row) for row in payload["tables"])
    return FiniteExplicitClass(support=support, tables=tables, d=int(payload.get("d", 1)))


def load_finite_class(path: str) -> FiniteExplicitClass:
    with open(path, "r", encoding="utf-8") as fh:
        return finite_class_from_json(json.load(fh))
