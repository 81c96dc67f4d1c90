"""Online learners: ERM over schedule-driven subsamples or trailing windows.

All learners are pure functions of (parameters, observed history, t): at each
step t they fit on points strictly before t and never mutate state, so runs
are reproducible and steps can be recomputed in isolation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .distributions import DriftSchedule
from .hypotheses import (
    FiniteExplicitClass,
    FunctionClass,
    Hypothesis,
    ThresholdClass,
    finite_erm_indices,
    FiniteHypothesis,
    ThresholdHypothesis,
    initial_hypothesis,
    threshold_erm,
)
from .processes import SamplePath

__all__ = [
    "SNAP_TOL",
    "subsample_schedule",
    "subsample_times",
    "best_window",
    "constant_window_size",
    "erm_step",
    "SubsampledErmLearner",
    "AdaptiveWindowLearner",
    "ConstantWindowLearner",
    "BaselineLearner",
    "Learner",
    "baseline_step",
]

# floating-point guard: powers within this distance of an integer are treated
# as that integer before applying the ceiling
SNAP_TOL = 2.0**-40

BASELINE_KINDS = ("full_history_erm", "last_point")


def _ceil_snapped(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    nearest = np.rint(values)
    snapped = np.where(np.abs(values - nearest) <= SNAP_TOL, nearest, values)
    return np.ceil(snapped)


def _validate_alpha_r(alpha: float, r: float) -> None:
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must lie in [0,1), got {alpha}")
    if not r > 0.0:
        raise ValueError(f"r must be positive, got {r}")


def subsample_schedule(t, alpha: float, r: float):
    """Subsample gap k_t and window m_t at time t.

    k_t = ceil(t^((1-alpha)*3/(3+4r))) capped at t-1,
    m_t = ceil(t^((1-alpha)*(3+2r)/(3+4r))) capped at t-1.
    Accepts a scalar t >= 2 or an integer array of such t.
    """
    _validate_alpha_r(alpha, r)
    t_arr = np.asarray(t)
    if np.any(t_arr < 2):
        raise ValueError("subsample schedules are defined for t >= 2")
    tt = t_arr.astype(float)
    gap_exp = (1.0 - alpha) * 3.0 / (3.0 + 4.0 * r)
    window_exp = (1.0 - alpha) * (3.0 + 2.0 * r) / (3.0 + 4.0 * r)
    cap = t_arr - 1
    gap = np.minimum(_ceil_snapped(tt**gap_exp).astype(np.int64), cap)
    window = np.minimum(_ceil_snapped(tt**window_exp).astype(np.int64), cap)
    if np.isscalar(t) or t_arr.ndim == 0:
        return int(gap), int(window)
    return gap, window


def subsample_times(t: int, gap: int, window: int) -> np.ndarray:
    """Times {t - s*gap : s = 1..floor(window/gap)}, all within the last window steps."""
    if not 1 <= gap <= window <= t - 1:
        raise ValueError(f"need 1 <= gap <= window <= t-1, got gap={gap} window={window} t={t}")
    count = window // gap
    return t - gap * np.arange(1, count + 1, dtype=np.int64)


def constant_window_size(d: int, gamma: float) -> int:
    """ceil(d^(1/3) * gamma^(-2/3)), the drift-matched fixed window length."""
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must lie in (0,1], got {gamma}")
    value = float(d) ** (1.0 / 3.0) * float(gamma) ** (-2.0 / 3.0)
    return int(_ceil_snapped(np.asarray(value)))


def best_window(t: int, schedule: DriftSchedule, d: int, *, _cache: dict | None = None) -> int:
    """Window length minimizing (drift inside window) + sqrt(d/window), ties to smallest.

    Scans m = 1..t-1 exactly; prefix sums make each window's drift O(1) and
    the scan stops early once the (non-decreasing) drift term alone exceeds
    the best objective so far, which cannot change the argmin.
    """
    if t < 2:
        raise ValueError("adaptive windows are defined for t >= 2")
    if t > schedule.horizon:
        raise ValueError(f"schedule horizon {schedule.horizon} too short for t={t}")
    if _cache is not None:
        prefix = _cache["prefix"]
        sqrt_dm = _cache["sqrt_dm"]
    else:
        prefix = schedule.prefix_sums()
        sqrt_dm = np.sqrt(float(d) / np.arange(1, schedule.horizon + 1, dtype=float))
    s_t = prefix[t]
    best_obj = math.inf
    best_m = 1
    chunk = 512
    for start in range(1, t, chunk):
        if s_t - prefix[t - start] > best_obj:
            break
        stop = min(t, start + chunk)
        ms = np.arange(start, stop)
        objective = (s_t - prefix[t - ms]) + sqrt_dm[start - 1 : stop - 1]
        i = int(np.argmin(objective))
        if objective[i] < best_obj:
            best_obj = float(objective[i])
            best_m = start + i
    return best_m


def _finite_support_lookup(function_class: FiniteExplicitClass) -> dict:
    return {(z.x, z.y): i for i, z in enumerate(function_class.support)}


def _finite_indices(lookup: dict, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    try:
        return np.fromiter(
            (lookup[(float(x), int(y))] for x, y in zip(xs, ys)), dtype=np.int64, count=xs.size
        )
    except KeyError as err:
        raise ValueError(f"observation {err.args[0]!r} lies outside the class support") from None


def erm_step(
    function_class: FunctionClass,
    path: SamplePath,
    t: int,
    gap: int,
    window: int,
    _lookup: dict | None = None,
) -> Hypothesis:
    """Exact ERM over the gap-spaced subsample of the last ``window`` points."""
    times = subsample_times(t, gap, window)
    pos = times - 1
    xs = path.xs[pos]
    ys = path.ys[pos]
    if isinstance(function_class, ThresholdClass):
        theta, _ = threshold_erm(xs, ys)
        return ThresholdHypothesis(theta)
    lookup = _lookup if _lookup is not None else _finite_support_lookup(function_class)
    idx = finite_erm_indices(function_class, _finite_indices(lookup, xs, ys))
    return FiniteHypothesis(function_class, idx)


@dataclass
class SubsampledErmLearner:
    """ERM over a gap-spaced subsample whose gap and window follow the
    (alpha, r) schedule; the gap thins dependence, the window limits drift."""

    alpha: float
    r: float
    function_class: FunctionClass
    initial: Hypothesis | None = None

    def __post_init__(self) -> None:
        _validate_alpha_r(self.alpha, self.r)
        if self.initial is None:
            self.initial = initial_hypothesis(self.function_class)
        self._lookup = (
            _finite_support_lookup(self.function_class)
            if isinstance(self.function_class, FiniteExplicitClass)
            else None
        )

    def windows(self, t: int) -> tuple[int, int]:
        return subsample_schedule(t, self.alpha, self.r)

    def step_with_windows(self, path: SamplePath, t: int) -> tuple[Hypothesis, int, int]:
        if t == 1:
            return self.initial, 0, 0
        gap, window = subsample_schedule(t, self.alpha, self.r)
        return erm_step(self.function_class, path, t, gap, window, self._lookup), gap, window

    def step(self, path: SamplePath, t: int) -> Hypothesis:
        return self.step_with_windows(path, t)[0]


@dataclass
class AdaptiveWindowLearner:
    """ERM over the trailing window balancing known drift against sqrt(d/m)."""

    function_class: FunctionClass
    schedule: DriftSchedule
    initial: Hypothesis | None = None

    def __post_init__(self) -> None:
        if self.initial is None:
            self.initial = initial_hypothesis(self.function_class)
        self._cache = {
            "prefix": self.schedule.prefix_sums(),
            "sqrt_dm": np.sqrt(
                float(self.function_class.d)
                / np.arange(1, self.schedule.horizon + 1, dtype=float)
            ),
        }
        self._lookup = (
            _finite_support_lookup(self.function_class)
            if isinstance(self.function_class, FiniteExplicitClass)
            else None
        )

    def window_size(self, t: int) -> int:
        return best_window(t, self.schedule, self.function_class.d, _cache=self._cache)

    def windows(self, t: int) -> tuple[int, int]:
        return 1, self.window_size(t)

    def step_with_windows(self, path: SamplePath, t: int) -> tuple[Hypothesis, int, int]:
        if t == 1:
            return self.initial, 0, 0
        window = self.window_size(t)
        return erm_step(self.function_class, path, t, 1, window, self._lookup), 1, window

    def step(self, path: SamplePath, t: int) -> Hypothesis:
        return self.step_with_windows(path, t)[0]


@dataclass
class ConstantWindowLearner:
    """ERM over a fixed trailing window sized from a constant per-step drift."""

    function_class: FunctionClass
    gamma: float
    initial: Hypothesis | None = None

    def __post_init__(self) -> None:
        self.window = constant_window_size(self.function_class.d, self.gamma)
        if self.initial is None:
            self.initial = initial_hypothesis(self.function_class)
        self._lookup = (
            _finite_support_lookup(self.function_class)
            if isinstance(self.function_class, FiniteExplicitClass)
            else None
        )

    def windows(self, t: int) -> tuple[int, int]:
        return 1, min(self.window, max(t - 1, 1))

    def step_with_windows(self, path: SamplePath, t: int) -> tuple[Hypothesis, int, int]:
        if t <= self.window:
            return self.initial, 0, 0
        return erm_step(self.function_class, path, t, 1, self.window, self._lookup), 1, self.window

    def step(self, path: SamplePath, t: int) -> Hypothesis:
        return self.step_with_windows(path, t)[0]


@dataclass
class BaselineLearner:
    """Reference strategies: ERM over the full history, or the last point only."""

    kind: str
    function_class: FunctionClass
    initial: Hypothesis | None = None

    def __post_init__(self) -> None:
        if self.kind not in BASELINE_KINDS:
            raise ValueError(f"unknown baseline {self.kind!r}; choose from {BASELINE_KINDS}")
        if self.initial is None:
            self.initial = initial_hypothesis(self.function_class)
        self._lookup = (
            _finite_support_lookup(self.function_class)
            if isinstance(self.function_class, FiniteExplicitClass)
            else None
        )

    def windows(self, t: int) -> tuple[int, int]:
        return 1, (max(t - 1, 1) if self.kind == "full_history_erm" else 1)

    def step_with_windows(self, path: SamplePath, t: int) -> tuple[Hypothesis, int, int]:
        if t == 1:
            return self.initial, 0, 0
        window = t - 1 if self.kind == "full_history_erm" else 1
        return erm_step(self.function_class, path, t, 1, window, self._lookup), 1, window

    def step(self, path: SamplePath, t: int) -> Hypothesis:
        return self.step_with_windows(path, t)[0]


Learner = Union[SubsampledErmLearner, AdaptiveWindowLearner, ConstantWindowLearner, BaselineLearner]


def baseline_step(kind: str, function_class: FunctionClass, path: SamplePath, t: int) -> Hypothesis:
    """One-shot form of BaselineLearner.step."""
    return BaselineLearner(kind=kind, function_class=function_class).step(path, t)
