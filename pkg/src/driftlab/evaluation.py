"""Exact regret accounting, growth-exponent fits, and oracle verifications.

Risks are evaluated in closed form against the true time-t marginal (never as
realized losses), so curves measure exactly the quantity the window rules are
designed to control.  The two `verify_*` routines check, by exact enumeration,
the facts the rules rely on: k-spaced subsamples are nearly product
distributions, and independent (not necessarily identical) samples obey a
sqrt(d/m) uniform deviation envelope.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .distributions import ConceptPath, FiniteSupport, Marginal, ThresholdConcept
from .hypotheses import (
    FiniteExplicitClass,
    FunctionClass,
    ThresholdClass,
    ThresholdHypothesis,
    inf_risk,
    risk,
)
from .learners import Learner
from .processes import (
    MarkovModulatedProcess,
    ProcessModel,
    ProductProcess,
    beta_coefficient,
    sample_path,
)

__all__ = [
    "RegretCurve",
    "RateFit",
    "BlockingReport",
    "UniformDeviationReport",
    "DegenerateCurveError",
    "run_single",
    "run_experiment",
    "theoretical_exponent",
    "fit_growth_exponent",
    "geometric_checkpoints",
    "default_checkpoints",
    "verify_blocking",
    "verify_uniform_deviation",
]

EXCESS_TOL = 1e-12
MIN_FIT_POINTS = 8

BLOCKING_MAX_STATES = 4
BLOCKING_MAX_BLOCKS = 4
BLOCKING_MAX_GAP = 8


class DegenerateCurveError(ValueError):
    """Raised when a curve has non-positive cumulative excess at a checkpoint."""


@dataclass(frozen=True)
class RegretCurve:
    """Per-replicate exact conditional risks against the moving benchmark."""

    risks: np.ndarray  # (replicates, horizon)
    inf_risks: np.ndarray  # (horizon,)
    seeds: tuple[int, ...]
    gaps: np.ndarray | None = None  # (replicates, horizon) subsample gap diagnostics
    windows: np.ndarray | None = None  # (replicates, horizon) window diagnostics

    def __post_init__(self) -> None:
        if self.risks.ndim != 2:
            raise ValueError("risks must be (replicates, horizon)")
        if self.risks.shape[0] != len(self.seeds):
            raise ValueError("one replicate per seed required")
        if self.risks.shape[1] != self.inf_risks.size:
            raise ValueError("inf_risks length must equal the horizon")
        if np.min(self.risks - self.inf_risks[None, :]) < -EXCESS_TOL:
            raise ValueError("per-step excess fell below -1e-12; risks are inconsistent")

    @property
    def horizon(self) -> int:
        return self.risks.shape[1]

    @property
    def replicates(self) -> int:
        return self.risks.shape[0]

    @property
    def mean_risk(self) -> np.ndarray:
        return self.risks.mean(axis=0)

    @property
    def cum_excess(self) -> np.ndarray:
        return np.cumsum(self.mean_risk - self.inf_risks)

    def replicate_cum_excess(self) -> np.ndarray:
        return np.cumsum(self.risks - self.inf_risks[None, :], axis=1)

    def ci_bounds(self, z: float = 1.96) -> tuple[np.ndarray, np.ndarray]:
        """Normal-approximation CI for the replicate-mean cumulative excess."""
        per_rep = self.replicate_cum_excess()
        center = per_rep.mean(axis=0)
        if self.replicates < 2:
            return center.copy(), center.copy()
        se = per_rep.std(axis=0, ddof=1) / math.sqrt(self.replicates)
        return center - z * se, center + z * se

    def checkpoint_values(self, checkpoints: Sequence[int]) -> np.ndarray:
        cps = np.asarray(checkpoints, dtype=np.int64)
        if np.any(cps < 1) or np.any(cps > self.horizon):
            raise ValueError("checkpoints must lie in [1, horizon]")
        return self.cum_excess[cps - 1]

    def to_csv(self, path_out: str) -> None:
        """Replicate-aggregated curve: t, mean_risk, inf_risk, cum_excess, ci_lo, ci_hi."""
        mean_risk = self.mean_risk
        cum = self.cum_excess
        lo, hi = self.ci_bounds()
        with open(path_out, "w", encoding="utf-8", newline="") as fh:
            fh.write("t,mean_risk,inf_risk,cum_excess,ci_lo,ci_hi\n")
            for t in range(self.horizon):
                fh.write(
                    f"{t + 1},{float(mean_risk[t])!r},{float(self.inf_risks[t])!r},"
                    f"{float(cum[t])!r},{float(lo[t])!r},{float(hi[t])!r}\n"
                )


def _inf_risk_path(function_class: FunctionClass, marginals: Sequence[Marginal], horizon: int) -> np.ndarray:
    if isinstance(marginals, ConceptPath) and isinstance(function_class, ThresholdClass):
        return np.full(horizon, marginals.eta)
    return np.array([inf_risk(function_class, marginals[t]) for t in range(horizon)])


def run_single(
    model: ProcessModel,
    learner: Learner,
    horizon: int,
    seed: int,
    checkpoint: Callable[[int, np.ndarray, np.ndarray, np.ndarray], None] | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One replicate: exact risk(f_t, P_t) for t = 1..horizon plus window diagnostics.

    ``checkpoint(t, risks, gaps, windows)`` is invoked after each power-of-two
    step with the output arrays filled through index t-1, so callers can flush
    partial results.
    """
    path = sample_path(model, horizon, seed)
    marginals = model.marginals
    fast = isinstance(marginals, ConceptPath) and isinstance(
        learner.function_class, ThresholdClass
    )
    risks = np.empty(horizon)
    gaps = np.zeros(horizon, dtype=np.int64)
    windows = np.zeros(horizon, dtype=np.int64)
    if fast:
        thetas = marginals.thetas
        eta = marginals.eta
        scale = 1.0 - 2.0 * eta
        for t in range(1, horizon + 1):
            hypothesis, gap, window = learner.step_with_windows(path, t)
            gaps[t - 1] = gap
            windows[t - 1] = window
            risks[t - 1] = eta + scale * abs(hypothesis.theta - thetas[t - 1])
            if checkpoint is not None and (t & (t - 1)) == 0:
                checkpoint(t, risks, gaps, windows)
    else:
        for t in range(1, horizon + 1):
            hypothesis, gap, window = learner.step_with_windows(path, t)
            gaps[t - 1] = gap
            windows[t - 1] = window
            risks[t - 1] = risk(hypothesis, marginals[t - 1])
            if checkpoint is not None and (t & (t - 1)) == 0:
                checkpoint(t, risks, gaps, windows)
    return risks, gaps, windows


def run_experiment(
    model: ProcessModel,
    learner: Learner,
    horizon: int,
    seeds: Sequence[int],
) -> RegretCurve:
    """Average exact conditional risks over seed replicates."""
    seeds = tuple(int(s) for s in seeds)
    if len(seeds) == 0:
        raise ValueError("at least one seed is required")
    if len(set(seeds)) != len(seeds):
        raise ValueError("seeds must be distinct")
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    risks = np.empty((len(seeds), horizon))
    gaps = np.empty((len(seeds), horizon), dtype=np.int64)
    windows = np.empty((len(seeds), horizon), dtype=np.int64)
    for i, seed in enumerate(seeds):
        risks[i], gaps[i], windows[i] = run_single(model, learner, horizon, seed)
    inf_risks = _inf_risk_path(learner.function_class, model.marginals, horizon)
    return RegretCurve(risks=risks, inf_risks=inf_risks, seeds=seeds, gaps=gaps, windows=windows)


def theoretical_exponent(alpha: float, r: float) -> float:
    """Predicted growth exponent alpha + (1-alpha)*(3+3r)/(3+4r) of cumulative excess."""
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must lie in [0,1), got {alpha}")
    if not r > 0.0:
        raise ValueError(f"r must be positive, got {r}")
    return alpha + (1.0 - alpha) * (3.0 + 3.0 * r) / (3.0 + 4.0 * r)


@dataclass(frozen=True)
class RateFit:
    """Least-squares slope of log cumulative excess against log T."""

    exponent: float
    intercept: float
    t_min: int
    t_max: int
    residual_norm: float
    theoretical: float | None = None

    def to_json(self) -> dict:
        return {
            "exponent": self.exponent,
            "intercept": self.intercept,
            "t_min": self.t_min,
            "t_max": self.t_max,
            "residual_norm": self.residual_norm,
            "theoretical": self.theoretical,
        }


def geometric_checkpoints(t_min: int, t_max: int, ratio: float = math.sqrt(2.0)) -> tuple[int, ...]:
    """Geometric integer grid from t_min to t_max (both included)."""
    if not 1 <= t_min < t_max:
        raise ValueError(f"need 1 <= t_min < t_max, got {t_min}, {t_max}")
    if ratio <= 1.0:
        raise ValueError(f"ratio must exceed 1, got {ratio}")
    points = []
    value = float(t_min)
    while value < t_max:
        points.append(int(round(value)))
        value *= ratio
    points.append(t_max)
    return tuple(sorted(set(points)))


def default_checkpoints(horizon: int, t_min: int = 256, t_max_cap: int = 32768) -> tuple[int, ...]:
    """Powers of two from t_min up to min(horizon, t_max_cap)."""
    top = min(horizon, t_max_cap)
    if top < t_min:
        raise ValueError(f"horizon {horizon} too short for checkpoints starting at {t_min}")
    points = []
    value = t_min
    while value <= top:
        points.append(value)
        value *= 2
    if points[-1] != top:
        points.append(top)
    return tuple(points)


def fit_growth_exponent(
    checkpoints: Sequence[int],
    cum_excess: Sequence[float],
    theoretical: float | None = None,
) -> RateFit:
    """Fit cum_excess ~ exp(intercept) * T^exponent over the checkpoint grid.

    Requires at least 8 checkpoints and positive cumulative excess at each;
    a non-positive value marks the curve degenerate for log-log fitting.
    """
    ts = np.asarray(checkpoints, dtype=float)
    values = np.asarray(cum_excess, dtype=float)
    if ts.size != values.size:
        raise ValueError("checkpoints and cum_excess must have equal length")
    if ts.size < MIN_FIT_POINTS:
        raise ValueError(f"rate fits need at least {MIN_FIT_POINTS} checkpoints, got {ts.size}")
    if np.any(ts[1:] <= ts[:-1]):
        raise ValueError("checkpoints must be strictly increasing")
    if np.any(values <= 0.0):
        bad = int(ts[np.argmax(values <= 0.0)])
        raise DegenerateCurveError(
            f"cumulative excess is non-positive at checkpoint T={bad}; fit skipped"
        )
    log_t = np.log(ts)
    log_v = np.log(values)
    design = np.column_stack([log_t, np.ones_like(log_t)])
    (slope, intercept), *_ = np.linalg.lstsq(design, log_v, rcond=None)
    residuals = log_v - design @ np.array([slope, intercept])
    return RateFit(
        exponent=float(slope),
        intercept=float(intercept),
        t_min=int(ts[0]),
        t_max=int(ts[-1]),
        residual_norm=float(np.sqrt(np.mean(residuals**2))),
        theoretical=theoretical,
    )


@dataclass(frozen=True)
class BlockingReport:
    """Exact TV gap between a k-spaced block law and the product of its marginals."""

    states: int
    t: int
    blocks: int
    gap: int
    tv_gap: float
    bound: float

    @property
    def slack(self) -> float:
        return self.bound - self.tv_gap

    def to_json(self) -> dict:
        return {
            "states": self.states,
            "t": self.t,
            "blocks": self.blocks,
            "gap": self.gap,
            "tv_gap": self.tv_gap,
            "bound": self.bound,
            "slack": self.slack,
        }


def verify_blocking(model: ProcessModel, t: int, blocks: int, gap: int) -> BlockingReport:
    """Compare the joint law of hidden states at times t, t+gap, ..., against the
    product of its marginals; the TV gap never exceeds (blocks-1) * beta_gap.

    Computed on hidden states (observations are states plus independent noise,
    so the observation-level gap is no larger).  Exact via matrix powers.
    """
    if t < 1 or blocks < 1 or gap < 1:
        raise ValueError("t, blocks and gap must all be >= 1")
    if blocks > BLOCKING_MAX_BLOCKS:
        raise ValueError(f"blocks capped at {BLOCKING_MAX_BLOCKS} for exact enumeration")
    if gap > BLOCKING_MAX_GAP:
        raise ValueError(f"gap capped at {BLOCKING_MAX_GAP} for exact enumeration")
    if isinstance(model, ProductProcess):
        return BlockingReport(states=0, t=t, blocks=blocks, gap=gap, tv_gap=0.0, bound=0.0)
    assert isinstance(model, MarkovModulatedProcess)
    states = model.states
    if states > BLOCKING_MAX_STATES:
        raise ValueError(f"states capped at {BLOCKING_MAX_STATES} for exact enumeration")
    pi = model.stationary
    step_law = np.linalg.matrix_power(model.transition_array(), gap)
    joint = pi.copy()
    for _ in range(blocks - 1):
        joint = joint[..., None] * step_law
    product = pi.copy()
    for _ in range(blocks - 1):
        product = np.multiply.outer(product, pi)
    tv_gap = 0.5 * float(np.abs(joint - product).sum())
    bound = (blocks - 1) * beta_coefficient(model, gap)
    return BlockingReport(states=states, t=t, blocks=blocks, gap=gap, tv_gap=tv_gap, bound=bound)


@dataclass(frozen=True)
class UniformDeviationReport:
    """Mean exact sup-deviation per sample size, with its sqrt(d/m) envelope."""

    d: int
    m_grid: tuple[int, ...]
    trials: int
    estimates: tuple[float, ...]
    fitted_exponent: float
    envelope_constant: float

    def ratios(self) -> np.ndarray:
        ms = np.asarray(self.m_grid, dtype=float)
        return np.asarray(self.estimates) / np.sqrt(self.d / ms)

    def to_json(self) -> dict:
        return {
            "d": self.d,
            "m_grid": list(self.m_grid),
            "trials": self.trials,
            "estimates": list(self.estimates),
            "fitted_exponent": self.fitted_exponent,
            "envelope_constant": self.envelope_constant,
        }


def _abs_sum_to(sorted_values: np.ndarray, prefix: np.ndarray, queries: np.ndarray) -> np.ndarray:
    """sum_i |q - v_i| for each query q, via prefix sums of the sorted values."""
    idx = np.searchsorted(sorted_values, queries, side="left")
    total = prefix[-1]
    below = prefix[idx]
    return queries * idx - below + (total - below) - queries * (sorted_values.size - idx)


def _threshold_sup_deviation(
    xs: np.ndarray,
    ys: np.ndarray,
    eta: float,
    sorted_thetas: np.ndarray,
    theta_prefix: np.ndarray,
) -> float:
    """Exact sup over theta in [0,1] of |empirical loss - averaged true risk|.

    The empirical term is constant between consecutive sorted sample points
    and the averaged risk is piecewise linear, so the supremum is attained (or
    approached one-sidedly) at a sample point, a risk kink, or an endpoint;
    all are evaluated, including right-limits at sample points.
    """
    m = xs.size
    order = np.argsort(xs, kind="stable")
    x = xs[order]
    y = ys[order]
    ones_before = np.concatenate(([0], np.cumsum(y)))
    total_ones = ones_before[-1]
    zeros_from = (m - total_ones) - (np.arange(m + 1) - ones_before)
    emp = (ones_before + zeros_from) / m

    scale = 1.0 - 2.0 * eta

    def rbar(queries: np.ndarray) -> np.ndarray:
        return eta + scale * _abs_sum_to(sorted_thetas, theta_prefix, queries) / m

    attained = np.concatenate(([0.0, 1.0], x, sorted_thetas))
    att_splits = np.searchsorted(x, attained, side="left")
    best = float(np.max(np.abs(emp[att_splits] - rbar(attained))))

    limits = np.concatenate(([0.0], x))
    limits = limits[limits < 1.0]  # split to the right of x=1 is unrealizable
    if limits.size:
        lim_splits = np.searchsorted(x, limits, side="right")
        best = max(best, float(np.max(np.abs(emp[lim_splits] - rbar(limits)))))
    return best


def _finite_sup_deviation(
    function_class: FiniteExplicitClass,
    support_indices: np.ndarray,
    mean_true: np.ndarray,
) -> float:
    emp = function_class.table_array()[:, support_indices].mean(axis=1)
    return float(np.max(np.abs(emp - mean_true)))


def verify_uniform_deviation(
    function_class: FunctionClass,
    marginals: Sequence[Marginal],
    m_grid: Sequence[int],
    trials: int,
    seed: int,
) -> UniformDeviationReport:
    """Estimate E[sup-deviation] on independent draws Z'_i ~ P_i, i = 1..m.

    Each trial draws the m points independently (marginals may differ across
    i), computes the exact supremum of |empirical mean loss - averaged true
    loss| over the class, and the per-m trial means are fitted log-log
    against m.  An envelope constant max_m estimate / sqrt(d/m) is reported.
    """
    if trials < 2:
        raise ValueError(f"insufficient trials for a deviation estimate, got {trials}")
    grid = tuple(int(m) for m in m_grid)
    if len(grid) == 0:
        raise ValueError("m_grid must be non-empty")
    if any(m < 1 for m in grid):
        raise ValueError("every m must be >= 1")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("m_grid must be strictly increasing")
    if grid[-1] > len(marginals):
        raise ValueError(f"marginal path length {len(marginals)} < max m {grid[-1]}")

    rng = np.random.default_rng(seed)
    estimates = []
    if isinstance(function_class, ThresholdClass):
        if not isinstance(marginals, ConceptPath):
            raise ValueError("threshold classes require ThresholdConcept marginal paths")
        eta = marginals.eta
        for m in grid:
            thetas = marginals.thetas[:m]
            sorted_thetas = np.sort(thetas)
            theta_prefix = np.concatenate(([0.0], np.cumsum(sorted_thetas)))
            total = 0.0
            for _ in range(trials):
                xs = rng.random(m)
                flips = rng.random(m) < eta
                ys = ((xs >= thetas) ^ flips).astype(np.int64)
                total += _threshold_sup_deviation(xs, ys, eta, sorted_thetas, theta_prefix)
            estimates.append(total / trials)
    elif isinstance(function_class, FiniteExplicitClass):
        supports = list(marginals)
        for p in supports[: grid[-1]]:
            if not isinstance(p, FiniteSupport) or p.support != function_class.support:
                raise ValueError("finite classes require FiniteSupport marginals on the class support")
        tables = function_class.table_array()
        prob_rows = np.stack([p.prob_array for p in supports[: grid[-1]]])
        cum_rows = np.cumsum(prob_rows, axis=1)
        for m in grid:
            mean_true = (tables @ prob_rows[:m].T).mean(axis=1)
            total = 0.0
            n_support = len(function_class.support)
            for _ in range(trials):
                draws = rng.random(m)
                idx = np.minimum((cum_rows[:m] <= draws[:, None]).sum(axis=1), n_support - 1)
                total += _finite_sup_deviation(function_class, idx, mean_true)
            estimates.append(total / trials)
    else:
        raise TypeError(f"unsupported function class {type(function_class).__name__}")

    ms = np.asarray(grid, dtype=float)
    est = np.asarray(estimates)
    if np.all(est > 0.0) and len(grid) >= 2:
        design = np.column_stack([np.log(ms), np.ones_like(ms)])
        (slope, _), *_ = np.linalg.lstsq(design, np.log(est), rcond=None)
        fitted = float(slope)
    else:
        fitted = float("nan")
    envelope = float(np.max(est / np.sqrt(function_class.d / ms)))
    return UniformDeviationReport(
        d=function_class.d,
        m_grid=grid,
        trials=trials,
        estimates=tuple(float(v) for v in est),
        fitted_exponent=fitted,
        envelope_constant=envelope,
    )
