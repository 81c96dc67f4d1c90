"""Stochastic processes emitting drifting observations, with exact mixing coefficients.

A product process draws each observation independently from its time-t
marginal.  A Markov-modulated process couples consecutive observations through
a stationary hidden chain: state s emits x uniformly from [s/S, (s+1)/S), so a
doubly stochastic chain preserves the uniform x-marginal of every threshold
marginal exactly while making the sequence dependent.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .distributions import ConceptPath, FiniteSupport, Marginal, ThresholdConcept

__all__ = [
    "ProductProcess",
    "MarkovModulatedProcess",
    "ProcessModel",
    "SamplePath",
    "MixingProfile",
    "MixingRateReport",
    "symmetric_chain",
    "sample_path",
    "beta_coefficient",
    "mixing_profile",
    "verify_mixing_rate",
    "process_to_json",
    "process_from_json",
    "save_process",
    "load_process",
]

MAX_STATES = 16
ROW_SUM_TOL = 1e-12
DEFAULT_K_MAX = 64


@dataclass(frozen=True)
class ProductProcess:
    """Independent draws: Z_t ~ P_t with no coupling across time."""

    marginals: Sequence[Marginal]

    def __post_init__(self) -> None:
        if len(self.marginals) == 0:
            raise ValueError("marginal sequence must be non-empty")


def _is_primitive(adjacency: np.ndarray) -> bool:
    """True iff the boolean transition structure is irreducible and aperiodic."""
    size = adjacency.shape[0]
    power = np.eye(size, dtype=bool) | adjacency
    # (I | A)^(S-1) positive == irreducible; then A^((S-1)^2+1) positive == primitive
    reach = power.copy()
    for _ in range(size - 1):
        reach = reach @ power
    if not reach.all():
        return False
    step = adjacency.copy()
    needed = (size - 1) ** 2 + 1
    result = np.eye(size, dtype=bool)
    exponent = needed
    while exponent:
        if exponent & 1:
            result = result @ step
        step = step @ step
        exponent >>= 1
    return bool(result.all())


@dataclass(frozen=True)
class MarkovModulatedProcess:
    """Stationary hidden chain; state s emits x uniform on [s/S, (s+1)/S).

    Labels follow the per-step threshold marginals.  The transition matrix
    must be row-stochastic, irreducible, aperiodic, and doubly stochastic so
    that the stationary law is uniform and the x-marginal of each P_t is
    preserved exactly.
    """

    transition: tuple[tuple[float, ...], ...]
    marginals: ConceptPath

    def __post_init__(self) -> None:
        matrix = self.transition_array()
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError("transition matrix must be square")
        states = matrix.shape[0]
        if not 1 <= states <= MAX_STATES:
            raise ValueError(f"state count must lie in [1, {MAX_STATES}], got {states}")
        if np.any(matrix < 0.0):
            raise ValueError("transition probabilities must be non-negative")
        row_err = np.max(np.abs(matrix.sum(axis=1) - 1.0))
        if row_err > ROW_SUM_TOL:
            raise ValueError(f"rows must sum to 1 within {ROW_SUM_TOL}, max error {row_err:.3g}")
        col_err = np.max(np.abs(matrix.sum(axis=0) - 1.0))
        if col_err > ROW_SUM_TOL:
            raise ValueError(
                "transition matrix must be doubly stochastic (uniform stationary law), "
                f"max column error {col_err:.3g}"
            )
        if states > 1 and not _is_primitive(matrix > 0.0):
            raise ValueError("transition matrix must be irreducible and aperiodic")
        if not isinstance(self.marginals, ConceptPath):
            raise ValueError("markov-modulated processes require threshold marginal paths")

    @property
    def states(self) -> int:
        return len(self.transition)

    def transition_array(self) -> np.ndarray:
        return np.asarray(self.transition, dtype=float)

    @property
    def stationary(self) -> np.ndarray:
        return np.full(self.states, 1.0 / self.states)


ProcessModel = Union[ProductProcess, MarkovModulatedProcess]


def symmetric_chain(states: int, flip: float) -> tuple[tuple[float, ...], ...]:
    """Stay with probability 1-flip, move to each other state with flip/(S-1)."""
    if states < 2:
        raise ValueError("symmetric chains need at least 2 states")
    if not 0.0 < flip < 1.0:
        raise ValueError(f"flip probability must lie in (0,1), got {flip}")
    off = flip / (states - 1)
    matrix = np.full((states, states), off)
    np.fill_diagonal(matrix, 1.0 - flip)
    return tuple(tuple(float(v) for v in row) for row in matrix)


@dataclass(frozen=True)
class SamplePath:
    """A realized trajectory; states[t] = -1 marks stateless (product) draws."""

    xs: np.ndarray
    ys: np.ndarray
    states: np.ndarray

    def __len__(self) -> int:
        return self.xs.size

    def to_csv(self, path_out: str) -> None:
        with open(path_out, "w", encoding="utf-8", newline="") as fh:
            fh.write("t,x,y,state\n")
            for t in range(self.xs.size):
                fh.write(f"{t + 1},{float(self.xs[t])!r},{int(self.ys[t])},{int(self.states[t])}\n")


def _sample_finite(rng: np.random.Generator, marginals: Sequence[FiniteSupport]) -> SamplePath:
    horizon = len(marginals)
    xs = np.empty(horizon)
    ys = np.empty(horizon, dtype=np.int64)
    draws = rng.random(horizon)
    for t, marginal in enumerate(marginals):
        idx = int(np.searchsorted(np.cumsum(marginal.prob_array), draws[t], side="right"))
        idx = min(idx, len(marginal.support) - 1)
        xs[t] = marginal.support[idx].x
        ys[t] = marginal.support[idx].y
    return SamplePath(xs=xs, ys=ys, states=np.full(horizon, -1, dtype=np.int64))


def sample_path(model: ProcessModel, horizon: int, seed: int) -> SamplePath:
    """Draw Z_1..Z_horizon; deterministic given (model, horizon, seed).

    Draw order is fixed: product processes consume (x draws, label flips);
    markov-modulated processes consume (initial state, transition draws,
    x offsets, label flips).
    """
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    if horizon > len(model.marginals):
        raise ValueError(
            f"horizon {horizon} exceeds marginal path length {len(model.marginals)}"
        )
    rng = np.random.default_rng(seed)
    if isinstance(model, ProductProcess):
        marginals = model.marginals
        if isinstance(marginals, ConceptPath):
            thetas = marginals.thetas[:horizon]
            xs = rng.random(horizon)
            flips = rng.random(horizon) < marginals.eta
            ys = ((xs >= thetas) ^ flips).astype(np.int64)
            return SamplePath(xs=xs, ys=ys, states=np.full(horizon, -1, dtype=np.int64))
        return _sample_finite(rng, list(marginals)[:horizon])
    assert isinstance(model, MarkovModulatedProcess)
    states_n = model.states
    cum_rows = np.cumsum(model.transition_array(), axis=1)
    state = int(np.searchsorted(np.cumsum(model.stationary), rng.random(), side="right"))
    state = min(state, states_n - 1)
    moves = rng.random(horizon - 1) if horizon > 1 else np.empty(0)
    states = np.empty(horizon, dtype=np.int64)
    states[0] = state
    for t in range(1, horizon):
        state = min(int(np.searchsorted(cum_rows[state], moves[t - 1], side="right")), states_n - 1)
        states[t] = state
    offsets = rng.random(horizon)
    xs = (states + offsets) / states_n
    thetas = model.marginals.thetas[:horizon]
    flips = rng.random(horizon) < model.marginals.eta
    ys = ((xs >= thetas) ^ flips).astype(np.int64)
    return SamplePath(xs=xs, ys=ys, states=states)


def beta_coefficient(model: ProcessModel, k: int) -> float:
    """Exact absolute-regularity coefficient at lag k.

    Product processes are independent, so beta_k = 0.  For a stationary
    hidden chain, beta_k = sum_s pi(s) * ||P^k(s,.) - pi||_TV, computed from
    matrix powers; the emitted observations are a fixed function of the state
    plus fresh independent noise, so the same value bounds the observation
    process.
    """
    if k < 1:
        raise ValueError(f"lag k must be >= 1, got {k}")
    if isinstance(model, ProductProcess):
        return 0.0
    assert isinstance(model, MarkovModulatedProcess)
    matrix = np.linalg.matrix_power(model.transition_array(), k)
    pi = model.stationary
    return float(pi @ (0.5 * np.abs(matrix - pi[None, :]).sum(axis=1)))


@dataclass(frozen=True)
class MixingProfile:
    """Computed beta_1..beta_k_max plus the smallest C with beta_k <= C*k^-r."""

    r: float
    betas: tuple[float, ...]
    bound_constant: float

    def __post_init__(self) -> None:
        if self.r <= 0.0:
            raise ValueError(f"rate r must be positive, got {self.r}")
        if len(self.betas) == 0:
            raise ValueError("betas must be non-empty")

    @property
    def k_max(self) -> int:
        return len(self.betas)


@dataclass(frozen=True)
class MixingRateReport:
    r: float
    bound_constant: float
    worst_k: int
    violation: bool

    def to_json(self) -> dict:
        return {
            "r": self.r,
            "bound_constant": self.bound_constant,
            "worst_k": self.worst_k,
            "violation": self.violation,
        }


def mixing_profile(model: ProcessModel, r: float, k_max: int = DEFAULT_K_MAX) -> MixingProfile:
    if k_max < 1:
        raise ValueError(f"k_max must be >= 1, got {k_max}")
    betas = tuple(beta_coefficient(model, k) for k in range(1, k_max + 1))
    ks = np.arange(1, k_max + 1, dtype=float)
    constant = float(np.max(np.asarray(betas) * ks**r))
    return MixingProfile(r=r, betas=betas, bound_constant=constant)


def verify_mixing_rate(
    model_or_profile: ProcessModel | MixingProfile,
    r: float | None = None,
    k_max: int = DEFAULT_K_MAX,
    cap: float = 1e6,
) -> MixingRateReport:
    """Smallest C with beta_k <= C * k^-r over computed lags, with a violation flag.

    The flag is raised when C exceeds ``cap`` or when the supremum of
    beta_k * k^r sits at the last computed lag, i.e. the sequence is still
    growing at the boundary and no finite C is certifiable from the computed
    range.
    """
    if isinstance(model_or_profile, MixingProfile):
        profile = model_or_profile
    else:
        if r is None:
            raise ValueError("r is required when passing a process model")
        profile = mixing_profile(model_or_profile, r, k_max)
    ks = np.arange(1, profile.k_max + 1, dtype=float)
    weighted = np.asarray(profile.betas) * ks**profile.r
    worst = int(np.argmax(weighted)) + 1
    constant = float(weighted[worst - 1])
    violation = constant > cap or (constant > 0.0 and worst == profile.k_max)
    return MixingRateReport(
        r=profile.r, bound_constant=constant, worst_k=worst, violation=violation
    )


def process_to_json(model: ProcessModel) -> dict:
    """JSON-compatible dict with keys kind, transition, emission, eta, thetas."""
    if isinstance(model, ProductProcess):
        marginals = model.marginals
        if not isinstance(marginals, ConceptPath):
            raise ValueError("only threshold marginal paths are JSON-serializable")
        return {
            "kind": "product",
            "transition": None,
            "emission": None,
            "eta": marginals.eta,
            "thetas": [float(v) for v in marginals.thetas],
        }
    assert isinstance(model, MarkovModulatedProcess)
    states = model.states
    return {
        "kind": "markov_modulated",
        "transition": [list(row) for row in model.transition],
        "emission": [[s / states, (s + 1) / states] for s in range(states)],
        "eta": model.marginals.eta,
        "thetas": [float(v) for v in model.marginals.thetas],
    }


def process_from_json(payload: dict) -> ProcessModel:
    path = ConceptPath(np.asarray(payload["thetas"], dtype=float), float(payload["eta"]))
    if payload["kind"] == "product":
        return ProductProcess(marginals=path)
    if payload["kind"] == "markov_modulated":
        transition = tuple(tuple(float(v) for v in row) for row in payload["transition"])
        return MarkovModulatedProcess(transition=transition, marginals=path)
    raise ValueError(f"unknown process kind {payload['kind']!r}")


def save_process(path_out: str, model: ProcessModel) -> None:
    with open(path_out, "w", encoding="utf-8") as fh:
        json.dump(process_to_json(model), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_process(path_in: str) -> ProcessModel:
    with open(path_in, "r", encoding="utf-8") as fh:
        return process_from_json(json.load(fh))
