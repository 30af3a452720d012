"""Static structure of the two-resource congestion game."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .distributions import Distribution
from .errors import AssumptionViolation, ConfigError
from .numerics import BracketError, bisect, golden_section

SO_GRID = 1_000
LIPSCHITZ_GRID = 10_000
LABEL_MARGIN = 1e-6  # relative; the optimiser resolves w only to ~1e-8


@dataclass(frozen=True)
class LatencyModel:
    """BPR-style latencies ``l_j(w) = l0_j * (1 + alpha * (w / kappa_j) ** beta)``.

    Other strictly increasing continuous latencies can be plugged in by
    subclassing and overriding :meth:`latency`; everything downstream only
    calls that method.
    """

    base: tuple[float, float] = (1.0, 2.0)
    gain: float = 0.15
    exponent: float = 4.0
    capacity: tuple[float, float] = (0.5, 2.0 / 3.0)

    def __post_init__(self):
        if min(self.base) <= 0 or self.gain <= 0 or self.exponent < 1 or min(self.capacity) <= 0:
            raise ConfigError("latency model needs l0 > 0, alpha > 0, beta >= 1, kappa > 0")

    def latency(self, resource: int, load):
        if isinstance(load, float):
            if load < 0:
                raise ValueError(f"negative load {load!r}")
            j = resource - 1
            return self.base[j] * (1.0 + self.gain * (load / self.capacity[j]) ** self.exponent)
        if np.any(np.asarray(load) < 0):
            raise ValueError(f"negative load {load!r}")
        j = resource - 1
        return self.base[j] * (1.0 + self.gain * (np.asarray(load, dtype=float) / self.capacity[j]) ** self.exponent)

    def latencies(self, split) -> np.ndarray:
        return np.array([float(self.latency(1, split[0])), float(self.latency(2, split[1]))])


@dataclass(frozen=True)
class GameConfig:
    participation: Fraction = Fraction(19, 20)
    horizon: int = 4
    urgency: Distribution | None = None
    weights: Distribution | None = None

    def __post_init__(self):
        if not 0 < self.participation < 1:
            raise ConfigError("participation probability must lie in (0, 1)")
        if self.horizon < 1:
            raise ConfigError("decision horizon must be a positive integer")
        if self.urgency is not None and not self.urgency.mean > 0:
            raise ConfigError("urgency mean must be positive")
        if self.weights is not None and not self.weights.support[0] > 0:
            raise ConfigError("weight support must be bounded away from zero")

    @property
    def p_hat(self) -> float:
        return float(self.participation)

    @property
    def horizon_term(self) -> Fraction:
        """Exact ``p_hat * T``."""
        return self.participation * self.horizon


@dataclass(frozen=True)
class SystemOptimum:
    split: tuple[float, float]
    latencies: tuple[float, float]
    cost: float
    lipschitz: float


def latency(model: LatencyModel, resource: int, load: float) -> float:
    if resource not in (1, 2):
        raise ValueError(f"resource must be 1 or 2, got {resource}")
    return float(model.latency(resource, load))


def societal_cost(model: LatencyModel, split) -> float:
    w1, w2 = split
    return float(w1 * model.latency(1, w1) + w2 * model.latency(2, w2))


def _cost_along(model: LatencyModel, total: float, w):
    w = np.asarray(w, dtype=float)
    rest = np.maximum(total - w, 0.0)
    return w * model.latency(1, w) + rest * model.latency(2, rest)


def system_optimum(model: LatencyModel, config: GameConfig, strict: bool = True) -> SystemOptimum:
    """Minimise ``C([w, p_hat - w])`` by a coarse grid scan plus golden-section refinement.

    With ``strict`` the interior-optimum and ``l1 < l2`` labelling assumptions
    are enforced.
    """
    total = config.p_hat
    grid = np.linspace(0.0, total, SO_GRID + 1)
    costs = _cost_along(model, total, grid)
    i = int(np.argmin(costs))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, SO_GRID)]
    w1 = float(golden_section(lambda w: float(_cost_along(model, total, w)), lo, hi, xtol=1e-12))
    w2 = total - w1
    l1, l2 = float(model.latency(1, w1)), float(model.latency(2, w2))
    fine = np.linspace(0.0, total, LIPSCHITZ_GRID + 1)
    slopes = np.diff(_cost_along(model, total, fine)) / np.diff(fine)
    so = SystemOptimum(split=(w1, w2), latencies=(l1, l2),
                       cost=societal_cost(model, (w1, w2)),
                       lipschitz=float(np.max(np.abs(slopes))))
    if strict:
        check_optimum(so)
    return so


def check_optimum(so: SystemOptimum) -> None:
    w1, w2 = so.split
    if w1 <= 1e-9 or w2 <= 1e-9:
        raise AssumptionViolation(f"system optimum {w1:.6g}, {w2:.6g} lies on the boundary")
    l1, l2 = so.latencies
    # a gap below solver noise is not a usable labelling
    if not l2 - l1 > LABEL_MARGIN * abs(l2):
        raise AssumptionViolation(
            f"resource labelling requires l1(w*1) < l2(w*2), got {l1:.6g} >= {l2:.6g}")


def balanced_split(model: LatencyModel, total: float) -> tuple[float, float]:
    """Split ``total`` so that both resources have equal latency."""

    def gap(w):
        return float(model.latency(1, w) - model.latency(2, max(total - w, 0.0)))

    try:
        w1 = bisect(gap, 0.0, total, xtol=1e-14)
    except BracketError as exc:
        raise AssumptionViolation(
            f"no balanced split of {total:.6g}: one resource dominates everywhere") from exc
    return (w1, total - w1)
