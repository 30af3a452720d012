"""Individual decision cost, its closed-form best response, and a brute-force check.

Karma and prices are exact :class:`~fractions.Fraction` values; urgencies and
latencies are floats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from fractions import Fraction

from .errors import AssumptionViolation


class Choice(IntEnum):
    NONE = 0
    FIRST = 1
    SECOND = 2
    # affordable agent facing equal latencies; resolved at the aggregate level
    EITHER = 3


class LatencyOrder(IntEnum):
    BELOW = -1  # l1 < l2
    EQUAL = 0
    ABOVE = 1   # l1 > l2

    @classmethod
    def of(cls, l1: float, l2: float) -> "LatencyOrder":
        return cls.BELOW if l1 < l2 else cls.EQUAL if l1 == l2 else cls.ABOVE


@dataclass(frozen=True)
class BrsThresholds:
    k12: Fraction
    k21: Fraction
    k11: Fraction


@dataclass(frozen=True)
class DecisionContext:
    karma: Fraction
    prices: tuple[Fraction, Fraction]
    urgency_ratio: float
    participating: bool = True
    order: LatencyOrder = LatencyOrder.BELOW

    def __post_init__(self):
        if self.karma < 0:
            raise ValueError("karma must be non-negative")


def check_prices(p1: Fraction, p2: Fraction) -> None:
    """Resource 2 must be strictly cheaper than resource 1 and never cost karma."""
    if not (p2 < p1 and p2 <= 0):
        raise AssumptionViolation(f"prices ({p1}, {p2}) need p2 < p1 and p2 <= 0")


def brs_thresholds(p1, p2, p_hat, horizon: int) -> BrsThresholds:
    p1, p2 = Fraction(p1), Fraction(p2)
    check_prices(p1, p2)
    ht = Fraction(p_hat) * horizon
    return BrsThresholds(k12=p1, k21=max(p1, p2 + ht * p1), k11=(ht + 1) * p1)


def gamma(k, th: BrsThresholds, p1, p2):
    """Urgency threshold above which resource 1 is preferred.

    Returns ``math.inf`` below ``k12`` and an exact Fraction otherwise. The
    ``k >= k11`` branch is tested before ``k <= k21`` so that a free resource 1
    (``p1 = 0``, all breakpoints at zero) is always taken.
    """
    k = Fraction(k)
    if k < th.k12:
        return math.inf
    if k >= th.k11:
        return Fraction(0)
    middle = (th.k11 - k) / (Fraction(p1) - Fraction(p2))
    # when k21 is clamped up to p1 the unit branch would overshoot the exact
    # threshold at k = p1; elsewhere on that branch middle >= 1 anyway
    if k <= th.k21:
        return min(Fraction(1), middle)
    return middle


def best_response(ctx: DecisionContext, th: BrsThresholds) -> Choice:
    if not ctx.participating:
        return Choice.NONE
    p1, p2 = ctx.prices
    if ctx.order is LatencyOrder.ABOVE:
        return Choice.SECOND
    if ctx.order is LatencyOrder.EQUAL:
        return Choice.SECOND if ctx.karma < p1 else Choice.EITHER
    g = gamma(ctx.karma, th, p1, p2)
    # u == gamma is a null event for continuous urgencies; resolved towards 1
    return Choice.SECOND if ctx.urgency_ratio < g else Choice.FIRST


def decision_cost_oracle(ctx: DecisionContext, latencies, p_hat, horizon: int,
                         mean_urgency: float) -> tuple[float, float, Choice]:
    """Solve the per-resource decision cost directly as a one-dimensional LP.

    With future mix ``y = [y, 1 - y]`` the objective is affine in ``y`` and the
    budget is a single affine constraint, so the optimum sits at an endpoint of
    the feasible interval of ``y`` in ``[0, 1]``. Unaffordable resources cost
    ``inf``.
    """
    if not ctx.participating:
        raise ValueError("the decision cost is only defined for participating agents")
    p1, p2 = (Fraction(p) for p in ctx.prices)
    l1, l2 = (float(x) for x in latencies)
    ht = Fraction(p_hat) * horizon
    urgency = ctx.urgency_ratio * mean_urgency
    costs = []
    for r, (pr, lr) in enumerate(((p1, l1), (p2, l2)), start=1):
        if ctx.karma < pr:
            costs.append(math.inf)
            continue
        # budget: k - p_r - ht * (y p1 + (1 - y) p2) >= 0
        slack = ctx.karma - pr - ht * p2
        slope = ht * (p1 - p2)
        if slack < 0:
            costs.append(math.inf)
            continue
        y_max = Fraction(1) if slope == 0 else min(Fraction(1), slack / slope)
        ends = (0.0, float(y_max))
        future = min(y * l1 + (1.0 - y) * l2 for y in ends)
        costs.append(urgency * lr + mean_urgency * float(ht) * future)
    c1, c2 = costs
    if math.isinf(c1) and math.isinf(c2):
        raise AssumptionViolation("no affordable resource")
    return c1, c2, Choice.FIRST if c1 <= c2 else Choice.SECOND
