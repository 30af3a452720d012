"""Cross-check simulated karma against the exact per-bracket Markov chains."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np

from .congestion import GameConfig, LatencyModel, SystemOptimum
from .markov import KarmaChain, LimitReport, build_chain, limit_split, stationary, total_variation
from .pricing import PricingPolicy
from .simulation import SNAP_LATTICE, SimulationSettings, chain_brackets, occupancy

TV_THRESHOLD = 0.05
MIN_AGENTS = 50


@dataclass
class BracketCheck:
    index: int
    prices: tuple[Fraction, Fraction]
    agents: int
    mass: float
    chain: KarmaChain | None
    limit: LimitReport | None
    simulated: np.ndarray | None
    tv: float | None
    latency_limit: float | None
    simulated_latency: float | None
    note: str = ""

    @property
    def judged(self) -> bool:
        return self.tv is not None and self.agents >= MIN_AGENTS

    @property
    def passed(self) -> bool:
        return not self.judged or self.tv < TV_THRESHOLD


@dataclass
class VerificationReport:
    checks: list[BracketCheck]
    aggregate_limit: tuple[float, float]
    rounds: int
    burn_in: int
    agents: int
    seed: int
    threshold: float = TV_THRESHOLD

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def aggregate_limit(policy: PricingPolicy, game: GameConfig) -> tuple[float, float]:
    """Long-run weight split implied by each bracket's zero-drift choice frequencies."""
    dist = game.weights
    mean_w = dist.mean
    w1 = w2 = 0.0
    for i, b in enumerate(policy.brackets):
        lo, hi = max(b.lo, dist.support[0]), min(b.hi, dist.support[1])
        if hi < lo:
            continue
        n1, n2 = bracket_limit(b.p1, b.p2, game.participation)
        mass_w = dist.expect_between(lambda w: w, lo, hi, closed_lo=(i == 0))
        w1 += float(n1) * mass_w
        w2 += float(n2) * mass_w
    return (w1 / mean_w, w2 / mean_w)


def bracket_limit(p1, p2, participation) -> tuple[Fraction, Fraction]:
    """Limit choice split of one bracket, including the free and reward-free edges."""
    if p1 == 0:
        return (Fraction(participation), Fraction(0))
    if p2 == 0:
        return (Fraction(0), Fraction(participation))
    return limit_split(p1, p2, participation)


def verify_policy(game: GameConfig, policy: PricingPolicy, model: LatencyModel,
                  so: SystemOptimum, settings: SimulationSettings,
                  burn_in: int) -> VerificationReport:
    """Build each bracket's chain and compare against a lattice-snapped simulation."""
    settings = replace(settings, snap=SNAP_LATTICE, snapshot_rounds=())
    occ, pop = occupancy(game, policy, model, settings, burn_in=burn_in, so=so)
    agg = aggregate_limit(policy, game)
    l1, l2 = float(model.latency(1, agg[0])), float(model.latency(2, agg[1]))
    mean_l = pop.average_latency()
    lattice_ok = set(chain_brackets(policy))
    checks = []
    for j, b in enumerate(policy.brackets):
        members = pop.bracket == j
        count = int(members.sum())
        mass = _mass(policy, game, j)
        if count == 0 and mass == 0:
            continue
        n1, n2 = bracket_limit(b.p1, b.p2, game.participation)
        l_inf = (float(n1) * l1 + float(n2) * l2) / game.p_hat
        sim_l = float(mean_l[members].mean()) if count else None
        if j not in lattice_ok:
            checks.append(BracketCheck(j, b.prices, count, mass, None, None, None, None,
                                       l_inf, sim_l, note="constant choice, no karma chain"))
            continue
        chain = build_chain(b.p1, b.p2, game)
        limit = replace(stationary(chain), latency_limit=l_inf)
        sim = occ.get(j)
        tv = total_variation(limit.stationary, sim) if sim is not None else None
        note = "" if count >= MIN_AGENTS else f"fewer than {MIN_AGENTS} agents, not judged"
        checks.append(BracketCheck(j, b.prices, count, mass, chain, limit, sim, tv,
                                   l_inf, sim_l, note=note))
    return VerificationReport(checks=checks, aggregate_limit=agg, rounds=settings.rounds,
                              burn_in=burn_in, agents=settings.agents, seed=settings.seed)


def _mass(policy: PricingPolicy, game: GameConfig, j: int) -> float:
    b = policy.brackets[j]
    dist = game.weights
    lo, hi = max(b.lo, dist.support[0]), min(b.hi, dist.support[1])
    if hi < lo:
        return 0.0
    below = dist.cdf(lo) if j > 0 else 0.0
    return max(dist.cdf(hi) - below, 0.0) if math.isfinite(hi) else 1.0 - below
