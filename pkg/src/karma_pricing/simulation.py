"""Finite-population simulation of the repeated karma game.

Karma is exact: every agent stores an integer numerator over a denominator
shared by its price bracket, chosen so that prices, best-response breakpoints
and the initial-karma grid are all integers in those units.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator

import numpy as np

from .congestion import GameConfig, LatencyModel, SystemOptimum, balanced_split, system_optimum
from .decision import brs_thresholds
from .distributions import Distribution
from .errors import ConfigError
from .markov import lattice
from .pricing import PricingPolicy

log = logging.getLogger(__name__)

SNAP_AUTO, SNAP_LATTICE, SNAP_GRID = "auto", "lattice", "grid"
PHASE_BRS, PHASE_BALANCED = 1, 3


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based Philox stream; all draws in a run come from this one generator."""
    return np.random.Generator(np.random.Philox(seed))


@dataclass(frozen=True)
class AgentState:
    id: int
    weight: float
    karma: Fraction
    participations: int
    cumulative_latency: float
    bracket: int

    @property
    def average_latency(self) -> float:
        return self.cumulative_latency / self.participations if self.participations else 0.0


@dataclass
class Population:
    weights: np.ndarray
    bracket: np.ndarray
    unit: np.ndarray         # karma denominator per agent
    karma: np.ndarray        # karma numerator per agent (int64)
    p1: np.ndarray
    p2: np.ndarray
    k12: np.ndarray
    k21: np.ndarray
    k11: np.ndarray
    participations: np.ndarray
    picks1: np.ndarray
    cumulative_latency: np.ndarray
    total_weight: float
    unit_classes: tuple[int, ...]
    unit_masks: tuple[np.ndarray, ...]

    @property
    def size(self) -> int:
        return len(self.weights)

    def karma_of(self, i: int) -> Fraction:
        return Fraction(int(self.karma[i]), int(self.unit[i]))

    def karma_values(self) -> np.ndarray:
        return self.karma / self.unit

    def total_karma(self) -> Fraction:
        return self.exact_sum(self.karma)

    def exact_sum(self, numerators: np.ndarray) -> Fraction:
        """Exact total of per-agent numerators, each over its agent's unit."""
        return sum((Fraction(int(numerators[m].sum()), d)
                    for d, m in zip(self.unit_classes, self.unit_masks)), Fraction(0))

    def agents(self) -> Iterator[AgentState]:
        for i in range(self.size):
            yield AgentState(id=i, weight=float(self.weights[i]), karma=self.karma_of(i),
                             participations=int(self.participations[i]),
                             cumulative_latency=float(self.cumulative_latency[i]),
                             bracket=int(self.bracket[i]))

    def average_latency(self) -> np.ndarray:
        n = self.participations
        return np.divide(self.cumulative_latency, n, out=np.zeros(self.size), where=n > 0)


@dataclass
class StepOutcome:
    t: int
    choices: np.ndarray
    w: tuple[float, float]
    n: tuple[float, float]
    latencies: tuple[float, float]
    efficiency: float
    payment: Fraction
    phase: int


@dataclass
class Fairness:
    ineqt: float
    ineql: float
    mean_latency: float
    mean_weighted_latency: float
    ineqt_participants: float
    ineql_participants: float


@dataclass
class SimulationSettings:
    agents: int = 1000
    rounds: int = 3000
    seed: int = 0
    karma_init: Distribution | None = None
    karma_grid: Fraction = Fraction(1, 100)
    snap: str = SNAP_AUTO
    snapshot_rounds: tuple[int, ...] = ()
    hist_bins: int = 40

    def __post_init__(self):
        if self.agents < 1:
            raise ConfigError("need at least one agent")
        if self.rounds < 0:
            raise ConfigError("rounds must be non-negative")
        if self.karma_grid <= 0:
            raise ConfigError("karma grid must be a positive rational")
        if self.snap not in (SNAP_AUTO, SNAP_LATTICE, SNAP_GRID):
            raise ConfigError(f"unknown snap mode {self.snap!r}")


@dataclass
class MetricsSeries:
    columns = ("t", "w1", "w2", "n1", "n2", "l1", "l2", "eff_ratio",
               "ineqt", "ineql", "mean_L", "mean_LW")
    rows: list[tuple] = field(default_factory=list)
    participants: list[tuple[float, float]] = field(default_factory=list)
    phases: list[int] = field(default_factory=list)
    snapshots: dict[int, list[AgentState]] = field(default_factory=dict)
    histograms: dict[int, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)
    population: Population | None = None

    def __len__(self):
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        j = self.columns.index(name)
        return np.array([r[j] for r in self.rows], dtype=float)

    def record(self, out: StepOutcome, fair: Fairness):
        self.rows.append((out.t, *out.w, *out.n, *out.latencies, out.efficiency,
                          fair.ineqt, fair.ineql, fair.mean_latency, fair.mean_weighted_latency))
        self.participants.append((fair.ineqt_participants, fair.ineql_participants))
        self.phases.append(out.phase)


# --- population -------------------------------------------------------------

def _lcm(*xs: int) -> int:
    out = 1
    for x in xs:
        out = out * x // math.gcd(out, x)
    return out


def _karma_step(p1: Fraction, p2: Fraction, game: GameConfig, settings: SimulationSettings,
                single: bool) -> Fraction:
    use_lattice = settings.snap == SNAP_LATTICE or (settings.snap == SNAP_AUTO and single)
    if use_lattice and p1 > 0 > p2:
        return lattice(p1, p2, game.participation, game.horizon).delta
    return settings.karma_grid


def init_population(game: GameConfig, policy: PricingPolicy, settings: SimulationSettings,
                    rng: np.random.Generator, weights=None) -> Population:
    """Draw weights then initial karma (both i.i.d., independent of each other).

    Karma is floored onto the price lattice for weight-independent policies
    (or when ``snap='lattice'``) and onto ``karma_grid`` otherwise.
    """
    n = settings.agents
    if weights is None:
        if game.weights is None:
            raise ConfigError("no weight distribution and no explicit weights")
        weights = game.weights.sample(rng, n)
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (n,):
        raise ConfigError(f"expected {n} weights, got shape {weights.shape}")
    if settings.karma_init is None:
        raise ConfigError("karma_init distribution is required")
    if settings.karma_init.support[0] < 0:
        raise ConfigError("initial karma must be non-negative")
    drawn = settings.karma_init.sample(rng, n)

    bracket = policy.bracket_index(weights)
    single = policy.weight_independent
    per_bracket = {}
    for j in np.unique(bracket):
        b = policy.brackets[j]
        th = brs_thresholds(b.p1, b.p2, game.participation, game.horizon)
        step = _karma_step(b.p1, b.p2, game, settings, single)
        unit = _lcm(*(q.denominator for q in (b.p1, b.p2, th.k21, th.k11, step)))
        per_bracket[int(j)] = (unit, step, [int(x * unit) for x in (b.p1, b.p2, th.k12, th.k21, th.k11)])

    unit = np.empty(n, dtype=np.int64)
    karma = np.empty(n, dtype=np.int64)
    scaled = np.empty((5, n), dtype=np.int64)
    for i in range(n):
        u, step, ints = per_bracket[int(bracket[i])]
        k = math.floor(Fraction(float(drawn[i])) / step) * step
        unit[i] = u
        karma[i] = int(k * u)
        scaled[:, i] = ints
    classes = tuple(sorted({int(u) for u in unit}))
    return Population(
        weights=weights, bracket=bracket, unit=unit, karma=karma,
        p1=scaled[0], p2=scaled[1], k12=scaled[2], k21=scaled[3], k11=scaled[4],
        participations=np.zeros(n, dtype=np.int64), picks1=np.zeros(n, dtype=np.int64),
        cumulative_latency=np.zeros(n), total_weight=math.fsum(weights),
        unit_classes=classes, unit_masks=tuple(unit == d for d in classes))


# --- one round --------------------------------------------------------------

def brs_choices(pop: Population, participating: np.ndarray, urgency_ratio: np.ndarray) -> np.ndarray:
    """Best responses of every agent under the hypothesis ``l1 < l2`` (0 = absent)."""
    k = pop.karma
    with np.errstate(divide="ignore", invalid="ignore"):
        middle = (pop.k11 - k) / (pop.p1 - pop.p2)
    g = np.where(k < pop.k12, np.inf,
                 np.where(k >= pop.k11, 0.0, np.where(k <= pop.k21, np.minimum(1.0, middle), middle)))
    choices = np.where(urgency_ratio < g, 2, 1).astype(np.int8)
    choices[~participating] = 0
    return choices


def compute_ne(pop: Population, participating: np.ndarray, urgency: np.ndarray,
               model: LatencyModel, mean_urgency: float, t: int = 0,
               so: SystemOptimum | None = None) -> StepOutcome:
    """Equilibrium decisions for fixed draws; karma is not touched."""
    choices = brs_choices(pop, participating, urgency / mean_urgency)
    total = pop.total_weight
    w1 = math.fsum(pop.weights[choices == 1]) / total
    w2 = math.fsum(pop.weights[choices == 2]) / total
    phase = PHASE_BRS
    if not model.latency(1, w1) < model.latency(2, w2):
        phase = PHASE_BALANCED
        part_share = math.fsum(pop.weights[participating]) / total
        target = balanced_split(model, part_share)[0] * total
        forced = participating & (pop.karma < pop.p1)
        free = np.flatnonzero(participating & ~forced)
        order = free[np.argsort(-urgency[free], kind="stable")]
        cum = np.concatenate(([0.0], np.cumsum(pop.weights[order])))
        count = int(np.argmin(np.abs(cum - target)))
        choices = np.where(participating, 2, 0).astype(np.int8)
        choices[order[:count]] = 1
        w1 = math.fsum(pop.weights[choices == 1]) / total
        w2 = math.fsum(pop.weights[choices == 2]) / total
    lat = (float(model.latency(1, w1)), float(model.latency(2, w2)))
    n = pop.size
    n1 = int(np.count_nonzero(choices == 1)) / n
    n2 = int(np.count_nonzero(choices == 2)) / n
    cost = w1 * lat[0] + w2 * lat[1]
    eff = cost / so.cost if so is not None else math.nan
    return StepOutcome(t=t, choices=choices, w=(w1, w2), n=(n1, n2), latencies=lat,
                       efficiency=eff, payment=Fraction(0), phase=phase)


def draw_round(game: GameConfig, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Participation for all agents in id order, then urgencies in id order."""
    participating = rng.random(n) < game.p_hat
    urgency = game.urgency.sample(rng, n)
    return participating, urgency


def apply_outcome(pop: Population, out: StepOutcome) -> None:
    c = out.choices
    pay = np.where(c == 1, pop.p1, np.where(c == 2, pop.p2, 0))
    out.payment = pop.exact_sum(pay)
    pop.karma -= pay
    if pop.karma.min() < 0:
        bad = int(np.argmin(pop.karma))
        raise RuntimeError(f"agent {bad} ended round {out.t} with negative karma")
    part = c > 0
    pop.participations += part
    pop.picks1 += c == 1
    pop.cumulative_latency += np.where(c == 1, out.latencies[0],
                                       np.where(c == 2, out.latencies[1], 0.0))


def step(pop: Population, game: GameConfig, model: LatencyModel, so: SystemOptimum,
         rng: np.random.Generator, t: int = 0) -> StepOutcome:
    participating, urgency = draw_round(game, pop.size, rng)
    out = compute_ne(pop, participating, urgency, model, game.urgency.mean, t=t, so=so)
    apply_outcome(pop, out)
    return out


# --- metrics ----------------------------------------------------------------

def fairness_metrics(pop: Population) -> Fairness:
    """Population standard deviations of ``L_t`` and ``L_t / W``.

    Agents that never participated count with ``L_t = 0``; the participant-only
    variants drop them.
    """
    lat = pop.average_latency()
    per_w = lat / pop.weights
    seen = pop.participations > 0
    m_lat, s_lat = _mean_std(lat)
    m_w, s_w = _mean_std(per_w)
    if seen.all():
        ineqt_p, ineql_p = s_lat, s_w
    elif seen.any():
        ineqt_p, ineql_p = _mean_std(lat[seen])[1], _mean_std(per_w[seen])[1]
    else:
        ineqt_p = ineql_p = 0.0
    return Fairness(ineqt=s_lat, ineql=s_w, mean_latency=m_lat, mean_weighted_latency=m_w,
                    ineqt_participants=ineqt_p, ineql_participants=ineql_p)


def _mean_std(x: np.ndarray) -> tuple[float, float]:
    mean = float(np.add.reduce(x)) / len(x)
    dev = x - mean
    return mean, math.sqrt(max(float(dev @ dev) / len(x), 0.0))


def karma_histogram(pop: Population, policy: PricingPolicy, game: GameConfig,
                    bins: int) -> tuple[np.ndarray, np.ndarray]:
    values = pop.karma_values()
    top = max(float(values.max()), 1e-12)
    b = policy.brackets[0]
    if policy.weight_independent and b.p1 > 0 > b.p2:
        d = float(lattice(b.p1, b.p2, game.participation, game.horizon).delta)
        edges = d * np.arange(math.floor(top / d) + 2)
    else:
        edges = np.linspace(0.0, top * (1 + 1e-12), bins + 1)
    counts, _ = np.histogram(values, bins=edges)
    return edges, counts


def run(game: GameConfig, policy: PricingPolicy, model: LatencyModel,
        settings: SimulationSettings, so: SystemOptimum | None = None,
        weights=None) -> MetricsSeries:
    """Simulate ``settings.rounds`` rounds; bit-reproducible for a given seed.

    Row ``t`` describes round ``t`` (1-based) and the statistics after it;
    snapshot round 0 is the initial population.
    """
    if so is None:
        so = system_optimum(model, game)
    rng = make_rng(settings.seed)
    pop = init_population(game, policy, settings, rng, weights=weights)
    series = MetricsSeries(population=pop)
    snaps = set(settings.snapshot_rounds)
    if 0 in snaps:
        series.snapshots[0] = list(pop.agents())
        series.histograms[0] = karma_histogram(pop, policy, game, settings.hist_bins)
    for t in range(1, settings.rounds + 1):
        out = step(pop, game, model, so, rng, t=t)
        series.record(out, fairness_metrics(pop))
        if t in snaps:
            series.snapshots[t] = list(pop.agents())
            series.histograms[t] = karma_histogram(pop, policy, game, settings.hist_bins)
    log.debug("finished %d rounds with %d agents", settings.rounds, settings.agents)
    return series


def chain_brackets(policy: PricingPolicy) -> list[int]:
    """Brackets whose prices admit a karma lattice (``p1 > 0 > p2``)."""
    return [j for j, b in enumerate(policy.brackets) if b.p1 > 0 > b.p2]


def occupancy(game: GameConfig, policy: PricingPolicy, model: LatencyModel,
              settings: SimulationSettings, burn_in: int = 0,
              so: SystemOptimum | None = None, weights=None,
              ) -> tuple[dict[int, np.ndarray], Population]:
    """Time-averaged karma-cell frequencies per bracket, pooled over its agents.

    Cells are each bracket's price lattice, so karma should be lattice-aligned
    (``snap='lattice'``). Rounds up to ``burn_in`` are discarded. The same
    draws as :func:`run` are consumed, but fairness statistics are skipped.
    """
    if so is None:
        so = system_optimum(model, game)
    rng = make_rng(settings.seed)
    pop = init_population(game, policy, settings, rng, weights=weights)
    # one flat counter: bracket j owns cells [offset_j, offset_j + cells_j)
    agents = np.zeros(0, dtype=np.int64)
    divisor, last, base = [], [], []
    spans: dict[int, tuple[int, int]] = {}
    total = 0
    for j in chain_brackets(policy):
        members = np.flatnonzero(pop.bracket == j)
        if not len(members):
            continue
        b = policy.brackets[j]
        lat = lattice(b.p1, b.p2, game.participation, game.horizon)
        per_cell = lat.delta * int(pop.unit[members[0]])
        if per_cell.denominator != 1:
            raise AssertionError("karma unit does not resolve the price lattice")
        agents = np.concatenate((agents, members))
        divisor += [int(per_cell)] * len(members)
        last += [lat.cells - 1] * len(members)
        base += [total] * len(members)
        spans[j] = (total, lat.cells)
        total += lat.cells
    divisor, last, base = (np.array(x, dtype=np.int64) for x in (divisor, last, base))
    counts = np.zeros(total, dtype=np.int64)
    for t in range(1, settings.rounds + 1):
        step(pop, game, model, so, rng, t=t)
        if t > burn_in and total:
            idx = base + np.minimum(pop.karma[agents] // divisor, last)
            counts += np.bincount(idx, minlength=total)
    out = {}
    for j, (start, cells) in spans.items():
        c = counts[start:start + cells]
        out[j] = c / max(c.sum(), 1)
    return out, pop
