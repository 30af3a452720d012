"""Equity- and equality-optimal artificial-currency pricing policies."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path
import numpy as np

from .congestion import GameConfig, LatencyModel, SystemOptimum, balanced_split
from .decision import check_prices
from .distributions import Distribution
from .errors import AssumptionViolation, ConfigError
from .markov import limit_split
from .numerics import BracketError, bisect
from .rational import format_rational, parse_rational, rat_delta, simplest_rational_in

EQUITY = "equity"
EQUALITY = "equality"


@dataclass(frozen=True)
class Bracket:
    """Weight interval ``(lo, hi]`` (closed at ``lo`` for the first bracket) with its prices."""

    lo: float
    hi: float
    p1: Fraction
    p2: Fraction

    @property
    def prices(self) -> tuple[Fraction, Fraction]:
        return (self.p1, self.p2)


@dataclass(frozen=True)
class PricingPolicy:
    brackets: tuple[Bracket, ...]
    scale: Fraction
    kind: str
    delta: Fraction | None = None
    theta: float | None = None
    w_star: tuple[float, float] | None = None

    def __post_init__(self):
        if not self.brackets:
            raise ConfigError("a policy needs at least one bracket")
        if self.kind not in (EQUITY, EQUALITY):
            raise ConfigError(f"unknown policy kind {self.kind!r}")
        if self.scale <= 0:
            raise ConfigError("scale S must be a positive rational")

    @property
    def weight_independent(self) -> bool:
        return len(self.brackets) == 1

    def bracket_index(self, weights) -> np.ndarray:
        w = np.atleast_1d(np.asarray(weights, dtype=float))
        his = np.array([b.hi for b in self.brackets])
        los = np.array([b.lo for b in self.brackets])
        idx = np.searchsorted(his, w, side="left")
        inside = idx < len(self.brackets)
        safe = np.minimum(idx, len(self.brackets) - 1)
        inside &= (w > los[safe]) | ((safe == 0) & (w >= los[0]))
        if not np.all(inside):
            bad = w[~inside][0]
            raise ConfigError(f"weight {bad!r} is not covered by any policy bracket")
        return safe

    def prices_for(self, weight: float) -> tuple[Fraction, Fraction]:
        return self.brackets[int(self.bracket_index(weight)[0])].prices

    def validate(self, weights: Distribution | None = None) -> None:
        """Check price signs and that the brackets tile the weight support."""
        edge_ok = set()
        if self.kind == EQUALITY:
            edge_ok = {0, len(self.brackets) - 1}
        for i, b in enumerate(self.brackets):
            if not b.lo <= b.hi:
                raise ConfigError(f"bracket {i} has lo > hi")
            if i in edge_ok and (b.p1 == 0 or b.p2 == 0):
                continue
            check_prices(b.p1, b.p2)
        for a, b in zip(self.brackets[:-1], self.brackets[1:]):
            if b.lo < a.hi:
                raise ConfigError("policy brackets overlap")
        if weights is None:
            return
        if weights.discrete:
            self.bracket_index([v for v, _ in weights.atoms])
            return
        lo, hi = weights.support
        tiles = all(a.hi == b.lo for a, b in zip(self.brackets[:-1], self.brackets[1:]))
        if not (tiles and self.brackets[0].lo <= lo and self.brackets[-1].hi >= hi):
            raise ConfigError("policy brackets do not partition the weight support")


@dataclass(frozen=True)
class EqualityDesign:
    theta: float
    xi: float
    theta_bounds: tuple[float, float]
    residual: float
    m1: int = 0
    m2: int = 0
    targets: tuple[tuple[float, float], ...] = ()
    masses: tuple[float, ...] = ()
    aggregate_limit: tuple[float, float] | None = None
    epsilon: float | None = None
    ineql_star: float | None = None
    d1: float | None = None
    d2: float | None = None
    d: float | None = None
    radius: float | None = None

    @property
    def bracket_count(self) -> int:
        return self.m1 + self.m2 + 2


# --- delta <-> epsilon ------------------------------------------------------

def _rational_below(x: float) -> Fraction:
    """A simple rational in ``[x(1 - 1e-3), x]``; never exceeds ``x``."""
    return simplest_rational_in(Fraction(x) * Fraction(999, 1000), Fraction(x))


def equity_delta(so: SystemOptimum, epsilon: float, p_hat: float) -> Fraction:
    w1 = so.split[0]
    c, lc = so.cost, so.lipschitz
    return _rational_below(epsilon * p_hat * c / (w1 * (lc * w1 + epsilon * c)))


def equity_epsilon(so: SystemOptimum, delta: float, p_hat: float) -> float:
    w1, c, lc = so.split[0], so.cost, so.lipschitz
    return delta * w1 * lc * w1 / (p_hat * c - delta * w1 * c)


def equality_delta(so: SystemOptimum, epsilon: float, p_hat: float) -> Fraction:
    return _rational_below(epsilon * p_hat * so.cost / so.lipschitz)


def equality_epsilon(so: SystemOptimum, delta: float, p_hat: float) -> float:
    return delta * so.lipschitz / (p_hat * so.cost)


def _resolve_delta(so, p_hat, epsilon, delta, to_delta, to_eps):
    if (epsilon is None) == (delta is None):
        raise ConfigError("give exactly one of epsilon and delta")
    if delta is not None:
        delta = Fraction(delta)
        if delta <= 0:
            raise ConfigError("delta must be positive")
        return delta, to_eps(so, float(delta), p_hat)
    if epsilon <= 0:
        raise ConfigError("epsilon must be positive")
    return to_delta(so, epsilon, p_hat), float(epsilon)


# --- equity -----------------------------------------------------------------

def design_equity(so: SystemOptimum, model: LatencyModel, config: GameConfig, scale,
                  epsilon: float | None = None, delta=None) -> PricingPolicy:
    """Single-bracket policy ``S * [rat(w2*/w1*), -1]``."""
    scale = Fraction(scale)
    p_hat = config.p_hat
    delta, epsilon = _resolve_delta(so, p_hat, epsilon, delta, equity_delta, equity_epsilon)
    w1, w2 = so.split
    ratio = rat_delta(w2 / w1, delta)
    p1, p2 = scale * ratio, -scale
    n_bar = limit_split(p1, p2, config.participation)
    _check_limit(model, so, [float(x) for x in n_bar], p_hat, kind=EQUITY)
    lo, hi = config.weights.support if config.weights is not None else (0.0, math.inf)
    return PricingPolicy(brackets=(Bracket(lo, hi, p1, p2),), scale=scale, kind=EQUITY,
                         delta=delta, w_star=so.split)


def _check_limit(model, so, n_bar, p_hat, kind):
    l1, l2 = float(model.latency(1, n_bar[0])), float(model.latency(2, n_bar[1]))
    if l1 < l2:
        return
    w1 = so.split[0]
    wb1 = balanced_split(model, p_hat)[0]
    if kind == EQUITY:
        d_max = (wb1 - w1) * p_hat / (w1 * wb1)
        e_max = equity_epsilon(so, d_max, p_hat)
    else:
        d_max = p_hat * (wb1 - w1)
        e_max = equality_epsilon(so, d_max, p_hat)
    raise AssumptionViolation(
        f"implied limit split {n_bar[0]:.6g}, {n_bar[1]:.6g} leaves l1 >= l2; "
        f"epsilon too large (feasible for epsilon < {e_max:.6g}, delta < {d_max:.6g})")


# --- equality ---------------------------------------------------------------

def xi_constant(p_hat: float, l_star) -> float:
    l1, l2 = l_star
    if not l1 < l2:
        raise AssumptionViolation("the prescription needs l1* < l2*")
    return p_hat * l2 / (l2 - l1)


def n1_breakpoints(theta: float, p_hat: float, w1: float, xi: float) -> tuple[float, float]:
    """Weights below/above which the prescription saturates at ``p_hat`` / ``0``."""
    return (theta * (1.0 - (p_hat - w1) / (xi - w1)), theta * (1.0 + w1 / (xi - w1)))


def n1_prescription(w, theta: float, p_hat: float, w_star, l_star):
    """Prescribed share of a weight class choosing resource 1."""
    if theta <= 0:
        raise ValueError("theta must be positive")
    w1 = w_star[0]
    xi = xi_constant(p_hat, l_star)
    z = np.asarray(w, dtype=float) / theta - 1.0
    out = np.where(z <= -(p_hat - w1) / (xi - w1), p_hat,
                   np.where(z >= w1 / (xi - w1), 0.0,
                            -(z + 1.0) * (xi - w1) + xi))
    return float(out) if np.ndim(out) == 0 else out


def _n1_scalar(w, theta, p_hat, w1, xi):
    z = w / theta - 1.0
    if z <= -(p_hat - w1) / (xi - w1):
        return p_hat
    if z >= w1 / (xi - w1):
        return 0.0
    return -(z + 1.0) * (xi - w1) + xi


def theta_residual(theta: float, config: GameConfig, so: SystemOptimum, tol: float = 1e-10) -> float:
    """``w1* E[W] - E[n1(W, theta) W]``."""
    p_hat, w1 = config.p_hat, so.split[0]
    xi = xi_constant(p_hat, so.latencies)
    dist = config.weights
    kinks = n1_breakpoints(theta, p_hat, w1, xi)
    mean_w = dist.expect(lambda w: w, tol=tol)
    inner = dist.expect(lambda w: _n1_scalar(w, theta, p_hat, w1, xi) * w, kinks, tol=tol)
    return w1 * mean_w - inner


def solve_theta(config: GameConfig, so: SystemOptimum) -> EqualityDesign:
    if config.weights is None:
        raise ConfigError("the equality design needs a weight distribution")
    p_hat, w1 = config.p_hat, so.split[0]
    xi = xi_constant(p_hat, so.latencies)
    w_min, w_max = config.weights.support
    lo = w_min * (xi - w1) / xi
    hi = w_max * (xi - w1) / (xi - p_hat)
    mean_w = config.weights.mean
    h = lambda t: theta_residual(t, config, so)
    try:
        theta = bisect(h, lo, hi, xtol=1e-15 * hi, ftol=1e-10 * mean_w)
    except BracketError as exc:
        raise ConfigError(f"theta residual does not change sign on [{lo:.6g}, {hi:.6g}]") from exc
    return EqualityDesign(theta=theta, xi=xi, theta_bounds=(lo, hi), residual=h(theta))


def _in_bracket(w: float, lo: float, hi: float, first: bool) -> bool:
    return (lo <= w if first else lo < w) and w <= hi


def design_equality(design: EqualityDesign, so: SystemOptimum, model: LatencyModel,
                    config: GameConfig, scale, epsilon: float | None = None,
                    delta=None) -> tuple[PricingPolicy, EqualityDesign]:
    """Weight-bracketed policy steering each bracket to its prescribed share."""
    scale = Fraction(scale)
    p_hat = config.p_hat
    delta, epsilon = _resolve_delta(so, p_hat, epsilon, delta, equality_delta, equality_epsilon)
    w1, w2 = so.split
    xi, theta = design.xi, design.theta
    w_full, w_zero = n1_breakpoints(theta, p_hat, w1, xi)
    weight_at = lambda n1: theta * (xi - n1) / (xi - w1)
    r_star = rat_delta(w2 / w1, delta)
    m1 = math.ceil(w2 / (w1 * delta))
    m2 = math.ceil(w1 / (w2 * delta))

    raw: list[tuple[float, float, Fraction, Fraction]] = [(-math.inf, w_full, Fraction(0), -scale)]
    for j in range(1, m1 + 1):
        # n2/n1 in ((j-1)delta, j delta]; n1 = p_hat / (1 + ratio)
        lo = weight_at(p_hat / (1 + float((j - 1) * delta)))
        hi = min(weight_at(p_hat / (1 + float(j * delta))), theta)
        q = rat_delta(j * delta, delta)
        raw.append((lo, hi, scale * q, -scale))
    for j in range(m2, 0, -1):
        # n1/n2 in ((j-1)delta, j delta]; n1 = p_hat ratio / (1 + ratio)
        a, b = float(j * delta), float((j - 1) * delta)
        lo = max(weight_at(p_hat * a / (1 + a)), theta)
        hi = weight_at(p_hat * b / (1 + b))
        q = rat_delta(j * delta, delta)
        raw.append((lo, hi, scale * r_star, -scale * r_star * q))
    raw.append((w_zero, math.inf, scale * r_star, Fraction(0)))

    dist = config.weights
    w_min, w_max = dist.support
    brackets: list[Bracket] = []
    for lo, hi, p1, p2 in raw:
        lo, hi = max(lo, w_min), min(hi, w_max)
        if hi < lo or (hi == lo and not dist.discrete):
            continue
        if dist.discrete:
            first = not brackets
            if not any(_in_bracket(v, lo, hi, first) for v, _ in dist.atoms):
                continue
        elif brackets:
            lo = brackets[-1].hi
            if hi <= lo:
                continue
        brackets.append(Bracket(lo, hi, p1, p2))
    if dist.discrete:
        brackets = _cover_atoms(brackets, dist)
    policy = PricingPolicy(brackets=tuple(brackets), scale=scale, kind=EQUALITY, delta=delta,
                           theta=theta, w_star=so.split)

    targets = tuple(tuple(float(x) for x in limit_split(b.p1, b.p2, config.participation))
                    for b in policy.brackets)
    masses = tuple(_mass(dist, b.lo, b.hi, i == 0) for i, b in enumerate(policy.brackets))
    mean_w = dist.mean
    agg1 = math.fsum(t[0] * dist.expect_between(lambda w: w, b.lo, b.hi, closed_lo=(i == 0))
                     for i, (t, b) in enumerate(zip(targets, policy.brackets))) / mean_w
    aggregate = (agg1, p_hat - agg1)
    _check_limit(model, so, aggregate, p_hat, kind=EQUALITY)
    design = replace(design, m1=m1, m2=m2, targets=targets, masses=masses,
                     aggregate_limit=aggregate, epsilon=epsilon)
    return policy, design


def _cover_atoms(brackets: list[Bracket], dist: Distribution) -> list[Bracket]:
    """Keep discrete-support brackets adjacent so every atom has exactly one home."""
    out = []
    for i, b in enumerate(brackets):
        lo = b.lo if i == 0 else out[-1].hi
        out.append(Bracket(lo, b.hi, b.p1, b.p2))
    return out


def _mass(dist: Distribution, lo: float, hi: float, first: bool) -> float:
    return dist.expect_between(lambda w: 1.0, lo, hi, closed_lo=first)


def prescribed_latency(w, theta, p_hat, w_star, l_star):
    """Average latency a weight class would see under the prescription at the optimum."""
    l1, l2 = l_star
    return (p_hat * l2 - n1_prescription(w, theta, p_hat, w_star, l_star) * (l2 - l1)) / p_hat


def optimal_inequality(design: EqualityDesign, so: SystemOptimum, config: GameConfig) -> float:
    """Standard deviation of ``L*/W`` under the prescription."""
    p_hat = config.p_hat
    l1, l2 = so.latencies
    w1 = so.split[0]
    kinks = n1_breakpoints(design.theta, p_hat, w1, design.xi)

    def ratio(w):
        return (p_hat * l2 - _n1_scalar(w, design.theta, p_hat, w1, design.xi) * (l2 - l1)) / (p_hat * w)

    dist = config.weights
    m = dist.expect(ratio, kinks)
    m2 = dist.expect(lambda w: ratio(w) ** 2, kinks)
    return math.sqrt(max(m2 - m * m, 0.0))


def equality_bound(design: EqualityDesign, so: SystemOptimum, config: GameConfig,
                   epsilon: float | None = None) -> EqualityDesign:
    """Constants of the inequality guarantee ``|InEql - InEql*| < sqrt(D eps)``."""
    eps = design.epsilon if epsilon is None else epsilon
    if eps is None:
        raise ConfigError("equality_bound needs epsilon")
    p_hat = config.p_hat
    l1, l2 = so.latencies
    dist = config.weights
    w_min = dist.support[0]
    inv_w = dist.expect(lambda w: 1.0 / w)
    inv_w2 = dist.expect(lambda w: 1.0 / (w * w))
    d1 = 2.0 * l2 * (l2 - l1) * inv_w / (p_hat ** 3 * w_min)
    d2 = 2.0 * (l2 - l1) * (2.0 * l2 - l1) * inv_w2 / p_hat ** 2
    d = (d1 + d2) * p_hat * so.cost / so.lipschitz
    return replace(design, epsilon=eps, ineql_star=optimal_inequality(design, so, config),
                   d1=d1, d2=d2, d=d, radius=math.sqrt(d * eps))


# --- policy file ------------------------------------------------------------

def _fmt_float(x: float) -> str:
    return repr(float(x))


def policy_to_text(policy: PricingPolicy) -> str:
    lines = ["# karma-pricing policy", f"# kind = {policy.kind}",
             f"# scale = {format_rational(policy.scale)}"]
    if policy.delta is not None:
        lines.append(f"# delta = {format_rational(policy.delta)}")
    if policy.theta is not None:
        lines.append(f"# theta = {_fmt_float(policy.theta)}")
    if policy.w_star is not None:
        lines.append(f"# w_star = {_fmt_float(policy.w_star[0])} {_fmt_float(policy.w_star[1])}")
    lines.append("# columns = w_lo w_hi p1 p2")
    for b in policy.brackets:
        lines.append(f"{_fmt_float(b.lo)} {_fmt_float(b.hi)} "
                     f"{format_rational(b.p1)} {format_rational(b.p2)}")
    return "\n".join(lines) + "\n"


def policy_from_text(text: str) -> PricingPolicy:
    header: dict[str, str] = {}
    brackets = []
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, sep, value = line[1:].partition("=")
            if sep:
                header[key.strip()] = value.strip()
            continue
        fields = line.split()
        if len(fields) != 4:
            raise ConfigError(f"policy line {n}: expected 4 fields, got {len(fields)}")
        try:
            brackets.append(Bracket(float(fields[0]), float(fields[1]),
                                    parse_rational(fields[2]), parse_rational(fields[3])))
        except ValueError as exc:
            raise ConfigError(f"policy line {n}: {exc}") from exc
    try:
        w_star = header.get("w_star")
        return PricingPolicy(
            brackets=tuple(brackets),
            scale=parse_rational(header["scale"]),
            kind=header["kind"],
            delta=parse_rational(header["delta"]) if "delta" in header else None,
            theta=float(header["theta"]) if "theta" in header else None,
            w_star=tuple(float(x) for x in w_star.split()) if w_star else None,
        )
    except KeyError as exc:
        raise ConfigError(f"policy header is missing {exc.args[0]!r}") from exc


def write_policy(policy: PricingPolicy, path: Path) -> None:
    Path(path).write_text(policy_to_text(policy))


def read_policy(path: Path) -> PricingPolicy:
    return policy_from_text(Path(path).read_text())
