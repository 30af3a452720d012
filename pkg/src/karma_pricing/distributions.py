"""Weight and urgency distributions with a small text syntax.

Supported forms::

    uniform(a,b)
    truncnormal(mu,sigma,lo,hi)     # parent normal truncated to [lo, hi]
    pointmass(w)
    discrete((w1,m1),(w2,m2),...)   # masses are normalised
"""

from __future__ import annotations

import ast
import math
import re
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import special

from .numerics import piecewise_simpson

QUAD_TOL = 1e-10


class DistributionError(ValueError):
    pass


def _fmt(x: float) -> str:
    return repr(float(x))


class Distribution:
    """Common interface; subclasses are frozen dataclasses."""

    discrete = False

    @property
    def support(self) -> tuple[float, float]:
        raise NotImplementedError

    @property
    def mean(self) -> float:
        return self.expect(lambda x: x)

    def ppf(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def cdf(self, x: float) -> float:
        raise NotImplementedError

    def expect(self, g: Callable[[float], float], breakpoints: Sequence[float] = (),
               tol: float = QUAD_TOL) -> float:
        raise NotImplementedError

    def expect_between(self, g: Callable[[float], float], lo: float, hi: float,
                       closed_lo: bool = False, tol: float = QUAD_TOL) -> float:
        """``E[g(X) 1{lo < X <= hi}]`` (``lo <= X`` when ``closed_lo``)."""
        if self.discrete:
            return math.fsum(m * g(v) for v, m in self.atoms
                             if (lo <= v if closed_lo else lo < v) and v <= hi)
        a, b = max(lo, self.support[0]), min(hi, self.support[1])
        if b <= a:
            return 0.0
        return piecewise_simpson(lambda x: g(x) * self.pdf(x), a, b, tol=tol)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Inverse-transform sampling: consumes exactly ``n`` uniforms from ``rng``."""
        return self.ppf(rng.random(n))


@dataclass(frozen=True)
class PointMass(Distribution):
    value: float
    discrete = True

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise DistributionError("pointmass value must be finite")

    @property
    def support(self):
        return (self.value, self.value)

    @property
    def atoms(self) -> list[tuple[float, float]]:
        return [(self.value, 1.0)]

    def ppf(self, u):
        return np.full(np.shape(u), self.value, dtype=float)

    def cdf(self, x):
        return 1.0 if x >= self.value else 0.0

    def expect(self, g, breakpoints=(), tol=QUAD_TOL):
        return float(g(self.value))

    def __str__(self):
        return f"pointmass({_fmt(self.value)})"


@dataclass(frozen=True)
class Discrete(Distribution):
    values: tuple[float, ...]
    masses: tuple[float, ...]
    discrete = True

    def __post_init__(self):
        if len(self.values) != len(self.masses) or not self.values:
            raise DistributionError("discrete needs matching, non-empty values and masses")
        if any(m < 0 for m in self.masses) or sum(self.masses) <= 0:
            raise DistributionError("discrete masses must be non-negative with positive total")
        order = np.argsort(self.values, kind="stable")
        total = math.fsum(self.masses)
        object.__setattr__(self, "values", tuple(float(self.values[i]) for i in order))
        object.__setattr__(self, "masses", tuple(float(self.masses[i]) / total for i in order))

    @property
    def support(self):
        return (self.values[0], self.values[-1])

    @property
    def atoms(self) -> list[tuple[float, float]]:
        return list(zip(self.values, self.masses))

    def ppf(self, u):
        cum = np.cumsum(self.masses)
        cum[-1] = 1.0
        idx = np.searchsorted(cum, np.asarray(u), side="right")
        return np.asarray(self.values)[np.minimum(idx, len(self.values) - 1)]

    def cdf(self, x):
        return math.fsum(m for v, m in zip(self.values, self.masses) if v <= x)

    def expect(self, g, breakpoints=(), tol=QUAD_TOL):
        return math.fsum(m * g(v) for v, m in zip(self.values, self.masses))

    def __str__(self):
        body = ",".join(f"({_fmt(v)},{_fmt(m)})" for v, m in zip(self.values, self.masses))
        return f"discrete({body})"


@dataclass(frozen=True)
class Uniform(Distribution):
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise DistributionError("uniform needs lo < hi")

    @property
    def support(self):
        return (self.lo, self.hi)

    @property
    def mean(self):
        return 0.5 * (self.lo + self.hi)

    def pdf(self, x):
        return 1.0 / (self.hi - self.lo) if self.lo <= x <= self.hi else 0.0

    def ppf(self, u):
        return self.lo + (self.hi - self.lo) * np.asarray(u)

    def cdf(self, x):
        return min(1.0, max(0.0, (x - self.lo) / (self.hi - self.lo)))

    def expect(self, g, breakpoints=(), tol=QUAD_TOL):
        dens = 1.0 / (self.hi - self.lo)
        return piecewise_simpson(lambda x: g(x) * dens, self.lo, self.hi, breakpoints, tol=tol)

    def __str__(self):
        return f"uniform({_fmt(self.lo)},{_fmt(self.hi)})"


@dataclass(frozen=True)
class TruncNormal(Distribution):
    mu: float
    sigma: float
    lo: float
    hi: float

    def __post_init__(self):
        if self.sigma <= 0 or not self.lo < self.hi:
            raise DistributionError("truncnormal needs sigma > 0 and lo < hi")

    @property
    def _z(self) -> float:
        a = (self.lo - self.mu) / self.sigma
        b = (self.hi - self.mu) / self.sigma
        return 0.5 * (math.erf(b / math.sqrt(2)) - math.erf(a / math.sqrt(2)))

    @property
    def support(self):
        return (self.lo, self.hi)

    def pdf(self, x: float) -> float:
        if x < self.lo or x > self.hi:
            return 0.0
        z = (x - self.mu) / self.sigma
        return math.exp(-0.5 * z * z) / (self.sigma * math.sqrt(2 * math.pi) * self._z)

    def cdf(self, x):
        if x <= self.lo:
            return 0.0
        if x >= self.hi:
            return 1.0
        a = (self.lo - self.mu) / self.sigma
        z = (x - self.mu) / self.sigma
        return 0.5 * (math.erf(z / math.sqrt(2)) - math.erf(a / math.sqrt(2))) / self._z

    def ppf(self, u):
        ca = special.ndtr((self.lo - self.mu) / self.sigma)
        cb = special.ndtr((self.hi - self.mu) / self.sigma)
        x = self.mu + self.sigma * special.ndtri(ca + np.asarray(u) * (cb - ca))
        return np.clip(x, self.lo, self.hi)

    def expect(self, g, breakpoints=(), tol=QUAD_TOL):
        dens = 1.0 / (self.sigma * math.sqrt(2 * math.pi) * self._z)
        mu, s = self.mu, self.sigma

        def integrand(x):
            z = (x - mu) / s
            return g(x) * math.exp(-0.5 * z * z) * dens

        return piecewise_simpson(integrand, self.lo, self.hi, breakpoints, tol=tol)

    def __str__(self):
        return (f"truncnormal({_fmt(self.mu)},{_fmt(self.sigma)},"
                f"{_fmt(self.lo)},{_fmt(self.hi)})")


_CALL = re.compile(r"^\s*([a-z]+)\s*\((.*)\)\s*$", re.S)


def parse_distribution(text: str) -> Distribution:
    """Parse one of the textual forms listed in the module docstring."""
    m = _CALL.match(text)
    if not m:
        raise DistributionError(f"cannot parse distribution {text!r}")
    name, body = m.groups()
    try:
        args = ast.literal_eval(f"({body},)")
    except (ValueError, SyntaxError) as exc:
        raise DistributionError(f"bad arguments in {text!r}") from exc
    try:
        if name == "uniform":
            return Uniform(*map(float, args))
        if name == "truncnormal":
            return TruncNormal(*map(float, args))
        if name == "pointmass":
            (value,) = args
            return PointMass(float(value))
        if name == "discrete":
            values = tuple(float(v) for v, _ in args)
            masses = tuple(float(w) for _, w in args)
            return Discrete(values, masses)
    except (TypeError, ValueError) as exc:
        raise DistributionError(f"bad arguments in {text!r}: {exc}") from exc
    raise DistributionError(f"unknown distribution {name!r}")
