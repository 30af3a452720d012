"""Exact finite-state chain of one agent's karma under weight-independent prices.

With rational prices ``p1 = a1/b1`` and ``p2 = -a2/b2`` every reachable
karma value lies on a lattice of step ``gcd(a1 b2, a2 b1) / (b1 b2)`` shifted
by the initial residue, so karma dynamics reduce to a walk on cell indices:
``-s1`` after choosing resource 1, ``+s2`` after resource 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.sparse.linalg import spsolve

from .congestion import GameConfig, LatencyModel
from .decision import brs_thresholds, gamma
from .errors import AssumptionViolation, VerificationFailure

STATIONARY_TOL = 1e-12
MAX_ITER = 1_000_000
COLD_ITER = 5_000


class ChainStructureError(VerificationFailure):
    """The chain is reducible or periodic, so no unique stationary law exists."""


@dataclass(frozen=True)
class Lattice:
    delta: Fraction
    cells: int
    s1: int
    s2: int
    cap: Fraction  # karma space is [0, cap)


@dataclass(frozen=True)
class KarmaChain:
    p1: Fraction
    p2: Fraction
    lattice: Lattice
    offset: Fraction
    participation: Fraction
    matrix: sparse.csr_matrix
    choice1: np.ndarray  # per-cell probability of paying p1 this round
    choice2: np.ndarray

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def karma_bounds(self, cell: int) -> tuple[Fraction, Fraction]:
        d = self.lattice.delta
        return cell * d, min((cell + 1) * d, self.lattice.cap)


@dataclass(frozen=True)
class LimitReport:
    stationary: np.ndarray
    choice_freq: tuple[float, float]
    n_bar: tuple[Fraction, Fraction]
    spectral_gap: float
    iterations: int
    latency_limit: float | None = None


def lattice(p1, p2, p_hat, horizon: int) -> Lattice:
    p1, p2 = Fraction(p1), Fraction(p2)
    if p1 <= 0 or p2 >= 0:
        raise ValueError(f"lattice needs p1 > 0 > p2, got ({p1}, {p2})")
    a1, b1 = p1.numerator, p1.denominator
    a2, b2 = (-p2).numerator, (-p2).denominator
    g = math.gcd(a1 * b2, a2 * b1)
    delta = Fraction(g, b1 * b2)
    cap = (Fraction(p_hat) * horizon + 1) * p1 - p2
    return Lattice(delta=delta, cells=math.ceil(cap / delta),
                   s1=a1 * b2 // g, s2=a2 * b1 // g, cap=cap)


def build_chain(p1, p2, config: GameConfig, offset=Fraction(0)) -> KarmaChain:
    """Transition matrix over lattice cells, assuming ``l1 < l2`` every round.

    Cells whose representative ``m * delta + offset`` falls outside ``[0, cap)``
    are unreachable and dropped.
    """
    p1, p2 = Fraction(p1), Fraction(p2)
    lat = lattice(p1, p2, config.participation, config.horizon)
    offset = Fraction(offset)
    if not 0 <= offset < lat.delta:
        raise ValueError(f"offset must lie in [0, {lat.delta})")
    th = brs_thresholds(p1, p2, config.participation, config.horizon)
    p_hat = config.p_hat
    mean_u = config.urgency.mean
    size = sum(1 for m in range(lat.cells) if m * lat.delta + offset < lat.cap)
    rows, cols, vals = [], [], []
    c1 = np.zeros(size)
    c2 = np.zeros(size)
    for m in range(size):
        g = gamma(m * lat.delta + offset, th, p1, p2)
        pick2 = 1.0 if math.isinf(g) else config.urgency.cdf(mean_u * float(g))
        c1[m], c2[m] = p_hat * (1.0 - pick2), p_hat * pick2
        rows.append(m); cols.append(m); vals.append(1.0 - p_hat)
        for target, prob in ((m - lat.s1, c1[m]), (m + lat.s2, c2[m])):
            if prob <= 0:
                continue
            if not 0 <= target < size:
                raise AssertionError(f"probability {prob:.3g} escapes the karma space from cell {m}")
            rows.append(m); cols.append(target); vals.append(prob)
    matrix = sparse.csr_matrix((vals, (rows, cols)), shape=(size, size))
    return KarmaChain(p1=p1, p2=p2, lattice=lat, offset=offset,
                      participation=config.participation, matrix=matrix,
                      choice1=c1, choice2=c2)


def _period(matrix: sparse.csr_matrix) -> int:
    n = matrix.shape[0]
    level = np.full(n, -1)
    level[0] = 0
    order = [0]
    indptr, indices = matrix.indptr, matrix.indices
    for u in order:
        for v in indices[indptr[u]:indptr[u + 1]]:
            if level[v] < 0:
                level[v] = level[u] + 1
                order.append(v)
    period = 0
    for u in range(n):
        for v in indices[indptr[u]:indptr[u + 1]]:
            period = math.gcd(period, int(level[u] + 1 - level[v]))
    return period


def check_ergodic(chain: KarmaChain) -> None:
    n_comp, labels = csgraph.connected_components(chain.matrix, directed=True, connection="strong")
    if n_comp != 1:
        sizes = np.bincount(labels)
        raise ChainStructureError(
            f"chain is reducible: {n_comp} communicating classes of sizes {sizes.tolist()}")
    period = _period(chain.matrix)
    if period != 1:
        raise ChainStructureError(f"chain is periodic with period {period}")


def stationary(chain: KarmaChain, tol: float = STATIONARY_TOL,
               max_iter: int = MAX_ITER, cold_iter: int = COLD_ITER) -> LimitReport:
    """Stationary law by power iteration; the spectral gap is read off the residual decay.

    Slowly mixing chains (second eigenvalue within ~1e-3 of the unit circle)
    would need millions of sweeps from the uniform start, so after
    ``cold_iter`` sweeps the iterate is replaced by a sparse direct solution of
    the balance equations and power iteration continues from there until the
    L1 residual is below ``tol``. The gap estimate always comes from the cold
    phase.
    """
    check_ergodic(chain)
    pt = chain.matrix.T.tocsr()
    pi = np.full(chain.size, 1.0 / chain.size)
    residuals = []
    gap = None
    for it in range(1, max_iter + 1):
        if it == cold_iter + 1:
            gap = _gap_from(residuals)
            pi = _direct_solve(chain.matrix)
        nxt = pt @ pi
        nxt /= nxt.sum()
        res = float(np.abs(nxt - pi).sum())
        pi = nxt
        residuals.append(res)
        if res < tol:
            break
    else:
        raise VerificationFailure(f"power iteration did not reach {tol:g} in {max_iter} steps")
    if gap is None:
        gap = _gap_from(residuals)
    freq = (float(pi @ chain.choice1), float(pi @ chain.choice2))
    return LimitReport(stationary=pi, choice_freq=freq,
                       n_bar=limit_split(chain.p1, chain.p2, chain.participation),
                       spectral_gap=gap, iterations=it)


def _direct_solve(matrix: sparse.csr_matrix) -> np.ndarray:
    """Solve ``pi (P - I) = 0`` with one balance row replaced by ``sum(pi) = 1``."""
    n = matrix.shape[0]
    a = (matrix.T - sparse.identity(n, format="csr")).tolil()
    a[0, :] = np.ones(n)
    rhs = np.zeros(n)
    rhs[0] = 1.0
    pi = spsolve(a.tocsc(), rhs)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def _gap_from(residuals: list[float]) -> float:
    tail = [r for r in residuals[len(residuals) // 2:] if r > 0]
    if len(tail) < 2:
        return 1.0
    rate = (tail[-1] / tail[0]) ** (1.0 / (len(tail) - 1))
    return float(min(max(1.0 - rate, 0.0), 1.0))


def limit_split(p1, p2, p_hat) -> tuple[Fraction, Fraction]:
    """Split with ``n1 + n2 = p_hat`` and zero expected karma drift ``p1 n1 + p2 n2 = 0``."""
    p1, p2, p_hat = Fraction(p1), Fraction(p2), Fraction(p_hat)
    if p1 == p2:
        raise ValueError("equal prices leave the limit split undetermined")
    return (p_hat * -p2 / (p1 - p2), p_hat * p1 / (p1 - p2))


def predicted_inequity_limit(n_bar, model: LatencyModel, p_hat: float) -> float:
    """Long-run average latency every agent approaches: ``n^T l(n) / p_hat``."""
    n1, n2 = float(n_bar[0]), float(n_bar[1])
    l1, l2 = float(model.latency(1, n1)), float(model.latency(2, n2))
    if not l1 < l2:
        raise AssumptionViolation(f"limit split gives l1 = {l1:.6g} >= l2 = {l2:.6g}")
    return (n1 * l1 + n2 * l2) / p_hat


def mixture(reports: list[LimitReport], masses) -> np.ndarray:
    """Cell distribution of a population spread over several residue offsets."""
    size = max(len(r.stationary) for r in reports)
    out = np.zeros(size)
    total = math.fsum(masses)
    for r, m in zip(reports, masses):
        out[:len(r.stationary)] += (m / total) * r.stationary
    return out


def cell_of(karma: Fraction, delta: Fraction) -> int:
    return math.floor(Fraction(karma) / delta)


def total_variation(p, q) -> float:
    p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    n = max(len(p), len(q))
    p = np.pad(p, (0, n - len(p)))
    q = np.pad(q, (0, n - len(q)))
    return 0.5 * float(np.abs(p - q).sum())
