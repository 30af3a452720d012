"""CSV and plain-text artifacts."""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from .congestion import SystemOptimum
from .markov import KarmaChain, LimitReport
from .pricing import EqualityDesign, PricingPolicy
from .rational import format_rational
from .simulation import AgentState, MetricsSeries
from .verification import VerificationReport, bracket_limit

METRICS_HEADER = ("t", "w1", "w2", "n1", "n2", "l1", "l2", "eff_ratio",
                  "ineqt", "ineql", "mean_L", "mean_LW")
SNAPSHOT_HEADER = ("id", "weight", "karma_num", "karma_den", "N_t", "L_t")
HISTOGRAM_HEADER = ("bin_lo", "bin_hi", "count")
CHAIN_HEADER = ("cell", "karma_lo", "karma_hi", "stationary_prob", "choice1_prob")
DIAGNOSTIC_HEADER = ("t", "phase", "ineqt_participants", "ineql_participants")


def g9(x) -> str:
    return format(float(x), ".9g")


def _write(path: Path, header, rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    Path(path).write_text(buf.getvalue())


def write_metrics(path: Path, series: MetricsSeries) -> None:
    _write(path, METRICS_HEADER,
           ([str(r[0])] + [g9(x) for x in r[1:]] for r in series.rows))


def write_diagnostics(path: Path, series: MetricsSeries) -> None:
    _write(path, DIAGNOSTIC_HEADER,
           ((str(r[0]), str(ph), g9(p[0]), g9(p[1]))
            for r, ph, p in zip(series.rows, series.phases, series.participants)))


def write_snapshot(path: Path, agents: list[AgentState]) -> None:
    _write(path, SNAPSHOT_HEADER,
           ((str(a.id), repr(a.weight), str(a.karma.numerator), str(a.karma.denominator),
             str(a.participations), g9(a.average_latency)) for a in agents))


def write_histogram(path: Path, edges: np.ndarray, counts: np.ndarray) -> None:
    _write(path, HISTOGRAM_HEADER,
           ((g9(lo), g9(hi), str(int(c))) for lo, hi, c in zip(edges[:-1], edges[1:], counts)))


def write_chain(path: Path, chain: KarmaChain, limit: LimitReport) -> None:
    rows = []
    for m in range(chain.size):
        lo, hi = chain.karma_bounds(m)
        rows.append((str(m), format_rational(lo), format_rational(hi),
                     g9(limit.stationary[m]), g9(chain.choice1[m])))
    _write(path, CHAIN_HEADER, rows)


def so_text(so: SystemOptimum) -> str:
    return "\n".join([
        f"w_star = {g9(so.split[0])} {g9(so.split[1])}",
        f"l_star = {g9(so.latencies[0])} {g9(so.latencies[1])}",
        f"cost = {g9(so.cost)}",
        f"lipschitz = {g9(so.lipschitz)}",
    ]) + "\n"


def design_text(policy: PricingPolicy, so: SystemOptimum, participation,
                design: EqualityDesign | None = None, epsilon: float | None = None) -> str:
    lines = [f"kind = {policy.kind}", f"scale = {format_rational(policy.scale)}",
             f"delta = {format_rational(policy.delta)}" if policy.delta is not None else "delta = none"]
    if epsilon is not None:
        lines.append(f"epsilon = {g9(epsilon)}")
    lines.append(f"w_star = {g9(so.split[0])} {g9(so.split[1])}")
    if design is not None:
        lines += [
            f"theta = {g9(design.theta)}",
            f"theta_residual = {g9(design.residual)}",
            f"xi = {g9(design.xi)}",
            f"m1 = {design.m1}",
            f"m2 = {design.m2}",
            f"brackets_kept = {len(policy.brackets)}",
        ]
        if design.aggregate_limit is not None:
            lines.append(f"aggregate_limit = {g9(design.aggregate_limit[0])} "
                         f"{g9(design.aggregate_limit[1])}")
        if design.ineql_star is not None:
            lines += [f"ineql_star = {g9(design.ineql_star)}", f"d1 = {g9(design.d1)}",
                      f"d2 = {g9(design.d2)}", f"d = {g9(design.d)}",
                      f"radius = {g9(design.radius)}"]
    lines.append("")
    lines.append("bracket w_lo w_hi p1 p2 n1_bar n2_bar")
    for j, b in enumerate(policy.brackets):
        n1, n2 = bracket_limit(b.p1, b.p2, participation)
        lines.append(f"{j} {g9(b.lo)} {g9(b.hi)} {format_rational(b.p1)} "
                     f"{format_rational(b.p2)} {g9(n1)} {g9(n2)}")
    return "\n".join(lines) + "\n"


def verification_text(report: VerificationReport) -> str:
    lines = [
        f"result = {'PASS' if report.passed else 'FAIL'}",
        f"threshold_tv = {g9(report.threshold)}",
        f"rounds = {report.rounds}", f"burn_in = {report.burn_in}",
        f"agents = {report.agents}", f"seed = {report.seed}",
        f"aggregate_limit = {g9(report.aggregate_limit[0])} {g9(report.aggregate_limit[1])}",
        "",
    ]
    for c in report.checks:
        lines.append(f"[bracket {c.index}]")
        lines.append(f"prices = {format_rational(c.prices[0])} {format_rational(c.prices[1])}")
        lines.append(f"agents = {c.agents}")
        lines.append(f"mass = {g9(c.mass)}")
        if c.chain is not None:
            lat = c.chain.lattice
            lines += [f"Delta = {format_rational(lat.delta)}", f"M = {lat.cells}",
                      f"s1 = {lat.s1}", f"s2 = {lat.s2}",
                      f"n_bar = {format_rational(c.limit.n_bar[0])} "
                      f"{format_rational(c.limit.n_bar[1])}",
                      f"stationary_choice = {g9(c.limit.choice_freq[0])} "
                      f"{g9(c.limit.choice_freq[1])}",
                      f"spectral_gap = {g9(c.limit.spectral_gap)}"]
        if c.latency_limit is not None:
            lines.append(f"L_inf = {g9(c.latency_limit)}")
        if c.simulated_latency is not None:
            lines.append(f"simulated_mean_L = {g9(c.simulated_latency)}")
        if c.tv is not None:
            lines.append(f"tv = {g9(c.tv)}")
            lines.append(f"status = {'skipped' if not c.judged else 'pass' if c.passed else 'fail'}")
        if c.note:
            lines.append(f"note = {c.note}")
        lines.append("")
    return "\n".join(lines)
