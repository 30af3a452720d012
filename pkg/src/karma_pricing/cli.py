"""Command-line entry point: ``karma-pricing <command> [options]``.

Every command writes into ``<out>/<command>-<hash>/`` where the hash covers
the effective configuration, the seed and (for simulate/verify) the policy
text, so different inputs never share a directory and identical inputs
reproduce identical files.
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import re
import sys
from dataclasses import replace
from fractions import Fraction
from pathlib import Path

from . import reporting
from .config import ExperimentConfig, load, to_text
from .congestion import system_optimum
from .distributions import DistributionError
from .errors import AssumptionViolation, ConfigError, VerificationFailure
from .pricing import (design_equality, design_equity, equality_bound, equity_epsilon,
                      policy_to_text, read_policy, solve_theta, write_policy)
from .rational import parse_rational
from .simulation import run
from .verification import verify_policy

log = logging.getLogger("karma_pricing")

EXIT_OK, EXIT_CONFIG, EXIT_ASSUMPTION, EXIT_VERIFY = 0, 2, 3, 4


def _seed_range(text: str) -> list[int]:
    m = re.fullmatch(r"\s*(\d+)\s*\.\.\s*(\d+)\s*", text)
    if not m:
        raise argparse.ArgumentTypeError(f"expected N..M, got {text!r}")
    lo, hi = int(m.group(1)), int(m.group(2))
    if hi < lo:
        raise argparse.ArgumentTypeError(f"empty seed range {text!r}")
    return list(range(lo, hi + 1))


def _rational(text: str) -> Fraction:
    try:
        return parse_rational(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="experiment config file")
    common.add_argument("--out", type=Path, help="output root (default: [output] directory)")
    common.add_argument("--no-plots", action="store_true", help="skip PNG figures")
    common.add_argument("-v", "--verbose", action="store_true")

    design = argparse.ArgumentParser(add_help=False)
    group = design.add_mutually_exclusive_group()
    group.add_argument("--epsilon", type=float, help="efficiency tolerance")
    group.add_argument("--delta", type=_rational, help="rational approximation step")

    sim = argparse.ArgumentParser(add_help=False)
    sim.add_argument("--policy", type=Path, required=True, help="policy file")
    seeds = sim.add_mutually_exclusive_group()
    seeds.add_argument("--seed", type=int)
    seeds.add_argument("--seeds", type=_seed_range, help="inclusive range N..M")
    sim.add_argument("--rounds", type=int)
    sim.add_argument("--agents", type=int)

    parser = argparse.ArgumentParser(prog="karma-pricing", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("so", parents=[common], help="system optimum")
    sub.add_parser("design-equity", parents=[common, design], help="equity-optimal prices")
    sub.add_parser("design-equality", parents=[common, design], help="equality-optimal prices")
    sub.add_parser("simulate", parents=[common, sim], help="simulate a policy")
    sub.add_parser("verify", parents=[common, sim], help="check a policy against its Markov chains")
    return parser


def _run_dir(cfg: ExperimentConfig, args, command: str, seed: int, extra: str = "") -> Path:
    root = args.out if args.out is not None else Path(cfg.directory)
    digest = hashlib.sha256((to_text(cfg) + f"\nseed={seed}\n" + extra).encode()).hexdigest()[:12]
    path = root / f"{command}-{digest}"
    path.mkdir(parents=True, exist_ok=True)
    (path / "config.ini").write_text(to_text(cfg))
    return path


def _plots(cfg: ExperimentConfig, args) -> bool:
    return cfg.plots and not args.no_plots


def cmd_so(cfg: ExperimentConfig, args) -> int:
    so = system_optimum(cfg.model(), cfg.game())
    text = reporting.so_text(so)
    out = _run_dir(cfg, args, "so", cfg.seed)
    (out / "so.txt").write_text(text)
    print(text, end="")
    print(f"written {out / 'so.txt'}")
    return EXIT_OK


def cmd_design(cfg: ExperimentConfig, args, kind: str) -> int:
    cfg = cfg.with_overrides(epsilon=args.epsilon, delta=args.delta)
    model, game = cfg.model(), cfg.game()
    so = system_optimum(model, game)
    design = None
    if kind == "equity":
        policy = design_equity(so, model, game, cfg.scale, epsilon=cfg.epsilon, delta=cfg.delta)
        eps = cfg.epsilon if cfg.epsilon is not None else equity_epsilon(so, float(cfg.delta), game.p_hat)
    else:
        design = solve_theta(game, so)
        policy, design = design_equality(design, so, model, game, cfg.scale,
                                         epsilon=cfg.epsilon, delta=cfg.delta)
        design = equality_bound(design, so, game)
        eps = design.epsilon
    out = _run_dir(cfg, args, f"design-{kind}", cfg.seed)
    write_policy(policy, out / "policy.txt")
    report = reporting.design_text(policy, so, game.participation, design, epsilon=eps)
    (out / "design_report.txt").write_text(report)
    if _plots(cfg, args):
        from . import plots
        plots.plot_prices(policy, out / "prices.png")
    head, table = report.split("\n\n", 1)
    print(head)
    if len(policy.brackets) <= 8:
        print(table, end="")
    print(f"policy written to {out / 'policy.txt'}")
    return EXIT_OK


def _sim_config(cfg: ExperimentConfig, args) -> tuple[ExperimentConfig, list[int]]:
    cfg = cfg.with_overrides(rounds=args.rounds, agents=args.agents)
    if args.seeds is not None:
        return cfg, args.seeds
    return cfg, [args.seed if args.seed is not None else cfg.seed]


def cmd_simulate(cfg: ExperimentConfig, args) -> int:
    cfg, seeds = _sim_config(cfg, args)
    policy = read_policy(args.policy)
    model, game = cfg.model(), cfg.game()
    policy.validate(game.weights)
    so = system_optimum(model, game)
    for seed in seeds:
        series = run(game, policy, model, cfg.simulation(seed), so=so)
        out = _run_dir(cfg, args, "simulate", seed, extra=policy_to_text(policy))
        reporting.write_metrics(out / "metrics.csv", series)
        reporting.write_diagnostics(out / "diagnostics.csv", series)
        for t, agents in sorted(series.snapshots.items()):
            reporting.write_snapshot(out / f"agents_t{t}.csv", agents)
            edges, counts = series.histograms[t]
            reporting.write_histogram(out / f"karma_hist_t{t}.csv", edges, counts)
        if _plots(cfg, args) and len(series):
            from . import plots
            plots.plot_decisions(series, so, out / "decisions.png")
            plots.plot_fairness(series, out / "fairness.png")
            for t in sorted(series.histograms):
                plots.plot_histogram(*series.histograms[t], out / f"karma_hist_t{t}.png",
                                     title=f"t = {t}")
        last = series.rows[-1] if series.rows else None
        summary = (f"seed {seed}: {len(series)} rounds" +
                   (f", w = {last[1]:.4f} {last[2]:.4f}, ineqt = {last[8]:.4g}, ineql = {last[9]:.4g}"
                    if last else ""))
        print(summary)
        print(f"  written to {out}")
    return EXIT_OK


def cmd_verify(cfg: ExperimentConfig, args) -> int:
    cfg, seeds = _sim_config(cfg, args)
    policy = read_policy(args.policy)
    model, game = cfg.model(), cfg.game()
    policy.validate(game.weights)
    so = system_optimum(model, game)
    rounds = args.rounds if args.rounds is not None else cfg.verify_rounds
    burn_in = min(cfg.verify_burn_in, rounds - 1)
    status = EXIT_OK
    for seed in seeds:
        settings = replace(cfg.simulation(seed), rounds=rounds)
        report = verify_policy(game, policy, model, so, settings, burn_in=burn_in)
        out = _run_dir(cfg, args, "verify", seed, extra=policy_to_text(policy) + f"rounds={rounds}")
        (out / "verification.txt").write_text(reporting.verification_text(report))
        for c in report.checks:
            if c.chain is None:
                continue
            reporting.write_chain(out / f"chain_b{c.index}.csv", c.chain, c.limit)
            if _plots(cfg, args) and c.agents:
                from . import plots
                plots.plot_stationary(c.limit.stationary, c.simulated,
                                      out / f"chain_b{c.index}.png")
        judged = [c for c in report.checks if c.judged]
        worst = max((c.tv for c in judged), default=float("nan"))
        print(f"seed {seed}: {'PASS' if report.passed else 'FAIL'} "
              f"({len(judged)} brackets judged, max TV = {worst:.4g})")
        print(f"  written to {out}")
        if not report.passed:
            status = EXIT_VERIFY
    return status


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load(args.config)
        if args.command == "so":
            return cmd_so(cfg, args)
        if args.command == "design-equity":
            return cmd_design(cfg, args, "equity")
        if args.command == "design-equality":
            return cmd_design(cfg, args, "equality")
        if args.command == "simulate":
            return cmd_simulate(cfg, args)
        return cmd_verify(cfg, args)
    except (ConfigError, DistributionError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AssumptionViolation as exc:
        print(f"assumption violated: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except VerificationFailure as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
