"""Experiment configuration: a sectioned ``key = value`` text file.

Rationals are written ``num/den`` and distributions as ``uniform(a,b)``,
``truncnormal(mu,sigma,lo,hi)``, ``pointmass(w)`` or
``discrete((w1,m1),(w2,m2),...)``. Every key is optional; omitted keys take
the reference-experiment values below.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field, fields, replace
from fractions import Fraction
from pathlib import Path

from .congestion import GameConfig, LatencyModel
from .distributions import Distribution, DistributionError, Uniform, TruncNormal, parse_distribution
from .errors import ConfigError
from .rational import format_rational, parse_rational
from .simulation import SNAP_AUTO, SimulationSettings


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.replace(",", " ").split())


def _fmt_floats(xs) -> str:
    return " ".join(repr(float(x)) for x in xs)


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.replace(",", " ").split())


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional_float(text: str) -> float | None:
    return None if text.strip().lower() in ("", "none") else float(text)


def _optional_rational(text: str) -> Fraction | None:
    return None if text.strip().lower() in ("", "none") else parse_rational(text)


def _fmt_optional(x, fmt) -> str:
    return "none" if x is None else fmt(x)


@dataclass(frozen=True)
class ExperimentConfig:
    # [model]
    base: tuple[float, float] = (1.0, 2.0)
    gain: float = 0.15
    exponent: float = 4.0
    capacity: tuple[float, float] = (0.5, 2.0 / 3.0)
    # [game]
    participation: Fraction = Fraction(19, 20)
    horizon: int = 4
    urgency: Distribution = field(default_factory=lambda: Uniform(0.0, 2.0))
    weights: Distribution = field(default_factory=lambda: TruncNormal(1.0, 0.15, 0.5, 1.5))
    # [policy]
    epsilon: float | None = 0.05
    delta: Fraction | None = None
    scale: Fraction = Fraction(10)
    # [simulation]
    agents: int = 1000
    rounds: int = 3000
    seed: int = 0
    karma_init: Distribution = field(default_factory=lambda: Uniform(50.0, 100.0))
    karma_grid: Fraction = Fraction(1, 100)
    snap: str = SNAP_AUTO
    snapshot_rounds: tuple[int, ...] = (0, 500, 1000, 3000)
    hist_bins: int = 40
    verify_rounds: int = 20000
    verify_burn_in: int = 2000
    # [output]
    directory: str = "runs"
    plots: bool = True

    def __post_init__(self):
        if self.epsilon is not None and self.delta is not None:
            raise ConfigError("[policy] epsilon and delta are mutually exclusive")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ConfigError("[policy] epsilon must be positive")
        if self.delta is not None and not self.delta > 0:
            raise ConfigError("[policy] delta must be positive")
        if not self.scale > 0:
            raise ConfigError("[policy] scale must be a positive rational")
        if len(self.base) != 2 or len(self.capacity) != 2:
            raise ConfigError("[model] base and capacity need two values each")
        if any(r < 0 for r in self.snapshot_rounds):
            raise ConfigError("[simulation] snapshot rounds must be non-negative")
        if self.verify_rounds < 1 or not 0 <= self.verify_burn_in < self.verify_rounds:
            raise ConfigError("[simulation] need 0 <= verify_burn_in < verify_rounds")
        # delegate the remaining range checks
        self.model()
        self.game()
        self.simulation()

    def model(self) -> LatencyModel:
        return LatencyModel(base=self.base, gain=self.gain, exponent=self.exponent,
                            capacity=self.capacity)

    def game(self) -> GameConfig:
        return GameConfig(participation=self.participation, horizon=self.horizon,
                          urgency=self.urgency, weights=self.weights)

    def simulation(self, seed: int | None = None) -> SimulationSettings:
        return SimulationSettings(agents=self.agents, rounds=self.rounds,
                                  seed=self.seed if seed is None else seed,
                                  karma_init=self.karma_init, karma_grid=self.karma_grid,
                                  snap=self.snap, snapshot_rounds=self.snapshot_rounds,
                                  hist_bins=self.hist_bins)

    def with_overrides(self, **changes) -> "ExperimentConfig":
        changes = {k: v for k, v in changes.items() if v is not None}
        if "epsilon" in changes:
            changes.setdefault("delta", None)
        elif "delta" in changes:
            changes["epsilon"] = None
        return replace(self, **changes)

    def digest(self, seed: int | None = None) -> str:
        """Short content hash of the canonical config text plus seed."""
        text = to_text(self) + f"\n# seed = {self.seed if seed is None else seed}\n"
        return hashlib.sha256(text.encode()).hexdigest()[:12]


# key -> (field name, parser, formatter)
_SCHEMA = {
    "model": {
        "base": ("base", _floats, _fmt_floats),
        "gain": ("gain", float, repr),
        "exponent": ("exponent", float, repr),
        "capacity": ("capacity", _floats, _fmt_floats),
    },
    "game": {
        "participation": ("participation", parse_rational, format_rational),
        "horizon": ("horizon", int, str),
        "urgency": ("urgency", parse_distribution, str),
        "weights": ("weights", parse_distribution, str),
    },
    "policy": {
        "epsilon": ("epsilon", _optional_float, lambda x: _fmt_optional(x, repr)),
        "delta": ("delta", _optional_rational, lambda x: _fmt_optional(x, format_rational)),
        "scale": ("scale", parse_rational, format_rational),
    },
    "simulation": {
        "agents": ("agents", int, str),
        "rounds": ("rounds", int, str),
        "seed": ("seed", int, str),
        "karma_init": ("karma_init", parse_distribution, str),
        "karma_grid": ("karma_grid", parse_rational, format_rational),
        "snap": ("snap", str.strip, str),
        "snapshot_rounds": ("snapshot_rounds", _ints, lambda xs: " ".join(map(str, xs))),
        "hist_bins": ("hist_bins", int, str),
        "verify_rounds": ("verify_rounds", int, str),
        "verify_burn_in": ("verify_burn_in", int, str),
    },
    "output": {
        "directory": ("directory", str.strip, str),
        "plots": ("plots", _bool, lambda b: "true" if b else "false"),
    },
}

assert {f.name for f in fields(ExperimentConfig)} == {
    spec[0] for section in _SCHEMA.values() for spec in section.values()}


def from_text(text: str, source: str = "<config>") -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"),
                                       comment_prefixes=("#", ";"), empty_lines_in_values=False)
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    values = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"{source}: unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"{source}: unknown key {key!r} in [{section}]")
            name, parse, _ = _SCHEMA[section][key]
            try:
                values[name] = parse(raw)
            except (ValueError, DistributionError, ZeroDivisionError) as exc:
                raise ConfigError(f"{source}: [{section}] {key} = {raw!r}: {exc}") from exc
    # an explicit delta switches off the default epsilon and vice versa
    if "delta" in values and values["delta"] is not None and "epsilon" not in values:
        values["epsilon"] = None
    try:
        return ExperimentConfig(**values)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def to_text(cfg: ExperimentConfig) -> str:
    lines = []
    for section, keys in _SCHEMA.items():
        lines.append(f"[{section}]")
        for key, (name, _, fmt) in keys.items():
            lines.append(f"{key} = {fmt(getattr(cfg, name))}")
        lines.append("")
    return "\n".join(lines)


def load(path: str | Path | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    return from_text(text, source=str(p))
