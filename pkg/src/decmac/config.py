"""Experiment configuration files.

A config is a YAML (or JSON) mapping::

    users:                       # one entry per user, or use `repeat`
      - distribution: {kind: exponential, mean: 1.0}
        p_avg_db: 0
        repeat: 2                # optional: this many identical users
    solver:                      # any SolverConfig field, all optional
      n_bins: 200
      lambda_mode: bisection
    sweep:                       # optional; same budget for every user
      p_avg_db_start: -10
      p_avg_db_stop: 20
      p_avg_db_step: 1
    oracle:                      # optional; compare-oracle settings
      power_step: 0.01
      power_max: 2.0
    rate_unit: nats              # or bits
    output_dir: results          # optional; --out wins

Distribution kinds: ``exponential`` (``mean``), ``deterministic``
(``value``) and ``discrete`` (``atoms: [[gain, prob], ...]``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .fading import FadingDistribution
from .solver import SolverConfig

RATE_UNITS = ("nats", "bits")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class UserConfig:
    distribution: FadingDistribution
    p_avg_db: float

    @property
    def p_avg(self) -> float:
        return db_to_linear(self.p_avg_db)


@dataclass(frozen=True)
class SweepConfig:
    p_avg_db_start: float = -10.0
    p_avg_db_stop: float = 20.0
    p_avg_db_step: float = 1.0

    def points(self) -> list[float]:
        n = math.floor((self.p_avg_db_stop - self.p_avg_db_start) / self.p_avg_db_step + 1e-9)
        return [self.p_avg_db_start + i * self.p_avg_db_step for i in range(n + 1)]


@dataclass(frozen=True)
class OracleConfig:
    power_step: float = 0.01
    power_max: float | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    users: tuple[UserConfig, ...]
    solver: SolverConfig = field(default_factory=SolverConfig)
    sweep: SweepConfig | None = None
    oracle: OracleConfig = field(default_factory=OracleConfig)
    rate_unit: str = "nats"
    output_dir: Path | None = None

    @property
    def K(self) -> int:
        return len(self.users)

    def problem(self, p_avg_db: float | None = None):
        """``(distribution, linear budget)`` pairs, optionally at a common dB budget."""
        return [
            (u.distribution, u.p_avg if p_avg_db is None else db_to_linear(p_avg_db))
            for u in self.users
        ]


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def _number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(f"{where}: expected a finite number, got {value!r}")
    return float(value)


def _mapping(value, where: str) -> dict:
    if not isinstance(value, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(value).__name__}")
    return value


def _reject_unknown(section: dict, allowed: set[str], where: str):
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown field(s) {sorted(unknown)}")


def _distribution(raw, where: str) -> FadingDistribution:
    raw = _mapping(raw, where)
    kind = raw.get("kind")
    try:
        if kind == "exponential":
            _reject_unknown(raw, {"kind", "mean"}, where)
            return FadingDistribution.exponential(_number(raw.get("mean", 1.0), f"{where}.mean"))
        if kind == "deterministic":
            _reject_unknown(raw, {"kind", "value"}, where)
            if "value" not in raw:
                raise ConfigError(f"{where}.value is required")
            return FadingDistribution.deterministic(_number(raw["value"], f"{where}.value"))
        if kind == "discrete":
            _reject_unknown(raw, {"kind", "atoms"}, where)
            atoms = raw.get("atoms")
            if not isinstance(atoms, list) or not atoms:
                raise ConfigError(f"{where}.atoms must be a nonempty list of [gain, prob]")
            pairs = []
            for i, atom in enumerate(atoms):
                if not isinstance(atom, (list, tuple)) or len(atom) != 2:
                    raise ConfigError(f"{where}.atoms[{i}] must be [gain, prob]")
                pairs.append((_number(atom[0], f"{where}.atoms[{i}]"),
                              _number(atom[1], f"{where}.atoms[{i}]")))
            return FadingDistribution.discrete(pairs)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    raise ConfigError(f"{where}.kind: unknown distribution kind {kind!r} "
                      "(expected exponential, deterministic or discrete)")


def _users(raw) -> tuple[UserConfig, ...]:
    if not raw:
        raise ConfigError("users required: give at least one user")
    if not isinstance(raw, list):
        raise ConfigError("users must be a list")
    users = []
    for i, entry in enumerate(raw):
        where = f"users[{i}]"
        entry = _mapping(entry, where)
        _reject_unknown(entry, {"distribution", "p_avg_db", "repeat"}, where)
        if "distribution" not in entry:
            raise ConfigError(f"{where}.distribution is required")
        dist = _distribution(entry["distribution"], f"{where}.distribution")
        p_db = _number(entry.get("p_avg_db", 0.0), f"{where}.p_avg_db")
        repeat = entry.get("repeat", 1)
        if isinstance(repeat, bool) or not isinstance(repeat, int) or repeat < 1:
            raise ConfigError(f"{where}.repeat must be a positive integer")
        users.extend([UserConfig(dist, p_db)] * repeat)
    return tuple(users)


def _solver(raw) -> SolverConfig:
    if raw is None:
        return SolverConfig()
    raw = _mapping(raw, "solver")
    _reject_unknown(raw, SolverConfig.field_names(), "solver")
    try:
        return SolverConfig(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"solver: {exc}") from None


def _sweep(raw) -> SweepConfig | None:
    if raw is None:
        return None
    raw = _mapping(raw, "sweep")
    _reject_unknown(raw, {"p_avg_db_start", "p_avg_db_stop", "p_avg_db_step"}, "sweep")
    values = {k: _number(v, f"sweep.{k}") for k, v in raw.items()}
    sweep = SweepConfig(**values)
    if sweep.p_avg_db_step <= 0:
        raise ConfigError("sweep.p_avg_db_step must be positive")
    if sweep.p_avg_db_stop < sweep.p_avg_db_start:
        raise ConfigError("sweep range is empty (p_avg_db_stop < p_avg_db_start)")
    return sweep


def _oracle(raw) -> OracleConfig:
    if raw is None:
        return OracleConfig()
    raw = _mapping(raw, "oracle")
    _reject_unknown(raw, {"power_step", "power_max"}, "oracle")
    step = _number(raw.get("power_step", 0.01), "oracle.power_step")
    pmax = raw.get("power_max")
    pmax = None if pmax is None else _number(pmax, "oracle.power_max")
    if step <= 0 or (pmax is not None and pmax <= 0):
        raise ConfigError("oracle.power_step and oracle.power_max must be positive")
    return OracleConfig(step, pmax)


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a YAML/JSON experiment document."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"not a valid YAML/JSON document: {exc}") from None
    if raw is None:
        raw = {}
    raw = _mapping(raw, "config")
    _reject_unknown(raw, {"users", "solver", "sweep", "oracle", "rate_unit", "output_dir"},
                    "config")
    rate_unit = raw.get("rate_unit", "nats")
    if rate_unit not in RATE_UNITS:
        raise ConfigError(f"rate_unit must be one of {RATE_UNITS}, got {rate_unit!r}")
    out = raw.get("output_dir")
    return ExperimentConfig(
        users=_users(raw.get("users")),
        solver=_solver(raw.get("solver")),
        sweep=_sweep(raw.get("sweep")),
        oracle=_oracle(raw.get("oracle")),
        rate_unit=rate_unit,
        output_dir=None if out is None else Path(out),
    )


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


def rate_scale(unit: str) -> float:
    """Factor converting nats into ``unit``."""
    return 1.0 if unit == "nats" else 1.0 / math.log(2.0)
