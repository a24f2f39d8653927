"""Station parameterization and its validation.

All rates are per second.  Configuration files are JSON objects with exactly
the seven :class:`StationConfig` fields; rate fields may also be given as a
fraction string (``"1/30"``) or a mean duration with a unit (``"90s"``,
``"1h"``), which is converted to ``1 / seconds``.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import asdict, dataclass, fields
from fractions import Fraction
from pathlib import Path
from typing import Any, Mapping

from .errors import ConfigError, DomainError

INT_FIELDS = ("capacity_n", "swap_servers_s", "chargers_c", "batteries_b")
RATE_FIELDS = ("arrival_rate", "swap_rate", "charge_rate")

_UNITS = {
    "s": 1.0, "sec": 1.0, "secs": 1.0, "second": 1.0, "seconds": 1.0,
    "m": 60.0, "min": 60.0, "mins": 60.0, "minute": 60.0, "minutes": 60.0,
    "h": 3600.0, "hr": 3600.0, "hrs": 3600.0, "hour": 3600.0, "hours": 3600.0,
    "d": 86400.0, "day": 86400.0, "days": 86400.0,
}
_DURATION_RE = re.compile(r"^\s*([0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*([a-zA-Z]+)\s*$")


@dataclass(frozen=True)
class StationConfig:
    capacity_n: int
    swap_servers_s: int
    chargers_c: int
    batteries_b: int
    arrival_rate: float
    swap_rate: float
    charge_rate: float

    def as_dict(self) -> dict[str, Any]:
        return asdict(self)

    def replace(self, **changes) -> "StationConfig":
        data = self.as_dict()
        data.update(changes)
        return type(self)(**data)


@dataclass(frozen=True)
class ValidatedConfig(StationConfig):
    """A :class:`StationConfig` whose invariants have been checked."""

    def __post_init__(self):
        problems = _violations(self)
        if problems:
            raise DomainError(problems)

    @property
    def parking_spaces(self) -> int:
        return self.capacity_n - self.swap_servers_s

    @property
    def n_states(self) -> int:
        return (self.capacity_n + 1) * (self.batteries_b + 1)


def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def _violations(cfg: StationConfig) -> list[tuple[str, str]]:
    out = []
    for name in INT_FIELDS:
        v = getattr(cfg, name)
        if not _is_int(v):
            out.append((name, f"must be an integer, got {v!r}"))
        elif name == "batteries_b" and v < 0:
            out.append((name, f"must be non-negative, got {v}"))
        elif name != "batteries_b" and v < 1:
            out.append((name, f"must be positive, got {v}"))
    for name in RATE_FIELDS:
        v = getattr(cfg, name)
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            out.append((name, f"nonpositive rate: must be a real number, got {v!r}"))
        elif not math.isfinite(v):
            out.append((name, f"rate must be finite, got {v}"))
        elif v <= 0:
            out.append((name, f"nonpositive rate {v}"))
    n, s = cfg.capacity_n, cfg.swap_servers_s
    if _is_int(n) and _is_int(s) and n < s:
        out.append(("capacity_n", f"capacity_n < swap_servers_s ({n} < {s})"))
    return out


def validate(config: StationConfig) -> ValidatedConfig:
    """Check every invariant and return a validated (immutable) handle."""
    if isinstance(config, ValidatedConfig):
        return config
    data = {f.name: getattr(config, f.name) for f in fields(StationConfig)}
    for name in RATE_FIELDS:
        if _is_int(data[name]):
            data[name] = float(data[name])
    return ValidatedConfig(**data)


def parse_duration(value) -> float:
    """Seconds from a number or a string such as ``"90s"``, ``"1.5h"``, ``"30d"``."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if isinstance(value, str):
        s = value.strip()
        try:
            return float(s)
        except ValueError:
            pass
        m = _DURATION_RE.match(s)
        if m and m.group(2).lower() in _UNITS:
            return float(m.group(1)) * _UNITS[m.group(2).lower()]
    raise ConfigError(f"cannot parse duration {value!r}")


def parse_rate(value) -> float:
    """Per-second rate from a number, a fraction string, or a mean duration."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if isinstance(value, str):
        s = value.strip()
        try:
            return float(Fraction(s.replace(" ", "")))
        except (ValueError, ZeroDivisionError):
            pass
        seconds = parse_duration(s)
        if seconds <= 0:
            raise ConfigError(f"mean duration must be positive: {value!r}")
        return 1.0 / seconds
    raise ConfigError(f"cannot parse rate {value!r}")


def config_from_mapping(data: Mapping[str, Any]) -> ValidatedConfig:
    if not isinstance(data, Mapping):
        raise ConfigError("station configuration must be a JSON object")
    expected = set(INT_FIELDS) | set(RATE_FIELDS)
    unknown = sorted(set(data) - expected)
    missing = sorted(expected - set(data))
    if unknown:
        raise ConfigError(f"unknown keys: {', '.join(unknown)}")
    if missing:
        raise ConfigError(f"missing keys: {', '.join(missing)}")
    values = {k: data[k] for k in INT_FIELDS}
    for k in RATE_FIELDS:
        try:
            values[k] = parse_rate(data[k])
        except ConfigError as exc:
            raise ConfigError(f"{k}: {exc}") from None
    return validate(StationConfig(**values))


def load_json(path) -> Any:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


def load_station_config(path) -> ValidatedConfig:
    return config_from_mapping(load_json(path))


REFERENCE_RATES = dict(arrival_rate=1 / 30, swap_rate=1 / 90, charge_rate=1 / 3600)


def reference_config(batteries_b: int = 130, chargers_c: int = 120,
                 capacity_n: int = 12, swap_servers_s: int = 2, **rates) -> ValidatedConfig:
    """Convenience constructor for the reference station (lambda=1/30, nu=1/90, mu=1/3600)."""
    r = dict(REFERENCE_RATES)
    r.update(rates)
    return validate(StationConfig(capacity_n, swap_servers_s, chargers_c, batteries_b, **r))
