"""Service-time distributions for the Monte Carlo simulator."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class Exponential:
    rate: float

    def __post_init__(self):
        if not (isinstance(self.rate, (int, float)) and math.isfinite(self.rate) and self.rate > 0):
            raise ConfigError(f"exponential rate must be positive and finite, got {self.rate!r}")

    @property
    def mean(self) -> float:
        return 1.0 / self.rate

    def as_dict(self) -> dict:
        return {"kind": "exponential", "rate": self.rate}


@dataclass(frozen=True)
class TruncatedNormal:
    """Normal(``loc``, ``std``) conditioned on ``[low, high]``."""

    loc: float
    std: float
    low: float
    high: float

    def __post_init__(self):
        vals = (self.loc, self.std, self.low, self.high)
        if not all(isinstance(v, (int, float)) and math.isfinite(v) for v in vals):
            raise ConfigError(f"truncated normal parameters must be finite numbers, got {vals}")
        if self.std <= 0:
            raise ConfigError(f"std must be positive, got {self.std}")
        if not (0 <= self.low < self.high):
            raise ConfigError(f"need 0 <= low < high, got [{self.low}, {self.high}]")
        if not (self.low <= self.loc <= self.high):
            raise ConfigError(f"mean {self.loc} outside [{self.low}, {self.high}]")

    @property
    def mean(self) -> float:
        a = (self.low - self.loc) / self.std
        b = (self.high - self.loc) / self.std
        z = _ncdf(b) - _ncdf(a)
        return self.loc + self.std * (_npdf(a) - _npdf(b)) / z

    def cdf(self, x):
        """Analytic CDF, vectorized over ``x``."""
        from scipy.special import ndtr
        x = np.asarray(x, dtype=float)
        a = ndtr((self.low - self.loc) / self.std)
        b = ndtr((self.high - self.loc) / self.std)
        return np.clip((ndtr((x - self.loc) / self.std) - a) / (b - a), 0.0, 1.0)

    def as_dict(self) -> dict:
        return {"kind": "truncated_normal", "mean": self.loc, "std": self.std,
                "low": self.low, "high": self.high}


ServiceDistribution = Union[Exponential, TruncatedNormal]


def _ncdf(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def _npdf(x: float) -> float:
    return math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


# Swap presets on [60, 120] s and charge presets on [3000, 4200] s.
PRESETS = {
    "SD-I": TruncatedNormal(90.0, 10.0, 60.0, 120.0),
    "SD-II": TruncatedNormal(90.0, 5.0, 60.0, 120.0),
    "CD-I": TruncatedNormal(3600.0, 200.0, 3000.0, 4200.0),
    "CD-II": TruncatedNormal(3600.0, 100.0, 3000.0, 4200.0),
}


def sample_many(dist: ServiceDistribution, rng: np.random.Generator, size: int) -> np.ndarray:
    """Draw ``size`` durations (seconds)."""
    if isinstance(dist, Exponential):
        u = rng.random(size)
        # inverse transform on (0, 1]; 1 - u never hits zero
        return -np.log1p(-u) / dist.rate
    if isinstance(dist, TruncatedNormal):
        out = np.empty(size)
        filled = 0
        while filled < size:
            need = size - filled
            draw = dist.loc + dist.std * rng.standard_normal(need + need // 8 + 16)
            ok = draw[(draw >= dist.low) & (draw <= dist.high)]
            take = min(need, ok.size)
            out[filled:filled + take] = ok[:take]
            filled += take
        return out
    raise TypeError(f"unsupported distribution {dist!r}")


def sample(dist: ServiceDistribution, rng: np.random.Generator) -> float:
    if isinstance(dist, Exponential):
        return float(-math.log1p(-rng.random()) / dist.rate)
    while True:
        x = dist.loc + dist.std * rng.standard_normal()
        if dist.low <= x <= dist.high:
            return float(x)


def distribution_from_mapping(data, default_rate: float | None = None) -> ServiceDistribution:
    """Parse ``"SD-I"``-style preset names or ``{"kind": ...}`` objects."""
    if isinstance(data, str):
        if data in PRESETS:
            return PRESETS[data]
        if data == "exponential" and default_rate is not None:
            return Exponential(default_rate)
        raise ConfigError(f"unknown distribution preset {data!r}")
    if not isinstance(data, dict):
        raise ConfigError(f"distribution must be a preset name or an object, got {data!r}")
    kind = data.get("kind")
    if kind == "exponential":
        extra = set(data) - {"kind", "rate"}
        if extra:
            raise ConfigError(f"unknown keys for exponential: {sorted(extra)}")
        rate = data.get("rate", default_rate)
        if rate is None:
            raise ConfigError("exponential distribution needs a rate")
        from .config import parse_rate
        return Exponential(parse_rate(rate))
    if kind == "truncated_normal":
        keys = {"mean", "std", "low", "high"}
        extra = set(data) - keys - {"kind"}
        missing = keys - set(data)
        if extra or missing:
            raise ConfigError(f"truncated_normal needs exactly {sorted(keys)}")
        return TruncatedNormal(float(data["mean"]), float(data["std"]),
                               float(data["low"]), float(data["high"]))
    raise ConfigError(f"unknown distribution kind {kind!r}")
