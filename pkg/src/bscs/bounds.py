"""Closed-form capacity-planning bounds.

* ``mmsn_blocking``: blocking of the isolated M/M/S/N swap queue, the floor no
  choice of chargers or batteries can beat.
* ``c_limiting_threshold``: ``lam (1 - P_nslb) / mu``, the charger count that
  separates the charging-limited and swapping-limited regimes.
* ``classify_mode``: the full :class:`ModeReport`.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .config import StationConfig, validate

# |threshold - C| below this (relative) is treated as the zero-drift boundary
BOUNDARY_RTOL = 1e-9


class Mode(str, enum.Enum):
    CHARGING_LIMITING = "ChargingLimiting"
    SWAPPING_LIMITING = "SwappingLimiting"
    BOUNDARY = "Boundary"

    def __str__(self) -> str:
        return self.value


def _log_terms(n: int, s: int, load: float) -> list[float]:
    """log of the unnormalized M/M/S/N state weights for k = 0..n."""
    log_a = math.log(load)
    log_s = math.log(s)
    lgs = math.lgamma(s + 1)
    out = []
    for k in range(n + 1):
        if k <= s:
            out.append(k * log_a - math.lgamma(k + 1))
        else:
            out.append(k * log_a - lgs - (k - s) * log_s)
    return out


def _logsumexp(xs: list[float]) -> float:
    m = max(xs)
    return m + math.log(math.fsum(math.exp(x - m) for x in xs))


def mmsn_distribution(n: int, s: int, lam: float, nu: float) -> list[float]:
    """Stationary distribution of the M/M/S/N queue (length ``n + 1``)."""
    logs = _log_terms(n, s, lam / nu)
    z = _logsumexp(logs)
    return [math.exp(x - z) for x in logs]


def mmsn_blocking(n: int, s: int, lam: float, nu: float) -> tuple[float, float]:
    """Return ``(p_nslb, p0)`` for the M/M/S/N queue, evaluated in log space."""
    if not (isinstance(n, int) and isinstance(s, int)) or s < 1 or n < s:
        raise ValueError(f"need integers n >= s >= 1, got n={n}, s={s}")
    if not (lam > 0 and nu > 0 and math.isfinite(lam) and math.isfinite(nu)):
        raise ValueError("rates must be positive and finite")
    logs = _log_terms(n, s, lam / nu)
    z = _logsumexp(logs)
    return math.exp(logs[-1] - z), math.exp(-z)


def c_limiting_threshold(p_nslb: float, lam: float, mu: float) -> float:
    return lam * (1.0 - p_nslb) / mu


def c_limiting_lower_bound(chargers_c: int, lam: float, mu: float) -> float:
    return max(1.0 - chargers_c * mu / lam, 0.0)


def mode_for(chargers_c: int, threshold: float) -> Mode:
    if abs(threshold - chargers_c) <= BOUNDARY_RTOL * max(1.0, chargers_c):
        return Mode.BOUNDARY
    return Mode.CHARGING_LIMITING if chargers_c < threshold else Mode.SWAPPING_LIMITING


@dataclass(frozen=True)
class ModeReport:
    p_nslb: float
    p0: float
    threshold: float
    mode: Mode
    p_clb: float
    delta: float

    def as_dict(self) -> dict:
        d = dict(self.__dict__)
        d["mode"] = str(self.mode)
        return d


def classify_mode(config: StationConfig) -> ModeReport:
    cfg = validate(config)
    lam, mu = cfg.arrival_rate, cfg.charge_rate
    p_nslb, p0 = mmsn_blocking(cfg.capacity_n, cfg.swap_servers_s, lam, cfg.swap_rate)
    threshold = c_limiting_threshold(p_nslb, lam, mu)
    C = cfg.chargers_c
    return ModeReport(
        p_nslb=p_nslb,
        p0=p0,
        threshold=threshold,
        mode=mode_for(C, threshold),
        p_clb=c_limiting_lower_bound(C, lam, mu),
        delta=max(1.0 - C * mu / lam - p_nslb, 0.0),
    )
