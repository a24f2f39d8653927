"""Discrete-event Monte Carlo simulator of the physical station.

Each replication is an independent event-driven run.  All random durations
are drawn up front from a Philox generator seeded with ``base_seed + r``
(interarrival gaps, then one swap and one charge duration per potential
arrival), so a replication is a pure function of its seed and the event loop
itself is deterministic compiled code.
"""
from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numba
import numpy as np

from .config import ValidatedConfig, config_from_mapping, load_json, parse_duration, validate
from .distributions import Exponential, ServiceDistribution, distribution_from_mapping, sample_many
from .errors import ConfigError

Z95 = 1.959963984540054


@dataclass(frozen=True)
class SimConfig:
    station: ValidatedConfig
    swap_dist: ServiceDistribution
    charge_dist: ServiceDistribution
    horizon_seconds: float = 30 * 86400.0
    warmup_fraction: float = 0.1
    replications: int = 100
    base_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "station", validate(self.station))
        h = self.horizon_seconds
        if not (isinstance(h, (int, float)) and math.isfinite(h) and h > 0):
            raise ConfigError(f"horizon_seconds must be positive, got {h!r}")
        object.__setattr__(self, "horizon_seconds", float(h))
        w = self.warmup_fraction
        if not (isinstance(w, (int, float)) and 0 <= w < 1):
            raise ConfigError(f"warmup_fraction must lie in [0, 1), got {w!r}")
        r = self.replications
        if isinstance(r, bool) or not isinstance(r, int) or r < 1:
            raise ConfigError(f"replications must be a positive integer, got {r!r}")
        s = self.base_seed
        if isinstance(s, bool) or not isinstance(s, int) or not (-(2**63) <= s < 2**64):
            raise ConfigError(f"base_seed must be a 64-bit integer, got {s!r}")
        longest = max(self.swap_dist.mean, self.charge_dist.mean)
        if h < 10 * longest:
            raise ConfigError(
                f"horizon {h:g} s is shorter than 10x the longest mean service time ({longest:g} s)"
            )

    @classmethod
    def exponential(cls, station, **kw) -> "SimConfig":
        st = validate(station)
        return cls(st, Exponential(st.swap_rate), Exponential(st.charge_rate), **kw)


def sim_config_from_mapping(data: dict) -> SimConfig:
    allowed = {"station", "swap_dist", "charge_dist", "horizon_seconds",
               "warmup_fraction", "replications", "base_seed"}
    if not isinstance(data, dict):
        raise ConfigError("simulation config must be an object")
    extra = set(data) - allowed
    if extra:
        raise ConfigError(f"unknown simulation keys: {sorted(extra)}")
    if "station" not in data:
        raise ConfigError("simulation config needs a 'station' object")
    station = config_from_mapping(data["station"])
    kw = {}
    if "horizon_seconds" in data:
        kw["horizon_seconds"] = parse_duration(data["horizon_seconds"])
    for key in ("warmup_fraction", "replications", "base_seed"):
        if key in data:
            kw[key] = data[key]
    return SimConfig(
        station=station,
        swap_dist=distribution_from_mapping(data.get("swap_dist", "exponential"), station.swap_rate),
        charge_dist=distribution_from_mapping(data.get("charge_dist", "exponential"), station.charge_rate),
        **kw,
    )


def load_sim_config(path) -> SimConfig:
    return sim_config_from_mapping(load_json(path))


# ---------------------------------------------------------------- event loop

@numba.njit(cache=True)
def _heap_push(h, size, x):
    i = size
    h[i] = x
    while i > 0:
        p = (i - 1) >> 1
        if h[p] <= h[i]:
            break
        h[p], h[i] = h[i], h[p]
        i = p
    return size + 1


@numba.njit(cache=True)
def _heap_pop(h, size):
    top = h[0]
    size -= 1
    h[0] = h[size]
    i = 0
    while True:
        l = 2 * i + 1
        if l >= size:
            break
        c = l
        if l + 1 < size and h[l + 1] < h[l]:
            c = l + 1
        if h[i] <= h[c]:
            break
        h[i], h[c] = h[c], h[i]
        i = c
    return top, size


@numba.njit(cache=True)
def _run(N, S, C, B, horizon, warmup, arrivals, swaps, charges, debug):
    """Returns (stats[6], counts[6]); stats are time integrals after warm-up.

    stats:  enough, busy, fb, observed time, _, _
    counts: arrivals, blocked, arrivals after warm-up, blocked after warm-up,
            departed, in system at horizon; counts[0] = -1 flags a broken
            battery-conservation check.
    """
    inf = np.inf
    swap_heap = np.empty(S)
    charge_heap = np.empty(max(C, 1))
    n_sw = 0
    n_ch = 0

    n = 0          # EVs waiting or in service
    fb = B         # available full batteries
    dbq = 0        # depleted batteries waiting for a charger
    i_arr = 0
    i_sw = 0
    i_ch = 0

    stats = np.zeros(6)
    counts = np.zeros(6, dtype=np.int64)
    t = 0.0
    n_arr = arrivals.shape[0]

    while True:
        # start every service that can start
        while n_sw < S and n - n_sw > 0 and fb > 0:
            fb -= 1
            n_sw = _heap_push(swap_heap, n_sw, t + swaps[i_sw])
            i_sw += 1
        while n_ch < C and dbq > 0:
            dbq -= 1
            n_ch = _heap_push(charge_heap, n_ch, t + charges[i_ch])
            i_ch += 1
        if debug and fb + n_sw + dbq + n_ch != B:
            counts[0] = -1
            return stats, counts

        t_a = arrivals[i_arr] if i_arr < n_arr else inf
        t_s = swap_heap[0] if n_sw > 0 else inf
        t_c = charge_heap[0] if n_ch > 0 else inf
        t_next = min(t_a, min(t_s, t_c))
        end = min(t_next, horizon)

        lo = max(t, warmup)
        if end > lo:
            dt = end - lo
            b = fb + n_sw
            if b >= min(n, S):
                stats[0] += dt
            if n_ch == C:
                stats[1] += dt
            stats[2] += b * dt
            stats[3] += dt
        if t_next > horizon:
            break
        t = t_next

        if t_a == t_next:
            i_arr += 1
            counts[0] += 1
            post = t >= warmup
            if post:
                counts[2] += 1
            if n >= N:
                counts[1] += 1
                if post:
                    counts[3] += 1
            else:
                n += 1
        elif t_s == t_next:
            _, n_sw = _heap_pop(swap_heap, n_sw)
            n -= 1
            dbq += 1
            counts[4] += 1
        else:
            _, n_ch = _heap_pop(charge_heap, n_ch)
            fb += 1

    counts[5] = n
    return stats, counts


# ---------------------------------------------------------------- replication

@dataclass(frozen=True)
class ReplicationResult:
    replication: int
    blocking: float
    p_enough: float
    p_busy: float
    mean_fb: float
    mean_db: float
    arrivals: int
    blocked: int
    arrivals_all: int
    blocked_all: int
    departed: int
    in_system: int

    @property
    def conserved(self) -> bool:
        return self.arrivals_all == self.blocked_all + self.departed + self.in_system


def _arrival_times(rng, rate: float, horizon: float) -> np.ndarray:
    mean_count = rate * horizon
    chunk = int(mean_count + 6 * math.sqrt(mean_count) + 16)
    gaps = sample_many(Exponential(rate), rng, chunk)
    times = np.cumsum(gaps)
    while times[-1] <= horizon:
        more = np.cumsum(sample_many(Exponential(rate), rng, chunk)) + times[-1]
        times = np.concatenate([times, more])
    return times


def run_replication(cfg: SimConfig, r: int, debug: bool = False) -> ReplicationResult:
    st = cfg.station
    rng = np.random.Generator(np.random.Philox(cfg.base_seed + r))
    arrivals = _arrival_times(rng, st.arrival_rate, cfg.horizon_seconds)
    count = arrivals.shape[0]
    swaps = sample_many(cfg.swap_dist, rng, count)
    charges = sample_many(cfg.charge_dist, rng, count)
    warmup = cfg.warmup_fraction * cfg.horizon_seconds
    stats, counts = _run(st.capacity_n, st.swap_servers_s, st.chargers_c, st.batteries_b,
                         cfg.horizon_seconds, warmup, arrivals, swaps, charges, debug)
    if counts[0] < 0:
        raise AssertionError(f"battery conservation violated in replication {r}")
    span = float(stats[3])
    mean_fb = float(stats[2]) / span
    post_arr, post_blk = int(counts[2]), int(counts[3])
    return ReplicationResult(
        replication=r,
        blocking=post_blk / post_arr if post_arr else 0.0,
        p_enough=float(stats[0]) / span,
        p_busy=float(stats[1]) / span,
        mean_fb=mean_fb,
        mean_db=st.batteries_b - mean_fb,
        arrivals=post_arr,
        blocked=post_blk,
        arrivals_all=int(counts[0]),
        blocked_all=int(counts[1]),
        departed=int(counts[4]),
        in_system=int(counts[5]),
    )


def _run_chunk(args):
    cfg, reps, debug = args
    return [run_replication(cfg, r, debug) for r in reps]


# ---------------------------------------------------------------- aggregation

@dataclass(frozen=True)
class Estimate:
    mean: float
    half_width: float
    degenerate: bool = False

    @classmethod
    def from_samples(cls, xs, degenerate: bool = False) -> "Estimate":
        xs = np.asarray(xs, dtype=float)
        mean = float(xs.mean())
        if xs.size < 2:
            return cls(mean, 0.0, True)
        hw = Z95 * float(xs.std(ddof=1)) / math.sqrt(xs.size)
        return cls(mean, hw, degenerate)


METRICS = ("blocking", "p_enough", "p_busy", "mean_fb", "mean_db")


@dataclass(frozen=True)
class SimEstimate:
    blocking: Estimate
    p_enough: Estimate
    p_busy: Estimate
    mean_fb: Estimate
    mean_db: Estimate
    arrivals_total: int
    arrivals_blocked: int
    analytic_gap: Optional[float] = None
    replications: tuple = field(default=(), repr=False, compare=True)

    def with_analytic(self, value: float) -> "SimEstimate":
        """Attach the relative gap ``|sim - value| / value`` of the blocking estimate."""
        gap = abs(self.blocking.mean - value) / value if value else abs(self.blocking.mean)
        return replace(self, analytic_gap=gap)

    def as_record(self) -> dict:
        rec = {}
        for name in METRICS:
            e = getattr(self, name)
            rec[name] = e.mean
            rec[f"{name}_half_width"] = e.half_width
        rec["degenerate"] = self.blocking.degenerate
        rec["arrivals_total"] = self.arrivals_total
        rec["arrivals_blocked"] = self.arrivals_blocked
        rec["analytic_gap"] = self.analytic_gap
        return rec

    def replication_csv(self, digits: int = 17) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("replication",) + METRICS)
        for r in self.replications:
            w.writerow([r.replication] + [format(getattr(r, m), f".{digits}g") for m in METRICS])
        return buf.getvalue()


def aggregate(results) -> SimEstimate:
    results = sorted(results, key=lambda r: r.replication)
    total = sum(r.arrivals for r in results)
    blocked = sum(r.blocked for r in results)
    no_traffic = total == 0
    ests = {m: Estimate.from_samples([getattr(r, m) for r in results]) for m in METRICS}
    if no_traffic:
        ests["blocking"] = Estimate(0.0, 0.0, True)
    return SimEstimate(arrivals_total=total, arrivals_blocked=blocked,
                       replications=tuple(results), **ests)


def simulate(cfg: SimConfig, workers: int | None = 1, analytic: float | None = None,
             debug: bool = False) -> SimEstimate:
    """Run ``cfg.replications`` independent replications and aggregate them.

    ``workers > 1`` fans replications out over processes; each replication is
    seeded independently so the result does not depend on ``workers``.
    """
    if not isinstance(cfg, SimConfig):
        raise ConfigError("simulate expects a SimConfig")
    reps = list(range(cfg.replications))
    if workers is None:
        workers = os.cpu_count() or 1
    if workers <= 1 or len(reps) == 1:
        results = _run_chunk((cfg, reps, debug))
    else:
        chunks = [reps[i::workers] for i in range(workers) if reps[i::workers]]
        with ProcessPoolExecutor(max_workers=len(chunks)) as pool:
            results = [r for part in pool.map(_run_chunk, [(cfg, c, debug) for c in chunks]) for r in part]
    est = aggregate(results)
    return est.with_analytic(analytic) if analytic is not None else est


__all__ = [
    "SimConfig", "SimEstimate", "Estimate", "ReplicationResult", "simulate", "run_replication",
    "aggregate", "sim_config_from_mapping", "load_sim_config",
]
