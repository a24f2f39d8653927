"""Finite two-dimensional CTMC of the swapping-and-charging station.

A state ``(n, b)`` holds ``n`` EVs (waiting or being swapped) and ``b`` full
batteries (waiting or being swapped in); the remaining ``B - b`` are depleted.
The generator is built from three local rules:

* arrival:  ``(n, b) -> (n+1, b)``   at ``lam``                  if ``n < N``
* swap:     ``(n, b) -> (n-1, b-1)`` at ``nu * min(n, b, S)``     if ``n, b >= 1``
* charge:   ``(n, b) -> (n, b+1)``   at ``mu * min(B - b, C)``    if ``b < B``

States are indexed level-major: ``index = n + b * (N + 1)``.
"""
from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field

import numpy as np

from .config import StationConfig, validate, ValidatedConfig
from .errors import BandTooNarrow, StateSpaceTooLarge
from .linalg import inf_norm, stationary_vector

MAX_DENSE_STATES = 20_000


def state_index(n: int, b: int, capacity_n: int) -> int:
    return n + b * (capacity_n + 1)


def state_of(index: int, capacity_n: int) -> tuple[int, int]:
    b, n = divmod(index, capacity_n + 1)
    return n, b


@dataclass(frozen=True)
class SparseGenerator:
    """Generator in triplet form; ``rows/cols/rates`` hold off-diagonal entries only."""

    config: ValidatedConfig
    rows: np.ndarray
    cols: np.ndarray
    rates: np.ndarray
    kinds: np.ndarray  # 0 arrival, 1 swap, 2 charge

    @property
    def dimension(self) -> int:
        return self.config.n_states

    @property
    def diagonal(self) -> np.ndarray:
        return -np.bincount(self.rows, weights=self.rates, minlength=self.dimension)

    def triplets(self) -> list[tuple[int, int, float]]:
        """All entries including the diagonal, sorted by (row, col)."""
        d = self.diagonal
        out = [(int(r), int(c), float(v)) for r, c, v in zip(self.rows, self.cols, self.rates)]
        out += [(i, i, float(d[i])) for i in range(self.dimension)]
        return sorted(out)

    def to_dense(self) -> np.ndarray:
        q = np.zeros((self.dimension, self.dimension))
        np.add.at(q, (self.rows, self.cols), self.rates)
        q[np.diag_indices(self.dimension)] = self.diagonal
        return q

    def to_scipy(self):
        import scipy.sparse as sp
        idx = np.arange(self.dimension)
        return sp.csr_matrix(
            (np.concatenate([self.rates, self.diagonal]),
             (np.concatenate([self.rows, idx]), np.concatenate([self.cols, idx]))),
            shape=(self.dimension, self.dimension),
        )


def build_generator(config: StationConfig) -> SparseGenerator:
    cfg = validate(config)
    N, S, C, B = cfg.capacity_n, cfg.swap_servers_s, cfg.chargers_c, cfg.batteries_b
    lam, nu, mu = cfg.arrival_rate, cfg.swap_rate, cfg.charge_rate

    n, b = np.meshgrid(np.arange(N + 1), np.arange(B + 1), indexing="xy")
    n, b = n.ravel(), b.ravel()
    src = n + b * (N + 1)

    rows, cols, rates, kinds = [], [], [], []

    m = n < N
    rows.append(src[m]); cols.append(src[m] + 1)
    rates.append(np.full(m.sum(), lam)); kinds.append(np.zeros(m.sum(), dtype=np.int8))

    m = (n >= 1) & (b >= 1)
    busy = np.minimum(np.minimum(n[m], b[m]), S)
    rows.append(src[m]); cols.append(src[m] - 1 - (N + 1))
    rates.append(nu * busy); kinds.append(np.ones(m.sum(), dtype=np.int8))

    m = b < B
    chargers = np.minimum(B - b[m], C)
    rows.append(src[m]); cols.append(src[m] + (N + 1))
    rates.append(mu * chargers); kinds.append(np.full(m.sum(), 2, dtype=np.int8))

    return SparseGenerator(
        config=cfg,
        rows=np.concatenate(rows).astype(np.int64),
        cols=np.concatenate(cols).astype(np.int64),
        rates=np.concatenate(rates).astype(float),
        kinds=np.concatenate(kinds),
    )


def repeating_blocks(config: StationConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """The repeating ``(F, L, D)`` blocks, each ``(N+1) x (N+1)``.

    ``F = C*mu*I``; ``L`` has ``lam`` on the super-diagonal and
    ``m_n = -(1{n != N} lam + C mu + nu min(n, S))`` on the diagonal;
    ``D`` has ``d_n = nu min(n, S)`` on the sub-diagonal.
    """
    cfg = validate(config)
    N, S, C = cfg.capacity_n, cfg.swap_servers_s, cfg.chargers_c
    lam, nu, mu = cfg.arrival_rate, cfg.swap_rate, cfg.charge_rate
    phases = np.arange(N + 1)
    served = nu * np.minimum(phases, S)
    F = C * mu * np.eye(N + 1)
    # same summation order as the generator diagonal (arrival, swap, charge)
    L = np.diag(-(((phases != N) * lam + served) + C * mu)) + np.diag(np.full(N, lam), 1)
    D = np.diag(served[1:], -1)
    return F, L, D


@dataclass(frozen=True)
class BlockExtraction:
    """Repeating blocks plus the level ranges of the non-repeating boundaries.

    ``lower_levels`` (``b < S``) carries ``L00/F01/D10``; ``upper_levels``
    (``b > B - C``) carries ``L^N_00/D^N_01/F^N_10``.  Boundary entries are
    read from the generator with :meth:`level_block`.
    """

    F: np.ndarray
    L: np.ndarray
    D: np.ndarray
    lower_levels: range
    band_levels: range
    upper_levels: range
    generator: SparseGenerator = field(repr=False)

    @property
    def band_too_narrow(self) -> bool:
        return len(self.band_levels) == 0

    def level_block(self, from_level: int, to_level: int) -> np.ndarray:
        N = self.generator.config.capacity_n
        q = _level_slice(self.generator, from_level, to_level)
        return q.reshape(N + 1, N + 1)


def _level_slice(gen: SparseGenerator, from_level: int, to_level: int) -> np.ndarray:
    N = gen.config.capacity_n
    w = N + 1
    out = np.zeros((w, w))
    r_lvl, c_lvl = gen.rows // w, gen.cols // w
    m = (r_lvl == from_level) & (c_lvl == to_level)
    out[gen.rows[m] % w, gen.cols[m] % w] = gen.rates[m]
    if from_level == to_level:
        d = gen.diagonal[from_level * w:(from_level + 1) * w]
        out[np.arange(w), np.arange(w)] = d
    return out


def extract_blocks(config: StationConfig) -> BlockExtraction:
    cfg = validate(config)
    S, C, B = cfg.swap_servers_s, cfg.chargers_c, cfg.batteries_b
    F, L, D = repeating_blocks(cfg)
    band = range(S, B - C + 1) if B >= S + C else range(0)
    if not band:
        warnings.warn(f"B={B} < S+C={S + C}: no repeating block band", BandTooNarrow, stacklevel=2)
    return BlockExtraction(
        F=F, L=L, D=D,
        lower_levels=range(0, min(S, B + 1)),
        band_levels=band,
        upper_levels=range(max(B - C + 1, 0), B + 1),
        generator=build_generator(cfg),
    )


@dataclass(frozen=True)
class SteadyState:
    config: ValidatedConfig
    pi: np.ndarray
    residual: float

    @property
    def grid(self) -> np.ndarray:
        """Probabilities reshaped to ``[b, n]``."""
        c = self.config
        return self.pi.reshape(c.batteries_b + 1, c.capacity_n + 1)

    def prob(self, n: int, b: int) -> float:
        return float(self.pi[state_index(n, b, self.config.capacity_n)])

    def rows(self):
        N = self.config.capacity_n
        for i, p in enumerate(self.pi):
            n, b = state_of(i, N)
            yield n, b, float(p)

    def to_csv(self, digits: int = 17) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "b", "probability"])
        for n, b, p in self.rows():
            w.writerow([n, b, format(p, f".{digits}g")])
        return buf.getvalue()


def solve_steady_state(gen: SparseGenerator) -> SteadyState:
    """Solve ``pi Q = 0, pi e = 1`` with the (0, 0) equation replaced by normalization."""
    if gen.dimension > MAX_DENSE_STATES:
        raise StateSpaceTooLarge(
            f"{gen.dimension} states exceeds the dense limit of {MAX_DENSE_STATES}; "
            "use the QBD sub-network solvers for large battery populations"
        )
    q = gen.to_dense()
    pi = stationary_vector(q, column=state_index(0, 0, gen.config.capacity_n))
    residual = inf_norm(pi @ q)
    return SteadyState(config=gen.config, pi=pi, residual=residual)


def solve(config: StationConfig) -> SteadyState:
    return solve_steady_state(build_generator(config))


def blocking_probability(ss: SteadyState) -> float:
    """Probability an arrival finds the EV queue full: sum over b of pi[N, b]."""
    return float(min(max(ss.grid[:, -1].sum(), 0.0), 1.0))


@dataclass(frozen=True)
class MetricsReport:
    blocking: float
    p_enough: float
    p_busy: float
    mean_fb: float
    mean_db: float
    throughput: float

    def as_dict(self) -> dict[str, float]:
        return dict(self.__dict__)


def enough_mask(config: StationConfig) -> np.ndarray:
    """``[b, n]`` mask of states with enough full batteries: ``b >= min(n, S)``."""
    c = validate(config)
    n = np.arange(c.capacity_n + 1)[None, :]
    b = np.arange(c.batteries_b + 1)[:, None]
    return b >= np.minimum(n, c.swap_servers_s)


def occupancy_metrics(ss: SteadyState) -> MetricsReport:
    c = ss.config
    g = ss.grid
    B, C = c.batteries_b, c.chargers_c
    by_level = g.sum(axis=1)
    blocking = blocking_probability(ss)
    p_busy = float(by_level[: B - C + 1].sum()) if B >= C else 0.0
    mean_fb = float(np.arange(B + 1) @ by_level)
    return MetricsReport(
        blocking=blocking,
        p_enough=float(min(g[enough_mask(c)].sum(), 1.0)),
        p_busy=p_busy,
        mean_fb=mean_fb,
        mean_db=B - mean_fb,
        throughput=c.arrival_rate * (1.0 - blocking),
    )


__all__ = [
    "SparseGenerator", "SteadyState", "MetricsReport", "BlockExtraction",
    "build_generator", "extract_blocks", "repeating_blocks", "solve_steady_state", "solve",
    "blocking_probability", "occupancy_metrics", "state_index", "state_of", "enough_mask",
    "MAX_DENSE_STATES",
]
