"""Matrix-geometric solutions of the two infinite-battery sub-networks.

``EvFb`` keeps the EV queue and the full-battery queue, with full batteries
arriving at the constant rate ``C*mu``; its level is the full-battery count
and it is positive recurrent in the charging-limited regime.  ``EvDb`` keeps
the EV queue and the depleted-battery queue; its level is the depleted count
and it is positive recurrent in the swapping-limited regime.

Both are level-structured QBDs whose repeating blocks are the ``F``, ``L``,
``D`` of the finite chain, with the roles of ``up`` and ``down`` exchanged
between the two orientations.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import linalg
from .bounds import mmsn_blocking
from .config import StationConfig, ValidatedConfig, validate
from .ctmc import repeating_blocks
from .errors import BoundaryError, MassDeficit, NoConvergence, NotPositiveRecurrent

DRIFT_TOL = 1e-10
NEAR_BOUNDARY = 1e-8
RATE_TOL = 1e-12
MAX_ITER = 100_000


class Orientation(str, enum.Enum):
    EV_FB = "EvFb"
    EV_DB = "EvDb"

    def __str__(self) -> str:
        return self.value


class Verdict(str, enum.Enum):
    POSITIVE_RECURRENT = "PositiveRecurrent"
    NOT_POSITIVE_RECURRENT = "NotPositiveRecurrent"
    BOUNDARY = "Boundary"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class QbdBlocks:
    """Repeating blocks plus the level-dependent blocks below the border level.

    ``boundary[k] = (down_k, local_k, up_k)`` for levels ``k < border``;
    levels ``>= border`` use ``(down, local, up)``.  ``down_0`` is unused.
    """

    up: np.ndarray
    local: np.ndarray
    down: np.ndarray
    orientation: Optional[Orientation] = None
    boundary: tuple = ()
    config: Optional[ValidatedConfig] = field(default=None, repr=False)

    @property
    def border(self) -> int:
        return len(self.boundary)

    @property
    def phases(self) -> int:
        return self.local.shape[0]

    @property
    def generator_sum(self) -> np.ndarray:
        return self.up + self.local + self.down

    def level(self, k: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if k < self.border:
            return self.boundary[k]
        return self.down, self.local, self.up

    def truncated_generator(self, levels: int) -> np.ndarray:
        """Transitions among levels ``0..levels-1`` (upward moves out of the top level dropped)."""
        w = self.phases
        q = np.zeros((levels * w, levels * w))
        for k in range(levels):
            down, local, up = self.level(k)
            blk = slice(k * w, (k + 1) * w)
            q[blk, blk] = local
            if k >= 1:
                q[blk, (k - 1) * w:k * w] = down
            if k + 1 < levels:
                q[blk, (k + 1) * w:(k + 2) * w] = up
        return q

    def boundary_matrix(self) -> np.ndarray:
        """Transitions among the non-repeating levels ``0..border-1``."""
        return self.truncated_generator(self.border)


def _evfb_level(cfg: ValidatedConfig, b: int):
    N, S, C = cfg.capacity_n, cfg.swap_servers_s, cfg.chargers_c
    lam, nu, mu = cfg.arrival_rate, cfg.swap_rate, cfg.charge_rate
    n = np.arange(N + 1)
    served = nu * np.minimum(np.minimum(n, b), S)
    up = C * mu * np.eye(N + 1)
    down = np.diag(served[1:], -1)
    local = np.diag(-((n != N) * lam + C * mu + served)) + np.diag(np.full(N, lam), 1)
    return down, local, up


def _evdb_level(cfg: ValidatedConfig, j: int):
    N, S, C = cfg.capacity_n, cfg.swap_servers_s, cfg.chargers_c
    lam, nu, mu = cfg.arrival_rate, cfg.swap_rate, cfg.charge_rate
    n = np.arange(N + 1)
    served = nu * np.minimum(n, S)
    charging = mu * min(j, C)
    up = np.diag(served[1:], -1)
    down = charging * np.eye(N + 1)
    local = np.diag(-((n != N) * lam + served + charging)) + np.diag(np.full(N, lam), 1)
    return down, local, up


def build_subnetwork(config: StationConfig, orientation: Orientation | str) -> QbdBlocks:
    cfg = validate(config)
    orientation = Orientation(orientation)
    F, L, D = repeating_blocks(cfg)
    if orientation is Orientation.EV_FB:
        boundary = tuple(_evfb_level(cfg, b) for b in range(cfg.swap_servers_s))
        up, down = F, D
    else:
        boundary = tuple(_evdb_level(cfg, j) for j in range(cfg.chargers_c))
        up, down = D, F
    return QbdBlocks(up=up, local=L, down=down, orientation=orientation,
                     boundary=boundary, config=cfg)


@dataclass(frozen=True)
class DriftReport:
    orientation: Optional[Orientation]
    p: np.ndarray
    up_drift: float
    down_drift: float
    verdict: Verdict

    @property
    def margin(self) -> float:
        return self.down_drift - self.up_drift


def drift_check(blocks: QbdBlocks) -> DriftReport:
    """Positive recurrence test ``p up e < p down e`` with ``p A = 0`` for ``A = up + local + down``."""
    a = blocks.generator_sum
    if linalg.inf_norm(a.sum(axis=1)) > 1e-12 * max(1.0, linalg.inf_norm(a)):
        raise ValueError("up + local + down must have zero row sums")
    p = linalg.stationary_vector(a)
    up_drift = float(p @ blocks.up.sum(axis=1))
    down_drift = float(p @ blocks.down.sum(axis=1))
    if abs(up_drift - down_drift) <= DRIFT_TOL * max(up_drift, down_drift):
        verdict = Verdict.BOUNDARY
    elif up_drift < down_drift:
        verdict = Verdict.POSITIVE_RECURRENT
    else:
        verdict = Verdict.NOT_POSITIVE_RECURRENT
    return DriftReport(blocks.orientation, p, up_drift, down_drift, verdict)


@dataclass(frozen=True)
class RateMatrixSolution:
    r: np.ndarray
    iterations: int
    residual: float
    spectral_radius_bound: float
    monotone: bool


def spectral_radius(m: np.ndarray, iterations: int = 200, rtol: float = 1e-8) -> float:
    """Perron root estimate of a nonnegative matrix by power iteration."""
    v = np.full(m.shape[0], 1.0 / m.shape[0])
    est = 0.0
    for _ in range(iterations):
        w = m @ v
        norm = np.abs(w).sum()
        if norm == 0.0:
            return 0.0
        new = norm / np.abs(v).sum()
        v = w / norm
        if abs(new - est) <= rtol * new:
            return float(new)
        est = new
    return float(est)


def _scale(blocks: QbdBlocks, drift: DriftReport) -> float:
    if blocks.config is not None:
        return blocks.config.arrival_rate
    return max(drift.up_drift, drift.down_drift)


def solve_rate_matrix(blocks: QbdBlocks, *, tol: float = RATE_TOL,
                      max_iter: int = MAX_ITER) -> RateMatrixSolution:
    """Minimal nonnegative solution of ``X^2 down + X local + up = 0``.

    Fixed-point iteration ``X <- -(up + X^2 down) local^-1`` from ``X = 0``;
    the iterates increase entrywise to the minimal solution.
    """
    drift = drift_check(blocks)
    if abs(drift.margin) < NEAR_BOUNDARY * _scale(blocks, drift) or drift.verdict is Verdict.BOUNDARY:
        raise BoundaryError(
            f"zero drift (up {drift.up_drift:.12g} vs down {drift.down_drift:.12g}); "
            "the rate matrix has spectral radius 1"
        )
    if drift.verdict is not Verdict.POSITIVE_RECURRENT:
        raise NotPositiveRecurrent(
            f"{blocks.orientation or 'QBD'} is not positive recurrent "
            f"(up drift {drift.up_drift:.6g} >= down drift {drift.down_drift:.6g})"
        )
    up, down = blocks.up, blocks.down
    local_inv = linalg.lu_solve(blocks.local, np.eye(blocks.phases))
    x = np.zeros_like(up)
    monotone = True
    prev = np.inf
    for it in range(1, max_iter + 1):
        nxt = -(up + x @ x @ down) @ local_inv
        step = nxt - x
        if np.any(step < -1e-14 * max(1.0, float(np.abs(nxt).max()))):
            monotone = False
        x = nxt
        size = linalg.inf_norm(step)
        # linear convergence: remaining error ~ size * q / (1 - q)
        q = size / prev if 0 < prev < np.inf else 1.0
        if size == 0.0 or (q < 1.0 and size * q / (1.0 - q) <= tol):
            break
        prev = size
    else:
        raise NoConvergence(f"rate matrix did not converge in {max_iter} iterations")
    residual = linalg.inf_norm(x @ x @ down + x @ blocks.local + up)
    return RateMatrixSolution(r=x, iterations=it, residual=residual,
                              spectral_radius_bound=spectral_radius(x), monotone=monotone)


@dataclass(frozen=True)
class SubNetworkSolution:
    orientation: Optional[Orientation]
    boundary_pi: tuple          # pi_0 .. pi_border, one vector per level
    rate_matrix: RateMatrixSolution
    phase_marginal: np.ndarray  # sum over all levels, per phase
    phi_or_psi: float
    asymptotic_blocking: float
    mass: float
    balance_residual: float

    @property
    def border(self) -> int:
        return len(self.boundary_pi) - 1

    def level(self, k: int) -> np.ndarray:
        if k <= self.border:
            return self.boundary_pi[k]
        r = self.rate_matrix.r
        return self.boundary_pi[-1] @ np.linalg.matrix_power(r, k - self.border)

    def rows(self):
        for k, vec in enumerate(self.boundary_pi):
            for n, p in enumerate(vec):
                yield k, n, float(p)

    def as_record(self) -> dict:
        return {
            "orientation": str(self.orientation),
            "phi_or_psi": self.phi_or_psi,
            "asymptotic_blocking": self.asymptotic_blocking,
            "residual": self.rate_matrix.residual,
            "iterations": self.rate_matrix.iterations,
        }


def _boundary_system(blocks: QbdBlocks, r: np.ndarray) -> np.ndarray:
    k_b, w = blocks.border, blocks.phases
    m = blocks.truncated_generator(k_b + 1)
    last = slice(k_b * w, (k_b + 1) * w)
    m[last, last] = blocks.local + r @ blocks.down
    return m


def solve_boundary(blocks: QbdBlocks, rate_matrix: RateMatrixSolution) -> SubNetworkSolution:
    """Solve the boundary levels ``0..border`` with geometric tail ``pi_k = pi_border R^(k-border)``.

    The first balance column is replaced by the normalization, weighting the
    border level by ``(I - R)^-1 e``.
    """
    r = rate_matrix.r
    k_b, w = blocks.border, blocks.phases
    if k_b == 0:
        raise ValueError("blocks have no boundary levels")
    system = _boundary_system(blocks, r)
    ones = np.ones(w)
    tail_weight = linalg.lu_solve(np.eye(w) - r, ones)
    reduced = system.copy()
    reduced[:, 0] = np.concatenate([np.ones(k_b * w), tail_weight])
    rhs = np.zeros(reduced.shape[0])
    rhs[0] = 1.0
    x = linalg.solve_left(reduced, rhs)
    if np.any(x < -linalg.EPS_NEG):
        raise MassDeficit(f"negative boundary probability {x.min():.3e}")
    x = np.clip(x, 0.0, None)
    levels = tuple(x[k * w:(k + 1) * w] for k in range(k_b + 1))

    tail = linalg.solve_left(np.eye(w) - r, levels[-1])  # sum_{k >= border} pi_k
    phase_marginal = sum(levels[:-1]) + tail
    mass = float(phase_marginal.sum())
    if abs(mass - 1.0) > 1e-7:
        raise MassDeficit(f"total probability {mass!r}")
    balance_residual = linalg.inf_norm(x @ system)

    if blocks.orientation is Orientation.EV_DB:
        # all chargers busy <=> depleted count >= C, i.e. the geometric tail
        value = float(tail.sum())
    else:
        # "not enough" full batteries at level b: phases n > b
        phases = np.arange(w)
        value = 1.0 - float(sum(v[phases > b].sum() for b, v in enumerate(levels[:-1])))
    return SubNetworkSolution(
        orientation=blocks.orientation,
        boundary_pi=levels,
        rate_matrix=rate_matrix,
        phase_marginal=phase_marginal,
        phi_or_psi=value,
        asymptotic_blocking=float(phase_marginal[-1]),
        mass=mass,
        balance_residual=balance_residual,
    )


def expected_blocking(blocks: QbdBlocks) -> float:
    """Closed-form blocking of the sub-network: ``1 - C mu / lam`` (EvFb) or ``P_nslb`` (EvDb)."""
    cfg = blocks.config
    if cfg is None:
        raise ValueError("blocks were not built from a station config")
    if blocks.orientation is Orientation.EV_FB:
        return 1.0 - cfg.chargers_c * cfg.charge_rate / cfg.arrival_rate
    return mmsn_blocking(cfg.capacity_n, cfg.swap_servers_s, cfg.arrival_rate, cfg.swap_rate)[0]


def solve_subnetwork(config: StationConfig, orientation: Orientation | str) -> SubNetworkSolution:
    blocks = build_subnetwork(config, orientation)
    return solve_boundary(blocks, solve_rate_matrix(blocks))


def asymptotic_solution(config: StationConfig) -> Optional[SubNetworkSolution]:
    """Solve whichever sub-network is positive recurrent; ``None`` at the zero-drift boundary."""
    fb = build_subnetwork(config, Orientation.EV_FB)
    verdict = drift_check(fb).verdict
    if verdict is Verdict.BOUNDARY:
        return None
    orientation = Orientation.EV_FB if verdict is Verdict.POSITIVE_RECURRENT else Orientation.EV_DB
    try:
        return solve_subnetwork(config, orientation)
    except BoundaryError:
        return None
