"""Nash equilibrium of the one-shot participation game.

With a common data cap ``D`` and clients sorted by ``rho/E``, the equilibrium
has a threshold shape: low-ratio clients free-ride, high-ratio clients train
on all their data, and at most one client in between trains partially.

Structural indices (``k``, ``m``) are 1-based ranks in the sorted roster,
matching the rank a client uses for itself; array positions are 0-based.
"""

from __future__ import annotations

import enum
import logging
import warnings
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .core import GameConfig, StrategyProfile, as_array, best_response, h_value
from .errors import NoConvergenceError, NonUniformCapsError, NonUniqueEquilibriumWarning

log = logging.getLogger(__name__)

# relative slack for interval membership at exact boundaries
BOUNDARY_RTOL = 1e-12


class Case(enum.Enum):
    CRITICAL_K = "CriticalK"
    BOUNDARY_M = "BoundaryM"
    ALL_CONTRIBUTORS = "AllContributors"


class Role(enum.Enum):
    FREE_RIDER = "FreeRider"
    PARTIAL_CONTRIBUTOR = "PartialContributor"
    CONTRIBUTOR = "Contributor"


@dataclass(frozen=True)
class StageEquilibrium:
    profile: StrategyProfile
    case: Case
    index: Optional[int]  # k for CRITICAL_K, m for BOUNDARY_M (1-based)
    roles: Tuple[Role, ...]
    unique: bool

    @property
    def k(self) -> Optional[int]:
        return self.index if self.case is Case.CRITICAL_K else None

    @property
    def m(self) -> Optional[int]:
        return self.index if self.case is Case.BOUNDARY_M else None

    @property
    def x_k(self) -> Optional[float]:
        """Partial contribution of the critical client, if there is one."""
        return float(self.profile[self.index - 1]) if self.case is Case.CRITICAL_K else None

    @property
    def free_riders(self) -> int:
        return int(np.count_nonzero(self.profile.x == 0))

    @property
    def tag(self) -> str:
        if self.index is None:
            return self.case.value
        name = "k" if self.case is Case.CRITICAL_K else "m"
        return f"{self.case.value}({name}={self.index})"


def _le(a, b, scale):
    return a <= b + BOUNDARY_RTOL * scale


def _lt(a, b, scale):
    return a < b - BOUNDARY_RTOL * scale


def common_cap(cfg: GameConfig) -> float:
    cap = cfg.uniform_cap
    if cap is None:
        raise NonUniformCapsError("the closed-form equilibrium needs a common data cap")
    return cap


def solve_ne(cfg: GameConfig) -> StageEquilibrium:
    """Closed-form Nash equilibrium for a common data cap.

    Looks for a critical client ``k`` with ``(N-k)D <= h_k <= (N+1-k)D``
    first, then for a boundary ``m`` with ``h_m < (N-m)D < h_{m+1}``. When
    every client's target exceeds ``N*D`` everyone contributes fully.
    """
    D = common_cap(cfg)
    N = cfg.n_clients
    h = cfg.h
    scale = N * D

    hits = [k for k in range(1, N + 1)
            if _le((N - k) * D, h[k - 1], scale) and _le(h[k - 1], (N + 1 - k) * D, scale)]
    if len(hits) > 1:
        warnings.warn(f"several critical clients {hits}; reporting k={hits[0]}",
                      NonUniqueEquilibriumWarning, stacklevel=2)
    if not cfg.strict_order:
        warnings.warn("valuation ratios tie; the equilibrium may not be unique",
                      NonUniqueEquilibriumWarning, stacklevel=2)

    x = np.zeros(N)
    if hits:
        k = hits[0]
        x[k:] = D
        x[k - 1] = min(max(h[k - 1] - (N - k) * D, 0.0), D)
        case, index = Case.CRITICAL_K, k
    else:
        m = next((m for m in range(1, N)
                  if _lt(h[m - 1], (N - m) * D, scale) and _lt((N - m) * D, h[m], scale)), None)
        if m is not None:
            x[m:] = D
            case, index = Case.BOUNDARY_M, m
        elif h[0] >= N * D:
            x[:] = D
            case, index = Case.ALL_CONTRIBUTORS, None
        else:
            # unreachable for sorted inputs; keep the failure loud
            raise RuntimeError(f"no equilibrium case matched h={h.tolist()}, D={D}")

    profile = StrategyProfile(x)
    eq = StageEquilibrium(profile, case, index, (), cfg.strict_order and len(hits) <= 1)
    return StageEquilibrium(profile, case, index, classify_roles(eq, cfg), eq.unique)


def classify_roles(eq: StageEquilibrium, cfg: GameConfig) -> Tuple[Role, ...]:
    roles = []
    for xn, cap in zip(eq.profile.x, cfg.caps):
        if xn == 0:
            roles.append(Role.FREE_RIDER)
        elif xn >= cap:
            roles.append(Role.CONTRIBUTOR)
        else:
            roles.append(Role.PARTIAL_CONTRIBUTOR)
    return tuple(roles)


def distributed_strategy(rank: int, n_clients: int, client, iterations: int, cap: float) -> float:
    """Equilibrium amount computed by one client from its own data.

    Needs only the client's parameters, its 1-based rank in the ratio order,
    the roster size and the common cap.
    """
    h = h_value(client, iterations)
    free_below = (n_clients - rank) * cap
    if h < free_below:
        return 0.0
    if h > free_below + cap:
        return float(cap)
    return h - free_below


def best_response_dynamics(cfg: GameConfig, start, tol: float = 1e-9,
                           max_rounds: int = 10_000) -> Tuple[StrategyProfile, int]:
    """Sequential best-response updates in roster order until a round moves
    no entry by ``tol`` or more.

    Returns the final profile and the number of rounds played, counting the
    last (quiet) round.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    x = as_array(start).astype(float).tolist()
    caps = cfg.caps.tolist()
    h = cfg.h.tolist()
    if len(x) != cfg.n_clients or any(v < 0 or v > c for v, c in zip(x, caps)):
        raise ValueError("start profile must lie within the data caps")
    total = sum(x)
    for rounds in range(1, max_rounds + 1):
        change = 0.0
        for n in range(len(x)):
            others = max(total - x[n], 0.0)
            new = min(caps[n], max(h[n] - others, 0.0))
            change = max(change, abs(new - x[n]))
            total = others + new
            x[n] = new
        # refresh the running sum to stop drift
        total = sum(x)
        if change < tol:
            return StrategyProfile(x), rounds
    raise NoConvergenceError(f"no convergence within {max_rounds} rounds",
                             StrategyProfile(x), max_rounds)


@dataclass(frozen=True)
class NeCheck:
    ok: bool
    worst_gain: float
    violator: Optional[int]  # 0-based position of the worst client, if any gain exceeds tol


def verify_ne(profile, cfg: GameConfig, grid: int = 10_000, tol: float = 1e-6) -> NeCheck:
    """Grid check that no client gains more than ``tol`` by deviating alone.

    Each client is tried at ``grid + 1`` evenly spaced amounts in [0, D_n].
    Constant cost terms cancel, so only the accuracy and computation terms
    are compared.
    """
    if grid < 100:
        raise ValueError("grid must have at least 100 intervals")
    x = as_array(profile)
    total = x.sum()
    others = total - x
    steps = np.linspace(0.0, 1.0, grid + 1)
    trial = cfg.caps[:, None] * steps[None, :]
    G = cfg.iterations

    def variable_cost(own, batch):
        with np.errstate(divide="ignore"):
            return cfg.rho[:, None] / np.sqrt(G * batch) + cfg.comp_coeff[:, None] * own

    current = variable_cost(x[:, None], np.full((len(x), 1), total))[:, 0]
    best = variable_cost(trial, others[:, None] + trial).min(axis=1)
    gains = current - best
    gains = np.where(np.isnan(gains), np.inf, gains)
    worst = int(np.argmax(gains))
    ok = bool(gains[worst] <= tol)
    return NeCheck(ok, float(gains[worst]), None if ok else worst)


def free_rider_count(profile) -> int:
    return int(np.count_nonzero(as_array(profile) == 0))


__all__ = [
    "Case", "Role", "StageEquilibrium", "NeCheck", "solve_ne", "classify_roles",
    "distributed_strategy", "best_response_dynamics", "verify_ne", "common_cap",
    "free_rider_count", "best_response",
]
