"""Cooperative participation profile with the fewest free riders.

Starting from the stage equilibrium, the lowest-ranked free rider ``l`` whose
ratio clears its conversion bound, and every free rider above it, switch to a
common positive level ``x_coop``. Everyone else keeps their equilibrium
amount. ``x_coop`` is capped by ``x_th``, the level at which client ``l``
becomes indifferent between this profile and the equilibrium.

Two shapes exist, depending on whether the equilibrium has a critical client:

* WITH_K: converts ranks ``l..k-1``, base data ``(N-k)D + x_k``
* WITHOUT_K: converts ranks ``l..m``, base data ``(N-m)D``
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .core import GameConfig, StrategyProfile
from .errors import LevelAboveCapError, NoRootError
from .stage import Case, StageEquilibrium, common_cap

BISECT_MAX_ITER = 200
BRACKET_FLOOR = 1e-12  # lower bracket end, as a fraction of D


class Variant(enum.Enum):
    WITH_K = "WithK"
    WITHOUT_K = "WithoutK"
    NONE = "None"


@dataclass(frozen=True)
class CooperationBounds:
    """Conversion bounds for the free-rider ranks ``1..len(lower)``.

    ``lower[i]`` and ``upper[i]`` belong to rank ``i + 1``. A free rider with
    ratio above ``lower`` can be converted; above ``upper`` it can be
    converted at the full cap.
    """

    variant: Variant
    lower: np.ndarray
    upper: np.ndarray
    base: float  # data trained at equilibrium by non-free-riders

    def convert_count(self, l: int) -> int:
        """Number of converted contributors when conversion starts at rank ``l``."""
        return len(self.lower) - l + 1


@dataclass(frozen=True)
class CooperativeStrategy:
    variant: Variant
    l: Optional[int]
    x_th: Optional[float]
    x_coop: Optional[float]
    profile: StrategyProfile
    note: str = ""


def _free_rider_span(eq: StageEquilibrium) -> int:
    """Highest rank that is a free rider at equilibrium (0 if none)."""
    if eq.case is Case.CRITICAL_K:
        return eq.k - 1
    if eq.case is Case.BOUNDARY_M:
        return eq.m
    return 0


def compute_bounds(eq: StageEquilibrium, cfg: GameConfig) -> CooperationBounds:
    D = common_cap(cfg)
    N = cfg.n_clients
    G = cfg.iterations
    sqrt_g = math.sqrt(G)
    if eq.case is Case.CRITICAL_K:
        k, xk = eq.k, eq.x_k
        base = (N - k) * D + xk
        ranks = np.arange(1, k, dtype=float)
        lower = 2.0 * math.sqrt(G * base ** 3) / (k - ranks)
        upper = D * sqrt_g / (1.0 / math.sqrt(base) - 1.0 / np.sqrt((N - ranks) * D + xk))
        return CooperationBounds(Variant.WITH_K, lower, upper, base)
    if eq.case is Case.BOUNDARY_M:
        m = eq.m
        base = (N - m) * D
        ranks = np.arange(1, m + 1, dtype=float)
        lower = 2.0 * math.sqrt(G * base ** 3) / (m - ranks + 1)
        upper = D * sqrt_g / (1.0 / math.sqrt(base) - 1.0 / np.sqrt((N - ranks + 1) * D))
        return CooperationBounds(Variant.WITHOUT_K, lower, upper, base)
    empty = np.zeros(0)
    return CooperationBounds(Variant.NONE, empty, empty, float(eq.profile.total()))


def find_l(bounds: CooperationBounds, cfg: GameConfig, eq: StageEquilibrium = None) -> Optional[int]:
    """Smallest free-rider rank whose ratio strictly exceeds its lower bound."""
    ratios = cfg.ratios[: len(bounds.lower)]
    hits = np.nonzero(ratios > bounds.lower)[0]
    return int(hits[0]) + 1 if len(hits) else None


def implicit_rhs(x, bounds: CooperationBounds, l: int, iterations: int):
    """Right-hand side of the indifference equation for client ``l``.

    ``sqrt(G) x / (1/sqrt(a) - 1/sqrt(a + c x))`` with ``a`` the base data and
    ``c`` the number of converted clients, rewritten as
    ``sqrt(G a (a + c x)) (sqrt(a) + sqrt(a + c x)) / c`` so it stays exact
    as ``x -> 0``. Increasing in ``x``; equals the lower bound at 0 and the
    upper bound at ``D``.
    """
    a = bounds.base
    c = bounds.convert_count(l)
    s = np.sqrt(a + c * np.asarray(x, dtype=float))
    return math.sqrt(iterations * a) * s * (math.sqrt(a) + s) / c


def implicit_residual(x: float, bounds: CooperationBounds, l: int, cfg: GameConfig) -> float:
    return abs(float(cfg.ratios[l - 1]) - float(implicit_rhs(x, bounds, l, cfg.iterations)))


def solve_x_th(l: int, eq: StageEquilibrium, cfg: GameConfig, tol: float = 1e-9,
               bounds: CooperationBounds = None) -> float:
    """Largest common level the converted contributors can accept.

    Returns ``D`` when client ``l``'s ratio exceeds its upper bound; otherwise
    bisects the indifference equation on ``(1e-12 D, D]``. ``tol`` bounds the
    residual relative to ``max(1, rho_l/E_l)``.
    """
    if bounds is None:
        bounds = compute_bounds(eq, cfg)
    D = common_cap(cfg)
    ratio = float(cfg.ratios[l - 1])
    if ratio > bounds.upper[l - 1]:
        return D

    def f(x):
        return float(implicit_rhs(x, bounds, l, cfg.iterations)) - ratio

    lo, hi = BRACKET_FLOOR * D, D
    f_lo, f_hi = f(lo), f(hi)
    if f_hi <= 0:
        # ratio sits on the upper bound up to rounding
        return D
    if not (f_lo < 0 <= f_hi):
        raise NoRootError(f"indifference equation not bracketed on [{lo}, {hi}] for l={l}: "
                          f"f(lo)={f_lo}, f(hi)={f_hi}")
    for _ in range(BISECT_MAX_ITER):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
    root = hi if abs(f(hi)) <= abs(f(lo)) else lo
    if abs(f(root)) > tol * max(1.0, ratio):
        raise NoRootError(f"bisection residual {abs(f(root))} above tolerance for l={l}")
    return root


MAX = "max"


def build_coop(eq: StageEquilibrium, cfg: GameConfig,
               x_coop: Union[float, str, None] = MAX, tol: float = 1e-9) -> CooperativeStrategy:
    """Assemble the cooperative profile at level ``x_coop``.

    ``"max"`` (or None) uses ``x_th``. When no free rider can be converted the
    equilibrium profile is returned unchanged.
    """
    bounds = compute_bounds(eq, cfg)
    if bounds.variant is Variant.NONE:
        return CooperativeStrategy(Variant.NONE, None, None, None, eq.profile,
                                   "no free riders at equilibrium")
    l = find_l(bounds, cfg, eq)
    if l is None:
        return CooperativeStrategy(bounds.variant, None, None, None, eq.profile,
                                   "no cooperation possible")
    x_th = solve_x_th(l, eq, cfg, tol, bounds)
    level = x_th if x_coop is None or x_coop == MAX else float(x_coop)
    if level <= 0:
        raise ValueError(f"cooperative level must be positive, got {level}")
    if level > x_th * (1 + 1e-12):
        raise LevelAboveCapError(f"level {level} exceeds the cap x_th={x_th}")
    return CooperativeStrategy(bounds.variant, l, x_th, level,
                               coop_profile(eq, l, level))


def coop_profile(eq: StageEquilibrium, l: int, level: float) -> StrategyProfile:
    """Equilibrium profile with ranks ``l..`` of the free riders moved to ``level``."""
    x = eq.profile.x.copy()
    x[l - 1:_free_rider_span(eq)] = level
    return StrategyProfile(x)


@dataclass(frozen=True)
class CorollaryFlags:
    no_free_riders: bool  # rank 1 clears its lower bound
    all_full: bool  # rank 1 clears its upper bound: converts at the full cap


def corollary_checks(cfg: GameConfig, eq: StageEquilibrium) -> CorollaryFlags:
    bounds = compute_bounds(eq, cfg)
    if bounds.variant is Variant.NONE:
        return CorollaryFlags(True, True)
    r1 = float(cfg.ratios[0])
    return CorollaryFlags(bool(r1 > bounds.lower[0]), bool(r1 > bounds.upper[0]))
