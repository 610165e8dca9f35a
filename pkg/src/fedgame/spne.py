"""Enforcing cooperation in the repeated game with grim-trigger punishment.

A client weighs one slot of its best unilateral deviation (others keep
cooperating) followed by the stage equilibrium forever, against cooperating
forever. Cooperation is self-enforcing for client ``n`` when

    delta >= (F_coop - F_least) / (F_pun - F_least)

and for the whole roster when ``delta`` clears the maximum of these
thresholds. The optimal profile keeps the cooperative block structure and
picks the largest converted level that is still self-enforcing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .cooperation import CooperativeStrategy, Variant, build_coop, _free_rider_span
from .core import (GameConfig, StrategyProfile, all_costs, as_array, best_response,
                   discounted_cost, total_cost)
from .errors import DegenerateDenominatorError, InvalidConfigError
from .stage import StageEquilibrium, free_rider_count


@dataclass(frozen=True)
class DeviationAnalysis:
    x_least: np.ndarray
    f_least: np.ndarray
    f_coop: np.ndarray
    f_pun: np.ndarray
    delta_th: np.ndarray

    @property
    def binding(self) -> int:
        """0-based position of the client with the largest threshold."""
        return int(np.argmax(self.delta_th))


def _profile_of(coop) -> np.ndarray:
    if isinstance(coop, CooperativeStrategy):
        return coop.profile.x
    return as_array(coop)


def _thresholds(X: np.ndarray, x_ne: np.ndarray, cfg: GameConfig):
    """Deviation levels and threshold discount factors for each row of ``X``.

    Works on one profile or a stack of profiles (last axis = clients). Cost
    gaps are formed from the accuracy-loss difference directly so that the
    constant ``rho/G + C + p`` never enters a subtraction.
    """
    T = X.sum(axis=-1, keepdims=True)
    others = T - X
    x_least = np.clip(cfg.h - others, 0.0, cfg.caps)
    T_least = others + x_least
    total_ne = x_ne.sum()
    scale = cfg.rho / math.sqrt(cfg.iterations)
    rT, rL, rP = np.sqrt(T), np.sqrt(T_least), math.sqrt(total_ne)

    gain = scale * (x_least - X) / (rT * rL * (rT + rL)) + cfg.comp_coeff * (X - x_least)
    loss = scale * (T_least - total_ne) / (rP * rL * (rP + rL)) + cfg.comp_coeff * (x_ne - x_least)
    gain = np.maximum(gain, 0.0)
    active = gain > 0
    if np.any(active & (loss <= 0)):
        raise DegenerateDenominatorError(
            "punishment is no worse than the best deviation; the cooperative profile is inconsistent")
    with np.errstate(divide="ignore", invalid="ignore"):
        delta_th = np.where(active, gain / np.where(active, loss, 1.0), 0.0)
    return x_least, gain, loss, delta_th


def analyze_deviations(coop, eq: StageEquilibrium, cfg: GameConfig) -> DeviationAnalysis:
    x = _profile_of(coop)
    x_least, gain, _, delta_th = _thresholds(x, eq.profile.x, cfg)
    f_coop = all_costs(x, cfg)
    f_pun = all_costs(eq.profile, cfg)
    return DeviationAnalysis(x_least, f_coop - gain, f_coop, f_pun, delta_th)


def deviation_best_response(n: int, coop, cfg: GameConfig) -> Tuple[float, float]:
    """One-slot optimal deviation of client ``n`` while the rest cooperate."""
    x = _profile_of(coop)
    others = float(x.sum() - x[n])
    x_least = best_response(n, others, cfg)
    deviated = x.copy()
    deviated[n] = x_least
    return x_least, total_cost(n, deviated, cfg)


def threshold_delta(n: int, coop, eq: StageEquilibrium, cfg: GameConfig) -> float:
    return float(_thresholds(_profile_of(coop), eq.profile.x, cfg)[3][n])


def global_threshold(coop, eq: StageEquilibrium, cfg: GameConfig) -> float:
    return float(_thresholds(_profile_of(coop), eq.profile.x, cfg)[3].max())


def check_spne(coop, eq: StageEquilibrium, cfg: GameConfig, delta: float) -> bool:
    """Whether grim trigger sustains ``coop`` for a common discount ``delta``."""
    if not 0 <= delta < 1:
        raise ValueError(f"discount factor must lie in [0, 1), got {delta}")
    return delta >= global_threshold(coop, eq, cfg)


@dataclass(frozen=True)
class SpneResult:
    profile: StrategyProfile
    x_cc: float
    delta_th: float
    feasible: bool
    objective: float
    l: Optional[int]
    x_th: Optional[float]
    variant: Variant

    @property
    def free_riders(self) -> int:
        return free_rider_count(self.profile)


def resolve_delta(cfg: GameConfig, delta: Optional[float]) -> float:
    if delta is None:
        delta = cfg.common_discount()
        if delta is None:
            raise InvalidConfigError("clients disagree on the discount factor; pass one explicitly")
    if not 0 <= delta < 1:
        raise ValueError(f"discount factor must lie in [0, 1), got {delta}")
    return float(delta)


def optimal_spne(eq: StageEquilibrium, cfg: GameConfig, delta: Optional[float] = None,
                 step: float = 1.0, chunk: int = 512,
                 coop: Optional[CooperativeStrategy] = None) -> SpneResult:
    """Largest self-enforcing converted level, scanning down from ``x_th``.

    Candidate levels are ``x_th, x_th - step, ...`` while positive; the first
    one whose global threshold is at most ``delta`` wins. Thresholds are not
    monotone in the level, so the scan does not stop early on a miss.
    """
    delta = resolve_delta(cfg, delta)
    if step <= 0:
        raise ValueError("step must be positive")
    if coop is None:
        coop = build_coop(eq, cfg)
    x_ne = eq.profile.x
    if coop.l is None:
        return SpneResult(eq.profile, 0.0, 0.0, False, eq.profile.total(), None, None, coop.variant)

    lo, hi = coop.l - 1, _free_rider_span(eq)
    count = math.ceil(coop.x_th / step)
    for start in range(0, count, chunk):
        levels = coop.x_th - step * np.arange(start, min(start + chunk, count))
        levels = levels[levels > 0]
        X = np.tile(x_ne, (len(levels), 1))
        X[:, lo:hi] = levels[:, None]
        worst = _thresholds(X, x_ne, cfg)[3].max(axis=1)
        ok = np.nonzero(delta >= worst)[0]
        if len(ok):
            i = ok[0]
            profile = StrategyProfile(X[i])
            return SpneResult(profile, float(levels[i]), float(worst[i]), True,
                              profile.total(), coop.l, coop.x_th, coop.variant)
    return SpneResult(eq.profile, 0.0, 0.0, False, eq.profile.total(), coop.l, coop.x_th,
                      coop.variant)


@dataclass(frozen=True)
class Deviation:
    client: int  # 0-based roster position
    slot: int
    level: float


def simulate_repeated(cfg: GameConfig, coop, eq: StageEquilibrium, delta: float,
                      horizon: int, deviation: Optional[Deviation] = None) -> np.ndarray:
    """Discounted cost of every client under grim trigger.

    Slots ``0..horizon-1`` are played explicitly; the stream after that is
    constant (cooperation, or the stage equilibrium once anyone deviated)
    and is summed in closed form.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    x_coop = _profile_of(coop)
    x_ne = eq.profile.x
    if deviation is not None:
        if not 0 <= deviation.slot < horizon:
            raise ValueError("deviation slot must fall inside the horizon")
        if not 0 <= deviation.level <= cfg.caps[deviation.client]:
            raise ValueError(f"deviation level {deviation.level} outside [0, D]")

    coop_costs = all_costs(x_coop, cfg)
    ne_costs = all_costs(x_ne, cfg)
    slots = []
    punished = False
    for t in range(horizon):
        if punished:
            slots.append(ne_costs)
        elif deviation is not None and t == deviation.slot:
            x = x_coop.copy()
            x[deviation.client] = deviation.level
            slots.append(all_costs(x, cfg))
            punished = True
        else:
            slots.append(coop_costs)
    tail = ne_costs if punished else coop_costs
    table = np.array(slots)
    return np.array([discounted_cost(table[:, n], delta, tail[n]) for n in range(cfg.n_clients)])
