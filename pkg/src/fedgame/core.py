"""Cost model of one cross-silo FL process.

A client that trains on ``x_n`` of its samples, while the whole federation
trains on ``B = sum(x)`` samples over ``G`` iterations, pays

    F_n = rho_n * (1/sqrt(B*G) + 1/G) + E_n * x_n + C_n + p

where the first term is the accuracy-loss bound of the global model. A total
batch of zero makes the loss unbounded; that case is reported as ``math.inf``,
which compares greater than every finite cost.

Client positions passed to the functions here are 0-based indices into
``GameConfig.clients``, which is always sorted by ascending ``rho/E``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import EmptyRosterError, InvalidConfigError

INF = math.inf


@dataclass(frozen=True)
class ClientProfile:
    """Economic parameters of one client.

    Attributes:
        rho: valuation of model accuracy (cost units per unit of accuracy loss)
        comp_coeff: computation cost per training sample
        comm_cost: fixed communication cost per FL process
        data_cap: number of local samples available
        discount: per-slot discount factor in [0, 1)
    """

    rho: float
    comp_coeff: float
    comm_cost: float = 0.0
    data_cap: float = 1.0
    discount: float = 0.0

    def __post_init__(self):
        checks = (
            (self.rho > 0, "rho must be positive"),
            (self.comp_coeff > 0, "comp_coeff must be positive"),
            (self.comm_cost >= 0, "comm_cost must be nonnegative"),
            (self.data_cap > 0, "data_cap must be positive"),
            (0 <= self.discount < 1, "discount must lie in [0, 1)"),
        )
        for ok, msg in checks:
            if not ok:
                raise InvalidConfigError(f"{msg}: {self}")
        if not math.isfinite(self.valuation_ratio()):
            raise InvalidConfigError(f"rho/comp_coeff is not finite: {self}")

    def valuation_ratio(self) -> float:
        return self.rho / self.comp_coeff


@dataclass(frozen=True)
class GameConfig:
    """Client roster plus the parameters shared by every client.

    The roster is re-sorted by ascending ``rho/E`` on construction (stable, so
    ties keep input order). ``order[i]`` is the input position of the client
    now stored at position ``i``.
    """

    clients: tuple
    iterations: int
    payment: float = 0.0
    order: tuple = field(init=False, repr=False)

    def __post_init__(self):
        clients = tuple(self.clients)
        if not clients:
            raise EmptyRosterError("the client roster is empty")
        if int(self.iterations) != self.iterations or self.iterations < 1:
            raise InvalidConfigError(f"iterations must be a positive integer, got {self.iterations}")
        if self.payment < 0:
            raise InvalidConfigError(f"payment must be nonnegative, got {self.payment}")
        order = sorted(range(len(clients)), key=lambda i: clients[i].valuation_ratio())
        object.__setattr__(self, "clients", tuple(clients[i] for i in order))
        object.__setattr__(self, "order", tuple(order))
        object.__setattr__(self, "iterations", int(self.iterations))

    @property
    def n_clients(self) -> int:
        return len(self.clients)

    @cached_property
    def rho(self) -> np.ndarray:
        return _frozen([c.rho for c in self.clients])

    @cached_property
    def comp_coeff(self) -> np.ndarray:
        return _frozen([c.comp_coeff for c in self.clients])

    @cached_property
    def comm_cost(self) -> np.ndarray:
        return _frozen([c.comm_cost for c in self.clients])

    @cached_property
    def caps(self) -> np.ndarray:
        return _frozen([c.data_cap for c in self.clients])

    @cached_property
    def ratios(self) -> np.ndarray:
        return _frozen([c.valuation_ratio() for c in self.clients])

    @cached_property
    def h(self) -> np.ndarray:
        """Unconstrained total-data target of every client."""
        return _frozen([h_value(c, self.iterations) for c in self.clients])

    @cached_property
    def strict_order(self) -> bool:
        return bool(np.all(np.diff(self.ratios) > 0))

    @property
    def uniform_cap(self) -> Optional[float]:
        caps = self.caps
        return float(caps[0]) if np.all(caps == caps[0]) else None

    def common_discount(self) -> Optional[float]:
        deltas = {c.discount for c in self.clients}
        return deltas.pop() if len(deltas) == 1 else None

    def with_discount(self, delta: float) -> "GameConfig":
        return replace(self, clients=tuple(replace(c, discount=delta) for c in self.clients))


def _frozen(values) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class StrategyProfile:
    """Training-data amounts chosen by every client, in roster order."""

    x: np.ndarray

    def __post_init__(self):
        arr = np.array(self.x, dtype=float)
        if arr.ndim != 1:
            raise ValueError("a strategy profile is a 1-d vector")
        if np.any(arr < 0) or not np.all(np.isfinite(arr)):
            raise ValueError("strategy amounts must be finite and nonnegative")
        arr.setflags(write=False)
        object.__setattr__(self, "x", arr)

    def total(self) -> float:
        return float(self.x.sum())

    def within_caps(self, cfg: GameConfig, atol: float = 0.0) -> bool:
        return len(self.x) == cfg.n_clients and bool(np.all(self.x <= cfg.caps + atol))

    def replace_entry(self, n: int, value: float) -> "StrategyProfile":
        arr = self.x.copy()
        arr[n] = value
        return StrategyProfile(arr)

    def __len__(self):
        return len(self.x)

    def __getitem__(self, n):
        return self.x[n]

    def __iter__(self):
        return iter(self.x.tolist())

    def __eq__(self, other):
        if not isinstance(other, StrategyProfile):
            return NotImplemented
        return np.array_equal(self.x, other.x)

    def __repr__(self):
        return f"StrategyProfile({self.x.tolist()})"


def as_array(profile) -> np.ndarray:
    if isinstance(profile, StrategyProfile):
        return profile.x
    return np.asarray(profile, dtype=float)


def accuracy_loss(total_data: float, iterations: int) -> float:
    """Bound on the global model's accuracy loss; ``inf`` for an empty batch."""
    if iterations < 1:
        raise InvalidConfigError(f"iterations must be >= 1, got {iterations}")
    if total_data < 0:
        raise ValueError(f"total data must be nonnegative, got {total_data}")
    if total_data == 0:
        return INF
    return 1.0 / math.sqrt(total_data * iterations) + 1.0 / iterations


def stage_cost(rho: float, comp_coeff: float, own: float, total: float,
               iterations: int, fixed: float = 0.0) -> float:
    """Per-slot cost from raw parameters; ``fixed`` holds C_n + p."""
    loss = accuracy_loss(total, iterations)
    if loss == INF:
        return INF if rho > 0 else comp_coeff * own + fixed
    return rho * loss + comp_coeff * own + fixed


def total_cost(n: int, profile, cfg: GameConfig) -> float:
    x = as_array(profile)
    if not 0 <= n < cfg.n_clients:
        raise IndexError(f"client index {n} out of range for {cfg.n_clients} clients")
    c = cfg.clients[n]
    return stage_cost(c.rho, c.comp_coeff, float(x[n]), float(x.sum()),
                      cfg.iterations, c.comm_cost + cfg.payment)


def all_costs(profile, cfg: GameConfig) -> np.ndarray:
    """Vector of every client's cost at ``profile``."""
    x = as_array(profile)
    total = float(x.sum())
    loss = accuracy_loss(total, cfg.iterations)
    if loss == INF:
        return np.full(cfg.n_clients, INF)
    return cfg.rho * loss + cfg.comp_coeff * x + cfg.comm_cost + cfg.payment


def cost_slope(n: int, profile, cfg: GameConfig) -> float:
    """dF_n/dx_n, i.e. E_n - rho_n / (2 sqrt(G B^3))."""
    total = as_array(profile).sum()
    c = cfg.clients[n]
    return c.comp_coeff - c.rho / (2.0 * math.sqrt(cfg.iterations * total ** 3))


def cost_curvature(n: int, profile, cfg: GameConfig) -> float:
    """d2F_n/dx_n2 = 3 rho_n / (4 sqrt(G B^5)); positive whenever B > 0."""
    total = as_array(profile).sum()
    return 3.0 * cfg.clients[n].rho / (4.0 * math.sqrt(cfg.iterations * total ** 5))


def h_value(client: ClientProfile, iterations: int) -> float:
    return (client.rho ** 2 / (4.0 * iterations * client.comp_coeff ** 2)) ** (1.0 / 3.0)


def best_response(n: int, others_total: float, cfg: GameConfig) -> float:
    if others_total < 0:
        raise ValueError("others_total must be nonnegative")
    return min(float(cfg.caps[n]), max(float(cfg.h[n]) - others_total, 0.0))


def discounted_cost(per_slot_costs: Iterable[float], delta: float,
                    tail: Optional[float] = None) -> float:
    """Discounted sum of a cost stream.

    ``per_slot_costs`` is an explicit prefix starting at slot 0. When ``tail``
    is given the stream continues with that constant cost forever after the
    prefix, and the tail is summed in closed form.
    """
    if not 0 <= delta < 1:
        raise ValueError(f"discount factor must lie in [0, 1), got {delta}")
    total = 0.0
    weight = 1.0
    for cost in per_slot_costs:
        total += weight * cost
        weight *= delta
    if tail is not None:
        total += tail * weight / (1.0 - delta)
    return total


def inv_sqrt_gap(a, b):
    """1/sqrt(a) - 1/sqrt(b) without cancellation, for positive a, b."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ra, rb = np.sqrt(a), np.sqrt(b)
    return (b - a) / (ra * rb * (ra + rb))


def make_config(rho: Sequence[float], comp_coeff, data_cap, iterations: int,
                comm_cost=0.0, payment: float = 0.0, discount=0.0) -> GameConfig:
    """Build a config from parallel parameter lists; scalars broadcast."""
    n = len(rho)

    def spread(v):
        return list(v) if np.ndim(v) else [v] * n

    clients = [
        ClientProfile(float(r), float(e), float(c), float(d), float(dl))
        for r, e, c, d, dl in zip(rho, spread(comp_coeff), spread(comm_cost),
                                  spread(data_cap), spread(discount))
    ]
    return GameConfig(tuple(clients), iterations, payment)
