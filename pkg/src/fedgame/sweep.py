"""Scenarios, parameter sweeps and the two headline metrics.

For every axis value a sweep solves the stage equilibrium, builds the
cooperative profile, runs the optimal-SPNE scan and records

* ``nf``: free riders removed (equilibrium count minus SPNE count)
* ``rd``: total SPNE data divided by total equilibrium data

Scenario files are JSON; see README.md for the schema and units.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .core import ClientProfile, GameConfig, all_costs, make_config
from .errors import FedGameError, InvalidConfigError
from .spne import optimal_spne
from .stage import solve_ne, verify_ne

PAPER_DEFAULT = dict(n_clients=100, data_cap=10_000.0, iterations=50,
                     comp_coeff=0.985e-8, delta=0.8)

AXES = ("N", "D", "G", "E", "delta")
GENERATORS = ("paper_default", "explicit", "rho_distribution")
CSV_HEADER = ("axis", "value", "fr_ne", "fr_spne", "nf", "total_ne", "total_spne",
              "rd", "case", "k", "m", "l", "delta_th")


class VerificationError(FedGameError):
    pass


@dataclass(frozen=True)
class RhoDistribution:
    """Valuations split into a low and a high uniform band.

    Bands are half-open on the left, e.g. ``(0, 50]``.
    """

    low_fraction: float
    low_range: tuple = (0.0, 50.0)
    high_range: tuple = (50.0, 100.0)

    def draw(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if not 0 <= self.low_fraction <= 1:
            raise InvalidConfigError("low_fraction must lie in [0, 1]")
        n_low = int(round(self.low_fraction * n))

        def band(lo, hi, size):
            return hi - rng.uniform(0.0, hi - lo, size)

        return np.concatenate([band(*self.low_range, n_low), band(*self.high_range, n - n_low)])


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    start: float
    stop: float
    step: float

    def __post_init__(self):
        if self.axis not in AXES:
            raise InvalidConfigError(f"unknown sweep axis {self.axis!r}; choose from {AXES}")
        if self.step <= 0 or self.stop < self.start:
            raise InvalidConfigError("sweep needs step > 0 and stop >= start")

    def values(self) -> List[float]:
        count = int(math.floor((self.stop - self.start) / self.step + 1e-9)) + 1
        vals = [self.start + i * self.step for i in range(count)]
        if self.axis in ("N", "G"):
            vals = [int(round(v)) for v in vals]
        return vals


@dataclass(frozen=True)
class Scenario:
    """A family of game configurations plus an optional sweep axis.

    Units: ``data_cap`` in samples, ``comp_coeff`` in cost units per sample,
    ``comm_cost`` and ``payment`` in cost units, valuations in cost units per
    unit of accuracy loss. Every field not given keeps the reference value.
    """

    generator: str = "paper_default"
    n_clients: int = PAPER_DEFAULT["n_clients"]
    data_cap: float = PAPER_DEFAULT["data_cap"]
    iterations: int = PAPER_DEFAULT["iterations"]
    comp_coeff: float = PAPER_DEFAULT["comp_coeff"]
    delta: float = PAPER_DEFAULT["delta"]
    comm_cost: float = 0.0
    payment: float = 0.0
    clients: Optional[tuple] = None
    rho_distribution: Optional[RhoDistribution] = None
    sweep: Optional[SweepSpec] = None
    seed: int = 0
    grid_step: float = 1.0

    def __post_init__(self):
        if self.generator not in GENERATORS:
            raise InvalidConfigError(f"unknown generator {self.generator!r}")
        if self.generator == "explicit" and not self.clients:
            raise InvalidConfigError("the explicit generator needs a client list")
        if self.generator == "rho_distribution" and self.rho_distribution is None:
            raise InvalidConfigError("the rho_distribution generator needs its band settings")
        if self.generator == "explicit" and self.sweep is not None and self.sweep.axis == "N":
            raise InvalidConfigError("an explicit roster cannot be swept over N")

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        data = dict(data)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidConfigError(f"unknown scenario keys: {sorted(unknown)}")
        if data.get("clients") is not None:
            data["clients"] = tuple(ClientProfile(**c) for c in data["clients"])
        if data.get("rho_distribution") is not None:
            rd = dict(data["rho_distribution"])
            for key in ("low_range", "high_range"):
                if key in rd:
                    rd[key] = tuple(rd[key])
            data["rho_distribution"] = RhoDistribution(**rd)
        if data.get("sweep") is not None:
            sw = dict(data["sweep"])
            data["sweep"] = SweepSpec(sw["axis"], sw["from"], sw["to"], sw.get("step", 1))
        try:
            return cls(**data)
        except TypeError as exc:
            raise InvalidConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "Scenario":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        out = asdict(self)
        if self.sweep is not None:
            out["sweep"] = {"axis": self.sweep.axis, "from": self.sweep.start,
                            "to": self.sweep.stop, "step": self.sweep.step}
        return out

    def at(self, axis: str, value) -> "Scenario":
        """Copy of the scenario with one axis pinned to ``value``."""
        name = {"N": "n_clients", "D": "data_cap", "G": "iterations",
                "E": "comp_coeff", "delta": "delta"}[axis]
        return replace(self, **{name: value})

    def config(self) -> GameConfig:
        if self.generator == "explicit":
            # an explicit roster keeps its own caps, costs and discounts
            return GameConfig(tuple(self.clients), self.iterations, self.payment)
        n = int(self.n_clients)
        if self.generator == "paper_default":
            rho = [i * 100.0 / n for i in range(1, n + 1)]
        else:
            rho = self.rho_distribution.draw(n, np.random.default_rng(self.seed)).tolist()
        return make_config(rho, self.comp_coeff, self.data_cap, self.iterations,
                           comm_cost=self.comm_cost, payment=self.payment, discount=self.delta)


@dataclass
class MetricsRow:
    axis: str
    value: float
    fr_ne: Optional[int] = None
    fr_spne: Optional[int] = None
    nf: Optional[int] = None
    total_ne: Optional[float] = None
    total_spne: Optional[float] = None
    rd: Optional[float] = None
    case: str = ""
    k: Optional[int] = None
    m: Optional[int] = None
    l: Optional[int] = None
    delta_th: Optional[float] = None
    error: Optional[str] = None


def check_result(cfg: GameConfig, eq, profile) -> None:
    """Raise VerificationError unless ``eq`` passes the grid equilibrium check
    and ``profile`` costs no client more than the equilibrium does."""
    check = verify_ne(eq.profile, cfg)
    if not check.ok:
        raise VerificationError(f"equilibrium check failed: client at position "
                                f"{check.violator} gains {check.worst_gain}")
    f_ne = all_costs(eq.profile, cfg)
    f_os = all_costs(profile, cfg)
    if np.any(f_os > f_ne + 1e-9 * np.maximum(1.0, np.abs(f_ne))):
        raise VerificationError("profile raises some client's cost above equilibrium")


def metrics(eq, result, axis: str = "", value=None) -> MetricsRow:
    fr_ne, fr_os = eq.free_riders, result.free_riders
    total_ne, total_os = eq.profile.total(), result.profile.total()
    return MetricsRow(axis, value, fr_ne, fr_os, fr_ne - fr_os, total_ne, total_os,
                      total_os / total_ne, eq.case.value, eq.k, eq.m, result.l,
                      result.delta_th)


def evaluate(cfg: GameConfig, delta: float, step: float = 1.0, verify: bool = False,
             axis: str = "", value=None) -> MetricsRow:
    eq = solve_ne(cfg)
    result = optimal_spne(eq, cfg, delta, step=step)
    if verify:
        check_result(cfg, eq, result.profile)
    return metrics(eq, result, axis, value)


def _row_for(scn: Scenario, axis: str, value, verify: bool) -> MetricsRow:
    try:
        pinned = scn.at(axis, value)
        if scn.generator == "explicit" and axis in ("D", "delta", "E"):
            cfg = _pin_explicit(scn, axis, value)
        else:
            cfg = pinned.config()
        return evaluate(cfg, pinned.delta, scn.grid_step, verify, axis, value)
    except (FedGameError, ValueError) as exc:
        return MetricsRow(axis, value, case="error", error=f"{type(exc).__name__}: {exc}")


def _pin_explicit(scn: Scenario, axis: str, value) -> GameConfig:
    attr = {"D": "data_cap", "delta": "discount", "E": "comp_coeff"}[axis]
    clients = tuple(replace(c, **{attr: value}) for c in scn.clients)
    return GameConfig(clients, scn.iterations, scn.payment)


def worker_count() -> int:
    env = os.environ.get("FEDGAME_THREADS")
    cpus = os.cpu_count() or 1
    if env:
        try:
            return max(1, min(int(env), cpus))
        except ValueError:
            raise InvalidConfigError(f"FEDGAME_THREADS must be an integer, got {env!r}")
    return cpus


def run_scenario(scn: Scenario, verify: bool = False) -> List[MetricsRow]:
    """One row per sweep value, in axis order.

    Without a sweep a single row for the base scenario is produced. Failing
    values yield an error row and the sweep continues.
    """
    if scn.sweep is None:
        return [_row_for(scn, "N", scn.n_clients if scn.generator != "explicit"
                         else len(scn.clients), verify)]
    axis = scn.sweep.axis
    values = scn.sweep.values()
    workers = min(worker_count(), max(1, len(values)))
    if workers == 1:
        return [_row_for(scn, axis, v, verify) for v in values]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda v: _row_for(scn, axis, v, verify), values))


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".10g")
    return str(v)


def _json_value(v):
    if isinstance(v, (float, np.floating)):
        return float(format(float(v), ".10g"))
    if isinstance(v, np.integer):
        return int(v)
    return v


def render(rows: Sequence[MetricsRow], fmt: str = "csv") -> str:
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in rows:
            writer.writerow([_fmt(getattr(row, key)) for key in CSV_HEADER])
        return buf.getvalue()
    if fmt == "json":
        payload = []
        for row in rows:
            obj = {key: _json_value(getattr(row, key)) for key in CSV_HEADER}
            if row.error:
                obj["error"] = row.error
            payload.append(obj)
        return json.dumps(payload, indent=2) + "\n"
    raise ValueError(f"unknown output format {fmt!r}")


def emit(rows: Sequence[MetricsRow], fmt: str = "csv", path=None,
         metadata: Optional[dict] = None) -> str:
    """Write rows as CSV or JSON to ``path`` (stdout for None or ``-``).

    ``metadata`` (seed, scenario) goes to a ``<path>.meta.json`` sidecar so
    the data file keeps its fixed layout.
    """
    text = render(rows, fmt)
    if path is None or str(path) == "-":
        sys.stdout.write(text)
        return text
    path = Path(path)
    try:
        path.write_text(text)
        if metadata is not None:
            Path(f"{path}.meta.json").write_text(json.dumps(metadata, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc
    return text
