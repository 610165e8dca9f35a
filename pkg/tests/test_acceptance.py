"""Acceptance checks; each test prints one PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v`` or
``python3 tests/test_acceptance.py``.
"""

import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))
from conftest import random_config  # noqa: E402
from fedgame import (Deviation, analyze_deviations, best_response_dynamics, build_coop,  # noqa: E402
                     compute_bounds, distributed_strategy, optimal_spne, simulate_repeated,
                     solve_ne, total_cost, verify_ne)
from fedgame.cli import main  # noqa: E402
from fedgame.core import all_costs, cost_curvature, cost_slope, make_config  # noqa: E402
from fedgame.cooperation import coop_profile, implicit_residual  # noqa: E402
from fedgame.sweep import Scenario, SweepSpec, run_scenario  # noqa: E402


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}")
        return ok
    return emit


def reference_spne(n, delta=0.8):
    t0 = time.perf_counter()
    cfg = Scenario(n_clients=n).config()
    eq = solve_ne(cfg)
    res = optimal_spne(eq, cfg, delta)
    return cfg, eq, res, time.perf_counter() - t0


def test_criterion_1_n200_free_riders(report):
    _, eq, res, secs = reference_spne(200)
    got = (eq.k, res.l, eq.free_riders, res.free_riders)
    ok = got == (138, 2, 137, 1) and secs < 1.0
    cut = 1 - res.free_riders / eq.free_riders
    assert report(1, ok, f"(k, l, fr_ne, fr_spne) = {got}, reduction {cut:.1%}, {secs:.3f}s")


def test_criterion_2_n181_ratio(report):
    _, eq, res, secs = reference_spne(181)
    total_ne = eq.profile.total()
    rd = res.objective / total_ne
    ok = (eq.m == 120 and total_ne == 610_000 and abs(res.objective / 1_112_299 - 1) <= 1e-3
          and abs(rd - 1.823) <= 0.002 and secs < 1.0)
    assert report(2, ok, f"m={eq.m}, NE total {total_ne:.0f}, SPNE total {res.objective:.1f}, "
                         f"R_d={rd:.4f}, {secs:.3f}s")


def test_criterion_3_delta_saturation(report):
    t0 = time.perf_counter()
    scn = Scenario(sweep=SweepSpec("delta", 0.50, 0.99, 0.01))
    rows = run_scenario(scn)
    secs = time.perf_counter() - t0
    rd = np.array([r.rd for r in rows])
    deltas = np.array([r.value for r in rows])
    tail = rd[deltas >= 0.87 - 1e-9]
    ok = (len(rows) == 50 and np.all(np.diff(rd) >= -1e-12)
          and np.all(np.abs(tail - 1.96) <= 0.01) and np.ptp(tail) <= 1e-12 and secs < 10)
    assert report(3, ok, f"{len(rows)} points, R_d on [0.87, 0.99] = {tail.min():.5f}.."
                         f"{tail.max():.5f}, nondecreasing={bool(np.all(np.diff(rd) >= -1e-12))}, "
                         f"{secs:.2f}s")


def test_criterion_4_equilibrium_properties(report):
    rng = np.random.default_rng(4)
    t0 = time.perf_counter()
    failures = []
    dynamics_runs = 0
    for i in range(10_000):
        cfg = random_config(rng, n_max=50)
        eq = solve_ne(cfg)
        x = eq.profile.x
        D = cfg.uniform_cap
        if not verify_ne(eq.profile, cfg, grid=1000, tol=1e-6).ok:
            failures.append((i, "verify_ne"))
        if not x[-1] > 0:
            failures.append((i, "last client idle"))
        dist = [distributed_strategy(n + 1, cfg.n_clients, c, cfg.iterations, D)
                for n, c in enumerate(cfg.clients)]
        if np.max(np.abs(np.array(dist) - x)) > 1e-9 * D:
            failures.append((i, "distributed"))
        if cfg.strict_order:
            for _ in range(20):
                start = rng.uniform(0, 1, cfg.n_clients) * cfg.caps
                got, _ = best_response_dynamics(cfg, start, tol=1e-8)
                dynamics_runs += 1
                if np.max(np.abs(got.x - x)) >= 1e-5:
                    failures.append((i, "dynamics"))
                    break
    secs = time.perf_counter() - t0
    ok = not failures and secs < 60
    assert report(4, ok, f"10000 configs, {dynamics_runs} dynamics runs, "
                         f"{len(failures)} failures {failures[:3]}, {secs:.1f}s")


def test_criterion_5_derivatives(report):
    rng = np.random.default_rng(5)
    worst1 = worst2 = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 8))
        cfg = make_config(rng.uniform(1, 100, n).tolist(), rng.uniform(0.01, 2, n).tolist(),
                          100.0, int(rng.integers(1, 60)), comm_cost=rng.uniform(0, 5))
        x = rng.uniform(5, 100, n)
        i = int(rng.integers(n))
        h = 1e-3 * x[i]

        def f(v):
            y = x.copy()
            y[i] = v
            return total_cost(i, y, cfg)

        fd1 = (f(x[i] + h) - f(x[i] - h)) / (2 * h)
        fd2 = (f(x[i] + h) - 2 * f(x[i]) + f(x[i] - h)) / h ** 2
        d1, d2 = cost_slope(i, x, cfg), cost_curvature(i, x, cfg)
        worst1 = max(worst1, abs(fd1 - d1) / max(abs(d1), cfg.comp_coeff[i]))
        worst2 = max(worst2, abs(fd2 - d2) / abs(d2))
    ok = worst1 < 1e-4 and worst2 < 1e-4
    assert report(5, ok, f"max relative error first {worst1:.2e}, second {worst2:.2e}")


def test_criterion_6_cooperation(report):
    rng = np.random.default_rng(6)
    count = dominance_bad = bound_bad = 0
    worst_residual = 0.0
    solved = 0
    while count < 1000:
        cfg = random_config(rng, n_max=20)
        eq = solve_ne(cfg)
        coop = build_coop(eq, cfg)
        bounds = compute_bounds(eq, cfg)
        bound_bad += int(np.sum(bounds.lower > bounds.upper))
        if coop.l is None:
            continue
        count += 1
        half = coop_profile(eq, coop.l, coop.x_th / 2)
        if not np.all(all_costs(half, cfg) < all_costs(eq.profile, cfg)):
            dominance_bad += 1
        if coop.x_th < cfg.uniform_cap:
            solved += 1
            worst_residual = max(worst_residual, implicit_residual(coop.x_th, bounds, coop.l, cfg))
    ok = dominance_bad == 0 and bound_bad == 0 and worst_residual < 1e-9
    assert report(6, ok, f"{count} instances ({solved} solved by bisection): dominance failures "
                         f"{dominance_bad}, B>O {bound_bad}, max residual {worst_residual:.2e}")


def _bisect_indifference(cfg, coop, eq, n, level):
    dev = Deviation(n, 0, level)
    lo, hi = 0.0, 1.0 - 1e-12
    while hi - lo > 1e-8:
        mid = 0.5 * (lo + hi)
        stay = simulate_repeated(cfg, coop, eq, mid, 1)[n]
        leave = simulate_repeated(cfg, coop, eq, mid, 1, dev)[n]
        lo, hi = (mid, hi) if leave < stay else (lo, mid)
    return 0.5 * (lo + hi)


def test_criterion_7_deviation_oracle(report):
    rng = np.random.default_rng(7)
    done = above_bad = below_bad = 0
    worst_gap = 0.0
    while done < 200:
        cfg = random_config(rng, n_max=20)
        eq = solve_ne(cfg)
        top = build_coop(eq, cfg)
        if top.l is None:
            continue
        coop = build_coop(eq, cfg, x_coop=top.x_th / 2).profile
        info = analyze_deviations(coop, eq, cfg)
        th = float(info.delta_th.max())
        if not 0.02 <= th <= 0.99:
            continue
        done += 1
        D, G = cfg.uniform_cap, cfg.iterations

        # grid oracle built from the raw cost formula, all clients at once
        delta = th + 1e-3
        x = coop.x
        others = x.sum() - x
        levels = np.linspace(0, D, 1001)
        batch = others[:, None] + levels[None, :]
        with np.errstate(divide="ignore"):
            f_dev = (cfg.rho[:, None] * (1 / np.sqrt(batch * G) + 1 / G)
                     + cfg.comp_coeff[:, None] * levels[None, :])
        f_coop = all_costs(coop, cfg)
        f_pun = all_costs(eq.profile, cfg)
        # deviating in slot t scales both sides by delta**t, so slot 0 covers every slot
        stay = f_coop / (1 - delta)
        leave = f_dev + delta * f_pun[:, None] / (1 - delta)
        if np.any(leave < stay[:, None] - 1e-8 * np.maximum(1, np.abs(stay[:, None]))):
            above_bad += 1

        n = info.binding
        lower = th - 1e-2
        dev = Deviation(n, 0, float(info.x_least[n]))
        if not (simulate_repeated(cfg, coop, eq, lower, 1, dev)[n]
                < simulate_repeated(cfg, coop, eq, lower, 1)[n]):
            below_bad += 1
        worst_gap = max(worst_gap, abs(_bisect_indifference(cfg, coop, eq, n,
                                                              float(info.x_least[n])) - th))
    ok = above_bad == 0 and below_bad == 0 and worst_gap < 1e-4
    assert report(7, ok, f"200 instances: profitable deviations above threshold {above_bad}, "
                         f"unprofitable below {below_bad}, max |analytic - simulated| "
                         f"{worst_gap:.2e}")


def test_criterion_8_determinism(report, tmp_path):
    outs = []
    for run in range(2):
        path = tmp_path / f"run{run}.csv"
        code = main(["sweep", "--axis", "N", "--from", "10", "--to", "200", "--step", "1",
                     "--format", "csv", "--output", str(path)])
        assert code == 0
        outs.append(path.read_bytes())
    seeded = [tmp_path / f"seeded{run}.csv" for run in range(2)]
    cfg = tmp_path / "seeded.json"
    cfg.write_text('{"generator": "rho_distribution", "seed": 11, '
                   '"rho_distribution": {"low_fraction": 0.4}}')
    for path in seeded:
        assert main(["sweep", "--config", str(cfg), "--axis", "N", "--from", "10", "--to", "200",
                     "--output", str(path)]) == 0
    ok = outs[0] == outs[1] and seeded[0].read_bytes() == seeded[1].read_bytes()
    rows = outs[0].decode().count("\n") - 1
    assert report(8, ok, f"reference and seeded N sweeps ({rows} rows each) byte-identical")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
