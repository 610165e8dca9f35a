import math

import numpy as np
import pytest

from fedgame import make_config


def rho_for(h, comp_coeff, iterations):
    """Valuation that gives target ``h`` (inverse of the h formula)."""
    return 2.0 * comp_coeff * math.sqrt(iterations) * h ** 1.5


def config_from_h(h, data_cap, iterations=1, comp_coeff=0.5, **kw):
    rho = [rho_for(v, comp_coeff, iterations) for v in h]
    return make_config(rho, comp_coeff, data_cap, iterations, **kw)


def random_config(rng, n_max=50, n_min=2):
    """Uniform-cap instance whose targets straddle all equilibrium shapes."""
    n = int(rng.integers(n_min, n_max + 1))
    cap = float(rng.uniform(1.0, 100.0))
    G = int(rng.integers(1, 100))
    comp = rng.uniform(0.05, 2.0, n)
    low = n * cap if rng.random() < 0.03 else 0.01  # occasionally everyone contributes
    h = np.sort(rng.uniform(low, 1.2 * n * cap, n))
    rho = 2.0 * comp * math.sqrt(G) * h ** 1.5
    return make_config(rho.tolist(), comp.tolist(), cap, G)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def three_client():
    # h = (5, 15, 25)
    return make_config([11.180339887498949, 58.09475019311125, 125.0], 0.5, 10.0, 1)


@pytest.fixture
def boundary_three():
    return config_from_h([5, 8, 35], 10.0)


@pytest.fixture
def coop_three():
    return config_from_h([7, 9, 35], 10.0)
