import numpy as np
import pytest

from htcp.families import Exponential, ParetoLomax
from htcp.kernel import GridDensity, discretize


def random_grid(rng, n_cells=64, origin=None, step=None, defect=None):
    """Random sub-probability cell density with a random defect."""
    step = step if step is not None else float(rng.choice([0.01, 0.05, 0.1, 0.25]))
    origin = origin if origin is not None else step * int(rng.integers(-20, 20))
    raw = rng.random(n_cells) * (rng.random(n_cells) < 0.8)
    raw[0] += 1e-3
    mass = rng.uniform(0.3, 1.0)
    values = raw / raw.sum() * mass / step
    if defect is None:
        defect = rng.uniform(0.0, 1.0 - mass)
    return GridDensity(origin, step, values, defect)


@pytest.fixture(scope="session")
def pareto_grid():
    """pareto(2.5) on [0, 2000) at step 0.05."""
    return discretize(ParetoLomax(2.5, 1.0), 0.0, 0.05, 40000)


@pytest.fixture(scope="session")
def exp_grid():
    return discretize(Exponential(1.0), 0.0, 0.05, 40000)
