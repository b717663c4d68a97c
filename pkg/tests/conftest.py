import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from varexp import exponent as ex
from varexp.grid import Grid

settings.register_profile("default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=300, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def grid64():
    return Grid.unit(64)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_field(grid, rng, lo=1.3, hi=4.0):
    return ex.ExponentField(grid, rng.uniform(lo, hi, grid.n_cells))


def interior_field(grid, rng, scale=1.0):
    u = scale * rng.standard_normal(grid.n_cells)
    u[grid.boundary] = 0.0
    return u


def sine_mode(grid, k=1):
    u = np.prod(np.sin(k * np.pi * grid.coords), axis=1)
    u[grid.boundary] = 0.0
    return u


EXPONENT_PAIRS = {
    "quadratic": (lambda g: ex.constant(g, 2.0), lambda g: ex.constant(g, 2.0)),
    "sine_affine": (lambda g: ex.sine(g, 2.5, 0.4), lambda g: ex.affine(g, 2.0, 0.5)),
    "subquadratic": (lambda g: ex.affine(g, 1.6, 0.3), lambda g: ex.sine(g, 2.8, -0.6)),
}


_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def criterion(request):
    """Record one pass/fail line for an acceptance criterion."""
    store = request.config.stash.setdefault(_ACCEPTANCE, {})

    def record(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} | {detail}"
        store[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    store = config.stash.get(_ACCEPTANCE, {})
    if store:
        terminalreporter.section("acceptance criteria")
        for number in sorted(store):
            terminalreporter.write_line(store[number])
