import warnings
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import settings

from cartsim.emission import EmissionWarning, TimeGrid, simulate_emission, synthetic_record
from cartsim.experiments import common_grid, load_preset

settings.register_profile("cartsim", deadline=None, max_examples=40, derandomize=True)
settings.load_profile("cartsim")


def quiet_emission(cfg, grid=None, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", EmissionWarning)
        return simulate_emission(cfg, grid, **kw)


def random_record(rng: np.random.Generator, n: int = 64, reexcitation: bool = True, t1: float = 2.0):
    """Smooth random four-channel record with an optional delay density."""
    grid = TimeGrid(0.0, t1, n)
    t = grid.times
    env = np.exp(-((t - rng.uniform(0.3, 1.2)) / rng.uniform(0.2, 0.6)) ** 2)
    ch = np.array([env * (rng.normal() + 1j * rng.normal()) * np.exp(1j * rng.normal() * t) for _ in range(4)])
    ch[[1, 3]] *= rng.uniform(0.0, 0.7)
    ch /= np.sqrt((np.abs(ch) ** 2 @ grid.weights()).sum())
    dens = rng.uniform(0, 1) * np.exp(-t / rng.uniform(0.2, 1.0)) if reexcitation else None
    return synthetic_record(ch, grid, dens)


@pytest.fixture(scope="session")
def generic():
    return load_preset("generic").node


@pytest.fixture(scope="session")
def generic_records(generic):
    """Generic-node records at delta = 0, kappa, 2 kappa on one grid (1024 points)."""
    nodes = {d: generic.with_delta(d * generic.kappa) for d in (0.0, 0.5, 1.0, 2.0)}
    grid = common_grid(list(nodes.values()), 1024)
    return {d: quiet_emission(c, grid) for d, c in nodes.items()}


@pytest.fixture(scope="session")
def polarization_records(generic):
    """Polarization-encoded generic records at delta = 0 and kappa (1024 points)."""
    node = replace(generic, encoding="polarization")
    nodes = {d: node.with_delta(d * generic.kappa) for d in (0.0, 1.0)}
    grid = common_grid(list(nodes.values()), 1024)
    return {d: quiet_emission(c, grid) for d, c in nodes.items()}


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
