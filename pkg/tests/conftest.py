import dataclasses
from pathlib import Path

import numpy as np
import pytest

from sgalm.config import load_config
from sgalm.model import ChannelSet, Problem

ROOT = Path(__file__).resolve().parents[1]
DESK_CONFIG = ROOT / "configs" / "desk.cfg"

# acceptance lines collected across the session, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def desk_run():
    return load_config(DESK_CONFIG)


def desk_with(run, **changes):
    return dataclasses.replace(run, scenario=dataclasses.replace(run.scenario, **changes))


def random_channels(rng, M, K, N, scale=1.0, max_power=1.0):
    H = scale * (rng.standard_normal((M, K)) + 1j * rng.standard_normal((M, K))) / np.sqrt(2)
    G = scale * (rng.standard_normal((M, N)) + 1j * rng.standard_normal((M, N))) / np.sqrt(2)
    return ChannelSet(H, G, max_power)


def random_problem(rng, M=5, K=2, N=2, noise=0.1, omega=None, gamma=None):
    ch = random_channels(rng, M, K, N)
    Omega = np.zeros(N) if omega is None else np.broadcast_to(omega, (N,)).astype(float)
    Gamma = np.zeros(K) if gamma is None else np.broadcast_to(gamma, (K,)).astype(float)
    return Problem(ch, noise, Omega, Gamma)
