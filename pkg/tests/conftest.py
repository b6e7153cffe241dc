import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from chi_forge.model import reference_params
from chi_forge.protocol import chi_protocol

settings.register_profile("default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def params():
    return reference_params()


@pytest.fixture(scope="session")
def proto(params):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return chi_protocol(params)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_state(rng, dim):
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return v / np.linalg.norm(v)


def random_hermitian(rng, dim, scale=1.0):
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return scale * (a + a.conj().T) / 2


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
