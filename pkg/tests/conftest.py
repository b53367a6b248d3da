"""Shared fixtures. Expensive objects are built once per session."""

from __future__ import annotations

import math
import time

import numpy as np
import pytest

from pspinamp.hamiltonian import from_tensors
from pspinamp.mixture import Mixture


@pytest.fixture
def sk():
    return Mixture.sk()


@pytest.fixture
def ones_fixture():
    """n = 2 SK instance with every entry of G equal to one."""
    return from_tensors(Mixture.sk(), {2: np.ones((2, 2))})


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: list[str] = []
TIMINGS: dict[str, float] = {}


@pytest.fixture(scope="session")
def sk_minimizer():
    """Converged SK minimizer at 40 knots, shared by the tests that need it."""
    from pspinamp.variational import minimize_parisi

    t0 = time.perf_counter()
    rep = minimize_parisi(Mixture.sk(), 40)
    TIMINGS["sk_minimizer"] = time.perf_counter() - t0
    return rep


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def rel_err(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


SQRT2 = math.sqrt(2.0)
