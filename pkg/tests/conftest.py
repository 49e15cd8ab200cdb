"""Shared fixtures and the acceptance summary hook.

The toy bundle is expensive enough to build once per session; everything that
needs a dataset conditions on it. Acceptance tests push one line per criterion
into ACCEPTANCE_LINES, and the terminal summary hook prints them after the
run so the pass/fail table is visible without -s.
"""

from __future__ import annotations

import numpy as np
import pytest

from scenediff.datagen import toy_support
from scenediff.graph_diffusion import build_graph_schedule

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def toy():
    return toy_support(seed=0)


@pytest.fixture(scope="session")
def toy_schedule(toy):
    """Default independent-mask schedule at T = 25 for unit-level checks."""
    return build_graph_schedule(toy.config, T=25)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
