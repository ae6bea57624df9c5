import math

import numpy as np
import pytest

from pnsdecay.spectral import BoxGrid, transform_forward


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def grid2():
    return BoxGrid(2, 32, 2 * math.pi)


@pytest.fixture
def box64():
    # big enough to resolve four blocks below k = 0
    return BoxGrid(2, 64, 64.0)


def random_field(grid, rng, components=1, dealiased=False):
    f = transform_forward(rng.standard_normal((components,) + grid.shape), grid)
    if dealiased:
        f = type(f)(grid, f.amplitudes * grid.dealias_mask)
    return f


_ACCEPTANCE = []


@pytest.fixture
def verdict():
    """Record one acceptance line; it is echoed again in the terminal summary."""

    def emit(number, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return passed

    return emit


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
