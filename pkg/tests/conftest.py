import math

import numpy as np
import pytest

from concurrent_normals import builtin, jet2, normal_direction
from concurrent_normals.focal import NormalLine

CLOSED_BUILTINS = ["circle2d", "ellipse2d", "circle3d", "ellipse3d", "sphere", "ellipsoid", "torus"]
ALL_BUILTINS = CLOSED_BUILTINS + ["graph2d"]


def random_chart_points(spec, k, rng, pad=0.05):
    lo, hi = np.asarray(spec.lo, float), np.asarray(spec.hi, float)
    margin = np.where(spec.periodic, 0.0, pad * (hi - lo))
    return rng.uniform(lo + margin, hi - margin, size=(k, spec.m))


def line_at(spec, x, angle=0.0, inward=False):
    jet = jet2(spec, x)
    return NormalLine.at(spec, jet.x, normal_direction(jet, angle, inward))


def ellipsoid_base(rng):
    """Chart point on the ellipsoid away from the polar bands."""
    return (rng.uniform(0.4, math.pi - 0.4), rng.uniform(0.0, 2 * math.pi))


@pytest.fixture(scope="session")
def ellipse():
    return builtin("ellipse2d", (2.0, 1.0))


@pytest.fixture(scope="session")
def ellipsoid():
    return builtin("ellipsoid", (3.0, 2.0, 1.0))


@pytest.fixture(scope="session")
def torus():
    return builtin("torus", (2.0, 1.0))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
