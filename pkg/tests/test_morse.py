import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from concurrent_normals import (
    NonMorsePoint,
    SolverConfig,
    brute_force_census,
    builtin,
    find_critical_points,
    find_critical_points_many,
    linear_census,
)
from concurrent_normals.morse import sq_dist_jet

from conftest import CLOSED_BUILTINS


def positions(census):
    return np.array(sorted(map(tuple, np.round([p.pos for p in census.points], 9))))


def test_ellipse_origin_closed_form(ellipse):
    c = find_critical_points(ellipse, [0.0, 0.0])
    assert c.count == 4 and c.counts == (2, 2) and c.morse_ok
    expect = {(0.0, 1.0): 0, (0.0, -1.0): 0, (2.0, 0.0): 1, (-2.0, 0.0): 1}
    for p in c.points:
        key = min(expect, key=lambda q: np.hypot(*(np.array(q) - p.pos)))
        assert np.linalg.norm(np.array(key) - p.pos) < 1e-10
        assert p.mu == expect[key]


def test_ellipsoid_origin_axis_points(ellipsoid):
    c = find_critical_points(ellipsoid, [0.0, 0.0, 0.0])
    assert c.counts == (2, 2, 2)
    for p in c.points:
        axis = int(np.argmax(np.abs(p.pos)))
        assert abs(abs(p.pos[axis]) - (3.0, 2.0, 1.0)[axis]) < 1e-10
        # longest axis is the maximum, shortest the minimum
        assert p.mu == 2 - axis


def test_circle_offcentre_query():
    c = find_critical_points(builtin("circle2d", (1.0,)), [0.5, 0.0])
    assert c.count == 2 and c.counts == (1, 1)


@pytest.mark.parametrize("name,y", [("sphere", [0, 0, 0]), ("circle2d", [0, 0]), ("circle3d", [0, 0, 0])])
def test_taut_centres_are_not_morse(name, y):
    with pytest.raises(NonMorsePoint):
        find_critical_points(builtin(name), y)


def test_isolated_degenerate_point_is_flagged(ellipse):
    # (1.5, 0) is the centre of curvature of the vertex (2, 0)
    c = find_critical_points(ellipse, [1.5, 0.0])
    assert not c.morse_ok
    worst = min(c.points, key=lambda p: p.degeneracy_margin)
    # a degenerate zero of the gradient pins x down only to about 1e-6
    assert np.allclose(worst.pos, [2.0, 0.0], atol=1e-5)


def test_brute_force_oracle_agrees_on_fixed_queries():
    rng = np.random.default_rng(11)
    for name in ("ellipse2d", "ellipsoid", "torus", "ellipse3d"):
        spec = builtin(name)
        for y in rng.normal(scale=0.8, size=(4, spec.n)):
            fast = find_critical_points(spec, y)
            slow = brute_force_census(spec, y, 400 if spec.m == 1 else 220)
            assert fast.counts == slow.counts
            assert np.abs(positions(fast) - positions(slow)).max() < 1e-6


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(CLOSED_BUILTINS[1:]), st.integers(0, 2 ** 32 - 1))
def test_euler_and_morse_inequalities(name, seed):
    spec = builtin(name)
    y = np.random.default_rng(seed).normal(scale=0.7 * spec.diameter / 2, size=spec.n)
    try:
        c = find_critical_points(spec, y)
    except NonMorsePoint:
        return
    if not c.morse_ok:
        return
    assert c.euler_sum == spec.euler
    assert all(ci >= bi for ci, bi in zip(c.counts, spec.betti))
    assert c.count % 2 == spec.beta % 2


def test_batched_matches_single(ellipsoid):
    rng = np.random.default_rng(5)
    Y = rng.normal(size=(12, 3))
    Y[3] = 0.0
    batch = find_critical_points_many(ellipsoid, Y)
    for y, b in zip(Y, batch):
        single = find_critical_points(ellipsoid, y)
        assert single.counts == b.counts
        assert np.allclose(positions(single), positions(b), atol=1e-9)


def test_batched_reports_failures_in_place():
    out = find_critical_points_many(builtin("sphere"), [[0, 0, 0], [0.2, 0.1, 0.3]])
    assert isinstance(out[0], NonMorsePoint)
    assert out[1].count == 2


def test_hints_find_points():
    spec = builtin("ellipse2d")
    y = [0.3, 0.1]
    full = find_critical_points(spec, y)
    sparse = find_critical_points(spec, y, SolverConfig(seeds_per_axis=2, euler_retries=0),
                                  extra_seeds=np.array([p.x for p in full.points]))
    assert sparse.counts == full.counts


def test_linear_census_ellipse():
    c = linear_census(builtin("ellipse2d"), [1.0, 0.0])
    assert c.kind == "linear" and c.counts == (1, 1)
    assert sorted(p.pos[0] for p in c.points) == pytest.approx([-2.0, 2.0])


def test_linear_census_needs_unit_vector():
    with pytest.raises(ValueError):
        linear_census(builtin("ellipse2d"), [2.0, 0.0])


def test_open_patch_has_no_euler_constraint():
    spec = builtin("graph2d")
    c = find_critical_points(spec, [0.0, 0.0, 0.5])
    assert c.euler_ok and c.bounds_ok and c.count == 1


def test_sq_dist_jet_finite_differences():
    spec = builtin("torus")
    x, y = np.array([0.4, 1.3]), np.array([0.5, -0.2, 0.3])
    v, g, H = sq_dist_jet(spec, x, y)
    h = 1e-6
    for a in range(2):
        e = np.zeros(2)
        e[a] = h
        vp, gp, _ = sq_dist_jet(spec, x + e, y)
        vm, gm, _ = sq_dist_jet(spec, x - e, y)
        assert (vp - vm) / (2 * h) == pytest.approx(g[a], abs=1e-7)
        assert np.allclose((gp - gm) / (2 * h), H[:, a], atol=1e-6)


def test_serialisation(ellipse):
    c = find_critical_points(ellipse, [0.0, 0.0])
    d = c.to_dict()
    assert d["count"] == 4 and d["counts_by_index"] == {"0": 2, "1": 2}
    rows = c.to_csv().strip().splitlines()
    assert rows[0] == "x0,p0,p1,value,mu,margin" and len(rows) == 5


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(newton_tol=0)
    with pytest.raises(ValueError):
        SolverConfig(seeds_per_axis=1)
    assert SolverConfig().seeds_for(1) == 48 and SolverConfig().seeds_for(2) == 32


def test_query_dimension_checked(ellipse):
    with pytest.raises(ValueError):
        find_critical_points(ellipse, [0.0, 0.0, 0.0])


def test_deterministic(ellipsoid):
    y = [0.3, -0.2, 0.1]
    a, b = find_critical_points(ellipsoid, y), find_critical_points(ellipsoid, y)
    assert [p.to_dict() for p in a.points] == [p.to_dict() for p in b.points]


def test_far_query_matches_height_function(ellipsoid):
    n = np.array([1.0, 2.0, 2.0]) / 3.0
    far = find_critical_points(ellipsoid, 1e6 * ellipsoid.diameter * n)
    lin = linear_census(ellipsoid, n)
    assert far.count == lin.count
    # far along +n the distance is largest where the height is smallest
    assert sorted(2 - p.mu for p in far.points) == sorted(p.mu for p in lin.points)
    assert math.isclose(max(p.value for p in far.points) ** 0.5 / 1e6 / ellipsoid.diameter, 1.0, rel_tol=1e-5)
