import math

import numpy as np
import pytest
from scipy.optimize import least_squares

from concurrent_normals import (
    BadParams,
    NonMorsePoint,
    RadiusTooLarge,
    builtin,
    find_critical_points,
    focal_cloud,
    jet2,
    normal_direction,
    tube_spec,
    verify_doubling,
)
from concurrent_normals.focal import focal_data
from concurrent_normals.tube import curvature_radii

from test_geometry import fd_audit


def torus_residual(P, R, r):
    """Distance from points to the round torus about the z axis."""
    rho = np.hypot(P[:, 0], P[:, 1])
    return np.abs(np.hypot(rho - R, P[:, 2]) - r)


@pytest.fixture(scope="module")
def ring():
    return tube_spec(builtin("circle3d", (2.0,)), 1.0)


@pytest.fixture(scope="module")
def ellipse_tube():
    return tube_spec(builtin("ellipse3d", (2.0, 1.0)), 0.3)


def test_circle_tube_is_torus(ring):
    assert abs(ring.twist) < 1e-12 and ring.betti == (1, 2, 1)
    # tube inside torus
    P = ring.jets(ring.grid(200))[0]
    assert torus_residual(P, 2.0, 1.0).max() < 1e-8
    # torus inside tube: project random torus points back onto the tube
    torus = builtin("torus", (2.0, 1.0))
    rng = np.random.default_rng(0)
    worst = 0.0
    for q in torus.jets(rng.uniform(0, 2 * math.pi, size=(40, 2)))[0]:
        start = ring.grid(24)[np.argmin(np.linalg.norm(ring.jets(ring.grid(24))[0] - q, axis=1))]
        fit = least_squares(lambda x: ring.jets(x[None, :])[0][0] - q, start, xtol=1e-15, ftol=1e-15, gtol=1e-15)
        worst = max(worst, np.linalg.norm(fit.fun))
    assert worst < 1e-8


def test_thin_tube_is_thin_torus():
    tube = tube_spec(builtin("circle3d", (2.0,)), 0.5)
    assert torus_residual(tube.jets(tube.grid(120))[0], 2.0, 0.5).max() < 1e-8


def test_tube_jets_match_finite_differences(ellipse_tube, ring):
    rng = np.random.default_rng(7)
    for tube in (ellipse_tube, ring):
        X = rng.uniform(0, 2 * math.pi, size=(100, 2))
        assert fd_audit(tube, X) < 1e-6


def test_tube_is_at_constant_distance(ellipse_tube):
    X = ellipse_tube.grid(60)
    pos = ellipse_tube.jets(X)[0]
    core = ellipse_tube.child.jets(X[:, :1])
    assert np.allclose(np.linalg.norm(pos - core[0], axis=1), 0.3, atol=1e-12)
    # the radial direction is normal to the core
    assert np.abs(np.einsum("ki,ki->k", pos - core[0], core[1][:, :, 0])).max() < 1e-9


def test_radius_limits():
    child = builtin("ellipse3d", (2.0, 1.0))
    assert curvature_radii(child).min() == pytest.approx(0.5, rel=1e-4)
    with pytest.raises(RadiusTooLarge):
        tube_spec(child, 0.6)
    with pytest.raises(BadParams):
        tube_spec(child, -0.1)
    with pytest.raises(BadParams):
        tube_spec(builtin("sphere"), 0.1)
    with pytest.raises(BadParams):
        tube_spec(builtin("ellipse2d"), 0.1)


def test_builtin_tube_entry():
    tube = builtin("tube", (0.3,), child=builtin("ellipse3d"))
    assert tube.name == "tube" and tube.radius == 0.3 and tube.beta == 4


def test_circle_doubling(ring):
    tube = tube_spec(builtin("circle3d", (2.0,)), 0.5)
    rep = verify_doubling(tube.child, 0.5, [1.0, 0.0, 0.0], tube=tube)
    assert (rep.child.count, rep.tube.count) == (2, 4)
    assert rep.status == "PASS" and rep.k_child == 0


def test_ellipse_doubling_at_centre(ellipse_tube):
    rep = verify_doubling(ellipse_tube.child, 0.3, [0.0, 0.0, 0.0], tube=ellipse_tube)
    assert (rep.child.count, rep.tube.count) == (4, 8)
    assert rep.k_child == 2 and rep.excess_tube == 4
    assert rep.doubling_ok and rep.excess_ok and rep.index_ok
    assert rep.to_dict()["status"] == "PASS"


def test_random_queries_double(ellipse_tube):
    rng = np.random.default_rng(3)
    done = 0
    while done < 5:
        y = rng.normal(scale=1.2, size=3)
        try:
            rep = verify_doubling(ellipse_tube.child, 0.3, y, tube=ellipse_tube)
        except BadParams:
            continue
        assert rep.status == "PASS", rep.to_dict()
        done += 1


def test_query_on_core_is_not_morse(ellipse_tube):
    with pytest.raises(NonMorsePoint):
        verify_doubling(ellipse_tube.child, 0.3, [2.0, 0.0, 0.0], tube=ellipse_tube)


def test_query_inside_tube_rejected(ellipse_tube):
    with pytest.raises(BadParams):
        verify_doubling(ellipse_tube.child, 0.3, [2.1, 0.0, 0.0], tube=ellipse_tube)


def test_tube_focal_points_sit_on_core_and_child_focal_set(ellipse_tube):
    child = ellipse_tube.child
    rng = np.random.default_rng(4)
    for s, th in rng.uniform(0, 2 * math.pi, size=(10, 2)):
        jet = jet2(ellipse_tube, [s, th])
        n = normal_direction(jet, inward=True)
        cj = jet2(child, [s])
        fd = focal_data(ellipse_tube, [s, th], n)
        ts = [fp.t for fp in fd.points]
        # the meridian circle focuses on the core, on whichever side it lies
        core = [t for t in ts if abs(abs(t) - 0.3) < 1e-9]
        assert len(core) == 1
        assert np.linalg.norm(jet.pos + core[0] * n - cj.pos) < 1e-9
        # the other focal point lies on the focal line of the core curve
        for t in ts:
            if t == core[0]:
                continue
            q = jet.pos + t * n - cj.pos
            v, a = cj.d1[:, 0], cj.d2[:, 0, 0]
            T = v / np.linalg.norm(v)
            N = a - (a @ T) * T
            kappa = np.linalg.norm(N) / (v @ v)
            N /= np.linalg.norm(N)
            assert abs(q @ T) < 1e-9
            assert kappa * (q @ N) == pytest.approx(1.0, abs=1e-7)


def test_tube_census_euler(ellipse_tube):
    c = find_critical_points(ellipse_tube, [0.4, -0.3, 0.9])
    assert c.euler_sum == 0 and c.count >= ellipse_tube.beta


def test_tube_focal_cloud_contains_core(ellipse_tube):
    cloud = focal_cloud(ellipse_tube, 24)
    core = ellipse_tube.child.jets(cloud.base[:, :1])[0]
    on_core = np.linalg.norm(cloud.points - core, axis=1) < 1e-6
    # one of the two focal points of every tube normal is the core point
    assert on_core.sum() == len(cloud.points) // 2
