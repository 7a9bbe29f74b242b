import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from concurrent_normals import (
    RegularityRequired,
    WalkConfig,
    WitnessNotFound,
    builtin,
    find_critical_points,
    verify_lemma,
    verify_theorem,
    walk,
)
from concurrent_normals.normal_walk import _unmatched, pair_separation, scan_normal, t_to_w, w_to_u

from conftest import line_at


@pytest.fixture(scope="module")
def ellipse_walk(ellipse):
    line = line_at(ellipse, [0.9])
    return line, walk(ellipse, line)


@pytest.fixture(scope="module")
def ellipsoid_walk(ellipsoid):
    line = line_at(ellipsoid, (0.7, 1.1))
    return line, walk(ellipsoid, line)


@given(st.floats(-1e6, 1e6, allow_nan=False))
def test_walk_parameter_roundtrip(t):
    w = t_to_w(t)
    assert 0 <= w < math.pi
    assert math.tan(w_to_u(w)) == pytest.approx(t, rel=1e-9, abs=1e-9)


def test_walk_config_validation():
    with pytest.raises(ValueError):
        WalkConfig(samples=7)
    with pytest.raises(ValueError):
        WalkConfig(event_tol=0)
    with pytest.raises(ValueError):
        WalkConfig(refine_seeds=1)


def check_event_algebra(wk):
    for ev in wk.events:
        dc = ev.after.census.count - ev.before.census.count
        assert dc == ev.count_change
        if ev.kind == "birth":
            assert dc == 2
        elif ev.kind == "death":
            assert dc == -2
        else:
            assert dc == 0
        if ev.kind == "index_exchange":
            fp = next(f for f in wk.focal.points if f.cyclic_index == ev.focal_match)
            assert abs(ev.u_star - math.atan(fp.t)) <= 1e-5


def test_ellipse_walk_events(ellipse_walk):
    _, wk = ellipse_walk
    kinds = [e.kind for e in wk.events]
    assert kinds.count("infinity_crossing") == 1
    assert kinds.count("index_exchange") == 1
    assert kinds.count("birth") == kinds.count("death")
    check_event_algebra(wk)
    assert wk.infinity["consistent"]
    assert wk.certificate.overall == "pass"


def test_walk_samples_are_morse_and_consistent(ellipse_walk, ellipse):
    _, wk = ellipse_walk
    for s in wk.samples[::16]:
        assert s.census.morse_ok and s.census.euler_sum == ellipse.euler


def test_infinity_flips_indices(ellipsoid_walk):
    _, wk = ellipsoid_walk
    ev = next(e for e in wk.events if e.kind == "infinity_crossing")
    before = sorted(2 - mu for mu in ev.before.census.indices)
    assert before == sorted(ev.after.census.indices)


def test_ellipsoid_theorem_and_lemma(ellipsoid_walk, ellipsoid):
    line, wk = ellipsoid_walk
    check_event_algebra(wk)
    report = verify_theorem(ellipsoid, line, walk_result=wk)
    assert report.part1_status == "PASS" and report.part2_status == "PASS"
    assert report.part1.census.count >= ellipsoid.beta + 2
    assert report.part2.census.count >= ellipsoid.beta + 4
    assert report.trivial_index == 1
    # the witness is an honest census from that point
    again = find_critical_points(ellipsoid, report.part2.y)
    assert again.count == report.part2.census.count
    assert all(v.status == "pass" for v in verify_lemma(ellipsoid, line, walk_result=wk))
    d = report.to_dict()
    assert d["part2"]["witness"]["segment"] == ["r_1", "r_2"]


def test_ellipse_part_two_not_applicable(ellipse_walk, ellipse):
    line, wk = ellipse_walk
    report = verify_theorem(ellipse, line, walk_result=wk)
    assert report.part1_status == "PASS" and report.part2_status == "N/A"


def test_sphere_requires_regularity():
    spec = builtin("sphere")
    with pytest.raises(RegularityRequired) as info:
        walk(spec, line_at(spec, (0.3, 0.4)))
    assert info.value.certificate.overall == "fail"


def test_taut_torus_has_no_part_one_witness(torus):
    line = line_at(torus, (0.5, 0.9))
    with pytest.raises(WitnessNotFound) as info:
        verify_theorem(torus, line)
    assert info.value.maxima["part1"] == torus.beta
    assert info.value.report.part2_status == "N/A"


def test_circle_walk_is_taut():
    spec = builtin("circle2d", (1.0,))
    wk = walk(spec, line_at(spec, [0.5]))
    assert {s.census.count for s in wk.samples} == {2}
    assert wk.certificate.overall == "inconclusive"
    assert [e.kind for e in wk.events].count("index_exchange") == 1


def test_threads_do_not_change_results(ellipse):
    line = line_at(ellipse, [2.2])
    a = scan_normal(ellipse, line, WalkConfig(samples=64))
    b = scan_normal(ellipse, line, WalkConfig(samples=64, threads=3))
    assert [e.to_dict() for e in a.events] == [e.to_dict() for e in b.events]


def test_pair_separation_square_root_law(ellipse_walk, ellipse):
    line, wk = ellipse_walk
    ev = next(e for e in wk.events if e.kind in ("birth", "death"))
    ratio = pair_separation(ellipse, line, ev, WalkConfig())
    assert ratio == pytest.approx(2.0, rel=0.05)


def test_unmatched_returns_extra_pair(ellipse):
    # beyond the evolute cusp at (0, 3) only two normals remain
    small = find_critical_points(ellipse, [0.0, 4.0])
    big = find_critical_points(ellipse, [0.0, 0.0])
    extra = _unmatched(big, small)
    assert len(extra) == big.count - small.count == 2
    assert sorted(p.mu for p in extra) == [0, 1]


def test_walk_report_serialises(ellipse_walk):
    _, wk = ellipse_walk
    d = wk.to_dict()
    assert {"normal", "focal_points", "regularity", "samples", "events", "infinity"} <= set(d)
    assert len(d["samples"]) == len(wk.samples)
