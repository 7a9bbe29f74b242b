import io
import json

import pytest

from concurrent_normals import __version__
from concurrent_normals.cli import EXIT_NON_MORSE, EXIT_OK, EXIT_REGULARITY, EXIT_USAGE, EXIT_WITNESS, main


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(list(argv), stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


def run_json(*argv):
    code, out, err = run(*argv)
    assert code == EXIT_OK, err
    return json.loads(out)


def test_examples_lists_builtins():
    doc = run_json("examples")
    names = {b["name"] for b in doc["result"]["builtins"]}
    assert {"ellipse2d", "ellipsoid", "torus", "graph2d"} <= names


def test_census_envelope():
    doc = run_json("census", "--builtin", "ellipse2d", "--y", "0,0")
    assert doc["tool"] and doc["version"] == __version__
    assert doc["command"] == "census" and doc["seed"] == 0
    assert doc["config"]["newton_tol"] == 1e-12
    assert doc["manifest"] == {"name": "ellipse2d", "params": [2.0, 1.0], "betti": [1, 1]}
    assert doc["result"]["count"] == 4


def test_json_is_byte_identical():
    argv = ("walk", "--builtin", "ellipse2d", "--base", "0.9", "--samples", "64")
    a, b = run(*argv), run(*argv)
    assert a[0] == EXIT_OK and a[1] == b[1]


def test_census_exit_codes():
    assert run("census", "--builtin", "sphere", "--y", "0,0,0")[0] == EXIT_NON_MORSE
    assert run("census", "--builtin", "circle2d", "--y", "0.5,0")[0] == EXIT_OK
    assert run("census", "--builtin", "klein", "--y", "0,0")[0] == EXIT_USAGE
    assert run("census", "--builtin", "ellipse2d", "--y", "0,0,0")[0] == EXIT_USAGE
    assert run("census", "--builtin", "ellipse2d", "--y", "a,b")[0] == EXIT_USAGE
    assert run("census", "--builtin", "torus", "--params", "1,2", "--y", "0,0,0")[0] == EXIT_USAGE
    assert run("census")[0] == EXIT_USAGE
    assert run("frobnicate")[0] == EXIT_USAGE


def test_census_csv(tmp_path):
    path = tmp_path / "c.csv"
    run_json("census", "--builtin", "ellipse2d", "--y", "0,0", "--csv", str(path))
    rows = path.read_text().strip().splitlines()
    assert rows[0].startswith("x0,") and len(rows) == 5


def test_focal_on_normal_and_cloud(tmp_path):
    doc = run_json("focal", "--builtin", "ellipse2d", "--base", "0", "--inward")
    assert [fp["t"] for fp in doc["result"]["focal_points"]] == pytest.approx([0.5])
    svg, csv = tmp_path / "e.svg", tmp_path / "e.csv"
    doc = run_json("focal", "--builtin", "circle2d", "--svg", str(svg), "--csv", str(csv))
    assert doc["result"]["distinct_points"] == 1 and doc["result"]["distinct"] == [[0.0, 0.0]]
    assert svg.read_text().lstrip().startswith("<svg")
    assert csv.read_text().splitlines()[0] == "px,py,nu"


def test_verify_prints_statuses(tmp_path):
    out = tmp_path / "v.json"
    code, text, _ = run("verify", "--builtin", "ellipsoid", "--base", "0.7,1.1", "--out", str(out))
    assert code == EXIT_OK
    assert "part1: PASS" in text and "part2: PASS" in text
    doc = json.loads(out.read_text())
    assert doc["result"]["part2"]["status"] == "PASS" and len(doc["result"]["lemma"]) == 2


def test_verify_regularity_gate():
    code, _, err = run("verify", "--builtin", "sphere", "--base", "0.3,0.4")
    assert code == EXIT_REGULARITY and "m_distinct_focal" in err


def test_verify_taut_torus_has_no_witness():
    code, text, _ = run("verify", "--builtin", "torus", "--base", "0.5,0.9", "--samples", "128")
    assert code == EXIT_WITNESS and "part1: FAIL" in text


def test_tube_command(tmp_path):
    code, text, _ = run("tube", "--child", "circle3d", "--child-params", "2", "--r", "0.5", "--y", "1,0,0")
    assert code == EXIT_OK and "doubling: PASS (2 -> 4)" in text
    man = tmp_path / "t.json"
    man.write_text(json.dumps({"name": "tube", "child": {"name": "ellipse3d", "params": [2, 1]}, "r": 0.3}))
    code, text, _ = run("tube", "--manifest", str(man), "--y", "0,0,0")
    assert code == EXIT_OK and "(4 -> 8)" in text
    assert run("tube", "--child", "ellipse3d", "--r", "0.6", "--y", "0,0,0")[0] == EXIT_USAGE
    assert run("tube", "--child", "ellipse3d", "--r", "0.3", "--y", "2,0,0")[0] == EXIT_NON_MORSE


def test_manifest_census(tmp_path):
    man = tmp_path / "m.json"
    man.write_text(json.dumps({"name": "ellipsoid", "params": [3, 2, 1], "betti": [1, 0, 1]}))
    doc = run_json("census", "--manifest", str(man), "--y", "0,0,0")
    assert doc["result"]["count"] == 6
    man.write_text(json.dumps({"name": "ellipsoid", "betti": [1, 1, 1]}))
    assert run("census", "--manifest", str(man), "--y", "0,0,0")[0] == EXIT_USAGE
    man.write_text("not json")
    assert run("census", "--manifest", str(man), "--y", "0,0,0")[0] == EXIT_USAGE


def test_random_base_is_seeded():
    argv = ("focal", "--builtin", "ellipsoid", "--seed", "5")
    a = run_json(*argv, "--base", "1,1")
    assert a["seed"] == 5
    b1 = run("walk", "--builtin", "ellipse2d", "--seed", "3", "--samples", "64")
    b2 = run("walk", "--builtin", "ellipse2d", "--seed", "3", "--samples", "64")
    assert b1[1] == b2[1]
