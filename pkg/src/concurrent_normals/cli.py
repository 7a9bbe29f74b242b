"""Command-line front end.

Exit codes: 0 ok, 1 usage or input error, 2 non-Morse query, 3 regularity
required, 4 a verification did not pass.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from typing import List, Optional, Sequence

import numpy as np

from . import __version__
from .errors import (
    BadParams,
    GeometryError,
    NonMorsePoint,
    OutOfChart,
    PairingFailure,
    RegularityRequired,
    UnknownExample,
    WitnessNotFound,
)
from .focal import NormalLine, focal_cloud, focal_data
from .geometry import ImmersionSpec, jet2, normal_direction
from .morse import SolverConfig, find_critical_points
from .normal_walk import WalkConfig, verify_lemma, verify_theorem, walk
from .shapes import BUILTIN_NAMES, DEFAULT_PARAMS, builtin
from .tube import verify_doubling

EXIT_OK, EXIT_USAGE, EXIT_NON_MORSE, EXIT_REGULARITY, EXIT_WITNESS = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# argument helpers
# --------------------------------------------------------------------------

def _floats(text: Optional[str], what: str) -> Optional[List[float]]:
    if text is None:
        return None
    try:
        vals = [float(v) for v in text.replace(" ", "").split(",") if v != ""]
    except ValueError:
        raise UsageError(f"{what} must be comma-separated numbers, got {text!r}") from None
    if not all(math.isfinite(v) for v in vals):
        raise UsageError(f"{what} must be finite")
    return vals


def _spec_from_manifest(man) -> ImmersionSpec:
    if not isinstance(man, dict) or "name" not in man:
        raise UsageError("manifest must be a JSON object with a 'name'")
    name = man["name"]
    if name == "tube":
        if "child" not in man or "r" not in man:
            raise UsageError("tube manifests need 'child' and 'r'")
        return builtin("tube", [man["r"]], child=_spec_from_manifest(man["child"]))
    spec = builtin(name, man.get("params") or None)
    if "betti" in man and tuple(man["betti"]) != tuple(spec.betti):
        raise BadParams(f"manifest betti {man['betti']} disagrees with {name}: {list(spec.betti)}")
    return spec


def load_spec(args) -> ImmersionSpec:
    if getattr(args, "manifest", None):
        try:
            with open(args.manifest, encoding="utf-8") as fh:
                man = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read manifest: {exc}") from None
        return _spec_from_manifest(man)
    if not getattr(args, "builtin", None):
        raise UsageError("give --builtin NAME or --manifest FILE")
    return builtin(args.builtin, _floats(args.params, "--params"))


def manifest_of(spec: ImmersionSpec) -> dict:
    if spec.name == "tube":
        return {"name": "tube", "child": manifest_of(spec.child), "r": spec.radius}
    return {"name": spec.name, "params": list(spec.params), "betti": list(spec.betti)}


def solver_config(args) -> SolverConfig:
    try:
        return SolverConfig(seeds_per_axis=args.seeds, newton_tol=args.newton_tol)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def walk_config(args) -> WalkConfig:
    try:
        return WalkConfig(samples=args.samples, solver=solver_config(args), threads=args.threads)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _query(text, n: int, what: str) -> np.ndarray:
    vals = _floats(text, what)
    if vals is None or len(vals) != n:
        raise UsageError(f"{what} needs {n} coordinates")
    return np.array(vals)


def normal_line(spec: ImmersionSpec, args):
    if args.base is not None:
        x = _query(args.base, spec.m, "--base")
    else:
        # random base point, reproducible through --seed
        rng = np.random.default_rng(args.seed)
        lo, hi = np.asarray(spec.lo, float), np.asarray(spec.hi, float)
        pad = np.where(spec.periodic, 0.0, 0.1 * (hi - lo))
        x = rng.uniform(lo + pad, hi - pad)
    try:
        jet = jet2(spec, x)
    except OutOfChart as exc:
        raise UsageError(str(exc)) from None
    return NormalLine.at(spec, jet.x, normal_direction(jet, args.normal_angle, args.inward))


# --------------------------------------------------------------------------
# output
# --------------------------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def envelope(command: str, args, config: dict, result: dict, spec: ImmersionSpec = None) -> dict:
    doc = {
        "tool": "concurrent-normals",
        "version": __version__,
        "command": command,
        "seed": args.seed,
        "config": config,
        "result": result,
    }
    if spec is not None:
        doc["manifest"] = manifest_of(spec)
    return doc


def dump_json(doc: dict) -> str:
    return json.dumps(_jsonable(doc), sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def write_text(path: str, text: str):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def emit(args, doc: dict, stdout):
    text = dump_json(doc)
    if args.out:
        write_text(args.out, text)
    else:
        stdout.write(text)


def _config_dict(cfg) -> dict:
    return dataclasses.asdict(cfg)


def evolute_svg(spec: ImmersionSpec, cloud_points: np.ndarray, samples: int = 720) -> str:
    """SVG with the curve (black) and its focal cloud (red)."""
    pos = spec.jets(spec.grid(samples))[0]
    centre = 0.5 * (pos.max(axis=0) + pos.min(axis=0))
    reach = 1.5 * spec.diameter
    ev = cloud_points[np.all(np.abs(cloud_points - centre) <= reach, axis=1)] if len(cloud_points) else cloud_points
    pts = np.vstack([pos, ev]) if len(ev) else pos
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    pad = 0.05 * max(hi - lo)
    lo, hi = lo - pad, hi + pad
    width, height = hi - lo
    scale = 600.0 / max(width, height)

    def xy(p):
        return f"{(p[0] - lo[0]) * scale:.4f},{(hi[1] - p[1]) * scale:.4f}"

    def polyline(P, colour, closed):
        coords = " ".join(xy(p) for p in P)
        tag = "polygon" if closed else "polyline"
        return f'<{tag} points="{coords}" fill="none" stroke="{colour}" stroke-width="1.5"/>'

    body = [polyline(pos, "black", spec.closed)]
    if len(ev):
        if np.ptp(ev, axis=0).max() <= 1e-9 * spec.diameter:
            body.append(f'<circle cx="{xy(ev[0]).split(",")[0]}" cy="{xy(ev[0]).split(",")[1]}" '
                        f'r="3" fill="red"/>')
        else:
            # break the evolute where it jumps (e.g. through infinity at inflections)
            gap = np.linalg.norm(np.diff(ev, axis=0), axis=1) > 0.25 * spec.diameter
            start = 0
            for k in list(np.flatnonzero(gap) + 1) + [len(ev)]:
                if k - start >= 2:
                    body.append(polyline(ev[start:k], "red", False))
                start = k
    w, h = width * scale, height * scale
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.1f}" height="{h:.1f}" '
            f'viewBox="0 0 {w:.4f} {h:.4f}">\n'
            f'<title>{spec.name} {list(spec.params)} and its focal set</title>\n'
            + "\n".join(body) + "\n</svg>\n")


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_examples(args, stdout) -> int:
    rows = []
    for name in BUILTIN_NAMES:
        if name == "tube":
            rows.append({"name": "tube", "params": ["r"], "child": "circle3d or ellipse3d"})
            continue
        spec = builtin(name)
        rows.append({"name": name, "params": list(DEFAULT_PARAMS[name]), "m": spec.m, "n": spec.n,
                     "betti": list(spec.betti), "closed": spec.closed})
    emit(args, envelope("examples", args, {}, {"builtins": rows}), stdout)
    return EXIT_OK


def cmd_census(args, stdout) -> int:
    spec = load_spec(args)
    y = _query(args.y, spec.n, "--y")
    cfg = solver_config(args)
    census = find_critical_points(spec, y, cfg)
    emit(args, envelope("census", args, _config_dict(cfg), census.to_dict(), spec), stdout)
    if args.csv:
        write_text(args.csv, census.to_csv())
    return EXIT_OK


def cmd_focal(args, stdout) -> int:
    spec = load_spec(args)
    config = {"samples": args.samples_per_axis, "directions": args.directions}
    if args.base is not None:
        line = normal_line(spec, args)
        fd = focal_data(spec, line.x, line.direction)
        result = {"normal": line.to_dict(), "focal_points": [fp.to_dict() for fp in fd.points],
                  "at_infinity": fd.at_infinity}
        emit(args, envelope("focal", args, config, result, spec), stdout)
        return EXIT_OK
    samples = args.samples_per_axis or (512 if spec.m == 1 else 64)
    config["samples"] = samples
    cloud = focal_cloud(spec, samples, args.directions)
    # adding 0.0 turns rounded -0.0 into 0.0
    distinct = np.unique(np.round(cloud.points, 9) + 0.0, axis=0) if len(cloud.points) else cloud.points
    result = {"points": len(cloud.points), "distinct_points": len(distinct), "skipped": cloud.skipped}
    if len(distinct) <= 16:
        result["distinct"] = distinct
    emit(args, envelope("focal", args, config, result, spec), stdout)
    if args.csv:
        write_text(args.csv, cloud.to_csv())
    if args.svg:
        if spec.n != 2:
            raise UsageError("SVG output is only available for plane curves")
        write_text(args.svg, evolute_svg(spec, cloud.points))
    return EXIT_OK


def cmd_walk(args, stdout) -> int:
    spec = load_spec(args)
    cfg = walk_config(args)
    line = normal_line(spec, args)
    wk = walk(spec, line, cfg, force=args.force)
    emit(args, envelope("walk", args, _config_dict(cfg), wk.to_dict(), spec), stdout)
    if args.csv:
        lines = ["u,count,mu_p"] + [f"{s.u!r},{s.census.count},{s.mu_p}" for s in wk.samples]
        write_text(args.csv, "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_verify(args, stdout) -> int:
    spec = load_spec(args)
    cfg = walk_config(args)
    line = normal_line(spec, args)
    wk = walk(spec, line, cfg, force=args.force)
    lemma = verify_lemma(spec, line, cfg, walk_result=wk)
    code, maxima = EXIT_OK, {}
    try:
        report = verify_theorem(spec, line, cfg, walk_result=wk)
    except WitnessNotFound as exc:
        report, maxima = exc.report, exc.maxima
        code = EXIT_WITNESS
    stdout.write(f"regularity: {wk.certificate.overall}\n")
    for part, status, wit in (("part1", report.part1_status, report.part1),
                              ("part2", report.part2_status, report.part2)):
        extra = f" (witness count {wit.census.count})" if status == "PASS" and wit else ""
        if status == "FAIL" and part in maxima:
            extra = f" (max count {maxima[part]}, beta {spec.beta})"
        stdout.write(f"{part}: {status}{extra}\n")
    for v in lemma:
        stdout.write(f"lemma r_{v.cyclic_index}: {v.status}\n")
    result = report.to_dict()
    result["lemma"] = [v.to_dict() for v in lemma]
    result["events"] = [e.to_dict() for e in wk.events]
    if args.out:
        write_text(args.out, dump_json(envelope("verify", args, _config_dict(cfg), result, spec)))
    return code


def cmd_tube(args, stdout) -> int:
    if args.manifest:
        spec = load_spec(args)
        if spec.name != "tube":
            raise UsageError("the manifest must describe a tube")
        child, r = spec.child, spec.radius
    else:
        if not args.child or args.r is None:
            raise UsageError("give --child NAME and --r RADIUS (or a tube --manifest)")
        child = builtin(args.child, _floats(args.child_params, "--child-params"))
        r = args.r
        spec = builtin("tube", [r], child=child)
    y = _query(args.y, 3, "--y")
    cfg = solver_config(args)
    try:
        report = verify_doubling(child, r, y, cfg, tube=spec)
    except PairingFailure as exc:
        stdout.write(f"doubling: FAIL ({exc})\n")
        return EXIT_WITNESS
    stdout.write(f"doubling: {report.status} ({report.child.count} -> {report.tube.count})\n")
    if args.out:
        write_text(args.out, dump_json(envelope("tube", args, _config_dict(cfg), report.to_dict(), spec)))
    if args.csv:
        write_text(args.csv, report.tube.to_csv())
    return EXIT_OK if report.status == "PASS" else EXIT_WITNESS


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="concurrent-normals", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp, manifold=True):
        if manifold:
            sp.add_argument("--builtin", help=f"one of {', '.join(BUILTIN_NAMES)}")
            sp.add_argument("--params", help="comma-separated parameters")
            sp.add_argument("--manifest", help="JSON manifest file")
        sp.add_argument("--out", help="write the JSON report to this file")
        sp.add_argument("--seed", type=int, default=0, help="seed for random choices (default 0)")
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--seeds", type=int, default=None, help="Newton seeds per chart axis")
        sp.add_argument("--newton-tol", type=float, default=1e-12)

    def normal(sp):
        sp.add_argument("--base", help="chart coordinates of the foot point (random if omitted)")
        sp.add_argument("--normal-angle", type=float, default=0.0,
                        help="angle in the normal plane (codimension two)")
        sp.add_argument("--inward", action="store_true", help="flip the normal")

    sp = sub.add_parser("examples", help="list the builtin manifolds")
    common(sp, manifold=False)

    sp = sub.add_parser("census", help="critical points of the squared distance from y")
    common(sp)
    sp.add_argument("--y", required=True)
    sp.add_argument("--csv")

    sp = sub.add_parser("focal", help="focal cloud, or focal points on one normal with --base")
    common(sp)
    normal(sp)
    sp.add_argument("--samples-per-axis", type=int, default=None)
    sp.add_argument("--directions", type=int, default=16)
    sp.add_argument("--csv")
    sp.add_argument("--svg")

    for name, text in (("walk", "census along a compactified normal"),
                       ("verify", "check the excess theorem and lemma on a normal")):
        sp = sub.add_parser(name, help=text)
        common(sp)
        normal(sp)
        sp.add_argument("--samples", type=int, default=256)
        sp.add_argument("--force", action="store_true", help="walk normals that fail regularity")
        if name == "walk":
            sp.add_argument("--csv")

    sp = sub.add_parser("tube", help="excess doubling on the tube around a space curve")
    common(sp, manifold=False)
    sp.add_argument("--manifest", help="tube manifest {name: tube, child, r}")
    sp.add_argument("--child")
    sp.add_argument("--child-params")
    sp.add_argument("--r", type=float)
    sp.add_argument("--y", required=True)
    sp.add_argument("--csv")
    return p


COMMANDS = {
    "examples": cmd_examples,
    "census": cmd_census,
    "focal": cmd_focal,
    "walk": cmd_walk,
    "verify": cmd_verify,
    "tube": cmd_tube,
}


def main(argv: Sequence[str] = None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("choose a command: " + ", ".join(COMMANDS))
        if args.threads < 1:
            raise UsageError("--threads must be positive")
        return COMMANDS[args.command](args, stdout)
    except UsageError as exc:
        stderr.write(f"usage error: {exc}\n")
        return EXIT_USAGE
    except (BadParams, UnknownExample, OutOfChart) as exc:
        stderr.write(f"error: {exc}\n")
        return EXIT_USAGE
    except NonMorsePoint as exc:
        stderr.write(f"non-Morse query: {exc}\n")
        return EXIT_NON_MORSE
    except RegularityRequired as exc:
        stderr.write(f"regularity required: {exc}\n")
        if exc.certificate is not None:
            for name, verdict in exc.certificate.conditions.items():
                stderr.write(f"  {name}: {verdict.status} {verdict.note}\n")
        return EXIT_REGULARITY
    except WitnessNotFound as exc:
        stderr.write(f"witness not found: {exc}\n")
        return EXIT_WITNESS
    except (GeometryError, ValueError) as exc:
        stderr.write(f"error: {type(exc).__name__}: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
