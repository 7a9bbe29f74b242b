"""Focal points on normal lines, focal clouds and regularity certificates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
from scipy import linalg

from .errors import DegenerateMetric, GeometryError, UnresolvedEvent
from .geometry import ImmersionSpec, Jet2, jet2, metric_and_form, normal_frame
from .morse import SolverConfig, sq_dist_jet

CLUSTER_TOL = 1e-7
SEPARATION_TOL = 1e-6
A2_TOL = 1e-6
# birth/death pair separation grows like sqrt(dt) on a transversal crossing
# (ratio 2 when the offset quadruples) and like dt on a tangential one (ratio 4)
TRANSVERSAL_RATIO = (1.6, 2.6)


@dataclass(frozen=True)
class NormalLine:
    x: np.ndarray
    direction: np.ndarray
    base: np.ndarray

    @classmethod
    def at(cls, spec: ImmersionSpec, x, direction) -> "NormalLine":
        jet = jet2(spec, x)
        direction = np.asarray(direction, dtype=float)
        if abs(np.linalg.norm(direction) - 1.0) > 1e-10:
            raise ValueError("normal direction must be a unit vector")
        tang = np.abs(jet.d1.T @ direction) / np.linalg.norm(jet.d1, axis=0)
        if tang.max() > 1e-10:
            raise ValueError(f"direction is not normal to the manifold at {jet.x.tolist()}")
        return cls(jet.x, direction, jet.pos)

    def point(self, t: float) -> np.ndarray:
        return self.base + t * self.direction

    def to_dict(self):
        return {"x": self.x.tolist(), "n": self.direction.tolist()}


@dataclass(frozen=True)
class FocalPoint:
    t: float
    nu: int
    label: int  # signed: +j is r_j on t > 0, -j is r_{-j} on t < 0
    cyclic_index: int

    def to_dict(self):
        return {"t": self.t, "nu": self.nu, "label": self.label, "cyclic_index": self.cyclic_index}


@dataclass
class FocalData:
    """Full result of the fiberwise eigenproblem at one normal."""

    points: List[FocalPoint]
    curvatures: np.ndarray
    vectors: np.ndarray
    at_infinity: int
    g: np.ndarray
    h: np.ndarray


def _cluster(values: np.ndarray, tol: float):
    groups = []
    for i, v in enumerate(values):
        if groups and abs(v - values[groups[-1][-1]]) <= tol:
            groups[-1].append(i)
        else:
            groups.append([i])
    return groups


def focal_data(spec: ImmersionSpec, x, direction) -> FocalData:
    jet = jet2(spec, x)
    g, h = metric_and_form(jet, direction)
    kappa, vecs = linalg.eigh(h, g)
    kscale = max(np.abs(kappa).max(), 1.0 / spec.diameter)
    tol = CLUSTER_TOL * kscale
    finite = []
    at_inf = 0
    for group in _cluster(kappa, tol):
        k = float(np.mean(kappa[group]))
        if abs(k) <= tol:
            at_inf += len(group)
        else:
            finite.append((1.0 / k, len(group)))

    m = spec.m
    pos = sorted((f for f in finite if f[0] > 0), key=lambda f: f[0])
    neg = sorted((f for f in finite if f[0] < 0), key=lambda f: -f[0])
    points = []
    j = 1
    for t, nu in pos:
        points.append(FocalPoint(t, nu, j, j))
        j += nu
    j = 1
    for t, nu in neg:
        # r_{-j} = r_{m+1-j}; a cluster of multiplicity nu occupies labels
        # -j..-(j+nu-1), and its first copy on the forward walk is the farthest
        points.append(FocalPoint(t, nu, -j, m + 1 - (j + nu - 1)))
        j += nu
    points.sort(key=lambda f: f.cyclic_index)
    return FocalData(points, kappa, vecs, at_inf, g, h)


def focal_points(spec: ImmersionSpec, x, direction) -> List[FocalPoint]:
    """p-focal parameters ``t`` on the normal line ``pos(x) + t * direction``.

    ``t`` is focal when ``g - t h`` is singular, i.e. ``t = 1/kappa`` for each
    generalized eigenvalue ``kappa`` of ``(h, g)``.  Points are returned in
    cyclic order r_1, r_2, ...; zero curvatures (focal points at infinity)
    are omitted here and counted by :func:`focal_data`.
    """
    return focal_data(spec, x, direction).points


def index_at(fd: FocalData, t: float) -> int:
    """Morse index of the base point for the query at parameter ``t``."""
    if math.isinf(t):
        return int(np.sum(fd.curvatures > 0)) if t > 0 else int(np.sum(fd.curvatures < 0))
    return int(np.sum(t * fd.curvatures > 1.0))


# --------------------------------------------------------------------------
# focal cloud
# --------------------------------------------------------------------------

@dataclass
class FocalCloud:
    points: np.ndarray
    nu: np.ndarray
    base: np.ndarray  # chart point each focal point came from
    skipped: int

    def to_csv(self) -> str:
        n = self.points.shape[1] if len(self.points) else 0
        names = ["px", "py", "pz", "pw"][:n]
        lines = [",".join(names + ["nu"])]
        for p, v in zip(self.points, self.nu):
            lines.append(",".join(repr(float(c)) for c in p) + f",{int(v)}")
        return "\n".join(lines) + "\n"


def _unit_normal_directions(spec, X, pos, d1, directions_per_point):
    """Yield (chart index, unit normal) pairs for every sample."""
    codim = spec.n - spec.m
    if codim == 1:
        k = len(X)
        cof = np.empty((k, spec.n))
        for r in range(spec.n):
            cof[:, r] = (-1) ** r * np.linalg.det(np.delete(d1, r, axis=1))
        norms = np.linalg.norm(cof, axis=1)
        good = norms > 1e-12
        return np.flatnonzero(good), cof[good] / norms[good, None]
    rng = np.random.default_rng(0)
    idx, dirs = [], []
    for i in range(len(X)):
        try:
            frame = normal_frame(Jet2(X[i], pos[i], d1[i], None)).vectors
        except DegenerateMetric:
            continue
        if codim == 2:
            ang = 2 * np.pi * np.arange(directions_per_point) / directions_per_point
            coeffs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
        else:
            coeffs = rng.normal(size=(directions_per_point, codim))
            coeffs /= np.linalg.norm(coeffs, axis=1, keepdims=True)
        for c in coeffs:
            idx.append(i)
            dirs.append(c @ frame)
    return np.array(idx, dtype=int), np.array(dirs).reshape(-1, spec.n)


def focal_cloud(spec: ImmersionSpec, samples_per_axis: int, directions_per_point: int = 16) -> FocalCloud:
    """Sample the focal set as images ``pos + t n`` of focal parameters."""
    if samples_per_axis < 1 or directions_per_point < 1:
        raise ValueError("sampling densities must be positive")
    X = spec.grid(samples_per_axis)
    pos, d1, d2 = spec.jets(X)
    g = np.einsum("kia,kib->kab", d1, d1)
    gmin = np.linalg.eigvalsh(g)[:, 0]
    ok = gmin >= 1e-10
    skipped = int(np.sum(~ok))
    keep = np.flatnonzero(ok)
    X, pos, d1, d2, g = X[keep], pos[keep], d1[keep], d2[keep], g[keep]

    idx, dirs = _unit_normal_directions(spec, X, pos, d1, directions_per_point)
    if len(idx) == 0:
        return FocalCloud(np.zeros((0, spec.n)), np.zeros(0, int), np.zeros((0, spec.m)), skipped)
    h = np.einsum("ki,kiab->kab", dirs, d2[idx])
    L = np.linalg.cholesky(g[idx])
    Li = np.linalg.inv(L)
    A = Li @ h @ np.swapaxes(Li, 1, 2)
    kappa = np.linalg.eigvalsh(0.5 * (A + np.swapaxes(A, 1, 2)))
    kscale = np.maximum(np.abs(kappa).max(axis=1), 1.0 / spec.diameter)

    out_p, out_nu, out_x = [], [], []
    for row in range(len(idx)):
        tol = CLUSTER_TOL * kscale[row]
        for group in _cluster(kappa[row], tol):
            k = float(np.mean(kappa[row][group]))
            if abs(k) <= tol:
                continue
            out_p.append(pos[idx[row]] + dirs[row] / k)
            out_nu.append(len(group))
            out_x.append(X[idx[row]])
    return FocalCloud(np.array(out_p), np.array(out_nu, dtype=int), np.array(out_x), skipped)


# --------------------------------------------------------------------------
# regularity
# --------------------------------------------------------------------------

@dataclass
class Verdict:
    status: str  # "pass", "fail" or "inconclusive"
    margin: Optional[float] = None
    tolerance: Optional[float] = None
    note: str = ""

    def to_dict(self):
        return {"status": self.status, "margin": self.margin, "tolerance": self.tolerance, "note": self.note}


@dataclass
class RegularityCertificate:
    conditions: Dict[str, Verdict] = field(default_factory=dict)

    @property
    def overall(self) -> str:
        statuses = [v.status for v in self.conditions.values()]
        if all(s == "pass" for s in statuses):
            return "pass"
        if any(s == "fail" for s in statuses):
            return "fail"
        return "inconclusive"

    @property
    def passed(self) -> bool:
        return self.overall == "pass"

    def to_dict(self):
        return {"overall": self.overall, "conditions": {k: v.to_dict() for k, v in self.conditions.items()}}


CONDITIONS = ("avoids_singularities", "transversal", "a2_type", "m_distinct_focal")


def distinct_focal_verdict(spec: ImmersionSpec, fd: FocalData) -> Verdict:
    m = spec.m
    if fd.at_infinity:
        return Verdict("fail", note=f"{fd.at_infinity} focal point(s) at infinity")
    if any(fp.nu > 1 for fp in fd.points):
        return Verdict("fail", note="focal point of multiplicity > 1")
    if len(fd.points) != m:
        return Verdict("fail", note=f"{len(fd.points)} distinct focal points, need {m}")
    us = sorted(math.atan(fp.t) for fp in fd.points)
    gaps = [b - a for a, b in zip(us, us[1:])] + [us[0] + math.pi - us[-1]]
    sep = min(gaps) if len(us) > 1 else math.pi
    status = "pass" if sep > SEPARATION_TOL else "fail"
    return Verdict(status, margin=sep, tolerance=SEPARATION_TOL)


def third_derivative(spec: ImmersionSpec, line: NormalLine, t: float, v: np.ndarray, eps: float = 1e-4) -> float:
    """Dimensionless third derivative of the squared distance along ``v``.

    ``v`` is normalised to unit metric length; the central difference runs
    on the exact chart Hessian, so its error is O(eps^2).
    """
    jet = jet2(spec, line.x)
    g = jet.d1.T @ jet.d1
    v = v / math.sqrt(v @ g @ v)
    y = line.point(t)
    vals = []
    for s in (eps, -eps):
        xs = spec.wrap(line.x + s * v)
        _, _, H = sq_dist_jet(spec, xs, y)
        vals.append(v @ H @ v)
    c3 = (vals[0] - vals[1]) / (2 * eps)
    return abs(c3) * 0.5 * spec.diameter / 2.0


def regularity(spec: ImmersionSpec, x, direction, cfg=None, scan=None) -> RegularityCertificate:
    """Certificate for the four regularity conditions of a normal line.

    The distinct-focal-point condition is decided exactly.  The other three are
    numeric proxies evaluated along the line and can only pass or come out
    inconclusive.
    """
    from .normal_walk import WalkConfig, scan_normal

    cfg = cfg or WalkConfig()
    line = NormalLine.at(spec, x, direction)
    fd = focal_data(spec, line.x, line.direction)
    cert = RegularityCertificate()
    cert.conditions["m_distinct_focal"] = distinct_focal_verdict(spec, fd)
    if cert.conditions["m_distinct_focal"].status == "fail":
        for name in CONDITIONS[:3]:
            cert.conditions[name] = Verdict("inconclusive", note="not evaluated: focal structure is degenerate")
        cert.conditions = {k: cert.conditions[k] for k in CONDITIONS}
        return cert

    # A_2 proxy at every p-focal point
    worst = math.inf
    for i, kappa in enumerate(fd.curvatures):
        if abs(kappa) < 1e-300:
            continue
        worst = min(worst, third_derivative(spec, line, 1.0 / kappa, fd.vectors[:, i]))
    cert.conditions["a2_type"] = Verdict(
        "pass" if worst > A2_TOL else "inconclusive", margin=worst, tolerance=A2_TOL,
        note="third derivative along the kernel at the p-focal points",
    )

    if scan is None:
        try:
            scan = scan_normal(spec, line, cfg)
        except (UnresolvedEvent, GeometryError) as exc:
            msg = f"scan failed: {exc}"
            cert.conditions["avoids_singularities"] = Verdict("inconclusive", note=msg)
            cert.conditions["transversal"] = Verdict("inconclusive", note=msg)
            cert.conditions = {k: cert.conditions[k] for k in CONDITIONS}
            return cert

    cert.conditions["avoids_singularities"] = _singularity_proxy(scan, cfg)
    cert.conditions["transversal"] = _transversality_proxy(spec, line, scan, cfg)
    cert.conditions = {k: cert.conditions[k] for k in CONDITIONS}
    return cert


def _singularity_proxy(scan, cfg) -> Verdict:
    """Every event resolves to a single A_2 bifurcation away from r_i."""
    focal_u = [math.atan(fp.t) for fp in scan.focal.points]
    closest = math.inf
    for ev in scan.events:
        if ev.kind not in ("birth", "death"):
            continue
        for fu in focal_u:
            d = abs(ev.u_star - fu)
            closest = min(closest, d, math.pi - d)
    tol = cfg.exchange_tol
    unmatched = [ev for ev in scan.events if ev.kind == "index_exchange" and ev.focal_match is None]
    if unmatched:
        return Verdict("inconclusive", note="index exchange away from every p-focal point")
    if closest <= tol:
        return Verdict("inconclusive", margin=closest, tolerance=tol,
                       note="birth/death coincides with a p-focal point")
    return Verdict("pass", margin=None if math.isinf(closest) else closest, tolerance=tol,
                   note="all events resolved as isolated A_2 bifurcations")


def _transversality_proxy(spec, line, scan, cfg) -> Verdict:
    from .normal_walk import pair_separation

    worst = None
    for ev in scan.events:
        if ev.kind not in ("birth", "death"):
            continue
        ratio = pair_separation(spec, line, ev, cfg)
        if ratio is None:
            return Verdict("inconclusive", note=f"could not track colliding pair at u={ev.u_star:.6g}")
        dev = abs(math.log(ratio / 2.0))
        if worst is None or dev > worst[0]:
            worst = (dev, ratio)
        if not TRANSVERSAL_RATIO[0] <= ratio <= TRANSVERSAL_RATIO[1]:
            return Verdict("inconclusive", margin=ratio, tolerance=2.0,
                           note=f"pair separation ratio {ratio:.3g} suggests a tangential crossing")
    if worst is None:
        return Verdict("pass", note="no birth/death crossings on this normal")
    return Verdict("pass", margin=worst[1], tolerance=2.0,
                   note="square-root separation law at every birth/death crossing")
