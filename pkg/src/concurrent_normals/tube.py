"""Tubes around closed space curves and the excess-doubling check.

The tube of radius ``r`` around a curve ``c`` is parametrised by
``(s, theta) -> c(s) + r (cos(theta) e1(s) + sin(theta) e2(s))`` where
``(e1, e2)`` is a rotation-minimising normal frame.  The frame is transported
by double reflection on a fine grid, its closure twist is spread uniformly
along the curve, and the result is fitted by a periodic quintic spline whose
derivatives supply the jets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import make_interp_spline

from .errors import BadParams, FrameFailure, NonMorsePoint, PairingFailure, RadiusTooLarge
from .geometry import ImmersionSpec, jet2, normal_frame
from .morse import Census, SolverConfig, find_critical_points

TWO_PI = 2.0 * math.pi
FRAME_NODES = 2048
ORTHO_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class TubeSpec(ImmersionSpec):
    child: Optional[ImmersionSpec] = None
    radius: float = 0.0
    twist: float = 0.0  # closure twist of the transported frame, radians


def curvature_radii(child: ImmersionSpec, samples: int = 4096) -> np.ndarray:
    """Radius of curvature ``|c'|^3 / |c' x c''|`` on a uniform chart grid."""
    _, d1, d2 = child.jets(child.grid(samples))
    v, a = d1[:, :, 0], d2[:, :, 0, 0]
    cross = np.linalg.norm(np.cross(v, a), axis=1)
    speed = np.linalg.norm(v, axis=1)
    with np.errstate(divide="ignore"):
        return np.where(cross > 0, speed ** 3 / np.maximum(cross, 1e-300), np.inf)


def _transport(child: ImmersionSpec, nodes: int):
    """Double-reflection frame on ``nodes`` chart points, closure twist removed."""
    s = child.lo[0] + child.periods[0] * np.arange(nodes) / nodes
    pos, d1, _ = child.jets(s[:, None])
    T = d1[:, :, 0] / np.linalg.norm(d1[:, :, 0], axis=1)[:, None]
    e = np.empty_like(T)
    e[0] = normal_frame(jet2(child, [s[0]])).vectors[0]
    P = np.vstack([pos, pos[:1]])
    TT = np.vstack([T, T[:1]])
    r = e[0]
    for k in range(nodes):
        v1 = P[k + 1] - P[k]
        c1 = v1 @ v1
        if c1 <= 1e-300:
            raise FrameFailure(f"consecutive frame nodes coincide at s={s[k]:.6g}")
        rl = r - (2.0 / c1) * (v1 @ r) * v1
        tl = TT[k] - (2.0 / c1) * (v1 @ TT[k]) * v1
        v2 = TT[k + 1] - tl
        c2 = v2 @ v2
        r = rl - (2.0 / c2) * (v2 @ rl) * v2 if c2 > 1e-300 else rl
        if k + 1 < nodes:
            e[k + 1] = r
    # r is now the transported copy of e[0]; rotate it back gradually
    twist = math.atan2(np.cross(r, e[0]) @ T[0], r @ e[0])
    ang = twist * np.arange(nodes) / nodes
    b = np.cross(T, e)
    e1 = np.cos(ang)[:, None] * e + np.sin(ang)[:, None] * b
    e2 = np.cross(T, e1)
    err = max(np.abs(np.einsum("ki,ki->k", e1, T)).max(),
              np.abs(np.linalg.norm(e1, axis=1) - 1.0).max())
    if not np.isfinite(err) or err > ORTHO_TOL:
        raise FrameFailure(f"transported frame lost orthonormality ({err:.2e})")
    return s, e1, e2, twist


def tube_spec(child: ImmersionSpec, r: float, nodes: int = FRAME_NODES) -> TubeSpec:
    """Tube of radius ``r`` around a closed curve in R^3."""
    if child.m != 1 or child.n != 3:
        raise BadParams("tube cores must be curves in R^3")
    if not (child.closed and child.periodic[0]):
        raise BadParams("tube cores must be closed periodic curves")
    r = float(r)
    if not (math.isfinite(r) and r > 0):
        raise BadParams("tube radius must be positive")
    rmin = float(curvature_radii(child).min())
    if r >= rmin:
        raise RadiusTooLarge(f"radius {r} is not below the smallest curvature radius {rmin:.6g}")

    s, e1, e2, twist = _transport(child, nodes)
    period = child.periods[0]
    knots = np.append(s, s[0] + period)
    vals = np.vstack([np.hstack([e1, e2]), np.hstack([e1[:1], e2[:1]])])
    spl = make_interp_spline(knots, vals, k=5, bc_type="periodic")
    dspl, ddspl = spl.derivative(1), spl.derivative(2)
    lo = child.lo[0]

    def jet_fn(X):
        sc, th = X[:, 0], X[:, 1]
        q = lo + np.mod(sc - lo, period)
        cpos, cd1, cd2 = child.jets(sc[:, None])
        F, dF, ddF = spl(q), dspl(q), ddspl(q)
        ct, st = np.cos(th)[:, None], np.sin(th)[:, None]
        radial = ct * F[:, :3] + st * F[:, 3:]
        dradial = -st * F[:, :3] + ct * F[:, 3:]
        k = len(sc)
        pos = cpos + r * radial
        d1 = np.empty((k, 3, 2))
        d1[:, :, 0] = cd1[:, :, 0] + r * (ct * dF[:, :3] + st * dF[:, 3:])
        d1[:, :, 1] = r * dradial
        d2 = np.empty((k, 3, 2, 2))
        d2[:, :, 0, 0] = cd2[:, :, 0, 0] + r * (ct * ddF[:, :3] + st * ddF[:, 3:])
        d2[:, :, 0, 1] = r * (-st * dF[:, :3] + ct * dF[:, 3:])
        d2[:, :, 1, 0] = d2[:, :, 0, 1]
        d2[:, :, 1, 1] = -r * radial
        return pos, d1, d2

    b0, b1 = child.betti
    return TubeSpec(
        m=2, n=3, lo=(lo, 0.0), hi=(child.hi[0], TWO_PI), periodic=(True, True),
        jet_fn=jet_fn, betti=(b0, b0 + b1, b1), name="tube",
        params=(r,), child=child, radius=r, twist=twist,
    )


# --------------------------------------------------------------------------
# excess doubling
# --------------------------------------------------------------------------

@dataclass
class TubePair:
    child_x: float
    child_mu: int
    near_x: Tuple[float, float]
    near_mu: int
    far_x: Tuple[float, float]
    far_mu: int

    @property
    def index_ok(self) -> bool:
        # the core is a focal point between the far point and y, never the near one
        return self.near_mu == self.child_mu and self.far_mu == self.child_mu + 1

    def to_dict(self):
        return {"child_x": self.child_x, "child_mu": self.child_mu,
                "near": {"x": list(self.near_x), "mu": self.near_mu},
                "far": {"x": list(self.far_x), "mu": self.far_mu},
                "index_ok": self.index_ok}


@dataclass
class DoublingReport:
    y: np.ndarray
    radius: float
    child: Census
    tube: Census
    beta_child: int
    beta_tube: int
    pairs: List[TubePair] = field(default_factory=list)

    @property
    def k_child(self) -> int:
        return self.child.count - self.beta_child

    @property
    def excess_tube(self) -> int:
        return self.tube.count - self.beta_tube

    @property
    def doubling_ok(self) -> bool:
        return self.tube.count == 2 * self.child.count

    @property
    def excess_ok(self) -> bool:
        return self.excess_tube >= 2 * self.k_child

    @property
    def index_ok(self) -> bool:
        return all(p.index_ok for p in self.pairs)

    @property
    def status(self) -> str:
        return "PASS" if self.doubling_ok and self.excess_ok and self.index_ok else "FAIL"

    def to_dict(self):
        return {
            "y": self.y.tolist(),
            "radius": self.radius,
            "child_count": self.child.count,
            "tube_count": self.tube.count,
            "child_counts_by_index": {str(i): int(c) for i, c in enumerate(self.child.counts)},
            "tube_counts_by_index": {str(i): int(c) for i, c in enumerate(self.tube.counts)},
            "k_child": self.k_child,
            "excess_tube": self.excess_tube,
            "doubling": self.doubling_ok,
            "excess_inequality": self.excess_ok,
            "index_accounting": self.index_ok,
            "pairs": [p.to_dict() for p in self.pairs],
            "status": self.status,
        }


def _fiber_angle(tube: TubeSpec, s: float, w: np.ndarray) -> float:
    """Angle theta at which the tube's radial direction at ``s`` equals ``w``."""
    jet = jet2(tube, [s, 0.0])
    e1 = (jet.pos - tube.child.jets(np.array([[s]]))[0][0]) / tube.radius
    e2 = jet.d1[:, 1] / tube.radius
    return math.atan2(w @ e2, w @ e1) % TWO_PI


def verify_doubling(child: ImmersionSpec, r: float, y: Sequence[float], cfg: SolverConfig = None,
                    tube: TubeSpec = None, pair_tol: float = 1e-6) -> DoublingReport:
    """Compare the censuses of a curve and of its tube from the same point.

    ``y`` must stay farther than ``r`` from the curve.  Every child critical
    point ``p`` must correspond to exactly two tube critical points, on the
    fibre over ``p`` toward and away from ``y``.
    """
    cfg = cfg or SolverConfig()
    y = np.asarray(y, dtype=float)
    tube = tube or tube_spec(child, r)
    child_census = find_critical_points(child, y, cfg)
    dist = math.sqrt(max(min(p.value for p in child_census.points), 0.0))
    if dist <= 1e-9 * child.diameter:
        raise NonMorsePoint("query lies on the core curve: a whole fibre circle is critical")
    if dist <= tube.radius:
        raise BadParams(f"query must lie outside the tube (distance {dist:.6g} <= r={tube.radius})")
    tube_census = find_critical_points(tube, y, cfg)

    report = DoublingReport(y, tube.radius, child_census, tube_census, child.beta, tube.beta)
    used = set()
    for p in child_census.points:
        s = float(p.x[0])
        w = (y - p.pos) / np.linalg.norm(y - p.pos)
        toward = _fiber_angle(tube, s, w)
        match = []
        for theta in (toward, (toward + math.pi) % TWO_PI):
            target = np.array([s, theta])
            d = [tube.chart_distance(q.x, target) for q in tube_census.points]
            j = int(np.argmin(d)) if d else -1
            if j < 0 or d[j] > pair_tol or j in used:
                raise PairingFailure(f"no tube critical point over child point s={s:.9g} at theta={theta:.9g}")
            used.add(j)
            match.append(tube_census.points[j])
        near, far = match
        report.pairs.append(TubePair(s, p.mu, tuple(near.x.tolist()), near.mu,
                                     tuple(far.x.tolist()), far.mu))
    if len(used) != tube_census.count:
        raise PairingFailure(f"{tube_census.count - len(used)} tube critical point(s) have no child partner")
    return report
