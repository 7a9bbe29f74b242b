"""Builtin example immersions with closed-form jets."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .errors import BadParams, UnknownExample
from .geometry import Companion, ImmersionSpec

TWO_PI = 2.0 * math.pi
# polar charts hand the caps |z| > cos(POLE_BAND) over to the companion chart
POLE_BAND = 0.35


def _ellipse_jets(a, b, lift):
    def jet_fn(X):
        s = X[:, 0]
        c, sn = np.cos(s), np.sin(s)
        k = len(s)
        n = 3 if lift else 2
        pos = np.zeros((k, n))
        d1 = np.zeros((k, n, 1))
        d2 = np.zeros((k, n, 1, 1))
        pos[:, 0], pos[:, 1] = a * c, b * sn
        d1[:, 0, 0], d1[:, 1, 0] = -a * sn, b * c
        d2[:, 0, 0, 0], d2[:, 1, 0, 0] = -a * c, -b * sn
        return pos, d1, d2

    return jet_fn


def _curve(name, a, b, lift, params):
    return ImmersionSpec(
        m=1,
        n=3 if lift else 2,
        lo=(0.0,),
        hi=(TWO_PI,),
        periodic=(True,),
        jet_fn=_ellipse_jets(a, b, lift),
        betti=(1, 1),
        name=name,
        params=tuple(params),
    )


def _polar_jets(a, b, c):
    """(a sin t cos p, b sin t sin p, c cos t) on chart (t, p)."""

    def jet_fn(X):
        t, p = X[:, 0], X[:, 1]
        st, ct, sp, cp = np.sin(t), np.cos(t), np.sin(p), np.cos(p)
        k = len(t)
        pos = np.stack([a * st * cp, b * st * sp, c * ct], axis=1)
        d1 = np.zeros((k, 3, 2))
        d1[:, :, 0] = np.stack([a * ct * cp, b * ct * sp, -c * st], axis=1)
        d1[:, :, 1] = np.stack([-a * st * sp, b * st * cp, np.zeros(k)], axis=1)
        d2 = np.zeros((k, 3, 2, 2))
        d2[:, :, 0, 0] = np.stack([-a * st * cp, -b * st * sp, -c * ct], axis=1)
        d2[:, :, 0, 1] = np.stack([-a * ct * sp, b * ct * cp, np.zeros(k)], axis=1)
        d2[:, :, 1, 0] = d2[:, :, 0, 1]
        d2[:, :, 1, 1] = np.stack([-a * st * cp, -b * st * sp, np.zeros(k)], axis=1)
        return pos, d1, d2

    return jet_fn


def _companion_polar_jets(a, b, c):
    """Polar chart with its axis along x: (a cos t, b sin t cos p, c sin t sin p)."""
    base = _polar_jets(b, c, a)
    perm = [2, 0, 1]

    def jet_fn(X):
        pos, d1, d2 = base(X)
        return pos[:, perm], d1[:, perm], d2[:, perm]

    return jet_fn


def _ellipsoid(name, a, b, c, params):
    def companion_to_primary(X):
        t, p = X[:, 0], X[:, 1]
        x = np.cos(t)
        y = np.sin(t) * np.cos(p)
        z = np.sin(t) * np.sin(p)
        theta = np.arccos(np.clip(z, -1.0, 1.0))
        phi = np.mod(np.arctan2(y, x), TWO_PI)
        phi = np.where(np.hypot(x, y) < 1e-12, 0.0, phi)
        return np.stack([theta, phi], axis=1)

    def primary_to_companion(X):
        th, ph = X[:, 0], X[:, 1]
        x = np.sin(th) * np.cos(ph)
        y = np.sin(th) * np.sin(ph)
        z = np.cos(th)
        t = np.arccos(np.clip(x, -1.0, 1.0))
        p = np.mod(np.arctan2(z, y), TWO_PI)
        return np.stack([t, p], axis=1)

    def trusted(X):
        return (X[:, 0] >= POLE_BAND) & (X[:, 0] <= math.pi - POLE_BAND)

    def searchable(X):
        return (X[:, 0] >= POLE_BAND / 3) & (X[:, 0] <= math.pi - POLE_BAND / 3)

    companion = ImmersionSpec(
        m=2, n=3, lo=(0.0, 0.0), hi=(math.pi, TWO_PI), periodic=(False, True),
        jet_fn=_companion_polar_jets(a, b, c), betti=(1, 0, 1),
        name=f"{name}-companion", params=tuple(params), searchable=searchable,
    )
    return ImmersionSpec(
        m=2, n=3, lo=(0.0, 0.0), hi=(math.pi, TWO_PI), periodic=(False, True),
        jet_fn=_polar_jets(a, b, c), betti=(1, 0, 1), name=name,
        params=tuple(params),
        companions=(Companion(companion, companion_to_primary, primary_to_companion),),
        trusted=trusted,
        searchable=searchable,
    )


def _torus_jets(R, r):
    def jet_fn(X):
        u, v = X[:, 0], X[:, 1]
        cu, su, cv, sv = np.cos(u), np.sin(u), np.cos(v), np.sin(v)
        w = R + r * cv
        k = len(u)
        pos = np.stack([w * cu, w * su, r * sv], axis=1)
        d1 = np.zeros((k, 3, 2))
        d1[:, :, 0] = np.stack([-w * su, w * cu, np.zeros(k)], axis=1)
        d1[:, :, 1] = np.stack([-r * sv * cu, -r * sv * su, r * cv], axis=1)
        d2 = np.zeros((k, 3, 2, 2))
        d2[:, :, 0, 0] = np.stack([-w * cu, -w * su, np.zeros(k)], axis=1)
        d2[:, :, 0, 1] = np.stack([r * sv * su, -r * sv * cu, np.zeros(k)], axis=1)
        d2[:, :, 1, 0] = d2[:, :, 0, 1]
        d2[:, :, 1, 1] = np.stack([-r * cv * cu, -r * cv * su, -r * sv], axis=1)
        return pos, d1, d2

    return jet_fn


def _graph_jets(a, b):
    def jet_fn(X):
        x, y = X[:, 0], X[:, 1]
        k = len(x)
        pos = np.stack([x, y, 0.5 * (a * x * x + b * y * y)], axis=1)
        d1 = np.zeros((k, 3, 2))
        d1[:, 0, 0] = 1.0
        d1[:, 1, 1] = 1.0
        d1[:, 2, 0] = a * x
        d1[:, 2, 1] = b * y
        d2 = np.zeros((k, 3, 2, 2))
        d2[:, 2, 0, 0] = a
        d2[:, 2, 1, 1] = b
        return pos, d1, d2

    return jet_fn


def _positive(name, params, count):
    if len(params) != count:
        raise BadParams(f"{name} takes {count} parameter(s), got {len(params)}")
    vals = tuple(float(p) for p in params)
    if any(not math.isfinite(v) or v <= 0 for v in vals):
        raise BadParams(f"{name} parameters must be positive, got {list(params)}")
    return vals


DEFAULT_PARAMS = {
    "circle2d": (1.0,),
    "ellipse2d": (2.0, 1.0),
    "circle3d": (2.0,),
    "ellipse3d": (2.0, 1.0),
    "sphere": (1.0,),
    "ellipsoid": (3.0, 2.0, 1.0),
    "torus": (2.0, 1.0),
    "graph2d": (1.0, 1.0),
}

BUILTIN_NAMES = tuple(DEFAULT_PARAMS) + ("tube",)


def builtin(name: str, params: Sequence[float] = None, child: ImmersionSpec = None) -> ImmersionSpec:
    """Instantiate a named example manifold.

    ``tube`` needs ``child`` (a curve in R^3) and ``params = (r,)``.
    """
    if name == "tube":
        from .tube import tube_spec

        if child is None:
            raise BadParams("tube needs a child immersion")
        (r,) = _positive("tube", params or (), 1)
        return tube_spec(child, r)
    if name not in DEFAULT_PARAMS:
        raise UnknownExample(f"unknown example {name!r}; choose from {', '.join(BUILTIN_NAMES)}")
    if params is None or len(params) == 0:
        params = DEFAULT_PARAMS[name]

    if name == "circle2d":
        (R,) = _positive(name, params, 1)
        return _curve(name, R, R, False, (R,))
    if name == "ellipse2d":
        a, b = _positive(name, params, 2)
        return _curve(name, a, b, False, (a, b))
    if name == "circle3d":
        (R,) = _positive(name, params, 1)
        return _curve(name, R, R, True, (R,))
    if name == "ellipse3d":
        a, b = _positive(name, params, 2)
        return _curve(name, a, b, True, (a, b))
    if name == "sphere":
        (r,) = _positive(name, params, 1)
        return _ellipsoid(name, r, r, r, (r,))
    if name == "ellipsoid":
        a, b, c = _positive(name, params, 3)
        return _ellipsoid(name, a, b, c, (a, b, c))
    if name == "torus":
        R, r = _positive(name, params, 2)
        if r >= R:
            raise BadParams("torus needs tube radius r < R")
        return ImmersionSpec(
            m=2, n=3, lo=(0.0, 0.0), hi=(TWO_PI, TWO_PI), periodic=(True, True),
            jet_fn=_torus_jets(R, r), betti=(1, 2, 1), name=name, params=(R, r),
        )
    # graph2d: a patch with boundary, so global Morse counts do not apply
    if len(params) != 2:
        raise BadParams("graph2d takes 2 parameters")
    a, b = (float(p) for p in params)
    return ImmersionSpec(
        m=2, n=3, lo=(-1.0, -1.0), hi=(1.0, 1.0), periodic=(False, False),
        jet_fn=_graph_jets(a, b), betti=(1, 0, 0), name=name, params=(a, b),
        closed=False,
    )
