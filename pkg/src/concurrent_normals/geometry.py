"""Immersions with exact 2-jets, fundamental forms and normal frames.

An :class:`ImmersionSpec` wraps a vectorised jet function mapping chart
coordinates of shape ``(k, m)`` to positions ``(k, n)``, first derivatives
``(k, n, m)`` and second derivatives ``(k, n, m, m)``.  Everything else in the
package is built on top of that single callable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from .errors import DegenerateMetric, OutOfChart

JetFn = Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray, np.ndarray]]

METRIC_FLOOR = 1e-10


@dataclass(frozen=True)
class Jet2:
    x: np.ndarray
    pos: np.ndarray
    d1: np.ndarray
    d2: np.ndarray

    @property
    def m(self) -> int:
        return self.d1.shape[1]

    @property
    def n(self) -> int:
        return self.pos.shape[0]


@dataclass(frozen=True)
class NormalFrame:
    base: Jet2
    vectors: np.ndarray  # (n - m, n), orthonormal rows


@dataclass(frozen=True)
class Companion:
    """A second chart of the same immersed manifold, used only for seeding.

    ``to_primary`` maps companion chart coordinates (k, m) to primary chart
    coordinates and ``from_primary`` goes the other way.  Points the primary
    chart does not trust (see ``ImmersionSpec.trusted``) are searched for in
    the companion chart.
    """

    spec: "ImmersionSpec"
    to_primary: Callable[[np.ndarray], np.ndarray]
    from_primary: Optional[Callable[[np.ndarray], np.ndarray]] = None


@dataclass(frozen=True, eq=False)
class ImmersionSpec:
    m: int
    n: int
    lo: Tuple[float, ...]
    hi: Tuple[float, ...]
    periodic: Tuple[bool, ...]
    jet_fn: JetFn
    betti: Tuple[int, ...]
    name: str
    params: Tuple[float, ...] = ()
    closed: bool = True
    companions: Tuple[Companion, ...] = ()
    trusted: Optional[Callable[[np.ndarray], np.ndarray]] = None
    # where Newton iterates are worth continuing (e.g. away from chart poles)
    searchable: Optional[Callable[[np.ndarray], np.ndarray]] = None
    diameter: float = field(init=False, default=0.0)

    def __post_init__(self):
        if not 0 < self.m < self.n:
            raise ValueError(f"need 0 < m < n, got m={self.m}, n={self.n}")
        if not (len(self.lo) == len(self.hi) == len(self.periodic) == self.m):
            raise ValueError("chart bounds must have one entry per chart axis")
        if any(h <= l for l, h in zip(self.lo, self.hi)):
            raise ValueError("chart domain must have positive side lengths")
        if len(self.betti) != self.m + 1 or self.betti[0] < 1:
            raise ValueError("betti must list beta_0..beta_m with beta_0 >= 1")
        if self.closed and tuple(self.betti) != tuple(reversed(self.betti)):
            raise ValueError("Z_2 Betti numbers of a closed manifold must satisfy duality")
        object.__setattr__(self, "diameter", _estimate_diameter(self))

    @property
    def beta(self) -> int:
        return int(sum(self.betti))

    @property
    def euler(self) -> int:
        return int(sum((-1) ** i * b for i, b in enumerate(self.betti)))

    @property
    def periods(self) -> np.ndarray:
        return np.asarray(self.hi, float) - np.asarray(self.lo, float)

    def wrap(self, X: np.ndarray) -> np.ndarray:
        """Reduce periodic coordinates into ``[lo, hi)``."""
        X = np.array(X, dtype=float, copy=True)
        lo = np.asarray(self.lo, float)
        per = self.periods
        for a in range(self.m):
            if self.periodic[a]:
                X[..., a] = lo[a] + np.mod(X[..., a] - lo[a], per[a])
        return X

    def inside(self, X: np.ndarray) -> np.ndarray:
        """Mask of points whose non-periodic coordinates lie in the chart."""
        X = np.atleast_2d(X)
        ok = np.ones(X.shape[0], dtype=bool)
        for a in range(self.m):
            if not self.periodic[a]:
                ok &= (X[:, a] >= self.lo[a]) & (X[:, a] <= self.hi[a])
        return ok

    def trusted_mask(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        mask = self.inside(X)
        if self.trusted is not None:
            mask &= self.trusted(X)
        return mask

    def jets(self, X: np.ndarray):
        """Batched jets at already-wrapped chart points."""
        return self.jet_fn(np.atleast_2d(np.asarray(X, dtype=float)))

    def chart_distance(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Euclidean chart distance with periodic identification."""
        d = np.abs(np.asarray(a, float) - np.asarray(b, float))
        per = self.periods
        for ax in range(self.m):
            if self.periodic[ax]:
                d[..., ax] = np.minimum(d[..., ax], per[ax] - d[..., ax])
        return np.sqrt(np.sum(d * d, axis=-1))

    def grid(self, per_axis: int, margin: float = 0.0) -> np.ndarray:
        """Uniform chart grid; periodic axes exclude the duplicate endpoint."""
        axes = []
        for a in range(self.m):
            lo, hi = self.lo[a], self.hi[a]
            if self.periodic[a]:
                axes.append(lo + (hi - lo) * (np.arange(per_axis) + 0.5) / per_axis)
            else:
                w = (hi - lo) * margin
                axes.append(np.linspace(lo + w, hi - w, per_axis))
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=1)


def _estimate_diameter(spec: ImmersionSpec) -> float:
    per_axis = 64 if spec.m == 1 else 24
    pos = spec.jets(spec.grid(per_axis))[0]
    span = pos.max(axis=0) - pos.min(axis=0)
    return float(np.linalg.norm(span))


def jet2(spec: ImmersionSpec, x: Sequence[float]) -> Jet2:
    x = np.asarray(x, dtype=float).reshape(spec.m)
    if not spec.inside(x)[0]:
        raise OutOfChart(f"{spec.name}: chart point {x.tolist()} outside the domain")
    x = spec.wrap(x)
    pos, d1, d2 = spec.jets(x[None, :])
    return Jet2(x=x, pos=pos[0], d1=d1[0], d2=d2[0])


def metric_and_form(jet: Jet2, normal: Sequence[float]):
    """First fundamental form ``g`` and the second form ``h`` along ``normal``."""
    normal = np.asarray(normal, dtype=float)
    g = jet.d1.T @ jet.d1
    if np.linalg.eigvalsh(g)[0] < METRIC_FLOOR:
        raise DegenerateMetric(f"metric is singular at chart point {jet.x.tolist()}")
    h = np.einsum("k,kij->ij", normal, jet.d2)
    return g, 0.5 * (h + h.T)


def normal_frame(jet: Jet2) -> NormalFrame:
    """Orthonormal basis of the normal space.

    Codimension one uses the cofactor vector of ``d1`` (so ``det[n | d1] > 0``);
    higher codimension runs Gram-Schmidt on the ambient coordinate axes,
    always taking the axis with the largest remaining component next.
    """
    d1 = jet.d1
    n, m = d1.shape
    if np.linalg.svd(d1, compute_uv=False)[-1] ** 2 < METRIC_FLOOR:
        raise DegenerateMetric(f"tangent map has deficient rank at {jet.x.tolist()}")
    if n - m == 1:
        cof = np.empty(n)
        for k in range(n):
            minor = np.delete(d1, k, axis=0)
            cof[k] = (-1) ** k * np.linalg.det(minor)
        return NormalFrame(jet, (cof / np.linalg.norm(cof))[None, :])

    q, _ = np.linalg.qr(d1)
    basis = [q[:, a] for a in range(m)]
    chosen = []
    for _ in range(n - m):
        best, best_norm = None, -1.0
        for k in range(n):
            v = np.zeros(n)
            v[k] = 1.0
            for b in basis:
                v -= (v @ b) * b
            nv = np.linalg.norm(v)
            if nv > max(best_norm + 1e-12, 0.0):
                best, best_norm = v / nv, nv
        # a second pass restores orthogonality lost to cancellation
        for b in basis:
            best -= (best @ b) * b
        best /= np.linalg.norm(best)
        basis.append(best)
        chosen.append(best)
    return NormalFrame(jet, np.array(chosen))


def normal_direction(jet: Jet2, angle: float = 0.0, inward: bool = False) -> np.ndarray:
    """Unit normal picked from the frame.

    For codimension two ``angle`` rotates within the normal plane; higher
    codimensions only use the first two frame vectors.
    """
    vecs = normal_frame(jet).vectors
    if len(vecs) == 1:
        v = vecs[0]
    else:
        v = np.cos(angle) * vecs[0] + np.sin(angle) * vecs[1]
    return -v if inward else v
