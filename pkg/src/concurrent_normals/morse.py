"""Critical points of squared-distance and height functions on immersions.

Every point ``y`` in the ambient space gives a function
``d_y(x) = ||pos(x) - y||^2`` on the manifold whose critical points are the
feet of the normals through ``y``.  :func:`find_critical_points` enumerates
them by multi-start damped Newton on the chart gradient; the independent
:func:`brute_force_census` scans a dense grid and refines with MINPACK.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence

import numpy as np
from scipy import optimize

from .errors import NonMorsePoint
from .geometry import ImmersionSpec, jet2

# Ambient distance, relative to the diameter, within which two degenerate
# critical points are taken as part of one non-isolated critical set.
CONTINUUM_RADIUS = 0.05
# copies of one degenerate critical point found from different seeds stay this
# far apart (relative to the diameter) and are merged
DEGENERATE_MERGE = 1e-4
MAX_DEGENERATE_CANDIDATES = 500
STEP_TOL = 1e-13


@dataclass(frozen=True)
class SolverConfig:
    seeds_per_axis: Optional[int] = None  # 48 for curves, 32 for surfaces
    newton_tol: float = 1e-12
    max_newton_iters: int = 30
    dedup_radius: float = 1e-7
    degeneracy_threshold: float = 1e-7
    max_step: float = 0.5
    euler_retries: int = 2

    def __post_init__(self):
        for name in ("newton_tol", "dedup_radius", "degeneracy_threshold", "max_step"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.seeds_per_axis is not None and self.seeds_per_axis < 2:
            raise ValueError("seeds_per_axis must be at least 2")
        if self.max_newton_iters < 1:
            raise ValueError("max_newton_iters must be positive")

    def seeds_for(self, m: int) -> int:
        if self.seeds_per_axis is not None:
            return self.seeds_per_axis
        return 48 if m == 1 else 32


@dataclass(frozen=True)
class CriticalPoint:
    x: np.ndarray
    pos: np.ndarray
    value: float
    mu: int
    degeneracy_margin: float
    residual: float

    def to_dict(self):
        return {
            "x": [float(v) for v in self.x],
            "pos": [float(v) for v in self.pos],
            "value": float(self.value),
            "mu": int(self.mu),
            "margin": float(self.degeneracy_margin),
        }


@dataclass(frozen=True)
class Census:
    y: np.ndarray
    points: List[CriticalPoint]
    counts: tuple
    morse_ok: bool
    kind: str = "distance"
    betti: tuple = ()
    closed: bool = True

    @property
    def count(self) -> int:
        return len(self.points)

    @property
    def indices(self) -> tuple:
        return tuple(sorted(p.mu for p in self.points))

    @property
    def euler_sum(self) -> int:
        return int(sum((-1) ** i * c for i, c in enumerate(self.counts)))

    @property
    def euler_ok(self) -> bool:
        if not self.closed:
            return True
        chi = sum((-1) ** i * b for i, b in enumerate(self.betti))
        return self.euler_sum == chi

    @property
    def bounds_ok(self) -> bool:
        """Morse inequalities ``c_i >= beta_i`` (closed manifolds only)."""
        if not self.closed:
            return True
        return all(c >= b for c, b in zip(self.counts, self.betti))

    @property
    def min_margin(self) -> float:
        return min((p.degeneracy_margin for p in self.points), default=np.inf)

    def to_dict(self):
        return {
            "y": [float(v) for v in self.y],
            "kind": self.kind,
            "count": self.count,
            "counts_by_index": {str(i): int(c) for i, c in enumerate(self.counts)},
            "morse_ok": bool(self.morse_ok),
            "points": [p.to_dict() for p in self.points],
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        m = len(self.points[0].x) if self.points else 0
        n = len(self.y)
        w.writerow([f"x{i}" for i in range(m)] + [f"p{i}" for i in range(n)] + ["value", "mu", "margin"])
        for p in self.points:
            w.writerow([repr(float(v)) for v in p.x] + [repr(float(v)) for v in p.pos]
                       + [repr(float(p.value)), p.mu, repr(float(p.degeneracy_margin))])
        return buf.getvalue()


# --------------------------------------------------------------------------
# objectives: batched (value, gradient, hessian, residual scale)
# --------------------------------------------------------------------------

class _Objective:
    def __init__(self, spec: ImmersionSpec):
        self.spec = spec
        self.length = max(0.5 * spec.diameter, 1e-300)

    def evaluate(self, X, rows=None):
        raise NotImplementedError

    def target(self, rows):
        """The query (one row, or one row per seed for batched solves)."""
        if self.y.ndim == 1 or rows is None:
            return self.y
        return self.y[rows]

    def residual(self, grad, scale):
        return np.linalg.norm(grad, axis=1) / scale

    def margins(self, g, H, B):
        """Morse index and relative distance from degeneracy, per point."""
        L = np.linalg.cholesky(g)
        Li = np.linalg.inv(L)
        A = Li @ H @ np.swapaxes(Li, -1, -2)
        Bn = Li @ B @ np.swapaxes(Li, -1, -2)
        lam = np.linalg.eigvalsh(0.5 * (A + np.swapaxes(A, -1, -2)))
        bscale = np.abs(np.linalg.eigvalsh(0.5 * (Bn + np.swapaxes(Bn, -1, -2)))).max(axis=1)
        return lam, bscale


class SqDistObjective(_Objective):
    kind = "distance"

    def __init__(self, spec, y):
        super().__init__(spec)
        self.y = np.asarray(y, dtype=float)

    def evaluate(self, X, rows=None):
        pos, d1, d2 = self.spec.jets(X)
        r = pos - self.target(rows)
        value = np.einsum("ki,ki->k", r, r)
        grad = 2.0 * np.einsum("kia,ki->ka", d1, r)
        g = np.einsum("kia,kib->kab", d1, d1)
        B = np.einsum("kiab,ki->kab", d2, r)
        H = 2.0 * (g + B)
        scale = 2.0 * (np.sqrt(value) + self.length) * np.linalg.norm(d1, axis=(1, 2))
        return pos, value, grad, H, g, B, scale

    def classify(self, g, H, B):
        lam, bscale = self.margins(g, 0.5 * H, B)
        mu = np.sum(lam < 0, axis=1)
        margin = np.abs(lam).min(axis=1) / np.maximum(1.0, bscale)
        return mu, margin


class HeightObjective(_Objective):
    """x -> <pos(x), direction>: the far-point limit of the squared distance."""

    kind = "linear"

    def __init__(self, spec, direction):
        super().__init__(spec)
        self.y = np.asarray(direction, dtype=float)

    def evaluate(self, X, rows=None):
        pos, d1, d2 = self.spec.jets(X)
        u = np.broadcast_to(self.target(rows), pos.shape)
        value = np.einsum("ki,ki->k", pos, u)
        grad = np.einsum("kia,ki->ka", d1, u)
        g = np.einsum("kia,kib->kab", d1, d1)
        H = np.einsum("kiab,ki->kab", d2, u)
        scale = np.linalg.norm(d1, axis=(1, 2))
        return pos, value, grad, H, g, H, scale

    def classify(self, g, H, B):
        lam, _ = self.margins(g, H, B)
        mu = np.sum(lam < 0, axis=1)
        absl = np.abs(lam) * self.length
        margin = absl.min(axis=1) / np.maximum(1.0, absl.max(axis=1))
        return mu, margin


# --------------------------------------------------------------------------
# multi-start Newton
# --------------------------------------------------------------------------

HALVINGS = 8
STALL_WINDOW = 5
STALL_FLOOR = 1e-8


def _line_search(obj, spec, X, res, grad, H, scale, step, rows):
    k = len(X)
    alpha = np.ones(k)

    def attempt(base, base_res, st, a, r):
        trial = base + a[:, None] * st
        inside = spec.inside(trial)
        trial = spec.wrap(trial)
        _, _, gt, Ht, _, _, sc = obj.evaluate(trial, r)
        rt = obj.residual(gt, sc)
        ok = inside & ((rt < base_res) | (rt == 0.0))
        return trial, gt, Ht, sc, rt, ok

    trial, gt, Ht, st, rt, ok = attempt(X, res, step, alpha, rows)
    Xn = np.where(ok[:, None], trial, X)
    resn = np.where(ok, rt, res)
    gradn = np.where(ok[:, None], gt, grad)
    Hn = np.where(ok[:, None, None], Ht, H)
    scalen = np.where(ok, st, scale)
    pending = ~ok
    rest = np.flatnonzero(pending)
    if len(rest):
        fr = 0.5 ** np.arange(1, HALVINGS)
        nf = len(fr)
        trial, gt, Ht, st, rt, ok = attempt(
            np.repeat(X[rest], nf, axis=0), np.repeat(res[rest], nf),
            np.repeat(step[rest], nf, axis=0), np.tile(fr, len(rest)), np.repeat(rows[rest], nf))
        ok = ok.reshape(len(rest), nf)
        hit = ok.any(axis=1)
        first = np.argmax(ok, axis=1)
        rows = rest[hit]
        q = np.flatnonzero(hit) * nf + first[hit]
        Xn[rows], resn[rows], gradn[rows], Hn[rows], scalen[rows] = trial[q], rt[q], gt[q], Ht[q], st[q]
        alpha[rows] = fr[first[hit]]
        pending[rows] = False
        alpha[rest[~hit]] = fr[-1]
    return Xn, resn, gradn, Hn, scalen, alpha, pending


def _newton(obj: _Objective, spec: ImmersionSpec, X0: np.ndarray, cfg: SolverConfig):
    """Damped Newton on grad = 0 from every seed; returns converged points.

    A seed counts as converged once its residual is below ``newton_tol`` and
    either its last accepted step was negligible or no further step reduces
    the residual (floating-point floor).
    """
    X = spec.wrap(np.array(X0, dtype=float))
    k = len(X)
    active = np.ones(k, dtype=bool)
    done = np.zeros(k, dtype=bool)
    if k == 0:
        return X, done
    _, _, grad, H, _, _, scale = obj.evaluate(X, np.arange(k))
    res = obj.residual(grad, scale)
    xtol = STEP_TOL * max(1.0, float(np.abs(spec.periods).max()))
    checkpoint = res.copy()

    for it in range(1, cfg.max_newton_iters + 1):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        Hs = 0.5 * (H[idx] + np.swapaxes(H[idx], 1, 2))
        lam, V = np.linalg.eigh(Hs)
        floor = 1e-13 * np.maximum(np.abs(lam).max(axis=1, keepdims=True), 1e-300)
        lam = np.where(np.abs(lam) < floor, np.where(lam < 0, -floor, floor), lam)
        coef = np.einsum("kab,ka->kb", V, grad[idx]) / lam
        step = -np.einsum("kab,kb->ka", V, coef)
        big = np.abs(step).max(axis=1)
        step *= np.minimum(1.0, cfg.max_step / np.maximum(big, 1e-300))[:, None]

        # full step for everybody, then all halvings at once for the rest
        Xn, resn, gradn, Hn, scalen, alpha, pending = _line_search(
            obj, spec, X[idx], res[idx], grad[idx], H[idx], scale[idx], step, idx)
        small_step = ~pending & (alpha * np.abs(step).max(axis=1) <= xtol)
        X[idx], res[idx] = Xn, resn
        grad[idx], H[idx], scale[idx] = gradn, Hn, scalen
        # a stuck seed cannot improve any further: accept it if good enough
        finished = pending | small_step
        done[idx] = finished & (res[idx] <= cfg.newton_tol)
        active[idx[finished]] = False
        if spec.searchable is not None:
            active[idx] &= spec.searchable(X[idx])
        if it % STALL_WINDOW == 0:
            # plateaus of the residual away from zero are not critical points
            stalled = (res > STALL_FLOOR) & (res > 0.5 * checkpoint)
            active &= ~stalled
            checkpoint = res.copy()

    # degenerate points converge only linearly in x; at the iteration cap the
    # residual alone decides
    done |= active & (res <= cfg.newton_tol)
    return X, done


def _dedup(points: List[CriticalPoint], radius: float) -> List[CriticalPoint]:
    if not points:
        return []
    # prefer the best-converged representative of every cluster
    order = np.argsort([p.residual for p in points], kind="stable")
    P = np.array([points[i].pos for i in order])
    D = np.linalg.norm(P[:, None, :] - P[None, :, :], axis=2)
    alive = np.ones(len(P), dtype=bool)
    kept = []
    for i in range(len(P)):
        if alive[i]:
            kept.append(points[order[i]])
            alive &= D[i] > radius
    return kept


def _points_from(obj, chart_spec, X, to_primary=None, rows=None):
    pos, value, grad, H, g, B, scale = obj.evaluate(X, rows)
    mu, margin = obj.classify(g, H, B)
    res = obj.residual(grad, scale)
    xp = X if to_primary is None else to_primary(X)
    return [
        CriticalPoint(x=xp[i].copy(), pos=pos[i].copy(), value=float(value[i]), mu=int(mu[i]),
                      degeneracy_margin=float(margin[i]), residual=float(res[i]))
        for i in range(len(X))
    ]


def _canonical(spec: ImmersionSpec, points: List[CriticalPoint]) -> List[CriticalPoint]:
    return sorted(points, key=lambda p: tuple(np.round(p.x, 9)) + tuple(np.round(p.pos, 9)))


def _assemble(spec, obj, points, cfg, y) -> Census:
    points = _dedup(points, cfg.dedup_radius * spec.diameter)
    degenerate = [p for p in points if p.degeneracy_margin < cfg.degeneracy_threshold]
    if len(degenerate) > 1:
        degenerate = _dedup(degenerate, DEGENERATE_MERGE * spec.diameter)
        points = [p for p in points if p.degeneracy_margin >= cfg.degeneracy_threshold] + degenerate
    if len(degenerate) > 1:
        P = np.array([p.pos for p in degenerate])
        D = np.linalg.norm(P[:, None, :] - P[None, :, :], axis=2)
        np.fill_diagonal(D, np.inf)
        if D.min() <= CONTINUUM_RADIUS * spec.diameter:
            raise NonMorsePoint(
                f"{spec.name}: non-isolated critical set for query {np.round(y, 12).tolist()} "
                f"({len(degenerate)} degenerate critical points found)"
            )
    points = _canonical(spec, points)
    counts = [0] * (spec.m + 1)
    for p in points:
        counts[p.mu] += 1
    return Census(
        y=np.asarray(y, dtype=float).copy(),
        points=points,
        counts=tuple(counts),
        morse_ok=not degenerate,
        kind=obj.kind,
        betti=tuple(spec.betti),
        closed=spec.closed,
    )


def _search(spec: ImmersionSpec, make_obj, Y, hints, density: int, cfg: SolverConfig):
    """One multi-start pass for many queries at once.

    ``Y`` holds one query per row and ``hints`` one (possibly empty) array of
    extra seeds per query.  All seeds share a single batched Newton run.
    Returns, per query, the list of critical points found.
    """
    nq = len(Y)
    grid = spec.grid(density)
    if spec.trusted is not None:
        grid = grid[spec.trusted_mask(grid)]
    hints = [np.zeros((0, spec.m)) if h is None or len(h) == 0 else np.atleast_2d(h) for h in hints]
    found: List[List[CriticalPoint]] = [[] for _ in range(nq)]

    def run(chart, seeds_per_query, keep, to_primary):
        sizes = [len(S) for S in seeds_per_query]
        if not sum(sizes):
            return
        qid = np.repeat(np.arange(nq), sizes)
        obj = make_obj(chart, Y[qid])
        X, ok = _newton(obj, chart, np.vstack(seeds_per_query), cfg)
        sel = np.flatnonzero(ok & keep(X, seeds_per_query))
        if not len(sel):
            return
        pts = _points_from(obj, chart, X[sel], to_primary, sel)
        for q, p in zip(qid[sel], pts):
            found[q].append(p)

    def keep_primary(X, parts):
        # hinted seeds may legitimately converge outside the trusted band
        hinted = np.concatenate([np.arange(len(P)) >= len(grid) for P in parts])
        return np.where(hinted, spec.inside(X), spec.trusted_mask(X))

    run(spec, [np.vstack([grid, h]) for h in hints], keep_primary, None)

    for comp in spec.companions:
        cgrid = comp.spec.grid(density)
        cgrid = cgrid[~spec.trusted_mask(comp.to_primary(cgrid))]
        parts = []
        for h in hints:
            far = h[~spec.trusted_mask(h)] if len(h) else h
            if comp.from_primary is not None and len(far):
                # hints near the primary chart's bad region continue over here
                parts.append(np.vstack([cgrid, comp.from_primary(far)]))
            else:
                parts.append(cgrid)
        run(comp.spec, parts, lambda X, _, c=comp: ~spec.trusted_mask(c.to_primary(X)), comp.to_primary)
    return found


def _solve_many(spec: ImmersionSpec, make_obj, Y, cfg: SolverConfig, hints=None) -> list:
    """Censuses for many queries; failures are returned as exception objects."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    hints = list(hints) if hints is not None else [None] * len(Y)
    if len(hints) != len(Y):
        raise ValueError("need one hint array per query")
    out: list = [None] * len(Y)
    todo = np.arange(len(Y))
    density = cfg.seeds_for(spec.m)
    for attempt in range(cfg.euler_retries + 1):
        found = _search(spec, make_obj, Y[todo], [hints[q] for q in todo], density, cfg)
        retry = []
        for q, pts in zip(todo, found):
            try:
                census = _assemble(spec, make_obj(spec, Y[q]), pts, cfg, Y[q])
            except NonMorsePoint as exc:
                out[q] = exc
                continue
            out[q] = census
            if census.morse_ok and not (census.euler_ok and census.bounds_ok):
                retry.append(q)
        if not retry:
            break
        todo = np.array(retry)
        density *= 2
    return out


def _solve(spec: ImmersionSpec, make_obj, y, cfg: SolverConfig, extra_seeds=None) -> Census:
    result = _solve_many(spec, make_obj, np.asarray(y, dtype=float)[None, :], cfg, [extra_seeds])[0]
    if isinstance(result, Exception):
        raise result
    return result


def sq_dist_jet(spec: ImmersionSpec, x, y):
    """Value, chart gradient and chart Hessian of ``||pos(x) - y||^2``."""
    jet = jet2(spec, x)
    r = jet.pos - np.asarray(y, dtype=float)
    value = float(r @ r)
    grad = 2.0 * jet.d1.T @ r
    hess = 2.0 * (jet.d1.T @ jet.d1 + np.einsum("iab,i->ab", jet.d2, r))
    return value, grad, hess


def find_critical_points(spec: ImmersionSpec, y, cfg: SolverConfig = None, extra_seeds=None) -> Census:
    """All critical points of the squared distance from ``y``.

    Raises :class:`NonMorsePoint` when the critical set is not isolated.  An
    isolated degenerate point yields a census with ``morse_ok=False``.
    """
    cfg = cfg or SolverConfig()
    y = np.asarray(y, dtype=float)
    if y.shape != (spec.n,):
        raise ValueError(f"query point must have {spec.n} coordinates")
    return _solve(spec, SqDistObjective, y, cfg, extra_seeds)


def find_critical_points_many(spec: ImmersionSpec, Y, cfg: SolverConfig = None, hints=None) -> list:
    """Batched :func:`find_critical_points` for the rows of ``Y``.

    All queries share one vectorised Newton run, which is much faster than a
    loop for many small censuses.  Each entry of the result is a
    :class:`Census` or the :class:`NonMorsePoint` that query would raise.
    """
    cfg = cfg or SolverConfig()
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if Y.shape[1] != spec.n:
        raise ValueError(f"query points must have {spec.n} coordinates")
    return _solve_many(spec, SqDistObjective, Y, cfg, hints)


def linear_census(spec: ImmersionSpec, direction, cfg: SolverConfig = None) -> Census:
    """Critical points of the height function ``x -> <pos(x), direction>``.

    Indices are those of the height function itself.  The squared distance from
    ``pos + T*direction`` with ``T -> +inf`` has index ``m - mu`` at the same
    points; with ``T -> -inf`` it has index ``mu``.
    """
    cfg = cfg or SolverConfig()
    direction = np.asarray(direction, dtype=float)
    if abs(np.linalg.norm(direction) - 1.0) > 1e-9:
        raise ValueError("direction must be a unit vector")
    return _solve(spec, HeightObjective, direction, cfg)


# --------------------------------------------------------------------------
# independent oracle
# --------------------------------------------------------------------------

def _grid_local_minima(spec: ImmersionSpec, res_grid: np.ndarray) -> np.ndarray:
    shape = res_grid.shape
    is_min = np.ones(shape, dtype=bool)
    offsets = np.array(np.meshgrid(*[[-1, 0, 1]] * spec.m, indexing="ij")).reshape(spec.m, -1).T
    for off in offsets:
        if not off.any():
            continue
        shifted = res_grid
        for ax, o in enumerate(off):
            if o == 0:
                continue
            shifted = np.roll(shifted, -o, axis=ax)
            if not spec.periodic[ax]:
                # edge cells compare against themselves instead of wrapping
                sl = [slice(None)] * spec.m
                sl[ax] = slice(-1, None) if o > 0 else slice(0, 1)
                shifted[tuple(sl)] = np.inf
        is_min &= res_grid <= shifted
    return np.flatnonzero(is_min.ravel())


def _oracle_chart(spec, chart_spec, y, density, keep, to_primary, out):
    obj = SqDistObjective(chart_spec, y)
    G = chart_spec.grid(density)
    _, _, grad, _, _, _, scale = obj.evaluate(G)
    res = obj.residual(grad, scale)
    cand = _grid_local_minima(chart_spec, res.reshape([density] * chart_spec.m))
    cand = cand[keep(G[cand])]
    # flat gradients on a continuum produce a flood of candidates
    tiny = cand[res[cand] < 1e-9]
    if len(tiny) > MAX_DEGENERATE_CANDIDATES:
        raise NonMorsePoint(f"{spec.name}: gradient vanishes on a continuum near {np.round(y, 12).tolist()}")

    def fun(x):
        xw = chart_spec.wrap(x)
        _, _, gr, _, _, _, sc = obj.evaluate(xw[None, :])
        return gr[0] / sc[0]

    for c in cand:
        sol = optimize.root(fun, G[c], method="hybr", options={"xtol": 1e-14})
        x = chart_spec.wrap(sol.x)
        if not chart_spec.inside(x)[0] or not keep(x[None, :])[0]:
            continue
        if np.linalg.norm(fun(x)) > 1e-10:
            continue
        out += _points_from(obj, chart_spec, x[None, :], to_primary)


def brute_force_census(spec: ImmersionSpec, y, grid_density: int = 400, cfg: SolverConfig = None) -> Census:
    """Dense-grid oracle: local minima of the gradient norm refined by MINPACK."""
    if grid_density < 200:
        raise ValueError("grid_density must be at least 200 per axis")
    cfg = cfg or SolverConfig()
    y = np.asarray(y, dtype=float)
    found: List[CriticalPoint] = []
    _oracle_chart(spec, spec, y, grid_density, spec.trusted_mask, None, found)
    for comp in spec.companions:
        keep = lambda X, c=comp: ~spec.trusted_mask(c.to_primary(X))  # noqa: E731
        _oracle_chart(spec, comp.spec, y, grid_density, keep, comp.to_primary, found)
    # MINPACK stops at a looser residual than Newton, so merge more generously
    loose = replace(cfg, dedup_radius=max(cfg.dedup_radius, 1e-6))
    return _assemble(spec, SqDistObjective(spec, y), found, loose, y)
