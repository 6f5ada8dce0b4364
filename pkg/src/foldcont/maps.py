"""Nonlinear map interface, the built-in planar examples, a multistart
preimage counter and a planar critical-contour tracer.

The planar cubic map is F(z) = z^3 + (12/5) conj(z)^2 + z written over
(Re z, Im z).  Its published zero coordinates (e.g. the real roots
-0.5367 and -1.8633, whose product is 1 and sum -2.4) pin the quadratic
coefficient at 12/5; with 5/2 the real roots would sit at -0.5 and -2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import SingularMatrix
from .linalg import LUFactors, as_vector

ZCUBIC_COEFF = 2.4


@dataclass(frozen=True)
class NonlinearMap:
    """Uniform interface to F: R^dim -> R^dim.

    ``jacobian`` is None for nonsmooth maps.  ``jacobian_solver``, when
    present, returns a callable rhs -> DF(u)^{-1} rhs backed by a sparse
    factorization; large discretizations provide it so continuation does
    not have to form dense factors.
    """

    dim: int
    eval: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray] | None = None
    is_orthant_linear: bool = False
    symmetric_jacobian: bool = False
    jacobian_sparse: Callable[[np.ndarray], object] | None = None
    name: str = ""

    def __call__(self, u) -> np.ndarray:
        return self.eval(np.asarray(u, dtype=float))


@dataclass(frozen=True)
class Box:
    """Axis-aligned search region."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = as_vector(self.lower)
        hi = as_vector(self.upper)
        if lo.shape != hi.shape or not np.all(lo < hi):
            raise ValueError("box requires lower < upper componentwise")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.upper - self.lower))


@dataclass
class Polyline:
    """Ordered polygonal curve; consecutive vertices are distinct."""

    vertices: list = field(default_factory=list)

    @property
    def closed(self) -> bool:
        return (
            len(self.vertices) > 2
            and np.linalg.norm(self.vertices[0] - self.vertices[-1]) < 1e-9
        )


def quad_map() -> NonlinearMap:
    """(x, y) -> (x^2 - y^2 + x, 2xy - y).  Critical set: x^2+y^2 = 1/4."""

    def f(u):
        x, y = u
        return np.array([x * x - y * y + x, 2.0 * x * y - y])

    def jac(u):
        x, y = u
        return np.array([[2.0 * x + 1.0, -2.0 * y], [2.0 * y, 2.0 * x - 1.0]])

    return NonlinearMap(2, f, jac, symmetric_jacobian=False, name="quad")


def pleat_map() -> NonlinearMap:
    """(x, y) -> (cos x - x^2 cos x + 2x sin x, y).

    d/dx of the first component is (1 + x^2) sin x, so the critical set is
    the family of vertical lines x = k*pi.
    """

    def f(u):
        x, y = u
        return np.array([math.cos(x) - x * x * math.cos(x) + 2.0 * x * math.sin(x), y])

    def jac(u):
        x, _ = u
        return np.array([[(1.0 + x * x) * math.sin(x), 0.0], [0.0, 1.0]])

    return NonlinearMap(2, f, jac, symmetric_jacobian=False, name="pleat")


def zcubic_map(coeff: float = ZCUBIC_COEFF) -> NonlinearMap:
    """Real form of z -> z^3 + coeff * conj(z)^2 + z on (Re z, Im z)."""

    c = float(coeff)

    def f(u):
        x, y = u
        return np.array(
            [
                x**3 - 3.0 * x * y * y + c * (x * x - y * y) + x,
                3.0 * x * x * y - y**3 - 2.0 * c * x * y + y,
            ]
        )

    def jac(u):
        x, y = u
        return np.array(
            [
                [3.0 * x * x - 3.0 * y * y + 2.0 * c * x + 1.0, -6.0 * x * y - 2.0 * c * y],
                [6.0 * x * y - 2.0 * c * y, 3.0 * x * x - 3.0 * y * y - 2.0 * c * x + 1.0],
            ]
        )

    return NonlinearMap(2, f, jac, symmetric_jacobian=False, name="zcubic")


def semilinear_map(a: np.ndarray, f_profile, fprime_profile, name: str = "semilinear",
                   sparse_matrix=None) -> NonlinearMap:
    """F(u) = A u - f(u) applied entrywise, with symmetric Jacobian A - diag(f'(u))."""

    a = np.asarray(a, dtype=float)
    n = a.shape[0]

    def f(u):
        return a @ u - f_profile(u)

    def jac(u):
        return a - np.diag(fprime_profile(u))

    jac_sparse = None
    if sparse_matrix is not None:
        import scipy.sparse as sp

        def jac_sparse(u):
            return sparse_matrix - sp.diags(fprime_profile(u))

    return NonlinearMap(
        n, f, jac, symmetric_jacobian=True, jacobian_sparse=jac_sparse, name=name
    )


def newton_polish(map_: NonlinearMap, g: np.ndarray, u0: np.ndarray,
                  tol_rel: float = 1e-12, max_iter: int = 60,
                  max_halvings: int = 30) -> np.ndarray | None:
    """Damped Newton for F(u) = g from u0; None when it fails to converge.

    The step is halved until the residual decreases; starts whose Jacobian
    factorization degenerates are dropped.
    """
    g = as_vector(g)
    u = np.asarray(u0, dtype=float).copy()
    r = map_.eval(u) - g
    rnorm = np.linalg.norm(r)
    target = tol_rel * (1.0 + np.linalg.norm(g))

    if map_.jacobian_sparse is not None:
        import scipy.sparse.linalg as spla

        def solve_step(u, r):
            return spla.splu(map_.jacobian_sparse(u).tocsc()).solve(-r)
    else:
        def solve_step(u, r):
            return LUFactors(map_.jacobian(u)).solve(-r)

    for _ in range(max_iter):
        if rnorm <= target:
            return u
        try:
            step = solve_step(u, r)
        except (SingularMatrix, RuntimeError):
            return None
        if not np.all(np.isfinite(step)):
            return None
        t = 1.0
        for _ in range(max_halvings):
            u_new = u + t * step
            r_new = map_.eval(u_new) - g
            rn = np.linalg.norm(r_new)
            if rn < rnorm:
                break
            t *= 0.5
        else:
            return None
        u, r, rnorm = u_new, r_new, rn
    return u if rnorm <= target else None


def multistart_preimages(map_: NonlinearMap, g, box: Box, grid_n: int) -> list[np.ndarray]:
    """Damped Newton from every node of a grid_n x grid_n x ... grid over box.

    Converged points (relative residual < 1e-10) inside the search box are
    deduplicated at 1e-6 * diam(box) and returned sorted lexicographically;
    iterates that converge outside the box are discarded with it.
    """
    if grid_n < 2:
        raise ValueError("grid_n must be >= 2")
    g = as_vector(g)
    axes = [np.linspace(lo, hi, grid_n) for lo, hi in zip(box.lower, box.upper)]
    mesh = np.meshgrid(*axes, indexing="ij")
    starts = np.stack([m.ravel() for m in mesh], axis=1)
    dedup = 1e-6 * box.diameter
    slack = 1e-9 * box.diameter
    found: list[np.ndarray] = []
    for u0 in starts:
        u = newton_polish(map_, g, u0, tol_rel=1e-10)
        if u is None:
            continue
        if np.any(u < box.lower - slack) or np.any(u > box.upper + slack):
            continue
        # tighten toward machine precision so dedup distances are crisp
        u2 = newton_polish(map_, g, u, tol_rel=1e-14)
        if u2 is not None:
            u = u2
        if any(np.linalg.norm(u - v) < dedup for v in found):
            continue
        found.append(u)
    found.sort(key=lambda v: tuple(v))
    return found


# ---------------------------------------------------------------------------
# marching-squares contour tracing of det DF = 0
# ---------------------------------------------------------------------------


def _det_jac(map_: NonlinearMap):
    def det(x, y):
        j = map_.jacobian(np.array([x, y]))
        return j[0, 0] * j[1, 1] - j[0, 1] * j[1, 0]

    return det


def _edge_root(det, p, q, fp, fq, tol: float = 1e-8, max_iter: int = 80):
    """Bisection for det = 0 along the segment p-q; fp, fq have opposite signs."""
    a, b = np.asarray(p, float), np.asarray(q, float)
    fa, fb = fp, fq
    if fa == 0.0:
        return a
    if fb == 0.0:
        return b
    for _ in range(max_iter):
        mid = 0.5 * (a + b)
        fm = det(mid[0], mid[1])
        if abs(fm) < tol:
            return mid
        if (fa < 0.0) != (fm < 0.0):
            b, fb = mid, fm
        else:
            a, fa = mid, fm
    return 0.5 * (a + b)


_MS_EDGES = {
    # case index (bit per corner, CCW from lower-left) -> list of edge pairs
    1: [(3, 0)], 2: [(0, 1)], 3: [(3, 1)], 4: [(1, 2)], 6: [(0, 2)],
    7: [(3, 2)], 8: [(2, 3)], 9: [(2, 0)], 11: [(2, 1)], 12: [(1, 3)],
    13: [(1, 0)], 14: [(0, 3)],
}


def trace_critical_contour(map_: NonlinearMap, box: Box, grid_n: int) -> list[Polyline]:
    """Marching-squares zero contour of (x, y) -> det DF(x, y) over box.

    Vertices are refined by bisection to |det| < 1e-8 and chained into
    polylines (closed when the chain returns to its start).
    """
    det = _det_jac(map_)
    xs = np.linspace(box.lower[0], box.upper[0], grid_n)
    ys = np.linspace(box.lower[1], box.upper[1], grid_n)
    vals = np.array([[det(x, y) for y in ys] for x in xs])
    pos = vals >= 0.0

    def corner(i, j, k):
        # corners CCW from lower-left: (i,j), (i+1,j), (i+1,j+1), (i,j+1)
        di, dj = ((0, 0), (1, 0), (1, 1), (0, 1))[k]
        return i + di, j + dj

    def edge_key(i, j, k):
        a = corner(i, j, k)
        b = corner(i, j, (k + 1) % 4)
        return (a, b) if a < b else (b, a)

    vertex_on_edge: dict = {}

    def vertex(i, j, k):
        key = edge_key(i, j, k)
        if key not in vertex_on_edge:
            (ia, ja), (ib, jb) = key
            p = np.array([xs[ia], ys[ja]])
            q = np.array([xs[ib], ys[jb]])
            vertex_on_edge[key] = _edge_root(det, p, q, vals[ia, ja], vals[ib, jb])
        return key

    segments: list[tuple] = []
    for i in range(grid_n - 1):
        for j in range(grid_n - 1):
            case = sum(
                (0 if pos[corner(i, j, k)] else 1) << k for k in range(4)
            )
            if case in (0, 15):
                continue
            if case in (5, 10):
                # saddle: disambiguate with the center sample
                cx = 0.5 * (xs[i] + xs[i + 1])
                cy = 0.5 * (ys[j] + ys[j + 1])
                center_neg = det(cx, cy) < 0.0
                if case == 5:
                    pairs = [(0, 1), (2, 3)] if center_neg else [(0, 3), (2, 1)]
                else:
                    pairs = [(1, 2), (3, 0)] if center_neg else [(1, 0), (3, 2)]
            else:
                pairs = _MS_EDGES[case]
            for ea, eb in pairs:
                segments.append((vertex(i, j, ea), vertex(i, j, eb)))

    # chain segments sharing edge keys into polylines
    adjacency: dict = {}
    for a, b in segments:
        adjacency.setdefault(a, []).append(b)
        adjacency.setdefault(b, []).append(a)
    unused = set()
    for a, b in segments:
        unused.add((a, b))
        unused.add((b, a))

    polylines = []
    for start in sorted(adjacency):
        while True:
            nxt = [b for b in adjacency[start] if (start, b) in unused]
            if not nxt:
                break
            chain = [start]
            cur, prev = nxt[0], start
            unused.discard((start, nxt[0]))
            unused.discard((nxt[0], start))
            chain.append(cur)
            while True:
                options = [b for b in adjacency.get(cur, []) if (cur, b) in unused]
                if not options:
                    break
                nxt_key = options[0]
                unused.discard((cur, nxt_key))
                unused.discard((nxt_key, cur))
                prev, cur = cur, nxt_key
                chain.append(cur)
                if cur == chain[0]:
                    break
            # extend backwards if the chain is open
            if chain[0] != chain[-1]:
                cur_b = chain[0]
                while True:
                    options = [b for b in adjacency.get(cur_b, []) if (cur_b, b) in unused]
                    if not options:
                        break
                    nxt_key = options[0]
                    unused.discard((cur_b, nxt_key))
                    unused.discard((nxt_key, cur_b))
                    cur_b = nxt_key
                    chain.insert(0, cur_b)
            pts = [vertex_on_edge[k] for k in chain]
            keep = [pts[0]]
            for p in pts[1:]:
                if np.linalg.norm(p - keep[-1]) > 1e-12:
                    keep.append(p)
            if len(keep) >= 2:
                polylines.append(Polyline(keep))
    polylines.sort(key=lambda pl: (len(pl.vertices), tuple(pl.vertices[0])))
    return polylines
