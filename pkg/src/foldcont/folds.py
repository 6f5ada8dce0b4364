"""Spectral machinery at and near folds.

Near a fold the Jacobian has an eigenvalue lambda near zero with unit
eigenvector phi.  The prediction tangent there comes from solving

    (DF(u) + alpha * phi phi^T) uhat = -lambda * gamma'(t) - alpha * <phi, gamma'(t)> phi

which is well posed precisely because the rank-one term restores
invertibility.  The returned pair (uhat, lambda) satisfies
DF(u) uhat = -lambda * gamma'(t); the homotopy tangent direction is
therefore (uhat, -lambda), with the tracked eigenvalue standing in for
arc length.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NoConvergence, SingularMatrix, TransversalityFailure
from .linalg import EigenPair, LUFactors, rank_one_solve, smallest_magnitude_eigenpair
from .maps import NonlinearMap

CRITICAL_EIG_TOL = 1e-6        # |lambda| below this counts as "on the critical set"
FOLD_TRANSVERSALITY_TOL = 1e-4


@dataclass(frozen=True)
class ImagePath:
    """Parameterized curve gamma(t) in the codomain with exact derivative.

    kind is "segment" (t in [0, 1]), "halfline" (t >= 0) or "curve"
    (composed path, e.g. the image of a domain line; t range set by the
    builder).
    """

    kind: str
    eval: Callable[[float], np.ndarray]
    deriv: Callable[[float], np.ndarray]
    t_range: tuple[float, float]

    def __call__(self, t: float) -> np.ndarray:
        return self.eval(t)


def segment_path(g0, g1) -> ImagePath:
    g0 = np.asarray(g0, dtype=float)
    g1 = np.asarray(g1, dtype=float)
    d = g1 - g0
    return ImagePath("segment", lambda t: g0 + t * d, lambda t: d, (0.0, 1.0))


def halfline_path(base, direction, t_max: float = np.inf) -> ImagePath:
    base = np.asarray(base, dtype=float)
    direction = np.asarray(direction, dtype=float)
    if not np.linalg.norm(direction):
        raise ValueError("half-line direction must be nonzero")
    return ImagePath("halfline", lambda t: base + t * direction,
                     lambda t: direction, (0.0, t_max))


def image_of_line(map_: NonlinearMap, base, direction, s_range) -> ImagePath:
    """gamma(s) = F(base + s * direction); gamma'(s) = DF(r(s)) direction."""
    base = np.asarray(base, dtype=float)
    direction = np.asarray(direction, dtype=float)

    def ev(s):
        return map_.eval(base + s * direction)

    def dv(s):
        return map_.jacobian(base + s * direction) @ direction

    return ImagePath("curve", ev, dv, (float(s_range[0]), float(s_range[1])))


@dataclass(frozen=True)
class FoldFrame:
    """Spectral data at a near-critical point.

    transversality is the directional derivative of the tracked eigenvalue
    along its own eigenvector; the point is flagged a fold when its
    magnitude clears FOLD_TRANSVERSALITY_TOL.
    """

    u: np.ndarray
    lam: float
    phi: np.ndarray
    transversality: float

    @property
    def is_fold(self) -> bool:
        return abs(self.transversality) > FOLD_TRANSVERSALITY_TOL


def planar_real_eigenpair(j: np.ndarray) -> EigenPair:
    """Smallest-magnitude real eigenpair of a 2x2 matrix, in closed form.

    Near the critical set one eigenvalue sits near zero, so the pair is
    real there; complex spectra (possible far from criticality) raise.
    """
    tr = j[0, 0] + j[1, 1]
    det = j[0, 0] * j[1, 1] - j[0, 1] * j[1, 0]
    disc = tr * tr - 4.0 * det
    if disc < 0.0:
        raise NoConvergence("2x2 Jacobian has a complex pair away from criticality")
    root = np.sqrt(disc)
    candidates = [0.5 * (tr + root), 0.5 * (tr - root)]
    lam = min(candidates, key=abs)
    rows = j - lam * np.eye(2)
    # kernel vector from the better-conditioned row
    r = rows[0] if np.linalg.norm(rows[0]) >= np.linalg.norm(rows[1]) else rows[1]
    if np.linalg.norm(r) < 1e-14 * (1.0 + abs(lam)):
        vec = np.array([1.0, 0.0])
    else:
        vec = np.array([-r[1], r[0]])
        vec /= np.linalg.norm(vec)
    big = np.abs(vec).max()
    for x in vec:
        if abs(x) > 1e-9 * big:
            if x < 0.0:
                vec = -vec
            break
    return EigenPair(float(lam), vec)


def track_eigenpair(map_: NonlinearMap, u, hint: EigenPair | None = None) -> EigenPair:
    """Tracked smallest-magnitude eigenpair of DF(u), warm-started from hint.

    Symmetric Jacobians go through shifted inverse iteration (sparse
    shift-invert when the map provides a sparse Jacobian); 2x2
    non-symmetric planar Jacobians use the closed form.
    """
    u = np.asarray(u, dtype=float)
    if map_.jacobian_sparse is not None:
        return _sparse_tracked_pair(map_, u, hint)
    j = map_.jacobian(u)
    if not map_.symmetric_jacobian and map_.dim == 2:
        pair = planar_real_eigenpair(j)
        if hint is not None and float(pair.vector @ hint.vector) < 0.0:
            pair = EigenPair(pair.value, -pair.vector)
        return pair
    return smallest_magnitude_eigenpair(j, hint)


def _sparse_tracked_pair(map_: NonlinearMap, u: np.ndarray,
                         hint: EigenPair | None) -> EigenPair:
    """Shift-invert Lanczos path for maps that expose a sparse Jacobian."""
    import scipy.sparse.linalg as spla

    a = map_.jacobian_sparse(u).tocsc()
    sigma = float(hint.value) if hint is not None else 0.0
    v0 = hint.vector if hint is not None else None
    try:
        vals, vecs = spla.eigsh(a, k=1, sigma=sigma, which="LM", v0=v0)
    except RuntimeError:
        vals, vecs = spla.eigsh(a, k=1, sigma=sigma + 1e-8, which="LM", v0=v0)
    vec = vecs[:, 0]
    vec = vec / np.linalg.norm(vec)
    if hint is not None:
        if float(vec @ hint.vector) < 0.0:
            vec = -vec
    else:
        big = np.abs(vec).max()
        for x in vec:
            if abs(x) > 1e-9 * big:
                if x < 0.0:
                    vec = -vec
                break
    return EigenPair(float(vals[0]), vec)


def fold_test(map_: NonlinearMap, u, fd_step: float | None = None) -> FoldFrame:
    """Transversality test at a near-critical point u (|lambda| < 1e-6).

    The directional derivative of the tracked eigenvalue along phi is
    estimated by central differences with step fd_step
    (default 1e-5 * (1 + ||u||)).
    """
    u = np.asarray(u, dtype=float)
    pair = track_eigenpair(map_, u)
    if abs(pair.value) >= CRITICAL_EIG_TOL:
        raise ValueError(
            f"fold_test expects a near-critical point; |lambda|={abs(pair.value):.2e}"
        )
    if fd_step is None:
        fd_step = 1e-5 * (1.0 + float(np.linalg.norm(u)))
    plus = track_eigenpair(map_, u + fd_step * pair.vector, hint=pair)
    minus = track_eigenpair(map_, u - fd_step * pair.vector, hint=pair)
    slope = (plus.value - minus.value) / (2.0 * fd_step)
    return FoldFrame(u=u, lam=pair.value, phi=pair.vector, transversality=float(slope))


def regular_tangent(map_: NonlinearMap, u, gprime) -> tuple[np.ndarray, float]:
    """Prediction tangent (uhat, 1) with DF(u) uhat = gamma'(t), away from folds."""
    u = np.asarray(u, dtype=float)
    gprime = np.asarray(gprime, dtype=float)
    if map_.jacobian_sparse is not None:
        import scipy.sparse.linalg as spla

        lu = spla.splu(map_.jacobian_sparse(u).tocsc())
        return lu.solve(gprime), 1.0
    uhat = LUFactors(map_.jacobian(u)).solve(gprime)
    return uhat, 1.0


def fold_tangent(map_: NonlinearMap, frame: FoldFrame, gprime,
                 alpha: float = 1.0) -> tuple[np.ndarray, float]:
    """Near-fold prediction tangent from the rank-one-corrected solve.

    Returns (uhat, lambda) with DF(u) uhat = -lambda * gamma'(t) and
    uhat = vhat - <phi, gamma'> phi for some vhat orthogonal to phi.
    Raises TransversalityFailure when gamma' is (numerically) tangent to
    the fold image, i.e. <phi, gamma'> ~ 0 while the path needs to cross.
    """
    gprime = np.asarray(gprime, dtype=float)
    phi = frame.phi
    lam = frame.lam
    proj = float(phi @ gprime)
    if abs(proj) < 1e-10 * np.linalg.norm(gprime):
        raise TransversalityFailure(
            "gamma'(t) has no component along the fold kernel direction"
        )
    rhs = -lam * gprime - alpha * proj * phi
    if map_.jacobian_sparse is not None:
        uhat = _sparse_rank_one_solve(map_, frame.u, phi, alpha, rhs)
    else:
        uhat = rank_one_solve(map_.jacobian(frame.u), phi, alpha, rhs)
    return uhat, lam


def _sparse_rank_one_solve(map_: NonlinearMap, u, phi, alpha, rhs) -> np.ndarray:
    """Sherman-Morrison over a sparse factorization of DF; dense fallback."""
    import scipy.sparse.linalg as spla

    a = map_.jacobian_sparse(u).tocsc()
    try:
        lu = spla.splu(a)
        ainv_rhs = lu.solve(rhs)
        ainv_phi = lu.solve(phi)
        denom = 1.0 + alpha * float(phi @ ainv_phi)
        if abs(denom) > 1e-8 * (1.0 + abs(alpha) * np.linalg.norm(ainv_phi)):
            x = ainv_rhs - ainv_phi * (alpha * float(phi @ ainv_rhs) / denom)
            resid = np.linalg.norm(a @ x + alpha * phi * float(phi @ x) - rhs)
            if resid <= 1e-8 * (1.0 + np.linalg.norm(rhs)):
                return x
    except RuntimeError:
        pass
    # singular or unstable DF: factor the perturbed operator directly
    import scipy.sparse as sp

    s = a + alpha * sp.csc_matrix(np.outer(phi, phi))
    try:
        return spla.splu(s.tocsc()).solve(rhs)
    except RuntimeError as exc:
        raise SingularMatrix(str(exc)) from exc
