"""Dense real linear algebra used by the continuation machinery.

Vectors are 1-D float64 ndarrays, matrices 2-D.  Factorizations and full
symmetric spectra are delegated to LAPACK (via scipy/numpy); the tracked
eigenpair extraction and the rank-one-update solve are implemented here
because their behavior near singular Jacobians is what the rest of the
library leans on.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import NoConvergence, NotSymmetric, SingularMatrix

# Pivot magnitudes below PIVOT_RTOL * max|A_ij| are treated as zero.
PIVOT_RTOL = 1e-13

_EIG_MAX_ITER = 200


@dataclass(frozen=True)
class EigenPair:
    """A real eigenvalue with its unit-norm eigenvector."""

    value: float
    vector: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vector", np.asarray(self.vector, dtype=float))


def as_vector(x) -> np.ndarray:
    v = np.asarray(x, dtype=float)
    if v.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector has non-finite entries")
    return v


def as_matrix(a) -> np.ndarray:
    m = np.asarray(a, dtype=float)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


class LUFactors:
    """LU factorization with partial pivoting, plus the singularity test.

    Wraps scipy's lu_factor so that one factorization serves both
    ``lu_solve`` and ``det_sign``.
    """

    def __init__(self, a: np.ndarray):
        a = as_matrix(a)
        if a.shape[0] != a.shape[1]:
            raise ValueError("matrix must be square")
        self.n = a.shape[0]
        self.scale = float(np.abs(a).max()) if a.size else 0.0
        with warnings.catch_warnings():
            # exact singularity is detected via the pivot threshold below
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            self.lu, self.piv = scipy.linalg.lu_factor(a, check_finite=False)
        diag = np.abs(np.diag(self.lu))
        self.min_pivot = float(diag.min()) if self.n else 0.0
        self.singular = self.min_pivot <= PIVOT_RTOL * self.scale

    def solve(self, b: np.ndarray) -> np.ndarray:
        if self.singular:
            raise SingularMatrix(
                f"pivot {self.min_pivot:.3e} below threshold "
                f"{PIVOT_RTOL * self.scale:.3e}"
            )
        return scipy.linalg.lu_solve((self.lu, self.piv), b, check_finite=False)

    def det_sign(self) -> int:
        if self.singular:
            return 0
        # permutation parity from the pivot sequence, times U-diagonal signs
        sign = 1
        for i, p in enumerate(self.piv):
            if p != i:
                sign = -sign
        neg = int(np.count_nonzero(np.diag(self.lu) < 0.0))
        if neg % 2:
            sign = -sign
        return sign


def lu_solve(a, b) -> np.ndarray:
    """Solve A x = b by LU with partial pivoting.

    Raises SingularMatrix when a pivot falls below 1e-13 * max|A_ij|.
    """
    a = as_matrix(a)
    b = as_vector(b)
    if a.shape[0] != a.shape[1] or a.shape[0] != b.shape[0]:
        raise ValueError("dimension mismatch")
    return LUFactors(a).solve(b)


def det_sign(a) -> int:
    """Sign of det(A) in {-1, 0, +1}, read off the LU pivot sequence.

    0 encodes the degenerate case (a pivot under the singularity threshold).
    """
    return LUFactors(a).det_sign()


def _check_symmetric(a: np.ndarray) -> np.ndarray:
    a = as_matrix(a)
    if a.shape[0] != a.shape[1]:
        raise NotSymmetric("matrix is not square")
    scale = np.abs(a).max() if a.size else 0.0
    if scale and np.abs(a - a.T).max() > 1e-12 * scale:
        raise NotSymmetric("matrix is not symmetric to 1e-12 relative tolerance")
    return a


def sym_eigen(a) -> list[EigenPair]:
    """Full spectrum of a symmetric matrix, sorted ascending by eigenvalue.

    Eigenvectors come back orthonormal; each pair satisfies
    ||A v - lam v|| <= ~1e-12 * ||A||.
    """
    a = _check_symmetric(a)
    values, vectors = np.linalg.eigh(a)
    return [EigenPair(float(values[i]), vectors[:, i]) for i in range(a.shape[0])]


def _fix_sign(vec: np.ndarray, hint_vec: np.ndarray | None) -> np.ndarray:
    if hint_vec is not None:
        if float(vec @ hint_vec) < 0.0:
            return -vec
        return vec
    # no hint: first coordinate of significant size decides
    threshold = 1e-9 * np.abs(vec).max()
    for x in vec:
        if abs(x) > threshold:
            return vec if x > 0.0 else -vec
    return vec


def smallest_magnitude_eigenpair(a, hint: EigenPair | None = None) -> EigenPair:
    """Tracked eigenpair of a symmetric matrix by shifted inverse iteration.

    Without a hint the shift starts at 0, so the iteration converges to the
    eigenvalue of smallest magnitude.  With a hint it converges to the
    eigenvalue nearest the hint (the continuation semantics), and the
    eigenvector sign is aligned with the hint's so the pair varies
    continuously along a branch.

    A two-vector Rayleigh-Ritz extraction resolves the near-tie that occurs
    when two eigenvalues are almost equidistant from the shift.
    """
    a = _check_symmetric(a)
    n = a.shape[0]
    norm_a = float(np.linalg.norm(a))
    hint_vec = hint.vector if hint is not None else None
    if norm_a == 0.0:
        vec = np.zeros(n)
        vec[0] = 1.0
        return EigenPair(0.0, _fix_sign(vec, hint_vec))
    tol = 1e-10 * norm_a

    shift = float(hint.value) if hint is not None else 0.0
    anchor = shift
    if hint is not None:
        x1 = hint.vector / np.linalg.norm(hint.vector)
    else:
        x1 = np.ones(n) / np.sqrt(n)
    # deterministic second block vector, orthogonal to the first
    x2 = None
    for k in np.argsort(np.abs(x1)):
        cand = np.zeros(n)
        cand[k] = 1.0
        cand -= (cand @ x1) * x1
        norm = np.linalg.norm(cand)
        if norm > 1e-8:
            x2 = cand / norm
            break
    block = np.column_stack([x1, x2]) if x2 is not None else x1.reshape(-1, 1)

    for it in range(_EIG_MAX_ITER):
        try:
            factors = LUFactors(a - shift * np.eye(n))
            if factors.singular:
                raise SingularMatrix
            y = np.column_stack([factors.solve(block[:, j]) for j in range(block.shape[1])])
        except SingularMatrix:
            shift += 1e-11 * (1.0 + abs(shift)) + 1e-13 * norm_a
            continue
        if not np.all(np.isfinite(y)):
            shift += 1e-11 * (1.0 + abs(shift))
            continue
        q, _ = np.linalg.qr(y)
        small = q.T @ (a @ q)
        small = 0.5 * (small + small.T)
        svals, svecs = np.linalg.eigh(small)
        if hint is not None:
            pick = int(np.argmin(np.abs(svals - anchor)))
        else:
            pick = int(np.argmin(np.abs(svals)))
        lam = float(svals[pick])
        x_cand = q @ svecs[:, pick]
        x_cand /= np.linalg.norm(x_cand)
        resid = np.linalg.norm(a @ x_cand - lam * x_cand)
        if resid <= tol:
            return EigenPair(lam, _fix_sign(x_cand, hint_vec))
        # reorder so the picked direction leads the block next round
        order = [pick] + [j for j in range(len(svals)) if j != pick]
        block = q @ svecs[:, order]
        # Rayleigh acceleration only after the pair is locked in
        if it >= 2 and resid < 1e-3 * norm_a:
            shift = lam
            anchor = lam
    raise NoConvergence(
        f"inverse iteration did not reach {tol:.2e} in {_EIG_MAX_ITER} iterations"
    )


def rank_one_solve(a, phi, alpha: float, b) -> np.ndarray:
    """Solve (A + alpha * phi phi^T) x = b.

    Uses Sherman-Morrison on two LU solves when A is comfortably invertible;
    falls back to factoring the explicitly formed perturbed matrix when A is
    singular or near-singular (where Sherman-Morrison would cancel badly --
    the perturbed operator itself stays well conditioned near a fold).
    """
    a = as_matrix(a)
    phi = as_vector(phi)
    b = as_vector(b)
    factors = LUFactors(a)
    # near-singular A: the explicit formation path is the stable one
    if not factors.singular and factors.min_pivot > 1e-6 * max(factors.scale, 1e-300):
        ainv_b = factors.solve(b)
        ainv_phi = factors.solve(phi)
        denom = 1.0 + alpha * float(phi @ ainv_phi)
        if abs(denom) > 1e-12 * (1.0 + abs(alpha) * np.linalg.norm(ainv_phi)):
            return ainv_b - ainv_phi * (alpha * float(phi @ ainv_b) / denom)
    perturbed = a + alpha * np.outer(phi, phi)
    return LUFactors(perturbed).solve(b)
