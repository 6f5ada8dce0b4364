"""Finite-difference Dirichlet Laplacian on a punctured-disk domain, the
arctan-profile nonlinearity, vertical-line critical-crossing counts, and
the six-solution experiment driven through the continuation engine.

The domain is the unit disk minus the closed disk of radius 0.2 centered
at (-0.3, -0.3).  Nodes are the Cartesian grid points strictly inside;
boundary treatment is hard Dirichlet zeros on the staircase, so computed
eigenvalues are mesh-dependent (they approach the reference magnitudes
9.1 / 16.3 / 22.9 / 30.5 from below as the grid refines).  All slope
thresholds are therefore defined relative to the computed spectrum.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .continuation import (
    BifurcationDiagram,
    ContinuationConfig,
    DomainLine,
    build_diagram,
    continue_path,
)
from .errors import EmptyDomain
from .folds import segment_path
from .maps import NonlinearMap, newton_polish

log = logging.getLogger(__name__)

HOLE_CENTER = (-0.3, -0.3)
HOLE_RADIUS = 0.2
N_TRACKED_EIGS = 6


@dataclass
class AnnulusGrid:
    spacing: float
    nodes: np.ndarray                    # (N, 2) coordinates
    index: dict                          # (i, j) -> row
    L_sparse: sp.csr_matrix
    eigenvalues: np.ndarray              # lowest N_TRACKED_EIGS, ascending
    eigenvectors: np.ndarray             # columns, normalized; phi_1 positive

    @cached_property
    def L(self) -> np.ndarray:
        return self.L_sparse.toarray()

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    def phi(self, k: int) -> np.ndarray:
        """k-th lowest eigenvector (1-based), unit norm."""
        return self.eigenvectors[:, k - 1]


def _inside(x: float, y: float) -> bool:
    if x * x + y * y >= 1.0:
        return False
    dx, dy = x - HOLE_CENTER[0], y - HOLE_CENTER[1]
    return dx * dx + dy * dy > HOLE_RADIUS * HOLE_RADIUS


def build_annulus(spacing: float) -> AnnulusGrid:
    """Assemble the 5-point Dirichlet Laplacian on the masked grid and its
    lowest eigenpairs (shift-invert Lanczos)."""
    if not 0.0 < spacing < 0.2:
        raise ValueError("spacing must lie in (0, 0.2)")
    m = int(math.floor(1.0 / spacing)) + 2
    index: dict = {}
    pts: list[tuple[float, float]] = []
    for i in range(-m, m + 1):
        for j in range(-m, m + 1):
            x, y = i * spacing, j * spacing
            if _inside(x, y):
                index[(i, j)] = len(pts)
                pts.append((x, y))
    if not pts:
        raise EmptyDomain("no grid nodes inside the domain")
    n = len(pts)
    s2 = spacing * spacing
    rows, cols, vals = [], [], []
    for (i, j), r in index.items():
        rows.append(r)
        cols.append(r)
        vals.append(4.0 / s2)
        for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            q = index.get((i + di, j + dj))
            if q is not None:
                rows.append(r)
                cols.append(q)
                vals.append(-1.0 / s2)
    laplacian = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))

    k = min(N_TRACKED_EIGS, n - 1)
    eigenvalues, eigenvectors = spla.eigsh(laplacian, k=k, sigma=0.0, which="LM")
    order = np.argsort(eigenvalues)
    eigenvalues = eigenvalues[order]
    eigenvectors = eigenvectors[:, order]
    for col in range(eigenvectors.shape[1]):
        eigenvectors[:, col] /= np.linalg.norm(eigenvectors[:, col])
    if np.sum(eigenvectors[:, 0]) < 0.0:
        eigenvectors[:, 0] = -eigenvectors[:, 0]
    if np.any(eigenvectors[:, 0] <= 0.0):
        log.warning("ground state is not strictly one-signed on this grid")
    return AnnulusGrid(
        spacing=spacing, nodes=np.array(pts), index=index, L_sparse=laplacian,
        eigenvalues=np.asarray(eigenvalues), eigenvectors=eigenvectors,
    )


@dataclass(frozen=True)
class ArctanNonlinearity:
    """f with f'(x) = alpha * arctan(x) + beta and f(0) = 0.

    alpha = (ell_plus - ell_minus) / pi and beta = (ell_plus + ell_minus) / 2
    give asymptotic slopes ell_minus at -inf and ell_plus at +inf.
    """

    alpha: float
    beta: float

    @classmethod
    def from_slopes(cls, ell_minus: float, ell_plus: float) -> "ArctanNonlinearity":
        return cls(alpha=(ell_plus - ell_minus) / math.pi,
                   beta=0.5 * (ell_plus + ell_minus))

    @property
    def ell_minus(self) -> float:
        return self.beta - self.alpha * math.pi / 2.0

    @property
    def ell_plus(self) -> float:
        return self.beta + self.alpha * math.pi / 2.0

    def f(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.alpha * (x * np.arctan(x) - 0.5 * np.log1p(x * x)) + self.beta * x

    def fprime(self, x: np.ndarray) -> np.ndarray:
        return self.alpha * np.arctan(np.asarray(x, dtype=float)) + self.beta


def elliptic_map(grid: AnnulusGrid, f: ArctanNonlinearity) -> NonlinearMap:
    """F(u) = L u - f(u), symmetric Jacobian L - diag(f'(u)); exposes a
    sparse Jacobian so continuation stays fast on fine grids."""
    lap = grid.L_sparse

    def ev(u):
        return lap @ u - f.f(u)

    def jac(u):
        return lap.toarray() - np.diag(f.fprime(u))

    def jac_sparse(u):
        return lap - sp.diags(f.fprime(u))

    return NonlinearMap(grid.n_nodes, ev, jac, symmetric_jacobian=True,
                        jacobian_sparse=jac_sparse, name="elliptic")


def lowest_eigenvalues(grid: AnnulusGrid, map_: NonlinearMap, u: np.ndarray,
                       k: int = N_TRACKED_EIGS) -> np.ndarray:
    """Lowest k eigenvalues of DF(u), ascending (shift-invert below the spectrum)."""
    a = map_.jacobian_sparse(u).tocsc()
    k = min(k, map_.dim - 1)
    # DF = L - diag(f') >= lambda_1(L) - max f', so shift safely below that
    sigma = float(grid.eigenvalues[0]) - float(np.max(np.abs(a.diagonal()))) - 1.0
    vals = spla.eigsh(a, k=k, sigma=sigma, which="LM", return_eigenvectors=False)
    return np.sort(vals)


def vertical_crossing_count(grid: AnnulusGrid, f: ArctanNonlinearity, w, t_range,
                            samples: int = 241) -> int:
    """Number of zero crossings of the lowest tracked eigenvalues of
    DF(w + t * phi_1) as t sweeps t_range."""
    w = np.asarray(w, dtype=float)
    map_ = elliptic_map(grid, f)
    phi1 = grid.phi(1)
    ts = np.linspace(t_range[0], t_range[1], samples)
    tracks = np.empty((samples, min(N_TRACKED_EIGS, grid.n_nodes - 1)))
    for i, t in enumerate(ts):
        tracks[i] = lowest_eigenvalues(grid, map_, w + t * phi1)
    crossings = 0
    for col in range(tracks.shape[1]):
        sign = np.sign(tracks[:, col])
        sign[sign == 0.0] = 1.0
        crossings += int(np.count_nonzero(sign[1:] != sign[:-1]))
    return crossings


def bootstrap_solution(grid: AnnulusGrid, f: ArctanNonlinearity, g,
                       cfg: ContinuationConfig | None = None) -> np.ndarray:
    """Continuation from the invertible regime to a first solution of F(u) = g.

    Starts deep in the region where f' ~ ell_minus (the Jacobian is positive
    definite there), and follows the segment from F(u_start) to g.
    """
    g = np.asarray(g, dtype=float)
    map_ = elliptic_map(grid, f)
    lin = grid.L_sparse - f.ell_minus * sp.identity(grid.n_nodes)
    u_start = 1.5 * spla.spsolve(lin.tocsc(), g)
    gamma = segment_path(map_.eval(u_start), g)
    if cfg is None:
        cfg = ContinuationConfig(step_init=0.05, step_max=0.5, max_steps=4000)
    branch = continue_path(map_, gamma, u_start, 0.0, cfg, direction=1.0)
    t_end, u_end, _ = branch.samples[-1]
    if abs(t_end - 1.0) > 1e-9:
        log.warning("bootstrap continuation stopped at t=%.4f; polishing anyway", t_end)
    u = newton_polish(map_, g, u_end, tol_rel=1e-13)
    if u is None:
        raise RuntimeError("bootstrap failed to converge onto a solution of F(u)=g")
    return u


def default_slopes(grid: AnnulusGrid, gap_fraction: float = 0.1) -> tuple[float, float]:
    """ell_minus = -1, ell_plus placed gap_fraction into the (lambda_3, lambda_4) gap."""
    lam = grid.eigenvalues
    return -1.0, float(lam[2] + gap_fraction * (lam[3] - lam[2]))


def solimini_experiment(grid: AnnulusGrid, amplitude: float = 1000.0,
                        gap_fraction: float = 0.1,
                        s_range: tuple[float, float] = (-1000.0, 1000.0),
                        cfg: ContinuationConfig | None = None) -> BifurcationDiagram:
    """Six-solution experiment: g = -amplitude * phi_1, search line
    r = P0 + s (0.8 phi_1 - 0.1 phi_2 - 0.1 phi_3) with P0 obtained by
    continuation from the invertible regime."""
    ell_minus, ell_plus = default_slopes(grid, gap_fraction)
    f = ArctanNonlinearity.from_slopes(ell_minus, ell_plus)
    map_ = elliptic_map(grid, f)
    g = -amplitude * grid.phi(1)
    p0 = bootstrap_solution(grid, f, g)
    direction = 0.8 * grid.phi(1) - 0.1 * grid.phi(2) - 0.1 * grid.phi(3)
    if cfg is None:
        cfg = ContinuationConfig(
            step_init=0.1, step_max=25.0, max_steps=6000, max_depth=6,
            root_sample_step=1.0, region_radius=1e5,
        )
    line = DomainLine(base=p0, direction=direction, s_range=s_range)
    return build_diagram(map_, line, g, cfg, dedup_tol=1e-4)
