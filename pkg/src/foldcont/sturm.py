"""Discretized nonlinear Sturm-Liouville operator with a piecewise-linear
nonlinearity, its orthant-wise linear structure, the exhaustive orthant
oracle, random orthant sampling, and the exact piecewise-linear
bifurcation-diagram engine.

The operator is F(u) = A u - f(u) with A the tridiagonal second-difference
matrix on n interior mesh points of [0, pi] and f(x) = ell_plus * x for
x > 0, ell_minus * x for x < 0 (f(0) = 0 by continuity).  Restricted to an
orthant with sign pattern sig, F is the linear map A - D(sig) where D is
diagonal with entries picked by sign.  A coordinate hyperplane between two
orthants whose determinant signs differ is a topological fold: preimage
paths of a continued image curve turn there and a mirrored arc appears.

Eigenvalue indexing: the spectrum is lambda_k = (2/h^2)(1 - cos(k h)),
ascending in k with eigenvectors sin(k * mesh); this matches the numeric
values the walk-through cases pin down (0.9119 < 2.7357 for n = 2).
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .bank import SolutionBank, SolutionRecord
from .continuation import BifurcationDiagram, Branch, DomainLine
from .errors import OnCriticalBoundary
from .folds import FoldFrame, ImagePath
from .linalg import LUFactors, smallest_magnitude_eigenpair, sym_eigen

log = logging.getLogger(__name__)

SIGN_TOL = 1e-10          # |u_i| below this is "on the boundary" for sign checks
ORACLE_MAX_N = 24
DEFAULT_MAX_DEPTH = 6
STEP_BUDGET = 100000      # events per branch


@dataclass(frozen=True)
class SLDiscretization:
    n: int
    h: float
    a: np.ndarray                 # tridiagonal second-difference matrix
    eigenvalues: np.ndarray       # ascending
    eigenvectors: np.ndarray      # column k-1 = normalized sin(k * mesh)
    mesh: np.ndarray              # interior points (ih)_{i=1..n}

    def sin_mode(self, k: int) -> np.ndarray:
        """Unnormalized mode sin(k * mesh)."""
        return np.sin(k * self.mesh)


@dataclass(frozen=True)
class PLParams:
    ell_minus: float
    ell_plus: float


def check_pl_params(disc: SLDiscretization, p: PLParams) -> None:
    lam = disc.eigenvalues
    if not p.ell_minus < lam[0]:
        raise ValueError("ell_minus must lie below the smallest eigenvalue")
    for side in (p.ell_minus, p.ell_plus):
        if np.min(np.abs(lam - side)) < 1e-10:
            raise ValueError("slopes must stay clear of the spectrum")


def build_discretization(n: int) -> SLDiscretization:
    """Assemble A and its closed-form spectrum for n >= 2 interior points."""
    if n < 2:
        raise ValueError("n must be >= 2")
    h = math.pi / (n + 1)
    a = (
        np.diag(np.full(n, 2.0 / h**2))
        + np.diag(np.full(n - 1, -1.0 / h**2), 1)
        + np.diag(np.full(n - 1, -1.0 / h**2), -1)
    )
    k = np.arange(1, n + 1)
    eigenvalues = (2.0 / h**2) * (1.0 - np.cos(k * h))
    mesh = k * h
    vectors = np.stack([np.sin(kk * mesh) for kk in k], axis=1)
    vectors /= np.linalg.norm(vectors, axis=0)
    return SLDiscretization(n=n, h=h, a=a, eigenvalues=eigenvalues,
                            eigenvectors=vectors, mesh=mesh)


def pl_profile(p: PLParams, u: np.ndarray) -> np.ndarray:
    return np.where(u > 0.0, p.ell_plus * u, p.ell_minus * u)


def pl_eval(disc: SLDiscretization, p: PLParams, u) -> np.ndarray:
    """F(u) = A u - f(u) with the piecewise-linear f applied entrywise."""
    u = np.asarray(u, dtype=float)
    return disc.a @ u - pl_profile(p, u)


def signature_of(u: np.ndarray, tol: float = 0.0) -> tuple[int, ...]:
    return tuple(1 if x > tol else -1 for x in u)


def orthant_matrix(disc: SLDiscretization, p: PLParams, sig) -> np.ndarray:
    """A - D where D_ii = ell_plus when sig_i = +1 else ell_minus."""
    d = np.where(np.asarray(sig) > 0, p.ell_plus, p.ell_minus)
    return disc.a - np.diag(d)


def _sign_ok(u: np.ndarray, sig) -> bool:
    return all(
        abs(x) <= SIGN_TOL or (1 if x > 0 else -1) == s for x, s in zip(u, sig)
    )


def morse_index(disc: SLDiscretization, p: PLParams, u) -> int:
    """Negative-eigenvalue count of the orthant matrix at u's sign pattern."""
    u = np.asarray(u, dtype=float)
    if np.any(np.abs(u) <= SIGN_TOL):
        raise OnCriticalBoundary("point has an entry on a coordinate hyperplane")
    m = orthant_matrix(disc, p, signature_of(u))
    return int(np.count_nonzero(np.linalg.eigvalsh(m) < 0.0))


def _solve_orthant(disc, p, sig, g) -> tuple[np.ndarray | None, bool]:
    """(solution-in-orthant or None, degenerate flag)."""
    factors = LUFactors(orthant_matrix(disc, p, sig))
    if factors.det_sign() == 0:
        return None, True
    u = factors.solve(np.asarray(g, dtype=float))
    if _sign_ok(u, sig):
        return u, False
    return None, False


def _bank_record(disc, p, g, u, sig, provenance) -> SolutionRecord:
    gnorm = np.linalg.norm(g)
    resid = float(np.linalg.norm(pl_eval(disc, p, u) - g) / (gnorm if gnorm else 1.0))
    m = orthant_matrix(disc, p, sig)
    morse = int(np.count_nonzero(np.linalg.eigvalsh(m) < 0.0))
    return SolutionRecord(u=u, residual=resid, morse_index=morse,
                          signature=tuple(sig), provenance=provenance)


def orthant_oracle(disc: SLDiscretization, p: PLParams, g) -> SolutionBank:
    """Exhaustive enumeration: solve (A - D(sig)) u = g in each of the 2^n
    orthants and accept the solutions whose signs match the pattern.

    Degenerate orthants (determinant sign 0) are recorded on the bank, not
    raised.
    """
    if disc.n > ORACLE_MAX_N:
        raise ValueError(f"orthant enumeration capped at n <= {ORACLE_MAX_N}")
    check_pl_params(disc, p)
    g = np.asarray(g, dtype=float)
    bank = SolutionBank()
    for sig in itertools.product((1, -1), repeat=disc.n):
        u, degenerate = _solve_orthant(disc, p, sig, g)
        if degenerate:
            bank.degenerate_signatures.append(sig)
            log.warning("degenerate orthant %s recorded", sig)
            continue
        if u is not None:
            bank.add(_bank_record(disc, p, g, u, sig, "oracle"))
    return bank


def random_orthant_sampling(disc: SLDiscretization, p: PLParams, g, budget: int,
                            rng_seed: int) -> SolutionBank:
    """Draw orthant signatures uniformly without replacement, accept as the
    oracle does.  Reproducible for a fixed seed; budget >= 2^n degenerates
    to exhaustion.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    check_pl_params(disc, p)
    g = np.asarray(g, dtype=float)
    total = 1 << disc.n
    rng = np.random.default_rng(rng_seed)
    bank = SolutionBank()

    if budget >= total:
        codes = rng.permutation(total)
    else:
        seen: set[int] = set()
        codes = []
        while len(codes) < budget:
            c = int(rng.integers(0, total))
            if c not in seen:
                seen.add(c)
                codes.append(c)
    for c in codes[:budget]:
        sig = tuple(1 if (int(c) >> i) & 1 else -1 for i in range(disc.n))
        u, degenerate = _solve_orthant(disc, p, sig, g)
        if degenerate:
            bank.degenerate_signatures.append(sig)
            continue
        if u is not None:
            bank.add(_bank_record(disc, p, g, u, sig, "sampling"))
    return bank


def lazer_mckenna_pair(disc: SLDiscretization, p: PLParams, t: float):
    """The explicit positive/negative solutions of F(u) = -t sin(mesh)."""
    if t <= 0.0:
        raise ValueError("t must be positive")
    lam1 = disc.eigenvalues[0]
    s = disc.sin_mode(1)
    return t * s / (p.ell_plus - lam1), t * s / (p.ell_minus - lam1)


# ---------------------------------------------------------------------------
# exact piecewise-linear bifurcation diagram
# ---------------------------------------------------------------------------


class _PLDiagramEngine:
    """Traces the preimage of gamma(s) = F(P0 + s d) arc by arc.

    Within one orthant and one affine piece of gamma the preimage sheet is
    the line u(s) = M^{-1} gamma(s); events are coordinate zeros of u
    (orthant changes) and kinks of gamma (the root line's own crossings).
    A determinant-sign flip at a coordinate crossing is a topological fold:
    the sheet turns and the mirrored arc is spawned one depth deeper.
    Each (signature, gamma-piece, direction) cell is visited at most once,
    which both deduplicates branches and bounds the work.
    """

    def __init__(self, disc, p, line: DomainLine, g, max_depth: int):
        self.disc, self.p, self.line = disc, p, line
        self.g = np.asarray(g, dtype=float)
        self.max_depth = max_depth
        s_lo, s_hi = line.s_range
        kinks = sorted(
            s
            for i in range(disc.n)
            if abs(line.direction[i]) > 1e-15
            for s in [-line.base[i] / line.direction[i]]
            if s_lo < s < s_hi
        )
        self.pieces = [s_lo] + kinks + [s_hi]
        self.kinks = kinks
        self._piece_cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        self._det_cache: dict[tuple, int] = {}
        self._lu_cache: dict[tuple, LUFactors] = {}
        self.visited: set = set()
        self.bank = SolutionBank()
        self.branches: list[Branch] = []
        self.degenerate_events = 0
        self.events_used = 0

    # -- per-orthant and per-piece helpers ---------------------------------

    def _factors(self, sig) -> LUFactors:
        if sig not in self._lu_cache:
            self._lu_cache[sig] = LUFactors(orthant_matrix(self.disc, self.p, sig))
        return self._lu_cache[sig]

    def _det(self, sig) -> int:
        if sig not in self._det_cache:
            self._det_cache[sig] = self._factors(sig).det_sign()
        return self._det_cache[sig]

    def _gamma_piece(self, idx: int):
        """gamma(s) = c0 + s * c1 on piece idx."""
        if idx not in self._piece_cache:
            s_mid = 0.5 * (self.pieces[idx] + self.pieces[idx + 1])
            sig_r = signature_of(self.line.at(s_mid))
            m = orthant_matrix(self.disc, self.p, sig_r)
            self._piece_cache[idx] = (m @ self.line.base, m @ self.line.direction)
        return self._piece_cache[idx]

    def _piece_index(self, s: float, sdir: int) -> int | None:
        for i in range(len(self.pieces) - 1):
            lo, hi = self.pieces[i], self.pieces[i + 1]
            if lo - 1e-12 <= s <= hi + 1e-12:
                if (sdir > 0 and s < hi - 1e-12) or (sdir < 0 and s > lo + 1e-12):
                    return i
        return None

    def _lambda_of(self, sig) -> float:
        m = orthant_matrix(self.disc, self.p, sig)
        try:
            return smallest_magnitude_eigenpair(m).value
        except Exception:
            vals = np.linalg.eigvalsh(m)
            return float(vals[np.argmin(np.abs(vals))])

    def _harvest(self, sig, depth: int) -> None:
        u, degenerate = _solve_orthant(self.disc, self.p, sig, self.g)
        if degenerate or u is None:
            return
        rec = _bank_record(self.disc, self.p, self.g, u, sig, "diagram")
        if rec.residual < 1e-8:
            self.bank.add(rec)

    # -- tracing ------------------------------------------------------------

    def run(self) -> None:
        # root branch: the line r itself
        root = Branch(branch_id=0, depth=0, terminated_by="range_end")
        lam_cache: dict[tuple, float] = {}

        def lam_at(u):
            sig = signature_of(u)
            if sig not in lam_cache:
                lam_cache[sig] = self._lambda_of(sig)
            return lam_cache[sig]

        s_lo, s_hi = self.line.s_range
        stops = [s_lo] + self.kinks + [s_hi]
        if s_lo < 0.0 < s_hi:
            stops.append(0.0)
        for s in sorted(set(stops)):
            u = self.line.at(s)
            root.samples.append((s, u, lam_at(u)))
        self.branches.append(root)

        if _sign_ok(self.line.at(0.0), signature_of(self.line.at(0.0))):
            self._harvest(signature_of(self.line.at(0.0)), 0)

        stack: list[tuple[tuple, float, int, int, int]] = []
        for i_k, ks in enumerate(self.kinks):
            before = signature_of(self.line.at(ks - 1e-9 * max(1.0, abs(ks))))
            after = signature_of(self.line.at(ks + 1e-9 * max(1.0, abs(ks))))
            flips = [i for i, (a, b) in enumerate(zip(before, after)) if a != b]
            if len(flips) != 1:
                self.degenerate_events += 1
                log.warning("degenerate root crossing at s=%g dropped", ks)
                continue
            if self._det(before) == self._det(after) or 0 in (
                self._det(before), self._det(after)
            ):
                continue
            u_c = self.line.at(ks)
            frame = FoldFrame(
                u=u_c, lam=0.0,
                phi=np.eye(self.disc.n)[flips[0]], transversality=1.0,
            )
            idx = root_index = next(
                i for i, (s, _, _) in enumerate(root.samples) if abs(s - ks) < 1e-12
            )
            root.crossings.append((root_index, frame))
            stack.append((before, ks, +1, 1, root.branch_id))
            stack.append((after, ks, -1, 1, root.branch_id))

        while stack:
            sig, s, sdir, depth, parent = stack.pop()
            self._trace(sig, s, sdir, depth, parent, stack)

    def _trace(self, sig, s_from, sdir, depth, parent, stack) -> None:
        if depth > self.max_depth:
            return
        sig = tuple(sig)
        s = s_from
        branch = Branch(
            branch_id=len(self.branches), parent_id=parent, depth=depth,
            terminated_by="range_end",
        )
        started = False
        while True:
            self.events_used += 1
            if self.events_used > STEP_BUDGET:
                branch.terminated_by = "step_limit"
                break
            idx = self._piece_index(s, sdir)
            if idx is None:
                break
            key = (sig, idx, sdir)
            if key in self.visited:
                break
            self.visited.add(key)
            if self._det(sig) == 0:
                self.degenerate_events += 1
                break
            factors = self._factors(sig)
            c0, c1 = self._gamma_piece(idx)
            u0 = factors.solve(c0)
            ud = factors.solve(c1)
            s0, s1 = self.pieces[idx], self.pieces[idx + 1]
            probe = u0 + (s + sdir * 1e-7 * max(1.0, abs(s))) * ud
            if signature_of(probe) != sig:
                break  # arm not valid on this side
            lam = self._lambda_of(sig)
            if not started:
                branch.samples.append((s, u0 + s * ud, lam))
                started = True
            lo, hi = (s, s1) if sdir > 0 else (s0, s)
            if lo - 1e-12 <= 0.0 <= hi + 1e-12 and signature_of(u0) == sig:
                self._harvest(sig, depth)

            events = []
            for i in range(self.disc.n):
                if abs(ud[i]) > 1e-15:
                    sz = -u0[i] / ud[i]
                    if (sdir > 0 and s + 1e-11 < sz < s1 - 1e-12) or (
                        sdir < 0 and s0 + 1e-12 < sz < s - 1e-11
                    ):
                        events.append((sz, i))
            if events:
                events.sort(key=lambda e: (e[0] - s) * sdir)
                sz, i_cross = events[0]
                v = u0 + sz * ud
                if np.count_nonzero(np.abs(v) < 1e-8) >= 2:
                    self.degenerate_events += 1
                    log.warning("degenerate crossing (multiple near-zero entries); "
                                "branch abandoned")
                    branch.samples.append((sz, v, 0.0))
                    branch.terminated_by = "divergence"
                    break
                sig2 = list(sig)
                sig2[i_cross] = -sig2[i_cross]
                sig2 = tuple(sig2)
                branch.samples.append((sz, v, self._lambda_of(sig)))
                if self._det(sig2) == 0:
                    self.degenerate_events += 1
                    branch.terminated_by = "divergence"
                    break
                if self._det(sig) == self._det(sig2):
                    s, sig = sz, sig2   # local homeomorphism: pass through
                    continue
                # topological fold: this sheet ends, the mirror goes back
                frame = FoldFrame(
                    u=v, lam=0.0, phi=np.eye(self.disc.n)[i_cross], transversality=1.0,
                )
                branch.crossings.append((len(branch.samples) - 1, frame))
                stack.append((sig2, sz, -sdir, depth + 1, branch.branch_id))
                branch.terminated_by = "fold"
                break
            # no event inside the piece: advance to its boundary
            s_next = s1 if sdir > 0 else s0
            branch.samples.append((s_next, u0 + s_next * ud, lam))
            s = s_next

        if len(branch.samples) >= 2:
            self.branches.append(branch)


def pl_bifurcation_diagram(disc: SLDiscretization, p: PLParams, p0, direction,
                           s_range, max_depth: int = DEFAULT_MAX_DEPTH) -> BifurcationDiagram:
    """Exact bifurcation diagram of r(s) = P0 + s * direction for the
    piecewise-linear operator; harvests every preimage of g = F(P0) reached
    within max_depth mirror spawns.
    """
    check_pl_params(disc, p)
    p0 = np.asarray(p0, dtype=float)
    direction = np.asarray(direction, dtype=float)
    g = pl_eval(disc, p, p0)
    line = DomainLine(base=p0, direction=direction, s_range=(float(s_range[0]), float(s_range[1])))
    engine = _PLDiagramEngine(disc, p, line, g, max_depth)
    engine.run()

    diagram = BifurcationDiagram(branches=engine.branches, solutions=engine.bank,
                                 line=line, base_point=p0)
    diagram.gamma = ImagePath(
        "curve",
        lambda s: pl_eval(disc, p, line.at(s)),
        lambda s: None,
        line.s_range,
    )
    return diagram
