"""Predictor-corrector continuation of H(u, t) = F(u) - gamma(t) = 0.

The corrector works on the bordered system {H = 0, <T, (u,t) - pred> = 0}
with T the predictor tangent, so turning points in t are parameterized
through.  Away from the critical set the tangent is (DF^-1 gamma', 1);
near it the rank-one-corrected solve provides (uhat, -lambda), with the
tracked eigenvalue playing the role of arc length.

A sign change of the tracked eigenvalue between samples marks a crossing
of the critical set.  Certified folds spawn mirrored branches: the local
preimage of the image path has an X or turning structure there, and the
reflection of the incoming tangent across the kernel's orthogonal
complement predicts the second sheet.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .bank import SolutionBank, SolutionRecord
from .errors import NoConvergence, NoProgress, SingularMatrix, TransversalityFailure
from .folds import (
    CRITICAL_EIG_TOL,
    FoldFrame,
    ImagePath,
    fold_tangent,
    fold_test,
    image_of_line,
    regular_tangent,
    track_eigenpair,
)
from .linalg import EigenPair, LUFactors, sym_eigen
from .maps import NonlinearMap, newton_polish

log = logging.getLogger(__name__)

_GAP_CHECK_MAX_DIM = 64


@dataclass
class ContinuationConfig:
    step_init: float = 0.1
    step_min: float = 1e-8
    step_max: float = 2.0
    corrector_tol: float = 1e-10
    corrector_max_iter: int = 20
    max_steps: int = 20000
    crossing_tol: float = 1e-8
    spawn_offset: float = 1e-2
    max_depth: int = 6
    region_radius: float | None = None
    root_sample_step: float | None = None
    alpha: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.step_min <= self.step_init <= self.step_max):
            raise ValueError("require 0 < step_min <= step_init <= step_max")
        if self.corrector_tol <= 0.0:
            raise ValueError("corrector_tol must be positive")


@dataclass
class DomainLine:
    """Search line r(s) = base + s * direction in the domain."""

    base: np.ndarray
    direction: np.ndarray
    s_range: tuple[float, float]

    def __post_init__(self):
        self.base = np.asarray(self.base, dtype=float)
        self.direction = np.asarray(self.direction, dtype=float)
        if not np.linalg.norm(self.direction):
            raise ValueError("search line direction must be nonzero")

    def at(self, s: float) -> np.ndarray:
        return self.base + s * self.direction


@dataclass
class Branch:
    samples: list[tuple[float, np.ndarray, float]] = field(default_factory=list)
    crossings: list[tuple[int, FoldFrame]] = field(default_factory=list)
    terminated_by: str = "range_end"
    branch_id: int = 0
    parent_id: int | None = None
    depth: int = 0

    def tangent_at(self, index: int) -> tuple[np.ndarray, float]:
        """Secant direction of the (u, t) polyline around a sample index."""
        i0 = max(0, index - 1)
        i1 = min(len(self.samples) - 1, index + 1)
        t0, u0, _ = self.samples[i0]
        t1, u1, _ = self.samples[i1]
        du, dt = u1 - u0, t1 - t0
        norm = math.hypot(np.linalg.norm(du), dt)
        if norm == 0.0:
            return np.zeros_like(u0), 1.0
        return du / norm, dt / norm


@dataclass
class BifurcationDiagram:
    branches: list[Branch] = field(default_factory=list)
    solutions: SolutionBank = field(default_factory=SolutionBank)
    line: DomainLine | None = None
    base_point: np.ndarray | None = None
    gamma: ImagePath | None = None


# ---------------------------------------------------------------------------
# bordered corrector
# ---------------------------------------------------------------------------


def _bordered_solve(map_: NonlinearMap, u, t, gamma: ImagePath, tangent_u, tangent_t,
                    rhs_top, rhs_bot) -> tuple[np.ndarray, float]:
    """Solve [[DF, -gamma'], [Tu^T, Tt]] (du, dt) = (rhs_top, rhs_bot)."""
    gp = gamma.deriv(t)
    if map_.jacobian_sparse is not None:
        import scipy.sparse as sp
        import scipy.sparse.linalg as spla

        a = map_.jacobian_sparse(u).tocsc()
        m = sp.bmat(
            [[a, -gp.reshape(-1, 1)], [tangent_u.reshape(1, -1), np.array([[tangent_t]])]],
            format="csc",
        )
        sol = spla.splu(m).solve(np.concatenate([rhs_top, [rhs_bot]]))
    else:
        a = map_.jacobian(u)
        n = a.shape[0]
        m = np.zeros((n + 1, n + 1))
        m[:n, :n] = a
        m[:n, n] = -gp
        m[n, :n] = tangent_u
        m[n, n] = tangent_t
        sol = LUFactors(m).solve(np.concatenate([rhs_top, [rhs_bot]]))
    return sol[:-1], float(sol[-1])


def _correct(map_: NonlinearMap, gamma: ImagePath, u_pred, t_pred, tangent_u, tangent_t,
             cfg: ContinuationConfig) -> tuple[np.ndarray, float] | None:
    """Newton on {F(u) - gamma(t) = 0, <T, (u,t)-(u_pred,t_pred)> = 0}."""
    u, t = np.asarray(u_pred, dtype=float).copy(), float(t_pred)
    for _ in range(cfg.corrector_max_iter):
        res = map_.eval(u) - gamma.eval(t)
        plane = float(tangent_u @ (u - u_pred)) + tangent_t * (t - t_pred)
        rnorm = np.linalg.norm(res)
        if rnorm <= cfg.corrector_tol * (1.0 + np.linalg.norm(gamma.eval(t))) and abs(
            plane
        ) <= cfg.corrector_tol * (1.0 + abs(t)):
            return u, t
        try:
            du, dt = _bordered_solve(
                map_, u, t, gamma, tangent_u, tangent_t, -res, -plane
            )
        except (SingularMatrix, RuntimeError):
            return None
        if not (np.all(np.isfinite(du)) and np.isfinite(dt)):
            return None
        u = u + du
        t = t + dt
    res = map_.eval(u) - gamma.eval(t)
    if np.linalg.norm(res) <= cfg.corrector_tol * (1.0 + np.linalg.norm(gamma.eval(t))):
        return u, t
    return None


class _Tracker:
    """Sign-continuous criticality scalar recorded along branches.

    Symmetric Jacobians track the smallest-magnitude eigenvalue (warm
    started sample to sample).  Non-symmetric planar Jacobians track
    det DF instead, which is smooth, real, and vanishes exactly on the
    critical set; the eigenpair near criticality is recovered in closed
    form where needed.
    """

    def __init__(self, map_: NonlinearMap):
        self.map = map_
        self.spectral = map_.symmetric_jacobian or map_.jacobian_sparse is not None
        self.pair: EigenPair | None = None

    def value(self, u, reset: bool = False) -> float:
        if self.spectral:
            hint = None if reset else self.pair
            try:
                self.pair = track_eigenpair(self.map, u, hint)
            except NoConvergence:
                self.pair = track_eigenpair(self.map, u, None)
            return self.pair.value
        j = self.map.jacobian(np.asarray(u, dtype=float))
        return float(j[0, 0] * j[1, 1] - j[0, 1] * j[1, 0])

    def clone(self) -> "_Tracker":
        c = _Tracker(self.map)
        c.pair = self.pair
        return c


def _svd_tangent(map_: NonlinearMap, u, gp) -> tuple[np.ndarray, float]:
    """Nullspace of the n x (n+1) homotopy Jacobian [DF, -gamma'] (small dims)."""
    a = map_.jacobian(u)
    m = np.hstack([a, -gp.reshape(-1, 1)])
    _, _, vt = np.linalg.svd(m)
    null = vt[-1]
    return null[:-1], float(null[-1])


def _predictor_tangent(map_: NonlinearMap, u, t, gamma: ImagePath,
                       tracker: _Tracker, cfg: ContinuationConfig,
                       prev: tuple[np.ndarray, float] | None):
    """Unit tangent of H^{-1}(0) at (u, t), oriented to follow prev."""
    gp = gamma.deriv(t)
    tangent = None
    if not tracker.spectral:
        tangent = _svd_tangent(map_, u, gp)
    else:
        pair = tracker.pair
        if pair is None or abs(pair.value) >= CRITICAL_EIG_TOL:
            try:
                uhat, that = regular_tangent(map_, u, gp)
                tangent = (uhat, that)
            except (SingularMatrix, RuntimeError):
                tangent = None
        if tangent is None:
            frame = FoldFrame(u=u, lam=pair.value, phi=pair.vector, transversality=1.0)
            try:
                uhat, lam = fold_tangent(map_, frame, gp, alpha=cfg.alpha)
                tangent = (uhat, -lam)   # DH (uhat, -lam) = 0
            except TransversalityFailure:
                if prev is None:
                    raise
                tangent = prev
    tu, tt = tangent
    norm = math.hypot(np.linalg.norm(tu), tt)
    if norm == 0.0:
        raise NoProgress("zero tangent")
    tu, tt = tu / norm, tt / norm
    if prev is not None:
        if float(prev[0] @ tu) + prev[1] * tt < 0.0:
            tu, tt = -tu, -tt
    return tu, tt


def _spectral_gap(map_: NonlinearMap, u, lam: float) -> float | None:
    """Distance from lam to the nearest other Jacobian eigenvalue (small
    symmetric problems; None disables the continuity check)."""
    if (
        map_.dim > _GAP_CHECK_MAX_DIM
        or map_.jacobian is None
        or not map_.symmetric_jacobian
    ):
        return None
    vals = np.linalg.eigvalsh(map_.jacobian(u))
    others = vals[np.argsort(np.abs(vals - lam))][1:]
    if len(others) == 0:
        return None
    return float(np.min(np.abs(others - lam)))


def continue_path(map_: NonlinearMap, gamma: ImagePath, u0, t0: float,
                  cfg: ContinuationConfig, direction: float = 1.0,
                  lam_hint: EigenPair | None = None) -> Branch:
    """Trace the preimage branch of gamma through (u0, t0).

    The branch runs in the orientation fixed by ``direction`` (sign of the
    initial t-component when meaningful) until the path range ends, the
    step budget runs out, the iterates diverge, or the region guard trips.
    """
    u = np.asarray(u0, dtype=float).copy()
    t = float(t0)
    res0 = np.linalg.norm(map_.eval(u) - gamma.eval(t))
    if res0 > cfg.corrector_tol * (1.0 + np.linalg.norm(gamma.eval(t))):
        polished = newton_polish(map_, gamma.eval(t), u, tol_rel=cfg.corrector_tol)
        if polished is None:
            raise NoProgress("starting point does not satisfy F(u0) = gamma(t0)")
        u = polished

    radius = cfg.region_radius
    if radius is None:
        radius = 1e4 * (1.0 + np.linalg.norm(u))
    t_lo, t_hi = gamma.t_range

    tracker = _Tracker(map_)
    if lam_hint is not None:
        tracker.pair = lam_hint
    lam = tracker.value(u)
    branch = Branch(samples=[(t, u.copy(), lam)])
    tangent = None
    h = cfg.step_init
    streak = 0
    terminated = "step_limit"

    for _ in range(cfg.max_steps):
        try:
            tangent = _predictor_tangent(
                map_, u, t, gamma, tracker, cfg,
                tangent if tangent is not None else None,
            )
        except (NoProgress, TransversalityFailure, NoConvergence, SingularMatrix):
            terminated = "divergence"
            break
        if len(branch.samples) == 1 and tangent[1] != 0.0:
            if tangent[1] * direction < 0.0:
                tangent = (-tangent[0], -tangent[1])
        tu, tt = tangent

        accepted = None
        while True:
            u_pred = u + h * tu
            t_pred = t + h * tt
            got = _correct(map_, gamma, u_pred, t_pred, tu, tt, cfg)
            if got is not None:
                u_new, t_new = got
                probe = tracker.clone()
                try:
                    lam_new = probe.value(u_new)
                except NoConvergence:
                    lam_new = None
                if lam_new is not None:
                    gap = _spectral_gap(map_, u, lam) if tracker.spectral else None
                    jump = abs(lam_new - lam)
                    if gap is None or jump < 0.5 * gap or jump < 1e-9 * (1.0 + abs(lam)):
                        accepted = (u_new, t_new, lam_new, probe)
                        break
            h *= 0.5
            streak = 0
            if h < cfg.step_min:
                break
        if accepted is None:
            terminated = "divergence"
            break

        u, t, lam, tracker = accepted
        step_vec = math.hypot(
            np.linalg.norm(u - branch.samples[-1][1]), t - branch.samples[-1][0]
        )
        if step_vec > 1e-12:
            branch.samples.append((t, u.copy(), lam))
        streak += 1
        if streak >= 3:
            h = min(h * 1.3, cfg.step_max)
            streak = 0

        if np.linalg.norm(u) > radius:
            terminated = "left_region"
            break
        if t < t_lo - 1e-12 or t > t_hi + 1e-12:
            # land exactly on the range end with a fixed-t correction
            t_end = t_lo if t < t_lo else t_hi
            u_end = newton_polish(map_, gamma.eval(t_end), u, tol_rel=cfg.corrector_tol)
            if u_end is not None:
                branch.samples[-1] = (t_end, u_end, tracker.value(u_end))
            terminated = "range_end"
            break
    else:
        terminated = "step_limit"

    branch.terminated_by = terminated
    return branch


# ---------------------------------------------------------------------------
# crossing detection and branch spawning
# ---------------------------------------------------------------------------


def detect_crossings(branch: Branch, map_: NonlinearMap, gamma: ImagePath,
                     cfg: ContinuationConfig) -> list[FoldFrame]:
    """Refine every sign change of the tracked eigenvalue down to |lambda| < crossing_tol.

    Each refined point gets a transversality frame from fold_test.  Entries
    whose bisection or eigen-tracking fails are dropped with a log record.
    """
    if len(branch.samples) < 2:
        return []
    frames: list[FoldFrame] = []
    branch.crossings = []
    for i in range(len(branch.samples) - 1):
        la = branch.samples[i][2]
        lb = branch.samples[i + 1][2]
        if la == 0.0 or (la < 0.0) == (lb < 0.0):
            continue
        point = _bisect_crossing(branch.samples[i], branch.samples[i + 1],
                                 map_, gamma, cfg)
        if point is None:
            log.info("crossing between samples %d/%d not refined; dropped", i, i + 1)
            continue
        u_c, t_c = point
        try:
            frame = fold_test(map_, u_c)
        except (ValueError, NoConvergence) as exc:
            log.info("fold test failed at refined crossing: %s", exc)
            continue
        frames.append(frame)
        branch.crossings.append((i, frame))
    return frames


def _bisect_crossing(sample_a, sample_b, map_: NonlinearMap, gamma: ImagePath,
                     cfg: ContinuationConfig, max_iter: int = 80):
    t_a, u_a, lam_a = sample_a
    t_b, u_b, lam_b = sample_b
    tracker = _Tracker(map_)
    for _ in range(max_iter):
        if abs(lam_a) < cfg.crossing_tol:
            return u_a, t_a
        if abs(lam_b) < cfg.crossing_tol:
            return u_b, t_b
        du, dt = u_b - u_a, t_b - t_a
        norm = math.hypot(np.linalg.norm(du), dt)
        if norm < 1e-15:
            break
        tu, tt = du / norm, dt / norm
        u_m = 0.5 * (u_a + u_b)
        t_m = 0.5 * (t_a + t_b)
        got = _correct(map_, gamma, u_m, t_m, tu, tt, cfg)
        if got is None:
            return None
        u_m, t_m = got
        try:
            lam_m = tracker.value(u_m)
        except NoConvergence:
            return None
        if (lam_a < 0.0) != (lam_m < 0.0):
            u_b, t_b, lam_b = u_m, t_m, lam_m
        else:
            u_a, t_a, lam_a = u_m, t_m, lam_m
    if abs(lam_a) < CRITICAL_EIG_TOL:
        return u_a, t_a
    if abs(lam_b) < CRITICAL_EIG_TOL:
        return u_b, t_b
    return None


def _distance_to_branch(u, t, branch: Branch) -> float:
    """Min distance from (u, t) to the branch polyline in joint (u, t) space."""
    samples = branch.samples
    if not samples:
        return math.inf
    pts = np.column_stack([np.stack([s[1] for s in samples]),
                           np.array([s[0] for s in samples])])
    q = np.concatenate([np.asarray(u, dtype=float), [t]])
    if len(samples) == 1:
        return float(np.linalg.norm(pts[0] - q))
    seg = pts[1:] - pts[:-1]
    rel = q[None, :] - pts[:-1]
    denom = np.einsum("ij,ij->i", seg, seg)
    lam = np.zeros(len(seg))
    good = denom > 0.0
    lam[good] = np.einsum("ij,ij->i", rel[good], seg[good]) / denom[good]
    lam = np.clip(lam, 0.0, 1.0)
    closest = pts[:-1] + lam[:, None] * seg
    return float(np.min(np.linalg.norm(closest - q, axis=1)))


def spawn_at_fold(map_: NonlinearMap, frame: FoldFrame, gamma: ImagePath, t_c: float,
                  cfg: ContinuationConfig, parent_tangent=None,
                  parent_branch: Branch | None = None) -> list[tuple[np.ndarray, float]]:
    """Seeds for the mirrored sheet(s) through a certified fold.

    Candidate points off u_c along the reflected parent tangent (and, as a
    fallback, straight along +/- phi) are corrected back onto H(., t) = 0
    with t free; candidates that land back on the parent branch are
    discarded.
    """
    if not frame.is_fold:
        return []
    phi = frame.phi
    u_c = frame.u
    scale = cfg.spawn_offset * (1.0 + np.linalg.norm(u_c))
    candidates: list[tuple[np.ndarray, float, np.ndarray, float]] = []

    if parent_tangent is not None:
        du, dt = parent_tangent
        mu = du - 2.0 * float(phi @ du) * phi
        norm = math.hypot(np.linalg.norm(mu), dt)
        if norm > 1e-12:
            mu, mt = mu / norm, dt / norm
            for sgn in (1.0, -1.0):
                candidates.append(
                    (u_c + sgn * scale * mu, t_c + sgn * scale * mt, mu, mt)
                )
    for sgn in (1.0, -1.0):
        candidates.append((u_c + sgn * scale * phi, t_c, phi, 0.0))

    seeds: list[tuple[np.ndarray, float]] = []
    for u_pred, t_pred, tu, tt in candidates:
        got = _correct(map_, gamma, u_pred, t_pred, tu, tt, cfg)
        if got is None:
            continue
        u_s, t_s = got
        # locality guard: the mirrored sheet passes within O(offset) of the
        # fold; a corrected point that landed far away hopped to a different
        # component of the preimage and must not be adopted
        if math.hypot(np.linalg.norm(u_s - u_c), t_s - t_c) > 8.0 * scale:
            continue
        tol = 1e-6 * (1.0 + np.linalg.norm(u_s)) + 0.25 * scale
        if parent_branch is not None and _distance_to_branch(u_s, t_s, parent_branch) < tol:
            continue
        if any(
            math.hypot(np.linalg.norm(u_s - us), t_s - ts) < 1e-8 * (1.0 + abs(t_s))
            for us, ts in seeds
        ):
            continue
        seeds.append((u_s, t_s))
    return seeds


# ---------------------------------------------------------------------------
# diagram assembly
# ---------------------------------------------------------------------------


def morse_count(map_: NonlinearMap, u, k_probe: int = 8) -> int:
    """Number of Jacobian eigenvalues with negative real part at u.

    Equals the Morse index for symmetric Jacobians; for the planar
    non-symmetric examples it is read off trace and determinant.
    """
    u = np.asarray(u, dtype=float)
    if not map_.symmetric_jacobian and map_.dim == 2 and map_.jacobian_sparse is None:
        j = map_.jacobian(u)
        det = j[0, 0] * j[1, 1] - j[0, 1] * j[1, 0]
        tr = j[0, 0] + j[1, 1]
        if det < 0.0:
            return 1
        return 2 if tr < 0.0 else 0
    if map_.jacobian_sparse is not None and map_.dim > _GAP_CHECK_MAX_DIM:
        import scipy.sparse.linalg as spla

        a = map_.jacobian_sparse(u).tocsc()
        k = min(k_probe, map_.dim - 1)
        vals = spla.eigsh(a, k=k, sigma=0.0, which="LM", return_eigenvectors=False)
        vals = np.sort(vals)
        neg = int(np.count_nonzero(vals < 0.0))
        if neg == k:
            log.warning("morse_count probe saturated at k=%d; index may be larger", k)
        return neg
    pairs = sym_eigen(map_.jacobian(u))
    return sum(1 for p in pairs if p.value < 0.0)


def _harvest_parameters(gamma: ImagePath, g, samples: int = 4001) -> list[float]:
    """All t* in gamma's range with gamma(t*) = g, by scan plus 1-D Gauss-Newton."""
    g = np.asarray(g, dtype=float)
    t_lo, t_hi = gamma.t_range
    ts = np.linspace(t_lo, t_hi, samples)
    dist = np.array([np.linalg.norm(gamma.eval(t) - g) for t in ts])
    denom = np.linalg.norm(g) if np.linalg.norm(g) > 0.0 else 1.0
    hits: list[float] = []
    for i in range(len(ts)):
        if 0 < i < len(ts) - 1 and not (dist[i] <= dist[i - 1] and dist[i] <= dist[i + 1]):
            continue
        if i in (0, len(ts) - 1) and dist[i] > 1e-6 * denom:
            continue
        t = ts[i]
        for _ in range(60):
            r = gamma.eval(t) - g
            gp = gamma.deriv(t)
            gpn = float(gp @ gp)
            if gpn == 0.0:
                break
            step = -float(gp @ r) / gpn
            t_new = min(t_hi, max(t_lo, t + step))
            if abs(t_new - t) < 1e-15 * (1.0 + abs(t)):
                t = t_new
                break
            t = t_new
        if np.linalg.norm(gamma.eval(t) - g) <= 1e-9 * denom:
            if not any(abs(t - h) < 1e-8 * (1.0 + abs(t)) for h in hits):
                hits.append(t)
    hits.sort()
    return hits


def _duplicate_branch(candidate: Branch, existing: list[Branch]) -> bool:
    """True when >= 3 spread-out candidate samples all lie on one existing branch.

    Probes are interior (quarter points) so the seed region next to the
    spawning fold, where distinct sheets nearly touch, does not cause false
    positives; the tolerance allows for polyline chord error at the
    adaptive step size.
    """
    m = len(candidate.samples)
    if m < 3:
        probe_idx = list(range(m))
    else:
        probe_idx = sorted({m // 4, m // 2, (3 * m) // 4})
    for other in existing:
        hit = 0
        for i in probe_idx:
            t_i, u_i, _ = candidate.samples[i]
            tol = 1e-3 * (1.0 + np.linalg.norm(u_i))
            if _distance_to_branch(u_i, t_i, other) < tol:
                hit += 1
        if hit >= min(3, m):
            return True
    return False


def _sample_root_branch(map_: NonlinearMap, line: DomainLine, cfg: ContinuationConfig) -> Branch:
    """The search line itself, sampled so eigenvalue tracking stays unambiguous.

    Fixed-step samples are refined recursively wherever the tracked value
    jumps by a large fraction of the local spectral gap (small symmetric
    problems only; the gap probe returns None otherwise).
    """
    s_lo, s_hi = line.s_range
    step = cfg.root_sample_step if cfg.root_sample_step is not None else cfg.step_init
    count = max(2, int(math.ceil((s_hi - s_lo) / step)) + 1)
    branch = Branch(depth=0, terminated_by="range_end")
    tracker = _Tracker(map_)
    grid = list(np.linspace(s_lo, s_hi, count))
    floor = max((s_hi - s_lo) * 1e-7, 1e-12)

    samples: list[tuple[float, np.ndarray, float]] = []
    s_prev = grid[0]
    u_prev = line.at(float(s_prev))
    lam_prev = tracker.value(u_prev)
    samples.append((float(s_prev), u_prev, lam_prev))
    for s_next in grid[1:]:
        pending = [float(s_next)]
        while pending:
            s = pending[-1]
            u = line.at(s)
            lam = tracker.value(u)
            gap = _spectral_gap(map_, u_prev, lam_prev) if tracker.spectral else None
            if (
                gap is not None
                and abs(lam - lam_prev) >= 0.45 * gap
                and s - s_prev > floor
            ):
                pending.append(0.5 * (s_prev + s))
                continue
            pending.pop()
            samples.append((s, u, lam))
            s_prev, u_prev, lam_prev = s, u, lam
    branch.samples = samples
    return branch


def build_diagram(map_: NonlinearMap, line: DomainLine, g, cfg: ContinuationConfig,
                  dedup_tol: float = 1e-6) -> BifurcationDiagram:
    """Bifurcation diagram of the search line: trace, spawn at folds, harvest.

    The root branch is the line itself sampled over its s-range, with
    gamma(s) = F(r(s)) as the image path.  Children are spawned at every
    certified fold crossing, recursively to cfg.max_depth, and every branch
    is harvested at the parameters where gamma passes through g.
    """
    g = np.asarray(g, dtype=float)
    gnorm = np.linalg.norm(g) if np.linalg.norm(g) > 0.0 else 1.0
    p0 = line.at(0.0)
    res = np.linalg.norm(map_.eval(p0) - g) / gnorm
    if res > 1e-8:
        raise ValueError(f"line base point is not a preimage of g (residual {res:.2e})")

    gamma = image_of_line(map_, line.base, line.direction, line.s_range)
    diagram = BifurcationDiagram(line=line, base_point=p0, gamma=gamma)
    diagram.solutions.dedup_tol = dedup_tol

    root = _sample_root_branch(map_, line, cfg)
    root.branch_id = 0
    diagram.branches.append(root)

    harvest_ts = _harvest_parameters(gamma, g)

    queue = [root]
    next_id = 1
    handled_folds: list[tuple[np.ndarray, float]] = []
    while queue:
        branch = queue.pop(0)
        detect_crossings(branch, map_, gamma, cfg)
        if branch.depth >= cfg.max_depth:
            continue
        for idx, frame in branch.crossings:
            t_c = _crossing_parameter(branch, idx, frame)
            # each geometric fold point spawns once, no matter how many
            # branches pass through it
            tol = 1e-5 * (1.0 + np.linalg.norm(frame.u))
            if any(
                math.hypot(np.linalg.norm(frame.u - uc), t_c - tc) < tol
                for uc, tc in handled_folds
            ):
                continue
            handled_folds.append((frame.u, t_c))
            tangent = branch.tangent_at(idx)
            seeds = spawn_at_fold(
                map_, frame, gamma, t_c, cfg,
                parent_tangent=tangent, parent_branch=branch,
            )
            for u_s, t_s in seeds:
                child = _trace_child(map_, gamma, u_s, t_s, cfg)
                if child is None or len(child.samples) < 2:
                    continue
                if _duplicate_branch(child, diagram.branches):
                    continue
                child.branch_id = next_id
                next_id += 1
                child.parent_id = branch.branch_id
                child.depth = branch.depth + 1
                diagram.branches.append(child)
                queue.append(child)

    for branch in diagram.branches:
        _harvest_branch(map_, gamma, branch, g, harvest_ts, diagram.solutions)
    return diagram


def _crossing_parameter(branch: Branch, idx: int, frame: FoldFrame) -> float:
    t_a, u_a, _ = branch.samples[idx]
    t_b, u_b, _ = branch.samples[min(idx + 1, len(branch.samples) - 1)]
    seg = u_b - u_a
    denom = float(seg @ seg)
    if denom == 0.0:
        return t_a
    w = float((frame.u - u_a) @ seg) / denom
    return t_a + min(1.0, max(0.0, w)) * (t_b - t_a)


def _trace_child(map_: NonlinearMap, gamma: ImagePath, u_s, t_s,
                 cfg: ContinuationConfig) -> Branch | None:
    runs = []
    for direction in (1.0, -1.0):
        try:
            runs.append(continue_path(map_, gamma, u_s, t_s, cfg, direction=direction))
        except (NoProgress, NoConvergence):
            runs.append(None)
    plus, minus = runs
    if plus is None and minus is None:
        return None
    if plus is not None and minus is not None:
        samples = list(reversed(minus.samples))[:-1] + plus.samples
        terminated = plus.terminated_by
    else:
        only = plus if plus is not None else minus
        samples, terminated = only.samples, only.terminated_by
    return Branch(samples=samples, terminated_by=terminated)


def _harvest_branch(map_: NonlinearMap, gamma: ImagePath, branch: Branch, g,
                    harvest_ts: list[float], bank: SolutionBank) -> None:
    g = np.asarray(g, dtype=float)
    gnorm = np.linalg.norm(g) if np.linalg.norm(g) > 0.0 else 1.0
    for t_star in harvest_ts:
        for i in range(len(branch.samples)):
            t_i, u_i, _ = branch.samples[i]
            crossing = abs(t_i - t_star) < 1e-12
            if not crossing and i + 1 < len(branch.samples):
                t_j = branch.samples[i + 1][0]
                crossing = (t_i - t_star) * (t_j - t_star) < 0.0
                if crossing:
                    w = (t_star - t_i) / (t_j - t_i)
                    u_i = (1.0 - w) * u_i + w * branch.samples[i + 1][1]
            if not crossing:
                continue
            u = newton_polish(map_, g, u_i, tol_rel=1e-12)
            if u is None:
                continue
            resid = float(np.linalg.norm(map_.eval(u) - g) / gnorm)
            if resid >= 1e-8 or bank.contains(u):
                continue
            bank.add(
                SolutionRecord(
                    u=u, residual=resid, morse_index=morse_count(map_, u),
                    provenance="diagram",
                )
            )


def write_diagram_csv(diagram: BifurcationDiagram, path) -> None:
    """Branch samples as ``branch_id,parent_id,t,lambda,u_1..u_n``."""
    n = diagram.branches[0].samples[0][1].shape[0] if diagram.branches else 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["branch_id", "parent_id", "t", "lambda"] + [f"u_{i+1}" for i in range(n)])
        for branch in diagram.branches:
            parent = "" if branch.parent_id is None else branch.parent_id
            for t, u, lam in branch.samples:
                writer.writerow(
                    [branch.branch_id, parent, format(t, ".17g"), format(lam, ".17g")]
                    + [format(x, ".17g") for x in u]
                )
