import numpy as np
import pytest

from foldcont.elliptic import ArctanNonlinearity
from foldcont.errors import TransversalityFailure
from foldcont.folds import (
    FoldFrame,
    fold_tangent,
    fold_test,
    halfline_path,
    image_of_line,
    planar_real_eigenpair,
    regular_tangent,
    segment_path,
    track_eigenpair,
)
from foldcont.linalg import rank_one_solve
from foldcont.maps import NonlinearMap, pleat_map, quad_map, semilinear_map
from foldcont.sturm import build_discretization


def smooth_sl_map(n=15, ell_minus=0.4984, ell_plus=19.1248):
    disc = build_discretization(n)
    f = ArctanNonlinearity.from_slopes(ell_minus, ell_plus)
    return disc, semilinear_map(disc.a, f.f, f.fprime, name="sl-smooth")


class TestImagePath:
    def test_segment(self):
        p = segment_path([0.0, 0.0], [2.0, 4.0])
        assert np.allclose(p.eval(0.5), [1.0, 2.0])
        assert np.allclose(p.deriv(0.3), [2.0, 4.0])
        assert p.t_range == (0.0, 1.0)

    def test_halfline(self):
        p = halfline_path([1.0, 0.0], [0.0, 3.0])
        assert np.allclose(p.eval(2.0), [1.0, 6.0])

    def test_image_of_line_derivative_is_exact(self):
        map_ = pleat_map()
        p = image_of_line(map_, [0.3, 0.1], [1.0, 0.2], (-2.0, 2.0))
        for t in (-1.0, 0.0, 0.7):
            h = 1e-7
            fd = (p.eval(t + h) - p.eval(t - h)) / (2.0 * h)
            assert np.allclose(p.deriv(t), fd, atol=1e-6)


class TestTrackEigenpair:
    def test_sl_smooth_deep_negative(self):
        # far along -t*phi_1 the Jacobian approaches A - ell_minus*I, whose
        # smallest-magnitude eigenvalue is lambda_1 - ell_minus > 0
        disc, map_ = smooth_sl_map()
        u = -1e5 * disc.sin_mode(1)
        pair = track_eigenpair(map_, u)
        assert pair.value == pytest.approx(disc.eigenvalues[0] - 0.4984, rel=1e-3)
        assert pair.value > 0.0

    def test_semilinear_at_zero(self):
        # DF(0) = A - f'(0) I = A - beta I
        disc, map_ = smooth_sl_map(n=8, ell_minus=-1.0, ell_plus=2.5)
        beta = 0.5 * (2.5 - 1.0)
        pair = track_eigenpair(map_, np.zeros(8))
        diffs = disc.eigenvalues - beta
        assert pair.value == pytest.approx(diffs[np.argmin(np.abs(diffs))], abs=1e-8)

    def test_planar_closed_form(self):
        pair = planar_real_eigenpair(np.array([[0.1, 0.0], [5.0, 3.0]]))
        assert pair.value == pytest.approx(0.1, abs=1e-12)

    def test_quad_map_dispatch(self):
        map_ = quad_map()
        pair = track_eigenpair(map_, np.array([0.5, 0.0]))  # on the critical circle
        assert abs(pair.value) < 1e-12


class TestFoldTest:
    def test_pleat_fold(self):
        frame = fold_test(pleat_map(), np.array([np.pi, 0.0]))
        assert frame.is_fold
        # d/dx[(1+x^2) sin x] at pi is -(1+pi^2)
        assert frame.transversality == pytest.approx(-(1.0 + np.pi**2), rel=1e-3)

    def test_cubic_kernel_direction_is_not_a_fold(self):
        def f(u):
            return np.array([u[0] ** 3, u[1]])

        def jac(u):
            return np.array([[3.0 * u[0] ** 2, 0.0], [0.0, 1.0]])

        map_ = NonlinearMap(2, f, jac, symmetric_jacobian=True)
        frame = fold_test(map_, np.zeros(2))
        assert abs(frame.transversality) < 1e-4
        assert not frame.is_fold

    def test_quad_circle_points_are_folds(self):
        # sample the critical circle away from its three exceptional points
        map_ = quad_map()
        for theta in np.linspace(0.15, 2.0 * np.pi - 0.35, 9):
            u = 0.5 * np.array([np.cos(theta), np.sin(theta)])
            frame = fold_test(map_, u)
            assert frame.is_fold, f"theta={theta}"

    def test_fd_step_halving_consistency(self):
        map_ = pleat_map()
        u = np.array([np.pi, 0.0])
        step = 1e-5 * (1.0 + np.linalg.norm(u))
        t1 = fold_test(map_, u, fd_step=step).transversality
        t2 = fold_test(map_, u, fd_step=0.5 * step).transversality
        assert abs(t1 - t2) <= 0.05 * max(abs(t1), abs(t2))


class TestRegularTangent:
    def test_identity_jacobian(self):
        map_ = NonlinearMap(2, lambda u: u, lambda u: np.eye(2), symmetric_jacobian=True)
        uhat, that = regular_tangent(map_, np.zeros(2), np.array([3.0, -1.0]))
        assert np.allclose(uhat, [3.0, -1.0])
        assert that == 1.0

    def test_sl_solve_oracle(self):
        disc, map_ = smooth_sl_map()
        u = -1e5 * disc.sin_mode(1)
        gp = -disc.sin_mode(1)
        uhat, that = regular_tangent(map_, u, gp)
        expected = np.linalg.solve(map_.jacobian(u), gp)
        assert np.allclose(uhat, expected, atol=1e-9)

    def test_homotopy_consistency(self):
        disc, map_ = smooth_sl_map(n=6, ell_minus=-1.0, ell_plus=2.0)
        rng = np.random.default_rng(2)
        for _ in range(5):
            u = rng.standard_normal(6)
            gp = rng.standard_normal(6)
            uhat, that = regular_tangent(map_, u, gp)
            # DH (uhat, that) = DF uhat - gamma' * that = 0
            resid = map_.jacobian(u) @ uhat - gp * that
            assert np.linalg.norm(resid) <= 1e-10 * (1.0 + np.linalg.norm(gp))


def synthetic_near_fold(rng, n=12, lam_scale=1.0, lam=None):
    """Symmetric Jacobian with one controlled small eigenvalue, as a map."""
    q = np.linalg.qr(rng.standard_normal((n, n)))[0]
    vals = np.concatenate([[lam if lam is not None else rng.uniform(-1, 1) * lam_scale],
                           rng.uniform(1.0, 5.0, n - 1) * rng.choice([-1.0, 1.0], n - 1)])
    a = q @ np.diag(vals) @ q.T
    a = 0.5 * (a + a.T)
    phi = q[:, 0]
    if phi[np.argmax(np.abs(phi))] < 0:
        phi = -phi
    map_ = NonlinearMap(n, lambda u: a @ u, lambda u: a, symmetric_jacobian=True)
    return map_, a, float(vals[0]), phi


class TestFoldTangent:
    def test_exactly_at_fold_kernel_direction(self):
        rng = np.random.default_rng(31)
        map_, a, lam, phi = synthetic_near_fold(rng, lam=0.0)
        frame = FoldFrame(u=np.zeros(12), lam=0.0, phi=phi, transversality=1.0)
        gp = rng.standard_normal(12)
        uhat, lam_out = fold_tangent(map_, frame, gp)
        assert lam_out == 0.0
        assert np.allclose(uhat, -float(phi @ gp) * phi, atol=1e-9)

    def test_diagonal_toy(self):
        a = np.diag([0.0, 1.0])
        map_ = NonlinearMap(2, lambda u: a @ u, lambda u: a, symmetric_jacobian=True)
        frame = FoldFrame(
            u=np.zeros(2), lam=0.0, phi=np.array([1.0, 0.0]), transversality=1.0
        )
        uhat, lam = fold_tangent(map_, frame, np.array([1.0, 1.0]), alpha=1.0)
        assert lam == 0.0
        assert np.allclose(uhat, [-1.0, 0.0], atol=1e-12)

    def test_transversality_failure(self):
        a = np.diag([0.0, 1.0])
        map_ = NonlinearMap(2, lambda u: a @ u, lambda u: a, symmetric_jacobian=True)
        frame = FoldFrame(
            u=np.zeros(2), lam=0.0, phi=np.array([1.0, 0.0]), transversality=1.0
        )
        with pytest.raises(TransversalityFailure):
            fold_tangent(map_, frame, np.array([0.0, 1.0]))

    def test_identities_randomized(self):
        # DF uhat = -lam gamma' and the vhat-perp-phi decomposition
        rng = np.random.default_rng(4242)
        for _ in range(200):
            map_, a, lam, phi = synthetic_near_fold(rng)
            if abs(lam) < 1e-3:
                lam = np.sign(lam or 1.0) * 1e-3
                map_, a, lam, phi = synthetic_near_fold(rng, lam=lam)
            frame = FoldFrame(u=np.zeros(12), lam=lam, phi=phi, transversality=1.0)
            gp = rng.standard_normal(12)
            if abs(phi @ gp) < 1e-6:
                continue
            uhat, lam_out = fold_tangent(map_, frame, gp)
            scale = 1.0 + np.linalg.norm(gp)
            assert np.linalg.norm(a @ uhat + lam_out * gp) <= 1e-8 * scale
            vhat = uhat + float(phi @ gp) * phi
            assert abs(float(vhat @ phi)) <= 1e-8 * (1.0 + np.linalg.norm(vhat))

    def test_direction_continuity_toward_fold(self):
        # fold_tangent direction approaches the limit of normalized regular
        # tangents as the eigenvalue shrinks
        rng = np.random.default_rng(7)
        n = 12
        q = np.linalg.qr(rng.standard_normal((n, n)))[0]
        rest = rng.uniform(1.0, 5.0, n - 1)
        gp = rng.standard_normal(n)
        phi = q[:, 0]
        lam = 1e-5
        vals = np.concatenate([[lam], rest])
        a = q @ np.diag(vals) @ q.T
        a = 0.5 * (a + a.T)
        map_ = NonlinearMap(n, lambda u: a @ u, lambda u: a, symmetric_jacobian=True)
        frame = FoldFrame(u=np.zeros(n), lam=lam, phi=phi, transversality=1.0)
        uhat_f, lam_out = fold_tangent(map_, frame, gp)
        tf = np.concatenate([uhat_f, [-lam_out]])
        tf /= np.linalg.norm(tf)
        uhat_r = np.linalg.solve(a, gp)
        tr = np.concatenate([uhat_r, [1.0]])
        tr /= np.linalg.norm(tr)
        if float(tf @ tr) < 0:
            tf = -tf
        angle = np.arccos(np.clip(float(tf @ tr), -1.0, 1.0))
        assert angle < 1e-3

    def test_rank_one_solve_against_dense_formation(self):
        rng = np.random.default_rng(99)
        for _ in range(100):
            map_, a, lam, phi = synthetic_near_fold(rng)
            b = rng.standard_normal(12)
            x = rank_one_solve(a, phi, 1.0, b)
            dense = np.linalg.solve(a + np.outer(phi, phi), b)
            assert np.linalg.norm(x - dense) <= 1e-9 * max(1.0, np.linalg.norm(dense))
