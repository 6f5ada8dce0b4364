import itertools

import numpy as np
import pytest

from foldcont.bank import read_bank_csv, write_bank_csv
from foldcont.errors import OnCriticalBoundary
from foldcont.linalg import sym_eigen
from foldcont.sturm import (
    PLParams,
    build_discretization,
    lazer_mckenna_pair,
    morse_index,
    orthant_matrix,
    orthant_oracle,
    pl_bifurcation_diagram,
    pl_eval,
    random_orthant_sampling,
    signature_of,
)


def params_for_k(disc, k):
    """ell_minus = lambda_1/2, ell_plus halfway up the k-th gap (top slope
    offset for k = n)."""
    lam = disc.eigenvalues
    if k < disc.n:
        ell_plus = 0.5 * (lam[k - 1] + lam[k])
    else:
        ell_plus = lam[-1] + 0.5 * lam[0]
    return PLParams(ell_minus=0.5 * lam[0], ell_plus=ell_plus)


def default_g(disc, t=1000.0):
    return -t * np.sin(disc.mesh)


class TestDiscretization:
    def test_n2_eigenvalues(self):
        disc = build_discretization(2)
        assert np.allclose(disc.eigenvalues, [0.9119, 2.7357], atol=1e-4)

    def test_n15_lambda1(self):
        disc = build_discretization(15)
        assert disc.eigenvalues[0] == pytest.approx(0.9968, abs=1e-4)

    def test_ground_mode_positive(self):
        for n in (2, 5, 15, 23):
            disc = build_discretization(n)
            assert np.all(disc.sin_mode(1) > 0.0)

    def test_closed_form_matches_dense_eigensolver(self):
        disc = build_discretization(15)
        dense = [p.value for p in sym_eigen(disc.a)]
        assert np.allclose(dense, disc.eigenvalues, atol=1e-10, rtol=0)

    def test_eigenvector_identity(self):
        disc = build_discretization(9)
        for k in range(1, 10):
            v = disc.sin_mode(k)
            assert np.allclose(disc.a @ v, disc.eigenvalues[k - 1] * v, atol=1e-9)


class TestPLEval:
    def test_zero(self):
        disc = build_discretization(4)
        p = PLParams(-1.0, 4.0)
        assert np.allclose(pl_eval(disc, p, np.zeros(4)), np.zeros(4))

    def test_lazer_mckenna_identities(self):
        disc = build_discretization(15)
        p = params_for_k(disc, 4)
        t = 1000.0
        lam1 = disc.eigenvalues[0]
        for denom in (p.ell_plus - lam1, p.ell_minus - lam1):
            u = t * disc.sin_mode(1) / denom
            assert np.allclose(pl_eval(disc, p, u), -t * disc.sin_mode(1), atol=1e-10)

    def test_lm_identity_random_triples(self):
        rng = np.random.default_rng(99)
        for _ in range(50):
            n = int(rng.integers(2, 24))
            disc = build_discretization(n)
            lam = disc.eigenvalues
            t = float(rng.uniform(1.0, 1e4))
            ell_minus = float(rng.uniform(lam[0] - 3.0, 0.9 * lam[0]))
            ell_plus = float(rng.uniform(lam[0] + 0.3, lam[-1] + 2.0))
            if np.min(np.abs(lam - ell_plus)) < 0.05:
                continue
            p = PLParams(ell_minus, ell_plus)
            g = -t * disc.sin_mode(1)
            plus, minus = lazer_mckenna_pair(disc, p, t)
            for u in (plus, minus):
                resid = np.linalg.norm(pl_eval(disc, p, u) - g) / np.linalg.norm(g)
                assert resid < 1e-12


class TestOrthantMatrix:
    def test_uniform_signatures(self):
        disc = build_discretization(3)
        p = PLParams(-1.0, 4.0)
        assert np.allclose(orthant_matrix(disc, p, (1, 1, 1)), disc.a - 4.0 * np.eye(3))
        assert np.allclose(orthant_matrix(disc, p, (-1, -1, -1)), disc.a + np.eye(3))

    def test_mixed_signature_n2(self):
        disc = build_discretization(2)
        p = PLParams(-1.0, 4.0)
        m = orthant_matrix(disc, p, (1, -1))
        assert m[0, 0] == pytest.approx(2.0 / disc.h**2 - 4.0)
        assert m[1, 1] == pytest.approx(2.0 / disc.h**2 + 1.0)


class TestOracle:
    def test_n2_four_solutions(self):
        disc = build_discretization(2)
        bank = orthant_oracle(disc, PLParams(-1.0, 4.0), default_g(disc))
        assert len(bank) == 4
        assert not bank.degenerate_signatures

    def test_n15_k4_count(self):
        disc = build_discretization(15)
        bank = orthant_oracle(disc, params_for_k(disc, 4), default_g(disc))
        assert len(bank) == 8

    def test_oracle_records_are_sound(self):
        disc = build_discretization(15)
        g = default_g(disc)
        bank = orthant_oracle(disc, params_for_k(disc, 4), g)
        for rec in bank:
            resid = np.linalg.norm(pl_eval(disc, params_for_k(disc, 4), rec.u) - g)
            assert resid <= 1e-10 * np.linalg.norm(g)
            assert rec.signature == signature_of(rec.u)


class TestLazerMcKennaPair:
    def test_k4_amplitude(self):
        disc = build_discretization(15)
        p = params_for_k(disc, 4)
        plus, minus = lazer_mckenna_pair(disc, p, 1000.0)
        assert np.allclose(plus, 55.1633 * disc.sin_mode(1), atol=1e-3)
        assert np.all(plus > 0.0)
        assert np.all(minus < 0.0)

    def test_residuals(self):
        disc = build_discretization(15)
        p = params_for_k(disc, 4)
        g = default_g(disc)
        for u in lazer_mckenna_pair(disc, p, 1000.0):
            resid = np.linalg.norm(pl_eval(disc, p, u) - g) / np.linalg.norm(g)
            assert resid < 1e-12


class TestMorseIndex:
    def test_lazer_mckenna_indices_k4(self):
        disc = build_discretization(15)
        p = params_for_k(disc, 4)
        plus, minus = lazer_mckenna_pair(disc, p, 1000.0)
        assert morse_index(disc, p, plus) == 4
        assert morse_index(disc, p, minus) == 0

    def test_boundary_raises(self):
        disc = build_discretization(3)
        p = PLParams(-1.0, 4.0)
        with pytest.raises(OnCriticalBoundary):
            morse_index(disc, p, np.array([1.0, 0.0, -1.0]))


class TestRandomSampling:
    def test_exhaustion_equals_oracle(self):
        disc = build_discretization(6)
        p = params_for_k(disc, 3)
        g = default_g(disc)
        oracle = orthant_oracle(disc, p, g)
        sampled = random_orthant_sampling(disc, p, g, budget=1 << 6, rng_seed=5)
        matched, missed, spurious = sampled.match_report(oracle)
        assert (matched, missed, spurious) == (len(oracle), 0, 0)

    def test_reproducible(self):
        disc = build_discretization(8)
        p = params_for_k(disc, 4)
        g = default_g(disc)
        a = random_orthant_sampling(disc, p, g, budget=40, rng_seed=123)
        b = random_orthant_sampling(disc, p, g, budget=40, rng_seed=123)
        assert len(a) == len(b)
        for ra, rb in zip(a.sorted_records(), b.sorted_records()):
            assert np.array_equal(ra.u, rb.u)

    def test_budget_one(self):
        disc = build_discretization(8)
        p = params_for_k(disc, 4)
        bank = random_orthant_sampling(disc, p, default_g(disc), budget=1, rng_seed=0)
        assert len(bank) <= 1


class TestPLDiagram:
    def test_n2_walkthrough(self):
        disc = build_discretization(2)
        p = PLParams(-1.0, 4.0)
        g = default_g(disc)
        p0 = 1000.0 * disc.sin_mode(1) / (p.ell_plus - disc.eigenvalues[0])
        assert np.allclose(p0, [280.4396, 280.4396], atol=1e-3)
        direction = 0.2 * disc.sin_mode(2) - 0.8 * disc.sin_mode(1)
        diagram = pl_bifurcation_diagram(disc, p, p0, direction, (0.0, 2000.0))
        assert len(diagram.solutions) == 4
        oracle = orthant_oracle(disc, p, g)
        matched, missed, spurious = diagram.solutions.match_report(oracle, tol=1e-8)
        assert (matched, missed, spurious) == (4, 0, 0)

    def test_k4_diagram_contains_oracle(self):
        disc = build_discretization(15)
        p = params_for_k(disc, 4)
        g = default_g(disc)
        p0, _ = lazer_mckenna_pair(disc, p, 1000.0)
        direction = (
            disc.sin_mode(1) - 0.1 * disc.sin_mode(2)
            - 0.1 * disc.sin_mode(3) - 0.1 * disc.sin_mode(4)
        )
        diagram = pl_bifurcation_diagram(disc, p, p0, direction, (-4000.0, 4000.0))
        oracle = orthant_oracle(disc, p, g)
        matched, missed, spurious = diagram.solutions.match_report(oracle, tol=1e-6)
        assert (matched, missed, spurious) == (8, 0, 0)

    def test_diagram_subset_of_oracle(self):
        disc = build_discretization(8)
        p = params_for_k(disc, 5)
        g = default_g(disc)
        p0, _ = lazer_mckenna_pair(disc, p, 1000.0)
        direction = disc.sin_mode(1) - 0.1 * disc.sin_mode(2) - 0.1 * disc.sin_mode(3)
        diagram = pl_bifurcation_diagram(disc, p, p0, direction, (-3000.0, 3000.0))
        oracle = orthant_oracle(disc, p, g)
        for rec in diagram.solutions:
            assert oracle.contains(rec.u)

    def test_mirror_parity_at_crossings(self):
        # every recorded crossing separates orthants of opposite det sign
        from foldcont.linalg import det_sign

        disc = build_discretization(8)
        p = params_for_k(disc, 5)
        p0, _ = lazer_mckenna_pair(disc, p, 1000.0)
        direction = disc.sin_mode(1) - 0.1 * disc.sin_mode(2) - 0.1 * disc.sin_mode(3)
        diagram = pl_bifurcation_diagram(disc, p, p0, direction, (-3000.0, 3000.0))
        checked = 0
        for branch in diagram.branches:
            for idx, frame in branch.crossings:
                i = int(np.argmax(frame.phi))
                sig = list(signature_of(frame.u))
                sig[i] = 1
                d_plus = det_sign(orthant_matrix(disc, p, sig))
                sig[i] = -1
                d_minus = det_sign(orthant_matrix(disc, p, sig))
                assert d_plus == -d_minus != 0
                checked += 1
        assert checked > 0

    def test_depth_zero_keeps_only_base(self):
        disc = build_discretization(15)
        p = params_for_k(disc, 4)
        p0, _ = lazer_mckenna_pair(disc, p, 1000.0)
        direction = disc.sin_mode(1) - 0.1 * disc.sin_mode(2)
        diagram = pl_bifurcation_diagram(disc, p, p0, direction, (-2000.0, 2000.0),
                                         max_depth=0)
        assert len(diagram.solutions) == 1
        assert np.allclose(diagram.solutions.records[0].u, p0, atol=1e-8)


class TestSmallNCompleteness:
    @staticmethod
    def semismooth_multistart(disc, p, g, grid_n):
        """Independent oracle: damped semismooth Newton from a dense grid."""
        bound = 0.0
        for sig in itertools.product((1, -1), repeat=disc.n):
            m = orthant_matrix(disc, p, sig)
            bound = max(bound, np.linalg.norm(np.linalg.inv(m), 2))
        radius = 1.05 * bound * np.linalg.norm(g)
        axes = [np.linspace(-radius, radius, grid_n)] * disc.n
        roots = []
        for start in itertools.product(*axes):
            u = np.array(start)
            r = pl_eval(disc, p, u) - g
            for _ in range(60):
                if np.linalg.norm(r) <= 1e-11 * (1.0 + np.linalg.norm(g)):
                    break
                m = orthant_matrix(disc, p, signature_of(u))
                try:
                    step = np.linalg.solve(m, -r)
                except np.linalg.LinAlgError:
                    break
                t = 1.0
                for _ in range(30):
                    u_new = u + t * step
                    r_new = pl_eval(disc, p, u_new) - g
                    if np.linalg.norm(r_new) < np.linalg.norm(r):
                        break
                    t *= 0.5
                else:
                    break
                u, r = u_new, r_new
            if np.linalg.norm(r) <= 1e-11 * (1.0 + np.linalg.norm(g)):
                if not any(np.abs(u - v).max() < 1e-6 for v in roots):
                    roots.append(u)
        return roots

    def test_oracle_matches_multistart_n2(self):
        rng = np.random.default_rng(7)
        disc = build_discretization(2)
        lam = disc.eigenvalues
        for _ in range(3):
            p = PLParams(
                float(rng.uniform(lam[0] - 2.0, 0.8 * lam[0])),
                float(rng.uniform(lam[0] + 0.4, lam[-1] + 1.5)),
            )
            if np.min(np.abs(lam - p.ell_plus)) < 0.1:
                continue
            g = -float(rng.uniform(10.0, 100.0)) * disc.sin_mode(1)
            oracle = orthant_oracle(disc, p, g)
            roots = self.semismooth_multistart(disc, p, g, 15)
            assert len(roots) == len(oracle)
            for u in roots:
                assert oracle.contains(u)


def test_bank_csv_roundtrip(tmp_path):
    disc = build_discretization(15)
    p = params_for_k(disc, 4)
    bank = orthant_oracle(disc, p, default_g(disc))
    path = tmp_path / "bank.csv"
    write_bank_csv(bank, path)
    loaded = read_bank_csv(path)
    path2 = tmp_path / "bank2.csv"
    write_bank_csv(loaded, path2)
    assert path.read_bytes() == path2.read_bytes()
    for a, b in zip(bank.sorted_records(), loaded.sorted_records()):
        assert np.array_equal(a.u, b.u)
        assert a.morse_index == b.morse_index
