import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from irsec import conic
from irsec.conic.cones import BlockScaling, NonnegCone, PsdCone, SocCone
from oracles import lp_vertex_max


def _solve(prob, **kw):
    sol = conic.solve(prob, **kw)
    return sol


class TestSvec:
    def test_roundtrip(self):
        rng = np.random.default_rng(0)
        for n in (1, 2, 3, 6):
            A = rng.standard_normal((n, n))
            A = A + A.T
            v = conic.svec(A)
            assert v.shape == (n * (n + 1) // 2,)
            np.testing.assert_allclose(conic.smat(v), A, atol=1.0e-14)

    def test_inner_product_preserved(self):
        rng = np.random.default_rng(1)
        A = rng.standard_normal((4, 4))
        A = A + A.T
        B = rng.standard_normal((4, 4))
        B = B + B.T
        assert conic.svec(A) @ conic.svec(B) == pytest.approx(
            np.trace(A @ B), rel=1.0e-12)

    def test_batched(self):
        rng = np.random.default_rng(2)
        X = rng.standard_normal((5, 3, 3))
        X = X + np.swapaxes(X, 1, 2)
        V = conic.svec(X)
        assert V.shape == (5, 6)
        np.testing.assert_allclose(conic.smat(V), X, atol=1.0e-14)


class TestRealify:
    def test_eigenvalues_doubled(self):
        rng = np.random.default_rng(3)
        H = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        H = H + H.conj().T
        R = conic.realify_hermitian(H)
        wh = np.linalg.eigvalsh(H)
        wr = np.linalg.eigvalsh(R)
        np.testing.assert_allclose(wr, np.sort(np.repeat(wh, 2)), atol=1.0e-10)

    def test_rejects_non_hermitian(self):
        with pytest.raises(ValueError):
            conic.realify_hermitian(np.array([[1.0, 2.0], [3.0, 4.0]]))


class TestScalings:
    def _check(self, cone, s, z):
        sc = BlockScaling(cone, s, z)
        # lam = W z = W^{-T} s and the scaling inverts cleanly
        np.testing.assert_allclose(sc.apply_w(z), sc.lam, atol=1.0e-9)
        np.testing.assert_allclose(sc.apply_winvt(s), sc.lam, atol=1.0e-9)
        v = np.linspace(0.3, 1.1, len(s))
        np.testing.assert_allclose(sc.apply_winv(sc.apply_w(v)), v,
                                   atol=1.0e-10)
        np.testing.assert_allclose(sc.apply_winvt(sc.apply_wt(v)), v,
                                   atol=1.0e-10)
        # lam o (lam^{-1} o d) = d
        d = np.linspace(-0.4, 0.9, len(s))
        np.testing.assert_allclose(sc.jprod(sc.lam, sc.lam_solve(d)), d,
                                   atol=1.0e-9)

    def test_nonneg(self):
        self._check(NonnegCone(4), np.array([0.5, 1.0, 2.0, 3.0]),
                    np.array([1.5, 0.2, 0.7, 1.1]))

    def test_soc(self):
        s = np.array([2.0, 0.3, -0.5, 0.8])
        z = np.array([1.5, -0.2, 0.4, 0.1])
        self._check(SocCone(4), s, z)

    def test_psd(self):
        rng = np.random.default_rng(4)
        n = 3
        A = rng.standard_normal((n, n))
        S = A @ A.T + 0.5 * np.eye(n)
        B = rng.standard_normal((n, n))
        Z = B @ B.T + 0.3 * np.eye(n)
        self._check(PsdCone(n), conic.svec(S), conic.svec(Z))


class TestLinearPrograms:
    def test_vertex_oracle(self):
        # a full box keeps every instance compact, which the enumeration
        # oracle silently assumes
        rng = np.random.default_rng(5)
        for trial in range(8):
            n = 3
            A = np.vstack([rng.standard_normal((6, n)), -np.eye(n), np.eye(n)])
            b = np.concatenate([rng.uniform(1.0, 3.0, 6), np.ones(n),
                                2.0 * np.ones(n)])
            c = rng.standard_normal(n)
            prob = conic.ConicProblem(n)
            prob.maximize(c)
            prob.add_nonneg(A, b)
            sol = _solve(prob)
            assert sol.status == "Optimal"
            assert sol.objective == pytest.approx(lp_vertex_max(c, A, b),
                                                  abs=1.0e-6)

    @given(st.integers(min_value=0, max_value=10_000))
    @settings(max_examples=25, deadline=None)
    def test_box_lp_closed_form(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 5))
        ub = rng.uniform(0.5, 2.0, n)
        c = rng.standard_normal(n)
        prob = conic.ConicProblem(n)
        prob.maximize(c)
        prob.add_nonneg(np.vstack([np.eye(n), -np.eye(n)]),
                        np.concatenate([ub, np.zeros(n)]))
        sol = _solve(prob)
        assert sol.status == "Optimal"
        assert sol.objective == pytest.approx(
            float(np.sum(np.maximum(c, 0.0) * ub)), abs=1.0e-6)

    def test_paired_inequalities_pin_a_variable(self):
        prob = conic.ConicProblem(2)
        prob.maximize(np.array([0.0, 1.0]))
        prob.add_nonneg(np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]]),
                        np.array([1.0, -1.0, 2.0]))
        sol = _solve(prob)
        assert sol.status == "Optimal"
        assert sol.x[0] == pytest.approx(1.0, abs=1.0e-6)
        assert sol.objective == pytest.approx(2.0, abs=1.0e-6)


class TestSecondOrder:
    def test_norm_ball_maximum(self):
        rng = np.random.default_rng(6)
        for _ in range(5):
            n = 4
            c = rng.standard_normal(n)
            prob = conic.ConicProblem(n)
            prob.maximize(c)
            A = np.vstack([np.zeros(n), -np.eye(n)])
            b = np.concatenate([[1.0], np.zeros(n)])
            prob.add_soc(A, b)
            sol = _solve(prob)
            assert sol.status == "Optimal"
            assert sol.objective == pytest.approx(float(np.linalg.norm(c)),
                                                  rel=1.0e-7)

    def test_projection_with_halfspace(self):
        # distance from (3, 4) to the halfplane x1 <= 0 is 3
        prob = conic.ConicProblem(3)
        prob.maximize(np.array([-1.0, 0.0, 0.0]))
        A = -np.eye(3)
        b = np.array([0.0, -3.0, -4.0])
        prob.add_soc(A, b)
        prob.add_nonneg(np.array([[0.0, 1.0, 0.0]]), np.array([0.0]))
        sol = _solve(prob)
        assert sol.status == "Optimal"
        assert sol.objective == pytest.approx(-3.0, abs=1.0e-6)
        assert sol.x[1] == pytest.approx(0.0, abs=1.0e-6)
        assert sol.x[2] == pytest.approx(4.0, abs=1.0e-5)


class TestSemidefinite:
    def test_largest_eigenvalue_recovery(self):
        rng = np.random.default_rng(7)
        A = rng.standard_normal((4, 4))
        A = A + A.T
        prob = conic.ConicProblem(1)
        prob.maximize(np.array([-1.0]))
        prob.add_psd(-A, {0: np.eye(4)})
        sol = _solve(prob)
        assert sol.status == "Optimal"
        assert -sol.objective == pytest.approx(
            float(np.linalg.eigvalsh(A)[-1]), abs=1.0e-6)

    def test_determinant_boundary(self):
        # smallest x with [[x, 1], [1, x]] PSD is 1
        prob = conic.ConicProblem(1)
        prob.maximize(np.array([-1.0]))
        prob.add_psd(np.array([[0.0, 1.0], [1.0, 0.0]]),
                     {0: np.eye(2)})
        sol = _solve(prob)
        assert sol.status == "Optimal"
        assert sol.x[0] == pytest.approx(1.0, abs=1.0e-6)

    def test_smallest_eigenvalue_complex_hermitian(self):
        rng = np.random.default_rng(8)
        H = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        H = H + H.conj().T
        prob = conic.ConicProblem(1)
        prob.maximize(np.array([1.0]))
        prob.add_psd(H, {0: -np.eye(3, dtype=complex)})
        sol = _solve(prob)
        assert sol.status == "Optimal"
        assert sol.objective == pytest.approx(
            float(np.linalg.eigvalsh(H)[0]), abs=1.0e-6)

    def test_mixed_cones(self):
        # maximize 2t + u with t <= lam_min(diag(2, 5)) and |t| <= 3 - u:
        # both cones bind at the optimum (t, u) = (2, 1), value 5
        prob = conic.ConicProblem(2)
        prob.maximize(np.array([2.0, 1.0]))
        prob.add_psd(np.diag([2.0, 5.0]), {0: -np.eye(2)})
        prob.add_soc(np.array([[0.0, 1.0], [1.0, 0.0]]),
                     np.array([3.0, 0.0]))
        sol = _solve(prob)
        assert sol.status == "Optimal"
        assert sol.x[0] == pytest.approx(2.0, abs=1.0e-6)
        assert sol.x[1] == pytest.approx(1.0, abs=1.0e-6)


class TestStatuses:
    def test_infeasible(self):
        prob = conic.ConicProblem(1)
        prob.maximize(np.array([1.0]))
        prob.add_nonneg(np.array([[1.0], [-1.0]]), np.array([0.0, -1.0]))
        sol = _solve(prob)
        assert sol.status == "Infeasible"
        assert math.isnan(sol.objective)

    def test_unbounded_reported_as_failure(self):
        prob = conic.ConicProblem(1)
        prob.maximize(np.array([1.0]))
        prob.add_nonneg(np.array([[-1.0]]), np.array([0.0]))
        sol = _solve(prob)
        assert sol.status == "NumericalFailure"
        assert "unbounded" in sol.message

    def test_maxiter(self):
        rng = np.random.default_rng(9)
        A = np.vstack([rng.standard_normal((5, 3)), -np.eye(3)])
        b = np.concatenate([rng.uniform(1.0, 2.0, 5), np.ones(3)])
        prob = conic.ConicProblem(3)
        prob.maximize(rng.standard_normal(3))
        prob.add_nonneg(A, b)
        sol = conic.solve(prob, max_iter=1)
        assert sol.status == "MaxIter"
        assert sol.iterations == 1


class TestDeterminism:
    def test_bitwise_repeatable(self):
        rng = np.random.default_rng(10)
        A = np.vstack([rng.standard_normal((6, 3)), -np.eye(3)])
        b = np.concatenate([rng.uniform(1.0, 3.0, 6), np.ones(3)])
        c = rng.standard_normal(3)

        def run():
            prob = conic.ConicProblem(3)
            prob.maximize(c)
            prob.add_nonneg(A, b)
            return conic.solve(prob)

        s1, s2 = run(), run()
        np.testing.assert_array_equal(s1.x, s2.x)
        assert s1.iterations == s2.iterations

    def test_scale_invariance_of_status(self):
        rng = np.random.default_rng(11)
        A = np.vstack([rng.standard_normal((6, 3)), -np.eye(3)])
        b = np.concatenate([rng.uniform(1.0, 3.0, 6), np.ones(3)])
        c = rng.standard_normal(3)
        results = []
        for scale in (1.0, 1.0e3, 1.0e-3):
            prob = conic.ConicProblem(3)
            prob.maximize(c)
            prob.add_nonneg(scale * A, scale * b)
            sol = _solve(prob)
            assert sol.status == "Optimal"
            results.append(sol.objective)
        assert results[0] == pytest.approx(results[1], rel=1.0e-6)
        assert results[0] == pytest.approx(results[2], rel=1.0e-6)


class TestVerify:
    def _lp(self):
        rng = np.random.default_rng(12)
        A = np.vstack([rng.standard_normal((6, 3)), -np.eye(3)])
        b = np.concatenate([rng.uniform(1.0, 3.0, 6), np.ones(3)])
        prob = conic.ConicProblem(3)
        prob.maximize(rng.standard_normal(3))
        prob.add_nonneg(A, b)
        return prob

    def test_replay_accepts_solver_output(self):
        prob = self._lp()
        sol = _solve(prob, tol=1.0e-8)
        rep = conic.verify(prob, sol.x, tol=1.0e-7)
        assert rep.ok
        assert rep.objective == pytest.approx(sol.objective, abs=1.0e-9)

    def test_replay_rejects_perturbed_point(self):
        prob = self._lp()
        sol = _solve(prob)
        # pushing past the optimum along the objective must leave the set
        c = prob.c
        bad = sol.x + 10.0 * c / np.linalg.norm(c)
        with pytest.raises(conic.ConeViolation):
            conic.verify(prob, bad, tol=1.0e-7)

    def test_psd_replay(self):
        prob = conic.ConicProblem(1)
        prob.maximize(np.array([-1.0]))
        prob.add_psd(np.array([[0.0, 1.0], [1.0, 0.0]]), {0: np.eye(2)})
        sol = _solve(prob)
        rep = conic.verify(prob, sol.x, tol=1.0e-7)
        assert rep.ok


class TestVarTable:
    def test_names_round_trip(self):
        names = conic.VarTable()
        iw = names.add("w", 3)
        it = names.add_scalar("t")
        assert names.n == 4
        prob = conic.ConicProblem(4, names=names)
        prob.maximize(np.array([0.0, 0.0, 0.0, 1.0]))
        A = np.zeros((5, 4))
        A[0, 3] = 1.0
        A[1:4, :3] = -np.eye(3)
        A[4, 3] = -1.0
        b = np.array([2.0, 0.0, 0.0, 0.0, 0.0])
        prob.add_nonneg(A, b)
        sol = _solve(prob)
        assert names.value("t", sol.x) == pytest.approx(2.0, abs=1.0e-6)
        assert len(names.value("w", sol.x)) == 3
        with pytest.raises(ValueError):
            names.add("t")
