import numpy as np
import pytest
from numpy.testing import assert_allclose

from relayopt import (EqQcqp, SolverError, SolverTolerances, TrsProblem,
                      nu_min, reduce_to_tr, solve_eq_qcqp, solve_orth_precoder,
                      solve_tr, solve_trs)


def random_hermitian(rng, n, scale=1.0):
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return scale * 0.5 * (A + A.conj().T)


def random_pd(rng, n):
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return A @ A.conj().T + 0.5 * np.eye(n)


def quad(B1, b, x):
    return float((x.conj() @ B1 @ x).real + 2.0 * (b.conj() @ x).real)


class TestNuMin:

    def test_returns_smallest_eigenvectors(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            n = int(rng.integers(2, 7))
            d = int(rng.integers(1, n + 1))
            A = random_hermitian(rng, n)
            V = nu_min(A, d)
            assert_allclose(V.conj().T @ V, np.eye(d), atol=1e-12)
            vals = np.linalg.eigvalsh(A)
            got = float(np.trace(V.conj().T @ A @ V).real)
            assert_allclose(got, vals[:d].sum(), rtol=1e-10, atol=1e-10)

    def test_minimizes_over_random_frames(self):
        rng = np.random.default_rng(8)
        A = random_hermitian(rng, 5)
        V = nu_min(A, 2)
        best = float(np.trace(V.conj().T @ A @ V).real)
        for _ in range(200):
            Q = np.linalg.qr(rng.standard_normal((5, 2))
                             + 1j * rng.standard_normal((5, 2)))[0]
            assert float(np.trace(Q.conj().T @ A @ Q).real) >= best - 1e-10

    def test_rejects_non_hermitian(self):
        rng = np.random.default_rng(9)
        A = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        with pytest.raises(SolverError):
            nu_min(A, 1)

    def test_rejects_bad_d(self):
        with pytest.raises(ValueError):
            nu_min(np.eye(3), 0)
        with pytest.raises(ValueError):
            nu_min(np.eye(3), 4)


class TestReduce:

    def test_substitution_preserves_objective(self):
        rng = np.random.default_rng(11)
        for _ in range(30):
            n = int(rng.integers(1, 6))
            B1 = random_hermitian(rng, n)
            B2 = random_pd(rng, n)
            b = rng.standard_normal(n) + 1j * rng.standard_normal(n)
            prob = TrsProblem(B1, B2, b, 1.0)
            B1bar, bbar, Q = reduce_to_tr(prob)
            x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
            p = Q @ x
            assert_allclose(quad(B1bar, bbar, p), quad(B1, b, x),
                            rtol=1e-10, atol=1e-10)
            assert_allclose(float(np.vdot(p, p).real),
                            float((x.conj() @ B2 @ x).real),
                            rtol=1e-10, atol=1e-10)

    def test_rejects_indefinite_metric(self):
        prob = TrsProblem(np.eye(2), np.diag([1.0, -1.0]).astype(complex),
                          np.zeros(2), 1.0)
        with pytest.raises(SolverError):
            reduce_to_tr(prob)


def polar_grid_min(B1bar, bbar, eta, mode, n_theta=4000, n_r=200):
    """Dense evaluation of the 2-d real objective in polar coordinates."""
    theta = np.linspace(0.0, 2 * np.pi, n_theta, endpoint=False)
    dirs = np.stack([np.cos(theta), np.sin(theta)])  # (2, n_theta)
    if mode == "equality":
        radii = np.array([np.sqrt(eta)])
    else:
        radii = np.sqrt(np.linspace(0.0, eta, n_r))
    P = radii[:, None, None] * dirs[None]            # (n_r, 2, n_theta)
    quadterm = np.einsum("rit,ij,rjt->rt", P, B1bar.real, P)
    linterm = 2.0 * np.einsum("i,rit->rt", bbar.real, P)
    return float((quadterm + linterm).min())


class TestTrSolver:

    def random_instance(self, rng):
        B1bar = np.diag(rng.uniform(-3, 3, size=2)).astype(complex)
        Qrot, _ = np.linalg.qr(rng.standard_normal((2, 2)))
        B1bar = Qrot @ B1bar @ Qrot.T
        bbar = rng.standard_normal(2).astype(complex)
        eta = float(rng.uniform(0.2, 5.0))
        return 0.5 * (B1bar + B1bar.conj().T), bbar, eta

    def test_matches_grid_oracle(self):
        rng = np.random.default_rng(21)
        for mode in ("equality", "inequality"):
            for _ in range(50):
                B1bar, bbar, eta = self.random_instance(rng)
                p, lam, cert = solve_tr(B1bar, bbar, eta, mode)
                oracle = polar_grid_min(B1bar, bbar, eta, mode)
                assert quad(B1bar, bbar, p) <= oracle + 1e-3
                assert cert.max_residual() < 1e-8

    def test_equality_inequality_agree_when_indefinite(self):
        rng = np.random.default_rng(22)
        done = 0
        while done < 30:
            B1bar, bbar, eta = self.random_instance(rng)
            if np.linalg.eigvalsh(B1bar)[0] >= -1e-6:
                continue
            p_eq, _, _ = solve_tr(B1bar, bbar, eta, "equality")
            p_in, _, _ = solve_tr(B1bar, bbar, eta, "inequality")
            assert_allclose(quad(B1bar, bbar, p_eq), quad(B1bar, bbar, p_in),
                            rtol=1e-8, atol=1e-8)
            done += 1

    def test_interior_solution_when_convex_and_loose(self):
        B1bar = np.diag([1.0, 2.0]).astype(complex)
        bbar = np.array([0.5, -0.25], dtype=complex)
        p, lam, cert = solve_tr(B1bar, bbar, 100.0, "inequality")
        # Unconstrained minimizer -B1^-1 b lies well inside the ball.
        assert_allclose(p, np.array([-0.5, 0.125]), atol=1e-10)
        assert lam == pytest.approx(0.0, abs=1e-12)
        assert cert.max_residual() < 1e-8

    def test_hard_case(self):
        # b orthogonal to the bottom eigenvector and eta large enough that
        # the secular equation has no root above -lam_min: the solution needs
        # an eigenvector component added on the boundary.
        B1bar = np.diag([-2.0, 1.0]).astype(complex)
        bbar = np.array([0.0, 0.1], dtype=complex)
        eta = 4.0
        p, lam, cert = solve_tr(B1bar, bbar, eta, "equality")
        assert cert.max_residual() < 1e-8
        assert lam == pytest.approx(2.0, abs=1e-8)
        oracle = polar_grid_min(B1bar, bbar, eta, "equality", n_theta=200000)
        assert quad(B1bar, bbar, p) <= oracle + 1e-6

    def test_metric_constraint_honored(self):
        rng = np.random.default_rng(23)
        for _ in range(20):
            n = int(rng.integers(2, 6))
            prob = TrsProblem(random_hermitian(rng, n), random_pd(rng, n),
                              rng.standard_normal(n)
                              + 1j * rng.standard_normal(n),
                              float(rng.uniform(0.5, 4.0)))
            x, lam, cert = solve_trs(prob)
            lhs = float((x.conj() @ prob.B2 @ x).real)
            assert_allclose(lhs, prob.eta, rtol=1e-8)
            assert cert.max_residual() < 1e-8

    def test_complex_matches_feasible_samples(self):
        rng = np.random.default_rng(24)
        for _ in range(10):
            n = 3
            prob = TrsProblem(random_hermitian(rng, n), random_pd(rng, n),
                              rng.standard_normal(n)
                              + 1j * rng.standard_normal(n), 2.0)
            x, _, _ = solve_trs(prob)
            fstar = quad(prob.B1, prob.b, x)
            for _ in range(300):
                y = rng.standard_normal(n) + 1j * rng.standard_normal(n)
                scalemat = float((y.conj() @ prob.B2 @ y).real)
                y = y * np.sqrt(prob.eta / scalemat)
                assert quad(prob.B1, prob.b, y) >= fstar - 1e-8


def feasible_sphere_instance(rng, n, m, p0=2.0, homogeneous=False):
    """Random sphere-constrained QCQP with an exactly feasible warm start."""
    x0 = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    x0 = x0 * np.sqrt(p0) / np.linalg.norm(x0)
    cons = [(np.eye(n, dtype=complex), p0)]
    for _ in range(m - 1):
        A = random_hermitian(rng, n)
        cons.append((A, float((x0.conj() @ A @ x0).real)))
    C1 = random_hermitian(rng, n)
    c = np.zeros(n, dtype=complex) if homogeneous else (
        rng.standard_normal(n) + 1j * rng.standard_normal(n))
    return EqQcqp(C1, c, cons), x0


def constraint_residual(prob, x):
    return max(abs(float((x.conj() @ A @ x).real) - eta)
               for A, eta in prob.constraints)


class TestEqQcqp:

    def test_contract_on_random_instances(self):
        rng = np.random.default_rng(31)
        for _ in range(60):
            n = int(rng.integers(2, 5))
            m = int(rng.integers(1, min(4, 2 * n - 1) + 1))
            prob, x0 = feasible_sphere_instance(rng, n, m)
            x, res, _ = solve_eq_qcqp(prob, x0)
            assert constraint_residual(prob, x) < 1e-6
            assert quad(prob.C1, prob.c, x) <= quad(prob.C1, prob.c, x0) + 1e-9

    def test_torus_oracle_sphere_plus_one(self):
        # n = 2, sphere + one extra quadratic: the feasible set is a torus in
        # the eigenbasis of the extra constraint; a dense phase grid bounds
        # the global minimum from above.
        rng = np.random.default_rng(32)
        for homogeneous in (True, False):
            for _ in range(8):
                prob, x0 = feasible_sphere_instance(
                    rng, 2, 2, homogeneous=homogeneous)
                A, eta = prob.constraints[1]
                a, Qe = np.linalg.eigh(A)
                if abs(a[1] - a[0]) < 1e-6:
                    continue
                p0 = prob.constraints[0][1]
                m1 = (eta - a[1] * p0) / (a[0] - a[1])
                m2 = p0 - m1
                assert m1 > -1e-12 and m2 > -1e-12
                phi = np.linspace(0, 2 * np.pi, 400, endpoint=False)
                c1 = np.sqrt(max(m1, 0.0)) * np.exp(1j * phi)
                c2 = np.sqrt(max(m2, 0.0)) * np.exp(1j * phi)
                # All phase pairs (broadcast to a 400 x 400 grid).
                X = (Qe[:, 0][:, None, None] * c1[None, :, None]
                     + Qe[:, 1][:, None, None] * c2[None, None, :])
                vals = np.einsum("iab,ij,jab->ab", X.conj(), prob.C1,
                                 X).real + 2 * np.einsum(
                    "i,iab->ab", prob.c.conj(), X).real
                oracle = float(vals.min())
                x, res, _ = solve_eq_qcqp(prob, x0)
                fstar = quad(prob.C1, prob.c, x)
                # Never below the global minimum (grid is an upper bound on
                # it only up to resolution; allow that slack downward).
                assert fstar >= oracle - 1e-3
                if homogeneous:
                    # The dual eigen-candidate makes this case global.
                    assert fstar <= oracle + 1e-3

    def test_rejects_too_many_constraints(self):
        with pytest.raises(ValueError):
            EqQcqp(np.eye(1, dtype=complex), np.zeros(1, dtype=complex),
                   [(np.eye(1, dtype=complex), 1.0)] * 3)

    def test_tolerance_validation(self):
        with pytest.raises(ValueError):
            SolverTolerances(kkt_tol=0.0)
        with pytest.raises(ValueError):
            SolverTolerances(sqp_max_iter=0)


class TestOrthPrecoder:

    def test_columns_orthonormal_and_budget_met(self):
        rng = np.random.default_rng(41)
        for _ in range(20):
            M, d = 4, 2
            Qk = random_hermitian(rng, M)
            Lk = random_pd(rng, M)
            p0 = 3.0
            floor = (p0 / d) * np.linalg.eigvalsh(Lk)[:d].sum()
            eta2 = float(floor * rng.uniform(1.05, 3.0))
            X, mu = solve_orth_precoder(Qk, Lk, p0, d, eta2)
            assert_allclose(X.conj().T @ X, (p0 / d) * np.eye(d), atol=1e-8)
            used = float(np.trace(X.conj().T @ Lk @ X).real)
            assert used <= eta2 + 1e-8
            assert mu >= 0.0
            # Complementary slackness of the multiplier.
            assert abs(mu * (used - eta2)) < 1e-6 * max(1.0, eta2)

    def test_sampling_certificate(self):
        rng = np.random.default_rng(42)
        M, d, p0 = 4, 2, 3.0
        Qk = random_hermitian(rng, M)
        Lk = random_pd(rng, M)
        eta2 = float((p0 / d) * np.linalg.eigvalsh(Lk)[:d].sum() * 1.5)
        X, _ = solve_orth_precoder(Qk, Lk, p0, d, eta2)
        fstar = float(np.trace(X.conj().T @ Qk @ X).real)
        tried = 0
        for _ in range(2000):
            B = rng.standard_normal((M, d)) + 1j * rng.standard_normal((M, d))
            Y = np.sqrt(p0 / d) * np.linalg.qr(B)[0]
            if float(np.trace(Y.conj().T @ Lk @ Y).real) <= eta2:
                assert float(np.trace(Y.conj().T @ Qk @ Y).real) \
                    >= fstar - 1e-8
                tried += 1
        assert tried > 100

    def test_unreachable_budget_raises(self):
        with pytest.raises(SolverError):
            solve_orth_precoder(np.eye(3, dtype=complex),
                                np.eye(3, dtype=complex), 3.0, 1, 1e-12)
