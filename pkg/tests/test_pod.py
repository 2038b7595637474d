import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given
from hypothesis import strategies as st

from opinf_nse.linalg import quadratic_features
from opinf_nse.model import QuadDaeModel, ReducedQuadModel, random_demo
from opinf_nse.pod import (PodBasis, ReducedDae, constraint_residual, corrected_galerkin_reduce,
                           divfree_correct, galerkin_reduce, mode_constraint_residuals,
                           numerical_rank, pod_basis, project_snapshots)
from opinf_nse.simulate import TimeGrid, imex_euler_dae, integrate_ode, stokes_steady
from opinf_nse.transform import build_leray, decompose_velocity, ode_rhs


def unit_model():
    return QuadDaeModel(E11=np.eye(2), A11=-np.eye(2), A12=[[1.0], [0.0]],
                        H=np.zeros((2, 4)), B1=np.zeros((2, 1)))


class TestPodBasis:
    def test_diagonal_data(self):
        b = pod_basis(np.array([[2.0, 0.0], [0.0, 1.0]]), 1)
        np.testing.assert_allclose(np.abs(b.vectors[:, 0]), [1, 0])
        np.testing.assert_allclose(b.singular_values, [2, 1])

    def test_full_rank_reproduces(self, rng):
        X = rng.standard_normal((6, 3)) @ rng.standard_normal((3, 10))
        V = pod_basis(X, 3).vectors
        assert np.linalg.norm(X - V @ (V.T @ X)) <= 1e-10 * np.linalg.norm(X)

    def test_weighted_orthonormal(self, rng):
        E = np.diag([4.0, 1.0])
        b = pod_basis(rng.standard_normal((2, 5)), 2, weight=E)
        np.testing.assert_allclose(b.vectors.T @ E @ b.vectors, np.eye(2), atol=1e-12)
        np.testing.assert_allclose(b.gram(), np.eye(2), atol=1e-12)

    def test_weighted_is_optimal_in_energy_norm(self, rng):
        # E-orthogonal projection error equals the discarded singular values of L^T X
        W = rng.standard_normal((5, 5))
        E = np.eye(5) + W.T @ W
        X = rng.standard_normal((5, 12))
        b = pod_basis(X, 2, weight=E)
        V = b.vectors
        R = X - V @ (V.T @ E @ X)
        L = np.linalg.cholesky(E)
        err2 = np.linalg.norm(L.T @ R) ** 2
        np.testing.assert_allclose(err2, np.sum(b.singular_values[2:] ** 2), rtol=1e-10)
        # any other E-orthonormal basis does no better, e.g. the Euclidean POD one
        Q = pod_basis(X, 2).vectors
        Q = Q @ np.linalg.inv(np.linalg.cholesky(Q.T @ E @ Q)).T
        assert np.linalg.norm(L.T @ (X - Q @ (Q.T @ E @ X))) ** 2 >= err2 * (1 - 1e-12)

    def test_rank_exceeded(self, rng):
        X = np.outer(rng.standard_normal(4), rng.standard_normal(6))
        with pytest.raises(ValueError):
            pod_basis(X, 2)
        with pytest.raises(ValueError):
            pod_basis(X, 0)

    @given(st.integers(0, 2**32 - 1), st.integers(2, 7), st.integers(2, 9))
    def test_optimality_identity(self, seed, n, K):
        X = np.random.default_rng(seed).standard_normal((n, K))
        s = np.linalg.svd(X, compute_uv=False)
        for r in range(1, numerical_rank(s) + 1):
            V = pod_basis(X, r).vectors
            lhs = np.linalg.norm(X - V @ (V.T @ X)) ** 2
            rhs = np.sum(s[r:] ** 2)
            assert abs(lhs - rhs) <= 1e-8 * max(rhs, 1e-300) + 1e-12 * np.sum(s ** 2)

    def test_truncate(self, rng):
        b = pod_basis(rng.standard_normal((5, 8)), 4)
        np.testing.assert_array_equal(b.truncate(2).vectors, b.vectors[:, :2])
        with pytest.raises(ValueError):
            b.truncate(5)


class TestConstraintResidual:
    def test_divfree_basis(self, rng):
        m = random_demo(0, 6, 2, 1)
        basis = divfree_correct(pod_basis(rng.standard_normal((6, 10)), 3), build_leray(m))
        assert constraint_residual(m.A12, basis) <= 1e-10

    def test_constraint_direction(self):
        assert constraint_residual([[1.0], [0.0]], np.array([[1.0], [0.0]])) == pytest.approx(1.0)

    def test_zero_gradient(self):
        assert constraint_residual(np.zeros((3, 1)), np.eye(3)[:, :2]) == 0.0

    def test_zero_basis(self):
        with pytest.raises(ValueError):
            constraint_residual(np.ones((2, 1)), np.zeros((2, 1)))

    def test_plain_pod_of_divfree_data(self):
        # dominant modes of constraint-satisfying data are themselves divergence-free
        m = random_demo(0, 8, 2, 1)
        s = imex_euler_dae(m, np.zeros(8), lambda t: [np.sin(2 * t) * np.exp(-0.05 * t)],
                           TimeGrid(0, 10, 500))
        r = numerical_rank(np.linalg.svd(s.V, compute_uv=False))
        res = mode_constraint_residuals(m.A12, pod_basis(s.V, r))
        assert np.all(res[: int(np.ceil(r / 2))] <= 1e-10)


class TestProjection:
    def test_identity(self, rng):
        X = rng.standard_normal((3, 4))
        np.testing.assert_array_equal(project_snapshots(np.eye(3), X), X)

    def test_orthogonal(self):
        assert not project_snapshots(np.array([[1.0], [0.0]]), np.array([[0.0], [5.0]])).any()

    def test_roundtrip(self, rng):
        V = np.linalg.qr(rng.standard_normal((5, 2)))[0]
        x = V @ rng.standard_normal(2)
        np.testing.assert_allclose(V @ project_snapshots(V, x), x, atol=1e-14)

    def test_mismatch(self):
        with pytest.raises(ValueError):
            project_snapshots(np.eye(3), np.zeros((2, 1)))


class TestGalerkin:
    def test_identity_basis(self):
        m = random_demo(1, 4, 1, 2)
        red = galerkin_reduce(m, np.eye(4))
        assert isinstance(red, ReducedDae)
        np.testing.assert_allclose(red.E, m.E11)
        np.testing.assert_allclose(red.A11, m.A11)
        np.testing.assert_allclose(red.A12, m.A12)
        np.testing.assert_allclose(red.H, m.Hc)
        np.testing.assert_allclose(red.B1, m.B1)

    def test_first_unit_vector(self):
        m = random_demo(1, 4, 1, 2)
        red = galerkin_reduce(m, np.eye(4)[:, :1])
        assert red.A11[0, 0] == m.A11[0, 0] and red.E[0, 0] == m.E11[0, 0]
        assert red.H[0, 0] == pytest.approx(m.H[0, 0])

    def test_quadratic_mixed_product(self, rng):
        m = random_demo(2, 6, 1, 1)
        V = np.linalg.qr(rng.standard_normal((6, 3)))[0]
        red = galerkin_reduce(m, V, force_ode=True)
        x = rng.standard_normal(3)
        E = V.T @ m.E11 @ V
        lhs = E @ (red.H @ quadratic_features(x[:, None])[:, 0])
        np.testing.assert_allclose(lhs, V.T @ m.H @ np.kron(V @ x, V @ x), rtol=1e-12)

    def test_divfree_gives_ode(self):
        m = random_demo(0, 6, 2, 1)
        basis = divfree_correct(np.eye(6), build_leray(m))
        rom = galerkin_reduce(m, basis)
        assert isinstance(rom, ReducedQuadModel) and rom.r == 4

    def test_nested_bases(self, rng):
        m = random_demo(3, 7, 2, 2)
        V = np.linalg.qr(rng.standard_normal((7, 4)))[0]
        big = galerkin_reduce(m, V)
        small = galerkin_reduce(m, V[:, :2])
        np.testing.assert_allclose(small.A11, big.A11[:2, :2], atol=1e-14)
        np.testing.assert_allclose(small.B1, big.B1[:2], atol=1e-14)
        np.testing.assert_allclose(small.E, big.E[:2, :2], atol=1e-14)

    def test_singular_mass(self):
        m = random_demo(0, 4, 1, 1)
        with pytest.raises(np.linalg.LinAlgError):
            galerkin_reduce(m, np.zeros((4, 2)), force_ode=True)


class TestDivfreeCorrect:
    def test_span_preserved(self, rng):
        m = random_demo(0, 6, 2, 1)
        P = build_leray(m)
        V = np.linalg.qr(P.apply(rng.standard_normal((6, 3))))[0]
        W = divfree_correct(V, P).vectors
        angles = sla.subspace_angles(V, W)
        assert np.max(angles) <= 1e-10

    def test_constraint_direction_dropped(self):
        W = divfree_correct(np.eye(2), build_leray(unit_model())).vectors
        assert W.shape == (2, 1)
        np.testing.assert_allclose(np.abs(W[:, 0]), [0, 1])

    def test_residual_small(self, rng):
        for seed in range(10):
            m = random_demo(seed, 7, 3, 1)
            b = divfree_correct(pod_basis(rng.standard_normal((7, 12)), 4), build_leray(m))
            assert constraint_residual(m.A12, b) <= 1e-10
            np.testing.assert_allclose(b.vectors.T @ b.vectors, np.eye(b.r), atol=1e-12)

    def test_weighted_stays_weighted(self, rng):
        m = random_demo(4, 6, 2, 1)
        b = divfree_correct(pod_basis(rng.standard_normal((6, 9)), 3, weight=m.E11),
                            build_leray(m))
        np.testing.assert_allclose(b.vectors.T @ m.E11 @ b.vectors, np.eye(b.r), atol=1e-12)

    def test_nothing_survives(self):
        with pytest.raises(ValueError):
            divfree_correct(np.array([[1.0], [0.0]]), build_leray(unit_model()))


class TestCorrectedGalerkin:
    def test_exact_on_full_divfree_space(self):
        m = random_demo(0, 5, 2, 1, inhomogeneous=True)
        P = build_leray(m)
        up = 0.8
        u = lambda t: np.array([np.sin(t)])  # noqa: E731
        v0, _ = stokes_steady(m, u(0.0), up)
        grid = TimeGrid(0, 2, 400)
        ref = integrate_ode(lambda v, t: ode_rhs(m, v, u(t), proj=P), v0, grid)
        basis = divfree_correct(np.eye(5), P)
        rom, s = corrected_galerkin_reduce(m, basis, P)
        assert rom.N.shape == (3, 3) and rom.F.shape == (3, 2)
        W = basis.vectors
        v_top, _ = decompose_velocity(m, v0, up, proj=P)
        X = integrate_ode(lambda x, t: rom.rhs(x, u(t), up), W.T @ v_top, grid)
        np.testing.assert_allclose(W @ X + s[:, None] * up, ref, atol=1e-11)
