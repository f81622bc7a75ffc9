import numpy as np
import pytest
import scipy.linalg as sla
from numpy.testing import assert_allclose

from opident import linalg
from opident.errors import DimensionError


class TestExpm:
    def test_zero_matrix(self):
        assert_allclose(linalg.expm(np.zeros((3, 3))), np.eye(3), atol=1e-15)

    def test_diagonal(self):
        out = linalg.expm(np.diag([1.0, 2.0]))
        assert_allclose(out, np.diag([np.e, np.e ** 2]), rtol=1e-14)

    def test_symmetric_involution(self):
        a = np.array([[0.0, 1.0], [1.0, 0.0]])
        want = np.array([[np.cosh(1), np.sinh(1)], [np.sinh(1), np.cosh(1)]])
        assert_allclose(linalg.expm(a), want, rtol=1e-14)

    def test_against_scipy_norm_up_to_10(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            a = rng.standard_normal((5, 5))
            a *= rng.uniform(0.1, 10.0) / np.linalg.norm(a, 2)
            ours = linalg.expm(a)
            ref = sla.expm(a)
            assert np.linalg.norm(ours - ref) <= 1e-12 * np.linalg.norm(ref)

    def test_inverse_identity(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            a = rng.standard_normal((4, 4))
            a *= 5.0 / np.linalg.norm(a, 2)
            prod = linalg.expm(a) @ linalg.expm(-a)
            assert np.linalg.norm(prod - np.eye(4)) <= 1e-10

    def test_semigroup(self):
        rng = np.random.default_rng(5)
        a = rng.standard_normal((3, 3))
        s, t = 0.7, 1.9
        lhs = linalg.expm((s + t) * a)
        rhs = linalg.expm(s * a) @ linalg.expm(t * a)
        assert np.linalg.norm(lhs - rhs) <= 1e-10 * np.linalg.norm(lhs)

    def test_rejects_nonsquare(self):
        with pytest.raises(DimensionError):
            linalg.expm(np.zeros((2, 3)))

    def test_rejects_nan(self):
        bad = np.zeros((2, 2))
        bad[0, 0] = np.nan
        with pytest.raises(ValueError):
            linalg.expm(bad)


class TestKalmanMatrices:
    def test_observability_identity_observer(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((2, 2))
        obs = linalg.observability_matrix(np.eye(2), a)
        assert obs.shape == (4, 2)
        assert linalg.numerical_rank(obs) == 2

    def test_observability_vandermonde(self):
        obs = linalg.observability_matrix(np.array([[1.0, 1.0]]), np.diag([1.0, 2.0]))
        assert_allclose(obs, [[1, 1], [1, 2]])
        assert linalg.numerical_rank(obs) == 2

    def test_observability_zero_observer(self):
        obs = linalg.observability_matrix(np.zeros((1, 3)), np.eye(3))
        assert linalg.numerical_rank(obs) == 0

    def test_controllability_nilpotent(self):
        ctr = linalg.controllability_matrix(np.zeros((3, 3)), np.eye(3))
        assert ctr.shape == (3, 9)
        assert linalg.numerical_rank(ctr) == 3

    def test_controllability_vandermonde(self):
        ctr = linalg.controllability_matrix(np.diag([1.0, 2.0]), np.array([[1.0], [1.0]]))
        assert_allclose(ctr, [[1, 1], [1, 2]])
        assert linalg.numerical_rank(ctr) == 2

    def test_controllability_zero_input(self):
        ctr = linalg.controllability_matrix(np.eye(2), np.zeros((2, 1)))
        assert linalg.numerical_rank(ctr) == 0

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            linalg.observability_matrix(np.eye(3), np.eye(2))
        with pytest.raises(DimensionError):
            linalg.controllability_matrix(np.eye(2), np.zeros((3, 1)))


class TestRank:
    def test_identity(self):
        assert linalg.numerical_rank(np.eye(3)) == 3

    def test_rank_one(self):
        assert linalg.numerical_rank(np.ones((2, 2))) == 1

    def test_dependent_rows_vs_numpy_oracle(self):
        rng = np.random.default_rng(1)
        m = rng.standard_normal((3, 3))
        m[2] = m[0] + m[1]
        assert linalg.numerical_rank(m) == 2
        assert linalg.numerical_rank(m) == np.linalg.matrix_rank(m)

    def test_rank_stability_under_small_perturbations(self):
        # perturbations below sigma_min never change the numerical rank
        rng = np.random.default_rng(2)
        count = 0
        while count < 100:
            n = int(rng.integers(2, 6))
            m = rng.standard_normal((n, n))
            smin = linalg.smallest_singular_value(m)
            if smin < 1e-3 * np.linalg.norm(m, 2):
                continue
            e = rng.standard_normal((n, n))
            e *= 0.9 * smin / np.linalg.norm(e, 2)
            assert linalg.numerical_rank(m + e) == n
            count += 1


class TestSmallestSingularValue:
    def test_identity(self):
        assert linalg.smallest_singular_value(np.eye(2)) == pytest.approx(1.0)

    def test_diagonal(self):
        assert linalg.smallest_singular_value(np.diag([3.0, 0.5])) == pytest.approx(0.5)

    def test_cosh_sinh(self):
        m = np.array([[np.cosh(1), np.sinh(1)], [np.sinh(1), np.cosh(1)]])
        assert linalg.smallest_singular_value(m) == pytest.approx(np.exp(-1), rel=1e-12)


class TestGramian:
    def test_scalar(self):
        assert_allclose(linalg.gramian(np.zeros((1, 1)), np.eye(1), 1.0), [[1.0]],
                        rtol=1e-12)

    def test_identity_input(self):
        assert_allclose(linalg.gramian(np.zeros((2, 2)), np.eye(2), 2.0),
                        2.0 * np.eye(2), rtol=1e-12)

    def test_double_integrator(self):
        a = np.array([[0.0, 1.0], [0.0, 0.0]])
        b = np.array([[0.0], [1.0]])
        want = np.array([[1 / 3, 1 / 2], [1 / 2, 1.0]])
        assert_allclose(linalg.gramian(a, b, 1.0), want, atol=1e-12)

    def test_symmetric_psd(self):
        rng = np.random.default_rng(6)
        for _ in range(5):
            a = rng.standard_normal((3, 3))
            b = rng.standard_normal((3, 2))
            w = linalg.gramian(a, b, 1.5)
            assert np.linalg.norm(w - w.T) <= 1e-10 * np.linalg.norm(w)
            assert np.linalg.eigvalsh(w).min() >= -1e-10

    def test_rejects_nonpositive_horizon(self):
        with pytest.raises(ValueError):
            linalg.gramian(np.eye(2), np.eye(2), 0.0)


class TestLieAlgebraDimension:
    def test_equal_generators(self):
        a = np.array([[0.0, 1.0], [-1.0, 0.0]])
        assert linalg.lie_algebra_dimension(a, a.copy()) == 1

    def test_so2_abelian(self):
        a = np.array([[0.0, 1.0], [-1.0, 0.0]])
        assert linalg.lie_algebra_dimension(a, np.zeros((2, 2))) == 1

    def test_so3_generated_by_two_rotations(self):
        a = np.zeros((3, 3))
        a[0, 1], a[1, 0] = 1.0, -1.0
        b = np.zeros((3, 3))
        b[1, 2], b[2, 1] = 1.0, -1.0
        assert linalg.lie_algebra_dimension(a, b) == 3

    def test_cap_never_exceeded(self):
        rng = np.random.default_rng(7)
        for n in (3, 4, 5):
            m = rng.standard_normal((n, n))
            a = m - m.T
            m = rng.standard_normal((n, n))
            b = m - m.T
            assert linalg.lie_algebra_dimension(a, b) <= n * (n - 1) // 2

    def test_rejects_non_skew(self):
        with pytest.raises(ValueError):
            linalg.lie_algebra_dimension(np.eye(2), np.zeros((2, 2)))


class TestFrobeniusOrthogonalize:
    def test_drops_parallel_candidate(self):
        out = linalg.frobenius_orthogonalize([np.eye(2)], [2.0 * np.eye(2)])
        assert out == []

    def test_projects_out_kept_component(self):
        e11 = np.zeros((2, 2))
        e11[0, 0] = 1.0
        e22 = np.zeros((2, 2))
        e22[1, 1] = 1.0
        out = linalg.frobenius_orthogonalize([e11], [e11 + e22])
        assert len(out) == 1
        assert_allclose(out[0], e22, atol=1e-14)

    def test_survivor_count_bounded_by_dimension(self):
        rng = np.random.default_rng(8)
        cands = [rng.standard_normal((3, 3)) for _ in range(18)]
        out = linalg.frobenius_orthogonalize([], cands)
        assert len(out) <= 9
        # generic random candidates span the whole space
        assert len(out) == 9
