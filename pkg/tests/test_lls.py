import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from snls.errors import InvalidInputError
from snls.lls import column_space_projector, default_tolerance, pseudoinverse, solve_lls


def penrose_gaps(A, P):
    return (
        np.abs(A @ P @ A - A).max(),
        np.abs(P @ A @ P - P).max(),
        np.abs((A @ P).T - A @ P).max(),
        np.abs((P @ A).T - P @ A).max(),
    )


class TestSolveLls:
    def test_identity_design(self):
        np.testing.assert_allclose(solve_lls(np.eye(2), [3.0, 4.0]), [3.0, 4.0])

    def test_mean_minimizes(self):
        np.testing.assert_allclose(solve_lls([[1.0], [1.0]], [0.0, 2.0]), [1.0])

    def test_min_norm_on_rank_one(self):
        # every x with x1 + x2 = 2 fits exactly; scan that line for the smallest norm
        s = np.linspace(-5, 5, 100001)
        line = np.column_stack([s, 2 - s])
        oracle = line[np.argmin(np.linalg.norm(line, axis=1))]
        x = solve_lls([[1.0, 1.0], [1.0, 1.0]], [2.0, 2.0])
        np.testing.assert_allclose(x, oracle, atol=1e-4)
        np.testing.assert_allclose(x, [1.0, 1.0], atol=1e-12)

    def test_normal_equations_hold(self, rng):
        A = rng.standard_normal((9, 4))
        b = rng.standard_normal(9)
        x = solve_lls(A, b)
        np.testing.assert_allclose(A.T @ (A @ x - b), 0, atol=1e-12)

    @pytest.mark.parametrize("bad", [np.nan, np.inf])
    def test_non_finite_rejected(self, bad):
        with pytest.raises(InvalidInputError):
            solve_lls([[1.0, bad]], [1.0])
        with pytest.raises(InvalidInputError):
            solve_lls([[1.0]], [bad])

    def test_shape_mismatch_rejected(self):
        with pytest.raises(InvalidInputError):
            solve_lls(np.eye(2), [1.0, 2.0, 3.0])


class TestPseudoinverse:
    def test_identity(self):
        P, info = pseudoinverse(np.eye(3))
        np.testing.assert_allclose(P, np.eye(3))
        assert info.numerical_rank == 3

    def test_column_of_ones(self):
        A = np.array([[1.0], [1.0]])
        by_hand = np.linalg.inv(A.T @ A) @ A.T
        P, _ = pseudoinverse(A)
        np.testing.assert_allclose(P, by_hand)
        np.testing.assert_allclose(P, [[0.5, 0.5]])

    def test_zero_matrix(self):
        P, info = pseudoinverse(np.zeros((2, 3)))
        assert P.shape == (3, 2)
        assert not P.any()
        assert info.numerical_rank == 0

    def test_rank_info(self, rng):
        A = rng.standard_normal((6, 3))
        A = np.column_stack([A, A[:, 0]])
        _, info = pseudoinverse(A)
        assert info.numerical_rank == 3
        assert np.all(np.diff(info.singular_values) <= 0)
        assert info.sv_tolerance == pytest.approx(default_tolerance(A.shape, info.singular_values[0]))

    def test_explicit_tolerance_truncates(self):
        A = np.diag([1.0, 1e-3])
        P, info = pseudoinverse(A, sv_tolerance=1e-2)
        assert info.numerical_rank == 1
        np.testing.assert_allclose(P, np.diag([1.0, 0.0]))

    def test_negative_tolerance_rejected(self):
        with pytest.raises(InvalidInputError):
            pseudoinverse(np.eye(2), -1.0)

    @settings(max_examples=60, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(1, 7), st.integers(1, 5)),
                  elements=st.floats(-10, 10, allow_subnormal=False)))
    def test_penrose_identities(self, A):
        P, _ = pseudoinverse(A)
        scale = max(1.0, np.abs(A).max()) ** 2
        assert max(penrose_gaps(A, P)) <= 1e-9 * scale * max(1.0, np.abs(P).max())


class TestProjector:
    def test_first_axis(self):
        np.testing.assert_allclose(column_space_projector([[1.0], [0.0]]), np.diag([1.0, 0.0]))

    def test_invertible_gives_identity(self, rng):
        A = rng.standard_normal((4, 4))
        np.testing.assert_allclose(column_space_projector(A), np.eye(4), atol=1e-12)

    def test_column_of_ones(self):
        P = column_space_projector([[1.0], [1.0]])
        A = np.array([[1.0], [1.0]])
        np.testing.assert_allclose(P, A @ pseudoinverse(A)[0])
        np.testing.assert_allclose(P, [[0.5, 0.5], [0.5, 0.5]])

    def test_symmetric_idempotent_and_fixes_columns(self, rng):
        A = rng.standard_normal((8, 3))
        A = np.column_stack([A, A[:, 1] - A[:, 2]])
        P = column_space_projector(A)
        np.testing.assert_allclose(P, P.T, atol=1e-14)
        np.testing.assert_allclose(P @ P, P, atol=1e-12)
        np.testing.assert_allclose(P @ A, A, atol=1e-12)

    def test_residual_orthogonality(self, rng):
        for _ in range(20):
            A = rng.standard_normal((10, 3))
            b = rng.standard_normal(10)
            r = b - column_space_projector(A) @ b
            assert np.abs(A.T @ r).max() < 1e-8
