import numpy as np
import pytest

from snls.errors import InvalidInputError, InvalidStartError, ModelEvaluationError
from snls.lls import pseudoinverse, solve_lls
from snls.models import constant_model, exp_sum_model, line_model
from snls.separable import Dataset, eliminate_linear
from snls.solvers import (
    NlsProblem,
    SolverConfig,
    Status,
    fd_jacobian,
    gauss_newton_step,
    hessian_gap_norm,
    lm_step,
    solve_nls,
    solve_separable_joint,
    solve_separable_varpro,
)


def affine(A, b):
    A, b = np.asarray(A, float), np.asarray(b, float)
    return NlsProblem(A.shape[1], lambda x: A @ x - b, lambda x: A)


def square_minus_four():
    return NlsProblem(1, lambda x: np.array([x[0] ** 2 - 4.0]), lambda x: np.array([[2 * x[0]]]))


class TestSteps:
    def test_identity_jacobian(self):
        np.testing.assert_allclose(gauss_newton_step(np.eye(3), [1.0, -2.0, 0.5]), [-1.0, 2.0, -0.5])

    def test_scalar_newton(self):
        assert gauss_newton_step([[6.0]], [5.0])[0] == pytest.approx(-5 / 6, rel=1e-15)

    def test_min_norm_when_rank_deficient(self, rng):
        J = rng.standard_normal((6, 2))
        J = np.column_stack([J, J[:, 0] + J[:, 1]])
        f = rng.standard_normal(6)
        np.testing.assert_allclose(gauss_newton_step(J, f), -pseudoinverse(J)[0] @ f, atol=1e-9)

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidInputError):
            gauss_newton_step(np.eye(2), [1.0, 2.0, 3.0])

    def test_lm_zero_damping_is_gn(self, rng):
        J = rng.standard_normal((7, 3))
        f = rng.standard_normal(7)
        np.testing.assert_allclose(lm_step(J, f, 0.0), gauss_newton_step(J, f), atol=1e-12)

    def test_lm_scalar(self):
        assert lm_step([[6.0]], [5.0], 4.0)[0] == pytest.approx(-0.75, rel=1e-15)

    def test_lm_large_damping_bound(self, rng):
        J = rng.standard_normal((5, 3))
        f = rng.standard_normal(5)
        g = J.T @ f
        for mu in (1e2, 1e4, 1e8):
            d = lm_step(J, f, mu)
            assert np.linalg.norm(d) <= np.linalg.norm(g) / mu * (1 + 1e-12)
        cos = -(lm_step(J, f, 1e8) @ g) / (np.linalg.norm(lm_step(J, f, 1e8)) * np.linalg.norm(g))
        assert cos > 1 - 1e-6

    def test_lm_negative_damping(self):
        with pytest.raises(InvalidInputError):
            lm_step(np.eye(2), [1.0, 1.0], -1.0)


class TestFiniteDifferences:
    def test_linear_exact(self, rng):
        A = rng.standard_normal((5, 3))
        p = NlsProblem(3, lambda x: A @ x - 1.0)
        np.testing.assert_allclose(fd_jacobian(p, rng.standard_normal(3)), A, atol=1e-9)

    def test_square(self):
        p = NlsProblem(1, lambda x: x**2)
        assert fd_jacobian(p, np.array([3.0]))[0, 0] == pytest.approx(6.0, abs=1e-6)

    def test_constant_residual(self):
        p = NlsProblem(2, lambda x: np.array([1.0, 2.0, 3.0]))
        assert not fd_jacobian(p, np.array([0.4, -2.0])).any()

    def test_non_finite(self):
        p = NlsProblem(1, lambda x: np.array([1.0 / x[0] if x[0] > 0 else np.inf]))
        with pytest.raises(ModelEvaluationError):
            fd_jacobian(p, np.array([0.0]))


class TestHessianGap:
    def test_affine_is_zero(self, rng):
        p = affine(rng.standard_normal((6, 3)), rng.standard_normal(6))
        assert hessian_gap_norm(p, rng.standard_normal(3)) < 1e-6

    def test_zero_residual(self):
        assert hessian_gap_norm(square_minus_four(), np.array([2.0])) < 1e-6

    def test_square_minus_four(self):
        assert hessian_gap_norm(square_minus_four(), np.array([3.0])) == pytest.approx(10.0, abs=1e-4)


class TestSolveNls:
    def test_affine_one_step(self, rng):
        A = rng.standard_normal((8, 3))
        b = rng.standard_normal(8)
        res = solve_nls(affine(A, b), rng.standard_normal(3), SolverConfig(lm_initial_damping=0.0))
        assert res.iterations == 1
        assert res.status.converged
        np.testing.assert_allclose(res.x, solve_lls(A, b), atol=1e-9)

    def test_default_damping_reaches_ls_solution(self, rng):
        A = rng.standard_normal((8, 3))
        b = rng.standard_normal(8)
        res = solve_nls(affine(A, b), np.zeros(3))
        np.testing.assert_allclose(res.x, solve_lls(A, b), atol=1e-9)

    def test_optimal_start(self):
        A = np.eye(2)
        res = solve_nls(affine(A, [1.0, 2.0]), np.array([1.0, 2.0]))
        assert res.status is Status.CONVERGED_GRADIENT
        assert res.iterations == 0

    def test_joint_exponential(self):
        t = np.linspace(0, 4, 12)
        y = 2 * np.exp(-t)
        p = NlsProblem(2, lambda z: y - z[0] * np.exp(-z[1] * t))
        res = solve_nls(p, np.array([1.0, 0.5]))
        assert res.status.converged
        assert res.objective < 1e-12
        np.testing.assert_allclose(res.x, [2.0, 1.0], atol=1e-5)

    def test_accepted_objectives_non_increasing(self):
        t = np.linspace(0, 4, 12)
        y = 2 * np.exp(-t) + 0.01 * np.sin(7 * t)
        p = NlsProblem(2, lambda z: y - z[0] * np.exp(-z[1] * t))
        res = solve_nls(p, np.array([0.2, 3.0]))
        objs = [r.objective for r in res.trace if r.accepted]
        assert objs and all(b <= a for a, b in zip(objs, objs[1:]))

    def test_bad_start(self):
        p = NlsProblem(1, lambda x: np.array([np.log(x[0])]))
        with pytest.raises(InvalidStartError):
            solve_nls(p, np.array([-1.0]))

    def test_non_finite_trials_are_rejected(self):
        # sqrt is undefined left of 0; the first full step overshoots into that region
        p = NlsProblem(1, lambda x: np.array([np.sqrt(x[0]) - 0.1 if x[0] >= 0 else np.nan]))
        res = solve_nls(p, np.array([4.0]))
        assert res.x[0] == pytest.approx(0.01, abs=1e-6)
        assert any(not r.accepted for r in res.trace)

    def test_fails_after_rejections(self):
        calls = {"n": 0}

        def f(x):
            calls["n"] += 1
            return np.array([x[0] - 1.0]) if calls["n"] == 1 else np.array([np.inf])

        res = solve_nls(NlsProblem(1, f, lambda x: np.array([[1.0]])), np.array([0.0]),
                        SolverConfig(max_rejections=5))
        assert res.status is Status.FAILED
        assert len(res.trace) == 5

    def test_max_iterations(self):
        t = np.linspace(0, 4, 12)
        p = NlsProblem(2, lambda z: 2 * np.exp(-t) - z[0] * np.exp(-z[1] * t))
        res = solve_nls(p, np.array([0.1, 3.0]), SolverConfig(max_iterations=2))
        assert res.status is Status.MAX_ITERATIONS

    def test_trace_hessian_gap(self, rng):
        res = solve_nls(affine(rng.standard_normal((5, 2)), rng.standard_normal(5)), np.zeros(2),
                        SolverConfig(trace_hessian_gap=True))
        gaps = [r.hessian_gap for r in res.trace if r.accepted]
        assert gaps and max(gaps) < 1e-6

    def test_config_validation(self):
        with pytest.raises(InvalidInputError):
            SolverConfig(lm_damping_growth=1.0)
        with pytest.raises(InvalidInputError):
            SolverConfig(gradient_tolerance=0.0)


class TestSeparableDrivers:
    def test_linear_model_is_one_lls(self):
        t = np.array([0.0, 1.0, 2.0, 3.0])
        y = np.array([1.0, 2.9, 5.2, 7.1])
        data = Dataset(t, y)
        fit = solve_separable_varpro(line_model(), data, [])
        np.testing.assert_allclose(fit.a, solve_lls(np.column_stack([np.ones(4), t]), y))
        assert fit.iterations == 0

    def test_single_exponential(self):
        t = np.linspace(0, 5, 11)
        fit = solve_separable_varpro(exp_sum_model(1), Dataset(t, 2 * np.exp(-t)), [0.5])
        assert fit.residual_norm_sq < 1e-10
        np.testing.assert_allclose(fit.alpha, [1.0], atol=1e-6)
        np.testing.assert_allclose(fit.a, [2.0], atol=1e-6)

    def test_two_exponentials(self):
        t = np.arange(10.0)
        data = Dataset(t, np.exp(-t) + 5 * np.exp(-3 * t))
        fit = solve_separable_varpro(exp_sum_model(2), data, [0.5, 4.0])
        assert fit.residual_norm_sq < 1e-8
        assert fit.objective == pytest.approx(0.5 * fit.residual_norm_sq)

    @pytest.mark.parametrize("kind", ["kaufman", "fd"])
    def test_other_jacobians(self, kind):
        t = np.linspace(0, 5, 11)
        fit = solve_separable_varpro(exp_sum_model(1), Dataset(t, 2 * np.exp(-t)), [0.5], jacobian=kind)
        assert fit.residual_norm_sq < 1e-10

    @pytest.mark.parametrize("model,t,y,alpha0", [
        (exp_sum_model(1), np.linspace(0, 5, 11), 2 * np.exp(-np.linspace(0, 5, 11)), [0.5]),
        (exp_sum_model(2), np.arange(10.0), np.exp(-np.arange(10.0)) + 5 * np.exp(-3 * np.arange(10.0)), [0.5, 4.0]),
    ])
    def test_joint_agrees_with_varpro(self, model, t, y, alpha0):
        data = Dataset(t, y)
        vp = solve_separable_varpro(model, data, alpha0)
        joint = solve_separable_joint(model, data, eliminate_linear(model, alpha0, data), alpha0)
        assert abs(vp.objective - joint.objective) < 1e-6

    def test_joint_linear_model(self):
        data = Dataset([0.0, 1.0, 2.0], [1.0, 3.0, 5.5])
        fit = solve_separable_joint(constant_model(), data, [0.0], [], SolverConfig(lm_initial_damping=0.0))
        assert fit.iterations == 1
        np.testing.assert_allclose(fit.a, [9.5 / 3])

    def test_joint_zero_data(self):
        fit = solve_separable_joint(exp_sum_model(1), Dataset([0.0, 1.0, 2.0], [0.0, 0.0, 0.0]), [0.0], [1.0])
        assert fit.objective == 0.0
        np.testing.assert_array_equal(fit.a, [0.0])

    def test_wrong_start_lengths(self):
        data = Dataset([0.0, 1.0], [1.0, 0.5])
        with pytest.raises(InvalidInputError):
            solve_separable_varpro(exp_sum_model(1), data, [1.0, 2.0])
        with pytest.raises(InvalidInputError):
            solve_separable_joint(exp_sum_model(1), data, [1.0, 1.0], [1.0])
