"""Gauss-Newton / Levenberg-Marquardt iteration and the two separable drivers."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import InvalidInputError, InvalidStartError, ModelEvaluationError, SnlsError
from .lls import as_matrix, solve_lls
from .separable import (
    SeparableFit,
    eliminate_linear,
    full_jacobian,
    full_residual,
    vp_jacobian,
    vp_residual,
)

__all__ = [
    "Status",
    "NlsProblem",
    "SolverConfig",
    "IterationRecord",
    "SolveResult",
    "gauss_newton_step",
    "lm_step",
    "fd_jacobian",
    "hessian_gap_norm",
    "solve_nls",
    "solve_separable_varpro",
    "solve_separable_joint",
]


class Status(str, enum.Enum):
    CONVERGED_GRADIENT = "converged_gradient"
    CONVERGED_STEP = "converged_step"
    CONVERGED_OBJECTIVE = "converged_objective"
    MAX_ITERATIONS = "max_iterations"
    FAILED = "failed"

    @property
    def converged(self):
        return self.value.startswith("converged")


@dataclass(frozen=True)
class NlsProblem:
    """``min_x 0.5 * ||residual(x)||^2``; ``jacobian`` is optional."""

    dim: int
    residual: Callable[[np.ndarray], np.ndarray]
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None


@dataclass(frozen=True)
class SolverConfig:
    max_iterations: int = 200
    gradient_tolerance: float = 1e-8
    step_tolerance: float = 1e-10
    objective_tolerance: float = 1e-12
    lm_initial_damping: float = 1e-3
    lm_damping_growth: float = 10.0
    fd_step: float = 1e-6
    max_rejections: int = 40
    trace_hessian_gap: bool = False

    def __post_init__(self):
        if self.max_iterations < 0:
            raise InvalidInputError("max_iterations must be >= 0")
        for name in ("gradient_tolerance", "step_tolerance", "objective_tolerance", "fd_step"):
            if not getattr(self, name) > 0:
                raise InvalidInputError(f"{name} must be > 0")
        if not self.lm_initial_damping >= 0:
            raise InvalidInputError("lm_initial_damping must be >= 0")
        if not self.lm_damping_growth > 1:
            raise InvalidInputError("lm_damping_growth must be > 1")
        if self.max_rejections < 1:
            raise InvalidInputError("max_rejections must be >= 1")


@dataclass
class IterationRecord:
    iteration: int
    objective: float
    gradient_norm: float
    damping: float
    step_norm: float
    accepted: bool
    hessian_gap: Optional[float] = None


@dataclass
class SolveResult:
    x: np.ndarray
    objective: float
    status: Status
    trace: list = field(default_factory=list)
    residual_evaluations: int = 0

    @property
    def iterations(self):
        """Number of accepted steps."""
        return sum(1 for rec in self.trace if rec.accepted)


def _check_pair(J, f):
    J = np.asarray(J, dtype=float)
    if J.ndim == 1:
        J = J.reshape(-1, 1)
    J = as_matrix(J, "Jacobian")
    f = np.asarray(f, dtype=float).reshape(-1)
    if f.size != J.shape[0]:
        raise InvalidInputError(f"Jacobian has {J.shape[0]} rows but residual has length {f.size}")
    if not np.all(np.isfinite(f)):
        raise InvalidInputError("residual has non-finite entries")
    return J, f


def gauss_newton_step(J, f):
    """``d = -J+ f``, the minimum-norm minimizer of ``||f + J d||``."""
    J, f = _check_pair(J, f)
    return -solve_lls(J, f)


def lm_step(J, f, damping):
    """Solve ``(J^T J + damping I) d = -J^T f``.

    Computed from the SVD of ``J`` so a rank-deficient ``J`` with zero damping
    falls back to the Gauss-Newton pseudoinverse step instead of failing.
    """
    if not damping >= 0:
        raise InvalidInputError("damping must be >= 0")
    J, f = _check_pair(J, f)
    if damping == 0:
        return -solve_lls(J, f)
    U, s, Vt = np.linalg.svd(J, full_matrices=False)
    return -Vt.T @ ((s / (s * s + damping)) * (U.T @ f))


def _evaluate(p, x):
    with np.errstate(all="ignore"):
        f = np.asarray(p.residual(x), dtype=float).reshape(-1)
    if not np.all(np.isfinite(f)):
        raise ModelEvaluationError(f"residual is not finite at x={x.tolist()}", params=x.copy())
    return f


def fd_jacobian(p, x, fd_step=1e-6):
    """Central-difference Jacobian with per-coordinate step ``fd_step * (1 + |x_l|)``."""
    if not fd_step > 0:
        raise InvalidInputError("fd_step must be > 0")
    x = np.asarray(x, dtype=float).reshape(-1)
    cols = []
    for l in range(x.size):
        h = fd_step * (1.0 + abs(x[l]))
        e = np.zeros_like(x)
        e[l] = h
        cols.append((_evaluate(p, x + e) - _evaluate(p, x - e)) / (2 * h))
    if not cols:
        return np.zeros((_evaluate(p, x).size, 0))
    return np.column_stack(cols)


def _jacobian(p, x, fd_step):
    if p.jacobian is None:
        return fd_jacobian(p, x, fd_step)
    with np.errstate(all="ignore"):
        J = np.asarray(p.jacobian(x), dtype=float)
    if J.ndim == 1:
        J = J.reshape(-1, 1)
    if not np.all(np.isfinite(J)):
        raise ModelEvaluationError(f"Jacobian is not finite at x={x.tolist()}", params=x.copy())
    return J


def hessian_gap_norm(p, x, fd_step=1e-6, outer_step=1e-4):
    """Frobenius norm of ``sum_i f_i(x) * Hess f_i(x)``, the term Gauss-Newton drops.

    Differentiates ``J(x)^T f`` with ``f`` frozen at ``x``.  The outer
    difference uses a larger step than the Jacobian itself because it
    differences an already differenced quantity.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    f = _evaluate(p, x)
    S = np.zeros((x.size, x.size))
    for l in range(x.size):
        h = outer_step * (1.0 + abs(x[l]))
        e = np.zeros_like(x)
        e[l] = h
        S[:, l] = (_jacobian(p, x + e, fd_step).T @ f - _jacobian(p, x - e, fd_step).T @ f) / (2 * h)
    return float(np.linalg.norm(0.5 * (S + S.T)))


def solve_nls(p, x0, cfg=None):
    """Damped Gauss-Newton (Levenberg-Marquardt) minimization of ``0.5 ||f(x)||^2``.

    A trial step is accepted only if it strictly lowers the objective; the
    damping is divided by ``lm_damping_growth`` on acceptance and multiplied
    by it on rejection.  Non-finite trial residuals count as rejections.
    """
    cfg = cfg or SolverConfig()
    x = np.asarray(x0, dtype=float).reshape(-1).copy()
    if x.size != p.dim:
        raise InvalidInputError(f"x0 has length {x.size}, problem dimension is {p.dim}")
    try:
        f = _evaluate(p, x)
    except ModelEvaluationError as exc:
        raise InvalidStartError(f"residual is not finite at the starting point: {exc}") from exc
    n_evals = 1
    F = 0.5 * float(f @ f)
    trace = []
    if x.size == 0:
        return SolveResult(x, F, Status.CONVERGED_GRADIENT, trace, n_evals)

    try:
        J = _jacobian(p, x, cfg.fd_step)
    except ModelEvaluationError as exc:
        raise InvalidStartError(f"Jacobian is not finite at the starting point: {exc}") from exc
    mu = cfg.lm_initial_damping
    rejections = 0
    status = Status.MAX_ITERATIONS

    for it in range(1, cfg.max_iterations + 1):
        g = J.T @ f
        gnorm = float(np.max(np.abs(g)))
        if gnorm <= cfg.gradient_tolerance:
            status = Status.CONVERGED_GRADIENT
            break
        d = lm_step(J, f, mu)
        dnorm = float(np.linalg.norm(d))
        if dnorm <= cfg.step_tolerance * (1.0 + np.linalg.norm(x)):
            status = Status.CONVERGED_STEP
            break

        x_new = x + d
        try:
            f_new = _evaluate(p, x_new)
            F_new = 0.5 * float(f_new @ f_new)
        except SnlsError:
            F_new = np.inf
        n_evals += 1

        rec = IterationRecord(it, F, gnorm, mu, dnorm, accepted=False)
        if F_new < F:
            try:
                J_new = _jacobian(p, x_new, cfg.fd_step)
            except ModelEvaluationError:
                trace.append(rec)
                status = Status.FAILED
                break
            decrease = F - F_new
            x, f, F, J = x_new, f_new, F_new, J_new
            rec.objective = F
            rec.accepted = True
            if cfg.trace_hessian_gap:
                rec.hessian_gap = hessian_gap_norm(p, x, cfg.fd_step)
            trace.append(rec)
            mu /= cfg.lm_damping_growth
            rejections = 0
            if decrease <= cfg.objective_tolerance * (1.0 + F):
                status = Status.CONVERGED_OBJECTIVE
                break
        else:
            trace.append(rec)
            # zero damping cannot grow multiplicatively
            mu = mu * cfg.lm_damping_growth if mu > 0 else cfg.lm_damping_growth * 1e-6
            rejections += 1
            if rejections >= cfg.max_rejections:
                status = Status.FAILED
                break

    return SolveResult(x, F, status, trace, n_evals)


def _fit(model, data, a, alpha, result):
    r = full_residual(model, a, alpha, data)
    return SeparableFit(
        alpha=np.asarray(alpha, dtype=float),
        a=np.asarray(a, dtype=float),
        residual_norm_sq=float(r @ r),
        status=result.status.value,
        iterations=result.iterations,
        trace=result.trace,
    )


def solve_separable_varpro(model, data, alpha0, cfg=None, sv_tolerance=0.0, jacobian="full"):
    """Fit a separable model by iterating on the projected residual over ``alpha`` only.

    ``jacobian`` selects the reduced Jacobian: ``"full"`` (exact, the
    default), ``"kaufman"`` (drops the term that vanishes at zero residual) or
    ``"fd"``.  Models without ``basis_deriv`` always use finite differences.
    The linear coefficients are recovered as ``Phi(alpha*)+ y`` at the end.
    """
    cfg = cfg or SolverConfig()
    alpha0 = np.asarray(alpha0, dtype=float).reshape(-1)
    if alpha0.size != model.k_nonlinear:
        raise InvalidInputError(f"alpha0 has length {alpha0.size}, model expects {model.k_nonlinear}")
    if model.k_nonlinear == 0:
        a = eliminate_linear(model, alpha0, data, sv_tolerance)
        r = full_residual(model, a, alpha0, data)
        result = SolveResult(alpha0, 0.5 * float(r @ r), Status.CONVERGED_GRADIENT)
        return _fit(model, data, a, alpha0, result)

    if jacobian not in ("kaufman", "full", "fd"):
        raise InvalidInputError(f"unknown jacobian option {jacobian!r}")
    jac = None
    if jacobian != "fd" and model.basis_deriv is not None:
        def jac(alpha):
            return vp_jacobian(model, alpha, data, sv_tolerance, kind=jacobian)

    problem = NlsProblem(
        model.k_nonlinear,
        lambda alpha: vp_residual(model, alpha, data, sv_tolerance),
        jac,
    )
    result = solve_nls(problem, alpha0, cfg)
    a = eliminate_linear(model, result.x, data, sv_tolerance)
    return _fit(model, data, a, result.x, result)


def solve_separable_joint(model, data, a0, alpha0, cfg=None):
    """Fit a separable model by iterating on the stacked ``(a, alpha)`` without elimination."""
    cfg = cfg or SolverConfig()
    a0 = np.asarray(a0, dtype=float).reshape(-1)
    alpha0 = np.asarray(alpha0, dtype=float).reshape(-1)
    n, k = model.n_linear, model.k_nonlinear
    if a0.size != n or alpha0.size != k:
        raise InvalidInputError(f"starting point must have {n} linear and {k} nonlinear entries")

    jac = None
    if model.basis_deriv is not None or k == 0:
        def jac(z):
            return full_jacobian(model, z[:n], z[n:], data)

    problem = NlsProblem(n + k, lambda z: full_residual(model, z[:n], z[n:], data), jac)
    result = solve_nls(problem, np.concatenate([a0, alpha0]), cfg)
    return _fit(model, data, result.x[:n], result.x[n:], result)
