"""Separable least-squares structure: design matrix, linear elimination, projected residual.

A separable model predicts ``y ~ Phi(alpha) @ a`` where the columns of
``Phi`` are basis functions of the nonlinear parameters ``alpha`` evaluated
on the sample points ``t``.  Basis callables are vectorized over ``t``:

    basis_eval(alpha, t)  -> (m, n_linear)
    basis_deriv(alpha, t) -> (m, n_linear, k_nonlinear)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import InvalidInputError, ModelEvaluationError
from .lls import pseudoinverse, solve_lls

__all__ = [
    "Dataset",
    "SeparableModel",
    "SeparableFit",
    "eval_design_matrix",
    "eval_design_derivative",
    "eliminate_linear",
    "vp_residual",
    "vp_jacobian",
    "full_residual",
    "full_jacobian",
    "basis_derivative_error",
]


@dataclass(frozen=True)
class Dataset:
    t: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float).reshape(-1)
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if t.shape != y.shape:
            raise InvalidInputError(f"t and y lengths differ ({t.size} vs {y.size})")
        if t.size < 1:
            raise InvalidInputError("dataset needs at least one observation")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(y))):
            raise InvalidInputError("dataset has non-finite values")
        t.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "y", y)

    def __len__(self):
        return self.t.size


@dataclass(frozen=True)
class SeparableModel:
    n_linear: int
    k_nonlinear: int
    basis_eval: Callable[[np.ndarray, np.ndarray], np.ndarray]
    basis_deriv: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    name: str = "custom"

    def __post_init__(self):
        if self.n_linear < 1:
            raise InvalidInputError("a separable model needs at least one linear parameter")
        if self.k_nonlinear < 0:
            raise InvalidInputError("k_nonlinear must be >= 0")


@dataclass
class SeparableFit:
    alpha: np.ndarray
    a: np.ndarray
    residual_norm_sq: float
    status: str
    iterations: int
    trace: list = field(default_factory=list)

    @property
    def objective(self):
        return 0.5 * self.residual_norm_sq


def _check_alpha(model, alpha):
    alpha = np.asarray(alpha, dtype=float).reshape(-1)
    if alpha.size != model.k_nonlinear:
        raise InvalidInputError(
            f"alpha has length {alpha.size}, model expects {model.k_nonlinear}"
        )
    return alpha


def eval_design_matrix(model, alpha, data):
    """``Phi[i, j] = phi_j(alpha, t_i)``."""
    alpha = _check_alpha(model, alpha)
    # overflow is reported below as a ModelEvaluationError, not as a numpy warning
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        Phi = np.asarray(model.basis_eval(alpha, data.t), dtype=float)
    expected = (len(data), model.n_linear)
    if Phi.shape != expected:
        raise InvalidInputError(f"basis_eval returned shape {Phi.shape}, expected {expected}")
    bad = ~np.isfinite(Phi)
    if bad.any():
        i, j = (int(v) for v in np.argwhere(bad)[0])
        raise ModelEvaluationError(
            f"basis {j} is not finite at t[{i}]={data.t[i]!r}, alpha={alpha.tolist()}",
            row=i, column=j, params=alpha.copy(),
        )
    return Phi


def eval_design_derivative(model, alpha, data):
    """``D[i, j, l] = d phi_j / d alpha_l`` at ``t_i``."""
    if model.basis_deriv is None:
        raise InvalidInputError(f"model {model.name!r} has no analytic derivative")
    alpha = _check_alpha(model, alpha)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        D = np.asarray(model.basis_deriv(alpha, data.t), dtype=float)
    expected = (len(data), model.n_linear, model.k_nonlinear)
    if D.shape != expected:
        raise InvalidInputError(f"basis_deriv returned shape {D.shape}, expected {expected}")
    if not np.all(np.isfinite(D)):
        i, j, l = (int(v) for v in np.argwhere(~np.isfinite(D))[0])
        raise ModelEvaluationError(
            f"derivative of basis {j} w.r.t. alpha[{l}] is not finite at t[{i}]",
            row=i, column=j, params=alpha.copy(),
        )
    return D


def eliminate_linear(model, alpha, data, sv_tolerance=0.0):
    """Minimum-norm linear coefficients ``a = Phi(alpha)+ y``."""
    Phi = eval_design_matrix(model, alpha, data)
    return solve_lls(Phi, data.y, sv_tolerance)


def vp_residual(model, alpha, data, sv_tolerance=0.0):
    """Projected residual ``(I - Phi Phi+) y``, orthogonal to every column of Phi."""
    Phi = eval_design_matrix(model, alpha, data)
    a = solve_lls(Phi, data.y, sv_tolerance)
    return data.y - Phi @ a


def vp_jacobian(model, alpha, data, sv_tolerance=0.0, kind="kaufman"):
    """Jacobian of :func:`vp_residual` with respect to ``alpha``.

    ``kind="kaufman"`` drops the term ``Phi+^T D_l^T r`` which vanishes at zero
    residual and is orthogonal to the residual everywhere, so the gradient
    ``J^T r`` is exact either way.  ``kind="full"`` keeps it and matches finite
    differences wherever the rank of Phi is locally constant.
    """
    if kind not in ("kaufman", "full"):
        raise InvalidInputError(f"unknown VP Jacobian kind {kind!r}")
    Phi = eval_design_matrix(model, alpha, data)
    D = eval_design_derivative(model, alpha, data)
    pinv, _ = pseudoinverse(Phi, sv_tolerance)
    a = pinv @ data.y
    r = data.y - Phi @ a
    # D_l @ a for every l at once: (m, k)
    Da = np.einsum("ijl,j->il", D, a)
    J = -(Da - Phi @ (pinv @ Da))
    if kind == "full":
        # Phi+^T (D_l^T r) for every l
        J -= pinv.T @ np.einsum("ijl,i->jl", D, r)
    return J


def full_residual(model, a, alpha, data):
    """``r_i = y_i - sum_j a_j phi_j(alpha, t_i)``."""
    a = np.asarray(a, dtype=float).reshape(-1)
    if a.size != model.n_linear:
        raise InvalidInputError(f"a has length {a.size}, model expects {model.n_linear}")
    return data.y - eval_design_matrix(model, alpha, data) @ a


def full_jacobian(model, a, alpha, data):
    """Jacobian of :func:`full_residual` with respect to the stacked ``(a, alpha)``."""
    a = np.asarray(a, dtype=float).reshape(-1)
    Phi = eval_design_matrix(model, alpha, data)
    if model.k_nonlinear == 0:
        return -Phi
    D = eval_design_derivative(model, alpha, data)
    return -np.hstack([Phi, np.einsum("ijl,j->il", D, a)])


def basis_derivative_error(model, alpha, t, step=1e-6):
    """Max relative gap between ``basis_deriv`` and central differences of ``basis_eval``.

    The gap is scaled by ``max(1, |derivative|)`` so entries near zero are
    compared absolutely.
    """
    alpha = np.asarray(alpha, dtype=float)
    t = np.asarray(t, dtype=float)
    analytic = np.asarray(model.basis_deriv(alpha, t), dtype=float)
    worst = 0.0
    for l in range(model.k_nonlinear):
        h = step * (1.0 + abs(alpha[l]))
        e = np.zeros_like(alpha)
        e[l] = h
        fd = (model.basis_eval(alpha + e, t) - model.basis_eval(alpha - e, t)) / (2 * h)
        gap = np.abs(fd - analytic[:, :, l]) / np.maximum(1.0, np.abs(analytic[:, :, l]))
        worst = max(worst, float(gap.max()))
    return worst
