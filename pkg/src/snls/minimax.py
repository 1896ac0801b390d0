"""Infinity-norm fitting through a Lagrangian dual over the probability simplex.

For residuals ``rho(x, y) = A(y) x - b(y)`` the squared minimax value
``min_{x,y} max_i rho_i^2`` equals ``min_{x,y} max_{lambda in simplex}
sum_i lambda_i rho_i^2``.  Swapping min and max gives a concave dual in
``lambda`` whose value at each ``lambda`` is a weighted least-squares fit and
whose supergradient is the squared residual vector of that fit.  The solver
alternates weighted fits with supergradient steps of size ``1 / (k + alpha0)``.

The raw supergradient ``rho**2`` makes the iteration depend on the scale of
the data: tiny residuals leave ``lambda`` where it started and large ones
throw it onto a vertex.  By default the solver therefore steps along
``step_gain * rho**2 / max(rho**2)`` and projects back onto the simplex.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import InvalidInputError, ModelEvaluationError, SubproblemFailedError
from .lls import column_space_projector, solve_lls
from .solvers import NlsProblem, SolverConfig, Status, solve_nls

__all__ = [
    "MinimaxProblem",
    "DualConfig",
    "DualRecord",
    "MinimaxResult",
    "minimax_from_separable",
    "residuals",
    "primal_value",
    "check_simplex",
    "project_simplex",
    "weighted_subproblem",
    "subgradient_update",
    "simplex_max_identity",
    "solve_minimax",
]


@dataclass(frozen=True)
class MinimaxProblem:
    n1: int
    n2: int
    m: int
    matrix_eval: Callable[[np.ndarray], np.ndarray]
    rhs_eval: Callable[[np.ndarray], np.ndarray]

    def __post_init__(self):
        if self.n1 < 1 or self.n2 < 0 or self.m < 1:
            raise InvalidInputError("need n1 >= 1, n2 >= 0, m >= 1")
        if self.m <= self.n1 + self.n2:
            warnings.warn(
                f"m={self.m} residuals for {self.n1 + self.n2} unknowns; the fit is likely interpolatory",
                stacklevel=3,
            )


def minimax_from_separable(model, data):
    """Minimax problem ``A(y) = Phi(y)``, ``b = observations`` for a separable model."""
    from .separable import eval_design_matrix

    return MinimaxProblem(
        n1=model.n_linear,
        n2=model.k_nonlinear,
        m=len(data),
        matrix_eval=lambda y: eval_design_matrix(model, y, data),
        rhs_eval=lambda y: data.y,
    )


@dataclass(frozen=True)
class DualConfig:
    alpha0: float = 10.0
    max_outer_iterations: int = 200
    objective_window_tolerance: float = 1e-6
    window: int = 3
    normalization: str = "project"
    scaling: str = "normalized"
    step_gain: float = 10.0
    subproblem_method: str = "varpro"
    inner: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if not self.alpha0 > 0:
            raise InvalidInputError("alpha0 must be > 0")
        if self.max_outer_iterations < 1:
            raise InvalidInputError("max_outer_iterations must be >= 1")
        if not self.objective_window_tolerance > 0:
            raise InvalidInputError("objective_window_tolerance must be > 0")
        if self.window < 1:
            raise InvalidInputError("window must be >= 1")
        if self.normalization not in ("project", "rescale"):
            raise InvalidInputError(f"unknown normalization {self.normalization!r}")
        if self.scaling not in ("raw", "normalized"):
            raise InvalidInputError(f"unknown scaling {self.scaling!r}")
        if not self.step_gain > 0:
            raise InvalidInputError("step_gain must be > 0")
        if self.subproblem_method not in ("varpro", "joint"):
            raise InvalidInputError(f"unknown subproblem method {self.subproblem_method!r}")


@dataclass
class DualRecord:
    iteration: int
    primal: float
    weighted_objective: float
    dual_bound: float
    step_size: float
    lam: np.ndarray
    inner_status: str


@dataclass
class MinimaxResult:
    x: np.ndarray
    y: np.ndarray
    primal_value: float
    dual_value_sq: float
    lam: np.ndarray
    status: str
    iterations: int
    trace: list = field(default_factory=list)


def _shape_checked(p, x, y):
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if x.size != p.n1 or y.size != p.n2:
        raise InvalidInputError(f"expected x of length {p.n1} and y of length {p.n2}")
    return x, y


def _system(p, y):
    with np.errstate(all="ignore"):
        A = np.asarray(p.matrix_eval(y), dtype=float)
        b = np.asarray(p.rhs_eval(y), dtype=float).reshape(-1)
    if A.shape != (p.m, p.n1) or b.shape != (p.m,):
        raise InvalidInputError(f"A(y) has shape {A.shape}, b(y) has shape {b.shape}; expected ({p.m}, {p.n1})")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
        raise ModelEvaluationError(f"A(y) or b(y) not finite at y={y.tolist()}", params=y.copy())
    return A, b


def residuals(p, x, y):
    """``A(y) x - b(y)``."""
    x, y = _shape_checked(p, x, y)
    A, b = _system(p, y)
    return A @ x - b


def primal_value(p, x, y):
    """``max_i |rho_i(x, y)|``."""
    return float(np.max(np.abs(residuals(p, x, y))))


def check_simplex(lam, atol=1e-12):
    lam = np.asarray(lam, dtype=float).reshape(-1)
    if lam.size < 1 or not np.all(np.isfinite(lam)):
        raise InvalidInputError("multipliers must be a non-empty finite vector")
    if np.any(lam < 0) or abs(lam.sum() - 1.0) > atol:
        raise InvalidInputError("multipliers must be >= 0 and sum to 1")
    return lam


def project_simplex(v):
    """Euclidean projection onto ``{lam >= 0, sum(lam) = 1}`` (sort-based)."""
    v = np.asarray(v, dtype=float).reshape(-1)
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    idx = np.arange(1, v.size + 1)
    rho = np.nonzero(u * idx > css - 1.0)[0][-1]
    tau = (css[rho] - 1.0) / (rho + 1)
    lam = np.maximum(v - tau, 0.0)
    # clean up the last ulp so the sum is 1 to machine precision
    return lam / lam.sum()


def _weighted_objective(lam, r):
    return float(lam @ (r * r))


def _reduced_solve(p, w, y0, cfg, sv_tolerance):
    def weighted_system(y):
        A, b = _system(p, y)
        return w[:, None] * A, w * b

    def reduced(y):
        WA, wb = weighted_system(y)
        return column_space_projector(WA, sv_tolerance) @ wb - wb

    if p.n2 == 0:
        y1 = np.zeros(0)
        status = Status.CONVERGED_GRADIENT
    else:
        result = solve_nls(NlsProblem(p.n2, reduced), y0, cfg)
        y1, status = result.x, result.status
    WA, wb = weighted_system(y1)
    return solve_lls(WA, wb, sv_tolerance), y1, status


def _joint_solve(p, w, x0, y0, cfg):
    n1 = p.n1

    def f(z):
        A, b = _system(p, z[n1:])
        return w * (A @ z[:n1] - b)

    result = solve_nls(NlsProblem(n1 + p.n2, f), np.concatenate([x0, y0]), cfg)
    return result.x[:n1], result.x[n1:], result.status


def weighted_subproblem(p, lam, x0, y0, inner_cfg=None, method="varpro", sv_tolerance=0.0):
    """Local minimizer of ``sum_i lam_i rho_i(x, y)^2`` started from ``(x0, y0)``.

    Row ``i`` is scaled by ``sqrt(lam_i)``.  With ``method="varpro"`` ``x`` is
    eliminated by weighted linear least squares and only ``y`` is iterated
    (``x0`` is then unused); ``method="joint"`` iterates on ``(x, y)``.

    Returns ``(x1, y1, weighted_objective, inner_status)``.
    """
    lam = check_simplex(lam)
    if lam.size != p.m:
        raise InvalidInputError(f"lambda has length {lam.size}, problem has {p.m} residuals")
    x0, y0 = _shape_checked(p, x0, y0)
    cfg = inner_cfg or SolverConfig()
    w = np.sqrt(lam)
    if method == "varpro":
        x1, y1, status = _reduced_solve(p, w, y0, cfg, sv_tolerance)
    elif method == "joint":
        x1, y1, status = _joint_solve(p, w, x0, y0, cfg)
    else:
        raise InvalidInputError(f"unknown subproblem method {method!r}")
    if status is Status.FAILED:
        raise SubproblemFailedError("inner least-squares solve failed", status=status.value)
    return x1, y1, _weighted_objective(lam, residuals(p, x1, y1)), status.value


def subgradient_update(lam, r, k, alpha0, normalization="project", scaling="raw", gain=1.0):
    """One supergradient ascent step on the dual with step size ``1 / (k + alpha0)``.

    The direction is ``gain * r**2`` (``scaling="raw"``) or
    ``gain * r**2 / max(r**2)`` (``scaling="normalized"``; a zero residual
    vector leaves ``lam`` unchanged).  The raw step leaves the simplex:
    ``normalization="project"`` maps it back by Euclidean projection,
    ``"rescale"`` divides by the sum.
    """
    lam = check_simplex(lam)
    r = np.asarray(r, dtype=float).reshape(-1)
    if r.size != lam.size or not np.all(np.isfinite(r)):
        raise InvalidInputError("residuals must be finite and match lambda in length")
    if k < 1:
        raise InvalidInputError("iteration counter k starts at 1")
    if not alpha0 > 0 or not gain > 0:
        raise InvalidInputError("alpha0 and gain must be > 0")
    direction = r * r
    if scaling == "normalized":
        peak = direction.max()
        if peak == 0:
            return lam.copy()
        direction = direction / peak
    elif scaling != "raw":
        raise InvalidInputError(f"unknown scaling {scaling!r}")
    direction = gain * direction
    raw = lam + direction / (k + alpha0)
    if normalization == "project":
        return project_simplex(raw)
    if normalization == "rescale":
        return raw / raw.sum()
    raise InvalidInputError(f"unknown normalization {normalization!r}")


def simplex_max_identity(r):
    """``max_{lam in simplex} sum_i lam_i r_i^2``, attained at a vertex: ``max_i r_i^2``."""
    r = np.asarray(r, dtype=float).reshape(-1)
    if r.size < 1 or not np.all(np.isfinite(r)):
        raise InvalidInputError("residuals must be a non-empty finite vector")
    return float(np.max(r * r))


def solve_minimax(p, x0, y0, cfg=None, lam0=None, sv_tolerance=0.0):
    """Minimize ``||A(y) x - b(y)||_inf`` by dual supergradient ascent.

    Stops once the weighted objective changes by at most
    ``objective_window_tolerance * (1 + F)`` on ``window`` consecutive outer
    iterations, or after ``max_outer_iterations``.  The returned point is the
    best primal iterate seen, since the dual iteration is not monotone in the
    primal value.  ``dual_value_sq`` is the largest weighted objective seen;
    it is a true lower bound on the squared minimax value only when every
    subproblem was solved globally.
    """
    cfg = cfg or DualConfig()
    x, y = _shape_checked(p, x0, y0)
    lam = np.full(p.m, 1.0 / p.m) if lam0 is None else check_simplex(lam0).copy()
    if lam.size != p.m:
        raise InvalidInputError(f"lambda0 has length {lam.size}, problem has {p.m} residuals")

    best = None
    dual = 0.0
    trace = []
    quiet = 0
    prev_obj = None
    status = Status.MAX_ITERATIONS.value

    for k in range(1, cfg.max_outer_iterations + 1):
        try:
            x1, y1, wobj, inner_status = weighted_subproblem(
                p, lam, x, y, cfg.inner, cfg.subproblem_method, sv_tolerance
            )
            if best is not None:
                # a local solve may land above the incumbent's weighted value;
                # restarting from the incumbent keeps wobj <= best primal^2
                incumbent_obj = _weighted_objective(lam, residuals(p, best[0], best[1]))
                if incumbent_obj < wobj:
                    x1, y1, wobj, inner_status = weighted_subproblem(
                        p, lam, best[0], best[1], cfg.inner, cfg.subproblem_method, sv_tolerance
                    )
        except SubproblemFailedError as exc:
            exc.trace = trace
            raise
        r = residuals(p, x1, y1)
        primal = float(np.max(np.abs(r)))
        dual = max(dual, wobj)
        step = 1.0 / (k + cfg.alpha0)
        trace.append(DualRecord(k, primal, wobj, dual, step, lam.copy(), inner_status))
        if best is None or primal < best[2]:
            best = (x1.copy(), y1.copy(), primal)

        if prev_obj is not None and abs(wobj - prev_obj) <= cfg.objective_window_tolerance * (1.0 + prev_obj):
            quiet += 1
        else:
            quiet = 0
        prev_obj = wobj
        if quiet >= cfg.window:
            status = Status.CONVERGED_OBJECTIVE.value
            break
        lam = subgradient_update(lam, r, k, cfg.alpha0, cfg.normalization, cfg.scaling, cfg.step_gain)
        x, y = x1, y1

    return MinimaxResult(
        x=best[0], y=best[1], primal_value=best[2], dual_value_sq=dual,
        lam=lam, status=status, iterations=len(trace), trace=trace,
    )
