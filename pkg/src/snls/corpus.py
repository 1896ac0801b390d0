"""Seeded test problems, analytic and brute-force oracles, and the VP-vs-joint harness.

Noise is drawn from a 64-bit linear congruential generator (Knuth's MMIX
constants) fed through the Box-Muller transform, so a dataset is fully
determined by its spec and seed:

    state <- (6364136223846793005 * state + 1442695040888963407) mod 2**64
    u     =  (state >> 11) * 2**-53                    # uniform in [0, 1)
    z0, z1 = sqrt(-2 ln(1 - u1)) * (cos, sin)(2 pi u2)  # both deviates used, in order
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidInputError, SnlsError
from .minimax import primal_value
from .models import constant_model, exp_sum_model, gaussian_peaks_model, line_model
from .separable import Dataset, eliminate_linear, full_residual
from .solvers import SolverConfig, solve_separable_joint, solve_separable_varpro

__all__ = [
    "Lcg64",
    "CorpusSpec",
    "Generated",
    "ComparisonRow",
    "ComparisonReport",
    "CORPUS_FAMILIES",
    "generate",
    "midrange_oracle",
    "brute_force_minimax",
    "run_comparison",
    "default_corpus",
    "random_corpus",
]

CORPUS_FAMILIES = ("exp_sum", "gaussian_peaks", "constant_minimax", "line_minimax")


class Lcg64:
    MULTIPLIER = 6364136223846793005
    INCREMENT = 1442695040888963407
    MASK = (1 << 64) - 1

    def __init__(self, seed):
        self.state = int(seed) & self.MASK
        self._spare = None

    def next_u64(self):
        self.state = (self.MULTIPLIER * self.state + self.INCREMENT) & self.MASK
        return self.state

    def uniform(self):
        return (self.next_u64() >> 11) * 2.0**-53

    def normal(self):
        if self._spare is not None:
            z, self._spare = self._spare, None
            return z
        u1 = 1.0 - self.uniform()
        u2 = self.uniform()
        radius = math.sqrt(-2.0 * math.log(u1))
        angle = 2.0 * math.pi * u2
        self._spare = radius * math.sin(angle)
        return radius * math.cos(angle)

    def normals(self, n):
        return np.array([self.normal() for _ in range(n)])


@dataclass(frozen=True)
class CorpusSpec:
    family: str
    a: tuple
    alpha: tuple
    t: tuple
    noise_sigma: float = 0.0
    seed: int = 0
    alpha0: Optional[tuple] = None
    name: str = ""

    def __post_init__(self):
        if self.family not in CORPUS_FAMILIES:
            raise InvalidInputError(f"unknown corpus family {self.family!r}; expected one of {CORPUS_FAMILIES}")
        t = np.asarray(self.t, dtype=float)
        if t.ndim != 1 or t.size < 1 or np.any(np.diff(t) <= 0):
            raise InvalidInputError("t grid must be non-empty and strictly increasing")
        if not self.noise_sigma >= 0:
            raise InvalidInputError("noise_sigma must be >= 0")
        for name in ("a", "alpha", "t"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        if self.alpha0 is not None:
            object.__setattr__(self, "alpha0", tuple(float(v) for v in self.alpha0))

    def model(self):
        n = len(self.a)
        if self.family == "exp_sum":
            model = exp_sum_model(n)
        elif self.family == "gaussian_peaks":
            model = gaussian_peaks_model(n)
        elif self.family == "constant_minimax":
            model = constant_model()
        else:
            model = line_model()
        if model.n_linear != n or model.k_nonlinear != len(self.alpha):
            raise InvalidInputError(
                f"{self.family} expects {model.n_linear} linear and {model.k_nonlinear} "
                f"nonlinear parameters, got {n} and {len(self.alpha)}"
            )
        return model

    def start(self):
        """Starting ``alpha`` for fits; 0.9 times the truth unless given."""
        if self.alpha0 is not None:
            return np.array(self.alpha0)
        return 0.9 * np.array(self.alpha)


@dataclass(frozen=True)
class Generated:
    data: Dataset
    model: object
    a: np.ndarray
    alpha: np.ndarray


def generate(spec):
    """Dataset ``y = Phi(alpha) a + sigma * z`` with ``z`` from the seeded generator."""
    if not isinstance(spec, CorpusSpec):
        raise InvalidInputError("generate expects a CorpusSpec")
    model = spec.model()
    t = np.array(spec.t)
    a, alpha = np.array(spec.a), np.array(spec.alpha)
    y = model.basis_eval(alpha, t) @ a
    if spec.noise_sigma > 0:
        y = y + spec.noise_sigma * Lcg64(spec.seed).normals(t.size)
    return Generated(Dataset(t, y), model, a, alpha)


def midrange_oracle(values):
    """Exact minimax constant fit: ``((max + min) / 2, (max - min) / 2)``."""
    v = np.asarray(values, dtype=float).reshape(-1)
    if v.size < 1:
        raise InvalidInputError("midrange of an empty vector")
    hi, lo = float(v.max()), float(v.min())
    return 0.5 * (hi + lo), 0.5 * (hi - lo)


def _grid_values(p, axes):
    """Primal value at every grid point; returns (points, values)."""
    x_axes, y_axes = axes[: p.n1], axes[p.n1 :]
    X = np.array(list(itertools.product(*x_axes)))
    points, values = [], []
    for y in itertools.product(*y_axes) if y_axes else [()]:
        y = np.array(y, dtype=float)
        try:
            A = np.asarray(p.matrix_eval(y), dtype=float)
            b = np.asarray(p.rhs_eval(y), dtype=float)
        except SnlsError:
            continue
        vals = np.max(np.abs(X @ A.T - b), axis=1)
        points.append(np.hstack([X, np.broadcast_to(y, (X.shape[0], y.size))]))
        values.append(vals)
    if not points:
        raise InvalidInputError("no grid point could be evaluated")
    return np.vstack(points), np.concatenate(values)


def brute_force_minimax(p, bounds, grid_steps=101, refinements=2):
    """Grid search for ``min ||A(y) x - b(y)||_inf`` over a box.

    ``bounds`` lists ``(lo, hi)`` for ``x`` then ``y``.  After the coarse grid,
    each refinement pass shrinks the box tenfold around the incumbent (clipped
    to the original bounds) and searches again with the same step count.  Only
    sampled points are returned, so the value upper-bounds the true optimum.
    """
    dim = p.n1 + p.n2
    if dim > 3:
        raise InvalidInputError("brute force supports at most 3 unknowns")
    bounds = np.asarray(bounds, dtype=float).reshape(-1, 2)
    if bounds.shape[0] != dim or grid_steps < 1 or np.any(bounds[:, 1] < bounds[:, 0]):
        raise InvalidInputError("need one (lo, hi) pair per unknown and grid_steps >= 1")
    lo, hi = bounds[:, 0].copy(), bounds[:, 1].copy()
    best_point, best_value = None, math.inf
    for _ in range(refinements + 1):
        axes = [np.linspace(l, h, grid_steps) for l, h in zip(lo, hi)]
        points, values = _grid_values(p, axes)
        i = int(np.argmin(values))
        if values[i] < best_value:
            best_point, best_value = points[i], float(values[i])
        half = (hi - lo) / 20.0
        lo = np.maximum(best_point - half, bounds[:, 0])
        hi = np.minimum(best_point + half, bounds[:, 1])
    return best_point[: p.n1], best_point[p.n1 :], best_value


@dataclass
class ComparisonRow:
    name: str
    family: str
    noise_free: bool
    vp_objective: float
    joint_objective: float
    vp_iterations: int
    joint_iterations: int
    vp_status: str
    joint_status: str
    agree: Optional[bool]
    error: Optional[str] = None


@dataclass
class ComparisonReport:
    rows: list = field(default_factory=list)
    agreement_tolerance: float = 1e-6

    @property
    def all_agree(self):
        return all(row.agree is not False for row in self.rows)

    @property
    def all_converged(self):
        return all(
            row.error is None and row.vp_status.startswith("converged") and row.joint_status.startswith("converged")
            for row in self.rows
        )


def run_comparison(specs: Sequence[CorpusSpec], cfg=None, agreement_tolerance=1e-6):
    """Fit every spec with both drivers from matched starts.

    The joint solve starts from ``(eliminate_linear(alpha0), alpha0)``.
    Objective agreement is only judged on noise-free instances.
    """
    cfg = cfg or SolverConfig()
    report = ComparisonReport(agreement_tolerance=agreement_tolerance)
    for i, spec in enumerate(specs):
        name = spec.name or f"{spec.family}-{i}"
        noise_free = spec.noise_sigma == 0
        try:
            gen = generate(spec)
            alpha0 = spec.start()
            a0 = eliminate_linear(gen.model, alpha0, gen.data)
            vp = solve_separable_varpro(gen.model, gen.data, alpha0, cfg)
            joint = solve_separable_joint(gen.model, gen.data, a0, alpha0, cfg)
        except SnlsError as exc:
            report.rows.append(ComparisonRow(
                name, spec.family, noise_free, math.nan, math.nan, 0, 0,
                "failed", "failed", False if noise_free else None, str(exc),
            ))
            continue
        agree = abs(vp.objective - joint.objective) <= agreement_tolerance if noise_free else None
        report.rows.append(ComparisonRow(
            name, spec.family, noise_free, vp.objective, joint.objective,
            vp.iterations, joint.iterations, vp.status, joint.status, agree,
        ))
    return report


def default_corpus():
    """Noise-free exponential-sum and Gaussian-peak instances with known truth."""
    t10 = tuple(range(10))
    t_dense = tuple(np.linspace(0.0, 5.0, 30))
    t_peaks = tuple(np.linspace(0.0, 10.0, 41))
    return [
        CorpusSpec("exp_sum", (2.0,), (1.0,), (0.0, 1.0, 2.0), alpha0=(0.5,), name="exp1"),
        CorpusSpec("exp_sum", (1.0, 5.0), (1.0, 3.0), t10, alpha0=(0.5, 4.0), name="exp2"),
        CorpusSpec("exp_sum", (3.0, -1.0), (0.5, 2.0), t_dense, alpha0=(0.3, 1.5), name="exp2-mixed"),
        CorpusSpec("exp_sum", (1.0, 2.0, 0.5), (0.2, 1.0, 4.0), t_dense, alpha0=(0.3, 1.2, 3.0), name="exp3"),
        CorpusSpec("gaussian_peaks", (1.0,), (5.0, 1.0), t_peaks, alpha0=(4.5, 1.3), name="peak1"),
        CorpusSpec("gaussian_peaks", (2.0, 1.0), (3.0, 0.8, 7.0, 1.2), t_peaks,
                   alpha0=(2.7, 1.0, 7.4, 1.0), name="peak2"),
        CorpusSpec("gaussian_peaks", (1.5, -0.5), (4.0, 1.5, 6.5, 0.7), t_peaks,
                   alpha0=(3.6, 1.2, 6.8, 0.9), name="peak2-signed"),
    ]


def random_corpus(count, seed, noise_sigma=0.01):
    """``count`` single- and double-exponential instances drawn from one seed."""
    rng = Lcg64(seed)
    t = tuple(np.linspace(0.0, 4.0, 25))
    specs = []
    for i in range(count):
        terms = 1 + i % 2
        rates = sorted(0.3 + 2.5 * rng.uniform() for _ in range(terms))
        if terms == 2 and rates[1] - rates[0] < 0.5:
            rates[1] = rates[0] + 0.5
        amps = tuple(0.5 + 2.0 * rng.uniform() for _ in range(terms))
        specs.append(CorpusSpec(
            "exp_sum", amps, tuple(rates), t, noise_sigma=noise_sigma,
            seed=int(rng.next_u64() >> 1), alpha0=tuple(0.8 * r for r in rates),
            name=f"random-{i}",
        ))
    return specs


def truth_residual(gen):
    """Residual of the generating parameters on the generated data."""
    return full_residual(gen.model, gen.a, gen.alpha, gen.data)


def midrange_gap(values):
    """``|primal_value(midrange) - midrange error|`` for a constant fit; 0 in exact arithmetic."""
    from .minimax import minimax_from_separable

    v = np.asarray(values, dtype=float)
    x, err = midrange_oracle(v)
    p = minimax_from_separable(constant_model(), Dataset(np.arange(v.size, dtype=float), v))
    return abs(primal_value(p, [x], []) - err)
