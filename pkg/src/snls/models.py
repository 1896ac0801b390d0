"""Bundled separable model families.

=================  ====================================  ======================
family             basis phi_j(alpha, t)                  alpha layout
=================  ====================================  ======================
``exp_sum``        exp(-alpha_j t)                        (rate_1, ..., rate_n)
``gaussian_peaks`` exp(-(t - c_j)^2 / (2 s_j^2))          (c_1, s_1, ..., c_n, s_n)
``constant``       1                                      ()
``line``           1, t                                   ()
=================  ====================================  ======================
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidInputError
from .separable import SeparableModel

FAMILIES = ("exp_sum", "gaussian_peaks", "constant", "line")


def exp_sum_model(n_terms=1):
    def basis(alpha, t):
        return np.exp(-np.outer(t, alpha))

    def deriv(alpha, t):
        phi = basis(alpha, t)
        D = np.zeros((t.size, n_terms, n_terms))
        idx = np.arange(n_terms)
        D[:, idx, idx] = -t[:, None] * phi
        return D

    return SeparableModel(n_terms, n_terms, basis, deriv, name="exp_sum")


def gaussian_peaks_model(n_peaks=1):
    def split(alpha):
        return alpha[0::2], alpha[1::2]

    def basis(alpha, t):
        c, s = split(alpha)
        z = (t[:, None] - c) / s
        return np.exp(-0.5 * z * z)

    def deriv(alpha, t):
        c, s = split(alpha)
        diff = t[:, None] - c
        phi = np.exp(-0.5 * (diff / s) ** 2)
        D = np.zeros((t.size, n_peaks, 2 * n_peaks))
        idx = np.arange(n_peaks)
        D[:, idx, 2 * idx] = phi * diff / s**2
        D[:, idx, 2 * idx + 1] = phi * diff**2 / s**3
        return D

    return SeparableModel(n_peaks, 2 * n_peaks, basis, deriv, name="gaussian_peaks")


def constant_model():
    return SeparableModel(
        1, 0,
        lambda alpha, t: np.ones((t.size, 1)),
        lambda alpha, t: np.zeros((t.size, 1, 0)),
        name="constant",
    )


def line_model():
    return SeparableModel(
        2, 0,
        lambda alpha, t: np.column_stack([np.ones_like(t), t]),
        lambda alpha, t: np.zeros((t.size, 2, 0)),
        name="line",
    )


def make_model(family, n_terms=1):
    if family == "exp_sum":
        return exp_sum_model(n_terms)
    if family == "gaussian_peaks":
        return gaussian_peaks_model(n_terms)
    if family == "constant":
        return constant_model()
    if family == "line":
        return line_model()
    raise InvalidInputError(f"unknown model family {family!r}; expected one of {FAMILIES}")
