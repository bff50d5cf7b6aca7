"""Quadratic bilevel problem with a closed-form optimal response.

``F(x, y) = |x|^2 + |y - c x_head|^2`` and ``f(x, y) = |y - c x_head|^2``
where ``x_head`` is the first ``min(d_x, d_y)`` coordinates of ``x``,
zero-padded to ``d_y``. Then ``y*(x) = c x_head``, ``Phi(x) = |x|^2`` and the
optimum is ``x* = 0, y* = 0, F* = f* = 0``. With ``c = 0`` the lower level does
not depend on ``x``.
"""
from __future__ import annotations

from functools import partial

import numpy as np

from ..errors import ConfigurationError
from .base import BilevelProblem, Optimum

BOX = 5.0


def x_head(X, d_y: int) -> np.ndarray:
    X = np.atleast_2d(X)
    k = min(X.shape[1], d_y)
    head = np.zeros((X.shape[0], d_y))
    head[:, :k] = X[:, :k]
    return head


def optimal_response(x, d_y: int, conflict: float) -> np.ndarray:
    return conflict * x_head(x, d_y)[0]


def _lower(conflict, X, Y):
    r = Y - conflict * x_head(X, Y.shape[1])
    return np.sum(r * r, axis=1)


def _upper(conflict, X, Y):
    return np.sum(X * X, axis=1) + _lower(conflict, X, Y)


def make_synthetic_quadratic(d_x: int, d_y: int, conflict: float = 1.0) -> BilevelProblem:
    if d_x < 1 or d_y < 1:
        raise ConfigurationError("dimensions must be positive")
    return BilevelProblem(
        name=f"QUAD(c={conflict:g})",
        d_x=d_x,
        d_y=d_y,
        lower_x=np.full(d_x, -BOX),
        upper_x=np.full(d_x, BOX),
        lower_y=np.full(d_y, -BOX),
        upper_y=np.full(d_y, BOX),
        F=partial(_upper, float(conflict)),
        f=partial(_lower, float(conflict)),
        optimum=Optimum(x=np.zeros(d_x), y=np.zeros(d_y), F=0.0, f=0.0),
        comment="closed-form optimal response",
        tags={"suite": "synthetic", "conflict": float(conflict)},
    )
