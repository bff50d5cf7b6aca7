"""Min-max test problems ``min_x max_y F(x, y)`` wrapped as bilevel problems.

Eleven scalable problems on the box ``[-3, 3]`` at both levels with the
identity interaction matrix ``B`` (rectangular when ``d_x != d_y``: it couples
the first ``min(d_x, d_y)`` coordinates). Each one has a closed-form optimum
and the structural property named in `COMMENTS`. The bilevel lower objective
is ``f = -F``.

    1  x'By
    2  x'By + |y|^2 / 2
    3  |x|^2 / 2 + x'By
    4  |x|^2 / 2 + 1[min_j s_j y_j >= 3 - 1e-3],  s = (+1, -1, +1, ...)
    5  |x|^2 / 2 + x'By - |y|^2 / 2
    6  |x-1|^2 / 2 + 2 (x-1)'B(y-1) - |y-1|^2 / 2
    7  |x|^2 / 2 + x'By - |y|^2 / 20
    8  |x-1/2|^2 / 2 + (x-1/2)'B(y+1/2) - |y+1/2|^2
    9  |x|^2 / 2 + x'By - |y|^2 / 2 + sum_j cos(2 pi y_j)
    10 -|x|^2 / 2 + 2 x'By - |y|^2 / 2
    11 x'Hx / 2 + x'By - y'Gy / 2,  H, G log-spaced diagonal
"""
from __future__ import annotations

from functools import partial

import numpy as np

from ..errors import ConfigurationError
from .base import BilevelProblem, Optimum

BOX = 3.0
CORNER_TOLERANCE = 1e-3

COMMENTS = {
    1: "Bilinear",
    2: "Contains bilinear term",
    3: "Bilinear + convex term in x",
    4: "Very large optimal response set",
    5: "Strictly convex-concave",
    6: "Strictly convex-concave",
    7: "Contains bilinear term",
    8: "Strictly convex-concave",
    9: "Multimodal in y",
    10: "Concave in both x and y",
    11: "Ill-conditioned",
}


def _bilinear(X, Y):
    k = min(X.shape[1], Y.shape[1])
    return np.sum(X[:, :k] * Y[:, :k], axis=1)


def _sq(a):
    return np.sum(a * a, axis=1)


def _signs(n):
    return np.where(np.arange(n) % 2 == 0, 1.0, -1.0)


def _log_diag(n, decades):
    if n == 1:
        return np.ones(1)
    return 10.0 ** (decades * np.arange(n) / (n - 1))


def minmax_objective(index, X, Y):
    if index == 1:
        return _bilinear(X, Y)
    if index == 2:
        return _bilinear(X, Y) + 0.5 * _sq(Y)
    if index == 3:
        return 0.5 * _sq(X) + _bilinear(X, Y)
    if index == 4:
        # an alternating-sign corner, off the diagonal the initial means lie on
        corner = np.all(_signs(Y.shape[1]) * Y >= BOX - CORNER_TOLERANCE, axis=1)
        return 0.5 * _sq(X) + corner.astype(float)
    if index == 5:
        return 0.5 * _sq(X) + _bilinear(X, Y) - 0.5 * _sq(Y)
    if index == 6:
        return 0.5 * _sq(X - 1) + 2 * _bilinear(X - 1, Y - 1) - 0.5 * _sq(Y - 1)
    if index == 7:
        return 0.5 * _sq(X) + _bilinear(X, Y) - 0.05 * _sq(Y)
    if index == 8:
        return 0.5 * _sq(X - 0.5) + _bilinear(X - 0.5, Y + 0.5) - _sq(Y + 0.5)
    if index == 9:
        return 0.5 * _sq(X) + _bilinear(X, Y) - 0.5 * _sq(Y) + np.sum(np.cos(2 * np.pi * Y), axis=1)
    if index == 10:
        return -0.5 * _sq(X) + 2 * _bilinear(X, Y) - 0.5 * _sq(Y)
    if index == 11:
        h = _log_diag(X.shape[1], 4.0)
        g = _log_diag(Y.shape[1], 2.0)
        return 0.5 * np.sum(h * X * X, axis=1) + _bilinear(X, Y) - 0.5 * np.sum(g * Y * Y, axis=1)
    raise ConfigurationError(f"unknown WRA index {index}")


def _negated(index, X, Y):
    return -minmax_objective(index, X, Y)


def _optimum(index, d_x, d_y) -> Optimum:
    x = np.zeros(d_x)
    y = np.zeros(d_y)
    F = 0.0
    if index == 2:
        y[:] = BOX
        F = 0.5 * BOX**2 * d_y
    elif index == 4:
        y[:] = BOX * _signs(d_y)
        F = 1.0
    elif index == 6:
        x[:] = 1.0
        y[:] = 1.0
    elif index == 8:
        x[:] = 0.5
        y[:] = -0.5
    elif index == 9:
        F = float(d_y)
    elif index == 10:
        # uncoupled x coordinates are pushed to the boundary
        x[min(d_x, d_y):] = BOX
        F = -0.5 * BOX**2 * max(0, d_x - d_y)
    return Optimum(x=x, y=y, F=F, f=-F)


def make_wra(index: int, d_x: int, d_y: int) -> BilevelProblem:
    if index not in COMMENTS:
        raise ConfigurationError(f"WRA index must be in 1..11, got {index}")
    if d_x < 1 or d_y < 1:
        raise ConfigurationError("WRA dimensions must be positive")
    return BilevelProblem(
        name=f"WRA{index}",
        d_x=d_x,
        d_y=d_y,
        lower_x=np.full(d_x, -BOX),
        upper_x=np.full(d_x, BOX),
        lower_y=np.full(d_y, -BOX),
        upper_y=np.full(d_y, BOX),
        F=partial(minmax_objective, index),
        f=partial(_negated, index),
        optimum=_optimum(index, d_x, d_y),
        comment=COMMENTS[index],
        expected_failure=index == 4,
        tags={"suite": "wra", "index": index, "minmax": True},
    )
