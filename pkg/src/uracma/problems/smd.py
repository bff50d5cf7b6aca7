"""Unconstrained SMD bilevel test problems SMD1-SMD8 (Sinha, Malo & Deb, 2014).

Variables are split as ``x = (xu1, xu2)`` with sizes ``(p, r)`` and
``y = (xl1, xl2)`` with sizes ``(q, r)`` where ``r = d_x // 2``. SMD6 further
splits ``xl1`` into ``q`` plain and ``s`` paired coordinates (``s`` even).

Every problem is built as ``F = F1(xu1) + F2(xl1) + F3(xu2, xl2)`` and
``f = f1(xu1, xu2) + f2(xl1) + f3(xu2, xl2)`` with optimum ``F* = f* = 0``.
"""
from __future__ import annotations

import math
from functools import partial

import numpy as np

from ..errors import ConfigurationError
from .base import BilevelProblem, Optimum

# Open ends of the published boxes, e.g. xl2 in (-pi/2, pi/2) and (0, e].
_TAN_EDGE = math.pi / 2 - 1e-6
_LOG_EDGE = 1e-10

COMMENTS = {
    1: "Cooperative, convex at both levels",
    2: "Conflicting, convex at both levels",
    3: "Cooperative, convex u.l., multimodal l.l.",
    4: "Conflicting, convex u.l., multimodal l.l.",
    5: "Conflicting, convex u.l., Rosenbrock l.l.",
    6: "Unique u.l. y*, infinite l.l. solution set",
    7: "Conflicting, multimodal u.l., convex l.l.",
    8: "Conflicting, multimodal u.l., Rosenbrock l.l.",
}


def split_sizes(index: int, d_x: int, d_y: int) -> dict[str, int]:
    r = d_x // 2
    p = d_x - r
    sizes = {"p": p, "r": r, "q": d_y - r, "s": 0}
    if index == 6:
        m = d_y - r
        q = m // 2
        if (m - q) % 2:
            q += 1
        sizes["q"], sizes["s"] = q, m - q
    return sizes


def _parts(X, Y, p, r):
    return X[:, :p], X[:, p:p + r], Y[:, : Y.shape[1] - r], Y[:, Y.shape[1] - r:]


def _sq(a):
    return np.sum(a * a, axis=1)


def _rosen(a):
    if a.shape[1] < 2:
        return np.zeros(a.shape[0])
    return np.sum((a[:, 1:] - a[:, :-1] ** 2) ** 2 + (a[:, :-1] - 1) ** 2, axis=1)


def _rastrigin_shift(a):
    return a.shape[1] + np.sum(a * a - np.cos(2 * np.pi * a), axis=1)


def _griewank_like(a):
    i = np.arange(1, a.shape[1] + 1)
    return 1 + _sq(a) / 400 - np.prod(np.cos(a / np.sqrt(i)), axis=1)


def _ackley(a):
    p = a.shape[1]
    return (
        20 + math.e
        - 20 * np.exp(-0.2 * np.sqrt(_sq(a) / p))
        - np.exp(np.sum(np.cos(2 * np.pi * a), axis=1) / p)
    )


def _upper(index, p, r, q, X, Y):
    xu1, xu2, xl1, xl2 = _parts(X, Y, p, r)
    if index == 1:
        return _sq(xu1) + _sq(xl1) + _sq(xu2) + _sq(xu2 - np.tan(xl2))
    if index == 2:
        return _sq(xu1) - _sq(xl1) + _sq(xu2) - _sq(xu2 - np.log(xl2))
    if index == 3:
        return _sq(xu1) + _sq(xl1) + _sq(xu2) + _sq(xu2**2 - np.tan(xl2))
    if index == 4:
        return _sq(xu1) - _sq(xl1) + _sq(xu2) - _sq(np.abs(xu2) - np.log1p(xl2))
    if index == 5:
        return _sq(xu1) - _rosen(xl1) + _sq(xu2) - _sq(np.abs(xu2) - xl2**2)
    if index == 6:
        return _sq(xu1) - _sq(xl1[:, :q]) + _sq(xl1[:, q:]) + _sq(xu2) - _sq(xu2 - xl2)
    if index == 7:
        return _griewank_like(xu1) - _sq(xl1) + _sq(xu2) - _sq(xu2 - np.log(xl2))
    if index == 8:
        return _ackley(xu1) - _rosen(xl1) + _sq(xu2) - _sq(xu2 - xl2**3)
    raise ConfigurationError(f"unknown SMD index {index}")


def _lower(index, p, r, q, X, Y):
    xu1, xu2, xl1, xl2 = _parts(X, Y, p, r)
    if index == 1:
        return _sq(xu1) + _sq(xl1) + _sq(xu2 - np.tan(xl2))
    if index == 2:
        return _sq(xu1) + _sq(xl1) + _sq(xu2 - np.log(xl2))
    if index == 3:
        return _sq(xu1) + _rastrigin_shift(xl1) + _sq(xu2**2 - np.tan(xl2))
    if index == 4:
        return _sq(xu1) + _rastrigin_shift(xl1) + _sq(np.abs(xu2) - np.log1p(xl2))
    if index == 5:
        return _sq(xu1) + _rosen(xl1) + _sq(np.abs(xu2) - xl2**2)
    if index == 6:
        paired = xl1[:, q:]
        return _sq(xu1) + _sq(xl1[:, :q]) + _sq(paired[:, 1::2] - paired[:, 0::2]) + _sq(xu2 - xl2)
    if index == 7:
        return np.sum(xu1**3, axis=1) + _sq(xl1) + _sq(xu2 - np.log(xl2))
    if index == 8:
        return np.sum(np.abs(xu1), axis=1) + _rosen(xl1) + _sq(xu2 - xl2**3)
    raise ConfigurationError(f"unknown SMD index {index}")


def _boxes(index, p, r, q_total):
    """(lower_x, upper_x, lower_y, upper_y) with q_total = d_y - r."""
    xu2 = {2: (-5.0, 1.0), 4: (-1.0, 1.0), 7: (-5.0, 1.0)}.get(index, (-5.0, 10.0))
    xl2 = {
        1: (-_TAN_EDGE, _TAN_EDGE),
        2: (_LOG_EDGE, math.e),
        3: (-_TAN_EDGE, _TAN_EDGE),
        4: (0.0, math.e),
        7: (_LOG_EDGE, math.e),
    }.get(index, (-5.0, 10.0))
    lower_x = np.concatenate([np.full(p, -5.0), np.full(r, xu2[0])])
    upper_x = np.concatenate([np.full(p, 10.0), np.full(r, xu2[1])])
    lower_y = np.concatenate([np.full(q_total, -5.0), np.full(r, xl2[0])])
    upper_y = np.concatenate([np.full(q_total, 10.0), np.full(r, xl2[1])])
    return lower_x, upper_x, lower_y, upper_y


def _optimal_y(index, q_total, r):
    xl1 = np.ones(q_total) if index in (5, 8) else np.zeros(q_total)
    xl2 = np.ones(r) if index in (2, 7) else np.zeros(r)
    return np.concatenate([xl1, xl2])


def make_smd(index: int, d_x: int, d_y: int) -> BilevelProblem:
    """SMD problem ``index`` in ``(d_x + d_y)`` dimensions (requires ``d_x <= d_y``)."""
    if index not in COMMENTS:
        raise ConfigurationError(f"SMD index must be in 1..8, got {index}")
    if d_x < 1 or d_y < 1:
        raise ConfigurationError("SMD dimensions must be positive")
    if d_x > d_y:
        raise ConfigurationError(f"SMD requires d_x <= d_y, got {d_x} > {d_y}")
    sz = split_sizes(index, d_x, d_y)
    p, r, q = sz["p"], sz["r"], sz["q"]
    q_total = d_y - r
    if index in (5, 8) and q_total < 2:
        raise ConfigurationError(f"SMD{index} needs at least two Rosenbrock coordinates")
    lower_x, upper_x, lower_y, upper_y = _boxes(index, p, r, q_total)
    opt = Optimum(x=np.zeros(d_x), y=_optimal_y(index, q_total, r), F=0.0, f=0.0)
    return BilevelProblem(
        name=f"SMD{index}",
        d_x=d_x,
        d_y=d_y,
        lower_x=lower_x,
        upper_x=upper_x,
        lower_y=lower_y,
        upper_y=upper_y,
        F=partial(_upper, index, p, r, q),
        f=partial(_lower, index, p, r, q),
        optimum=opt,
        comment=COMMENTS[index],
        expected_failure=index == 6,
        tags={"suite": "smd", "index": index, **sz},
    )
