"""Box-constrained bilevel problems, mirroring and function-evaluation metering."""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..errors import ConfigurationError, EvaluationError

# Objectives are vectorised: (n, d_x), (n, d_y) -> (n,)
Objective = Callable[[np.ndarray, np.ndarray], np.ndarray]


def mirror(q, lower, upper) -> np.ndarray:
    """Reflect ``q`` into ``[lower, upper]`` coordinate-wise.

    ``upper - |mod(q - lower, 2 w) - w|`` with ``w = upper - lower`` and a
    floored modulo (``np.mod`` keeps the sign of the divisor).
    """
    q = np.asarray(q, dtype=float)
    if not np.isfinite(q).all():
        raise EvaluationError(f"cannot mirror non-finite point {q}")
    # feasible inputs are returned bit-exact; the formula can round by one ulp
    inside = (q >= lower) & (q <= upper)
    if inside.all():
        return q
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    width = upper - lower
    out = upper - np.abs(np.mod(q - lower, 2 * width) - width)
    # rounding in the reflection can land an ulp outside the box
    out = np.clip(out, lower, upper)
    return np.where(inside, q, out)


class FeMeter:
    """Thread-safe upper/lower function-evaluation counters with a shared budget.

    The budget is soft: callers check `exhausted` before starting a batch, so
    the total may overshoot by at most one batch.
    """

    def __init__(self, budget: int = 10_000_000):
        if budget <= 0:
            raise ConfigurationError(f"budget must be positive, got {budget}")
        self.budget = int(budget)
        self._upper = 0
        self._lower = 0
        self._lock = threading.Lock()

    @property
    def upper_count(self) -> int:
        return self._upper

    @property
    def lower_count(self) -> int:
        return self._lower

    @property
    def total(self) -> int:
        return self._upper + self._lower

    @property
    def remaining(self) -> int:
        return max(0, self.budget - self.total)

    @property
    def exhausted(self) -> bool:
        return self.total >= self.budget

    def add_upper(self, n: int = 1) -> None:
        with self._lock:
            self._upper += n

    def add_lower(self, n: int = 1) -> None:
        with self._lock:
            self._lower += n

    def snapshot(self) -> tuple[int, int]:
        with self._lock:
            return self._upper, self._lower

    def __repr__(self) -> str:
        return f"FeMeter(upper={self._upper}, lower={self._lower}, budget={self.budget})"


@dataclass(frozen=True)
class Optimum:
    x: np.ndarray
    y: np.ndarray
    F: float
    f: float


@dataclass(frozen=True)
class BilevelProblem:
    """``min_x F(x, y*_x)`` with ``y*_x in argmin_y f(x, y)`` over boxes.

    ``F`` and ``f`` take row-stacked points and return one value per row;
    they must be picklable (module-level functions or partials) so problems
    can be shipped to worker processes.
    """

    name: str
    d_x: int
    d_y: int
    lower_x: np.ndarray
    upper_x: np.ndarray
    lower_y: np.ndarray
    upper_y: np.ndarray
    F: Objective
    f: Objective
    optimum: Optional[Optimum] = None
    comment: str = ""
    expected_failure: bool = False
    tags: dict = field(default_factory=dict)

    def __post_init__(self):
        for lo, up, d, level in (
            (self.lower_x, self.upper_x, self.d_x, "x"),
            (self.lower_y, self.upper_y, self.d_y, "y"),
        ):
            if lo.shape != (d,) or up.shape != (d,):
                raise ConfigurationError(f"{self.name}: {level}-bounds must have length {d}")
            if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(up))) or np.any(lo >= up):
                raise ConfigurationError(f"{self.name}: invalid {level}-box [{lo}, {up}]")

    def mirror_x(self, x) -> np.ndarray:
        return mirror(x, self.lower_x, self.upper_x)

    def mirror_y(self, y) -> np.ndarray:
        return mirror(y, self.lower_y, self.upper_y)


def _checked(values: np.ndarray, X: np.ndarray, Y: np.ndarray, which: str) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    bad = ~np.isfinite(values)
    if bad.any():
        i = int(np.argmax(bad))
        raise EvaluationError(f"{which} is non-finite at x={X[i]}, y={Y[i]}")
    return values


def _batch(problem: BilevelProblem, X, Y) -> tuple[np.ndarray, np.ndarray]:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    nx, ny = X.shape[0], Y.shape[0]
    if X.shape[1] != problem.d_x or Y.shape[1] != problem.d_y or (nx != ny and 1 not in (nx, ny)):
        raise ConfigurationError(
            f"{problem.name}: got shapes {X.shape}, {Y.shape} for d_x={problem.d_x}, d_y={problem.d_y}"
        )
    # mirror before broadcasting so a shared row is reflected once
    X, Y = problem.mirror_x(X), problem.mirror_y(Y)
    n = max(nx, ny)
    if nx != n:
        X = np.broadcast_to(X, (n, X.shape[1]))
    elif ny != n:
        Y = np.broadcast_to(Y, (n, Y.shape[1]))
    return X, Y


def eval_upper_batch(problem: BilevelProblem, X, Y, meter: FeMeter | None = None) -> np.ndarray:
    """F at the mirrored images of each row pair; counts one upper FE per row."""
    Xm, Ym = _batch(problem, X, Y)
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        raw = problem.F(Xm, Ym)
    values = _checked(raw, Xm, Ym, "F")
    if meter is not None:
        meter.add_upper(values.shape[0])
    return values


def eval_lower_batch(problem: BilevelProblem, X, Y, meter: FeMeter | None = None) -> np.ndarray:
    """f at the mirrored images of each row pair; counts one lower FE per row."""
    Xm, Ym = _batch(problem, X, Y)
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        raw = problem.f(Xm, Ym)
    values = _checked(raw, Xm, Ym, "f")
    if meter is not None:
        meter.add_lower(values.shape[0])
    return values


def eval_upper(problem: BilevelProblem, x, y, meter: FeMeter | None = None) -> float:
    return float(eval_upper_batch(problem, np.atleast_2d(x), np.atleast_2d(y), meter)[0])


def eval_lower(problem: BilevelProblem, x, y, meter: FeMeter | None = None) -> float:
    return float(eval_lower_batch(problem, np.atleast_2d(x), np.atleast_2d(y), meter)[0])
