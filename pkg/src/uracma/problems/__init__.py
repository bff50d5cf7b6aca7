from .base import (
    BilevelProblem,
    FeMeter,
    Optimum,
    eval_lower,
    eval_lower_batch,
    eval_upper,
    eval_upper_batch,
    mirror,
)
from .smd import make_smd
from .synthetic import make_synthetic_quadratic
from .wra import make_wra

from ..errors import ConfigurationError


def make_problem(suite: str, index: int, d_x: int, d_y: int, conflict: float = 1.0) -> BilevelProblem:
    """Look up a problem by suite name (``smd``, ``wra`` or ``synthetic``)."""
    if suite == "smd":
        return make_smd(index, d_x, d_y)
    if suite == "wra":
        return make_wra(index, d_x, d_y)
    if suite == "synthetic":
        return make_synthetic_quadratic(d_x, d_y, conflict)
    raise ConfigurationError(f"unknown suite {suite!r}")


__all__ = [
    "BilevelProblem",
    "FeMeter",
    "Optimum",
    "eval_lower",
    "eval_lower_batch",
    "eval_upper",
    "eval_upper_batch",
    "make_problem",
    "make_smd",
    "make_synthetic_quadratic",
    "make_wra",
    "mirror",
]
