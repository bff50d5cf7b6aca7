"""Rank-based CMA-ES primitives.

A `SearchDistribution` is an immutable value: every operation returns a new
instance. The update uses only the ranking of the candidates, never the raw
objective values, so the whole module is invariant under strictly increasing
transformations of the objective.

Typical loop::

    dist = init_distribution(lower, upper, rng)
    while check_termination(dist, 1e-12, 1e7) is Termination.CONTINUE:
        X = sample_population(dist, lam, rng)
        dist = update_distribution(dist, rank_population(X, [f(x) for x in X]))
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from functools import cached_property, lru_cache

import numpy as np

from .errors import ConfigurationError, NumericalError

__all__ = [
    "SearchDistribution",
    "RankedPopulation",
    "StrategyParameters",
    "Termination",
    "default_popsize",
    "strategy_parameters",
    "init_distribution",
    "sample_population",
    "rank_population",
    "update_distribution",
    "max_coord_std",
    "condition_number",
    "check_termination",
]


def default_popsize(dim: int) -> int:
    """``floor(4 + 3 ln dim)``."""
    if dim < 1:
        raise ConfigurationError(f"dimension must be positive, got {dim}")
    return int(math.floor(4 + 3 * math.log(dim)))


@dataclass(frozen=True)
class StrategyParameters:
    """Static learning rates of the standard (non-active) CMA-ES."""

    dim: int
    popsize: int
    mu: int
    weights: np.ndarray
    mueff: float
    cs: float
    cc: float
    c1: float
    cmu: float
    damps: float
    chi_n: float


@lru_cache(maxsize=None)
def strategy_parameters(dim: int, popsize: int) -> StrategyParameters:
    if popsize < 2:
        raise ConfigurationError(f"population size must be >= 2, got {popsize}")
    n = dim
    mu = popsize // 2
    w = math.log((popsize + 1) / 2) - np.log(np.arange(1, mu + 1))
    w = w / w.sum()
    w.setflags(write=False)
    mueff = 1.0 / float(np.sum(w**2))
    cc = (4 + mueff / n) / (n + 4 + 2 * mueff / n)
    cs = (mueff + 2) / (n + mueff + 5)
    c1 = 2 / ((n + 1.3) ** 2 + mueff)
    cmu = min(1 - c1, 2 * (mueff - 2 + 1 / mueff) / ((n + 2) ** 2 + mueff))
    damps = 1 + 2 * max(0.0, math.sqrt((mueff - 1) / (n + 1)) - 1) + cs
    chi_n = math.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n**2))
    return StrategyParameters(n, popsize, mu, w, mueff, cs, cc, c1, cmu, damps, chi_n)


@dataclass(frozen=True)
class SearchDistribution:
    """Normal search distribution ``N(mean, step_size**2 * covariance)``.

    ``iteration`` counts completed updates.
    """

    mean: np.ndarray
    covariance: np.ndarray
    step_size: float
    path_sigma: np.ndarray
    path_c: np.ndarray
    iteration: int = 0

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @cached_property
    def eigen(self) -> tuple[np.ndarray, np.ndarray]:
        """Ascending eigenvalues and eigenvectors of `covariance`, computed once."""
        return _eigh(self.covariance)

    @property
    def effective_covariance(self) -> np.ndarray:
        return self.step_size**2 * self.covariance

    def with_fresh_paths(self) -> "SearchDistribution":
        """Copy keeping mean, covariance and step-size; paths and counter reset."""
        return replace(
            self,
            path_sigma=np.zeros(self.dim),
            path_c=np.zeros(self.dim),
            iteration=0,
        )


@dataclass(frozen=True)
class RankedPopulation:
    candidates: np.ndarray
    objective_values: np.ndarray
    ranks: np.ndarray

    @property
    def size(self) -> int:
        return self.candidates.shape[0]

    def best_index(self) -> int:
        return int(self.ranks[0])


def _check_bounds(lower, upper) -> tuple[np.ndarray, np.ndarray]:
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if lower.ndim != 1 or lower.shape != upper.shape or lower.size == 0:
        raise ConfigurationError("bounds must be 1-D arrays of equal, nonzero length")
    if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
        raise ConfigurationError("bounds must be finite")
    if np.any(lower >= upper):
        raise ConfigurationError(f"need lower < upper elementwise, got {lower} and {upper}")
    return lower, upper


def init_distribution(lower_bounds, upper_bounds, rng: np.random.Generator) -> SearchDistribution:
    """Initial distribution over a box.

    The mean is ``lower + u * (upper - lower)`` with ONE scalar ``u ~ U(0, 1)``
    shared by all coordinates; the covariance is ``diag((upper - lower) / 4)**2``
    and the step-size is 1.
    """
    lower, upper = _check_bounds(lower_bounds, upper_bounds)
    u01 = rng.random()
    width = upper - lower
    n = lower.size
    return SearchDistribution(
        mean=lower + u01 * width,
        covariance=np.diag((width / 4) ** 2),
        step_size=1.0,
        path_sigma=np.zeros(n),
        path_c=np.zeros(n),
        iteration=0,
    )


def _eigh(covariance: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    try:
        evals, evecs = np.linalg.eigh(covariance)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed: {exc}") from exc
    if not np.isfinite(evals).all() or evals[0] <= 0:
        raise NumericalError(
            f"covariance lost positive definiteness: eigenvalues in "
            f"[{evals[0]:.3e}, {evals[-1]:.3e}], diagonal {np.diag(covariance)}"
        )
    return evals, evecs


def sample_population(dist: SearchDistribution, lam: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``lam`` i.i.d. points as rows of a ``(lam, dim)`` array.

    Points are not clipped; box feasibility is handled at evaluation time.
    """
    if lam < 1:
        raise ConfigurationError(f"lam must be >= 1, got {lam}")
    evals, evecs = dist.eigen
    z = rng.standard_normal((lam, dist.dim))
    return dist.mean + dist.step_size * (z * np.sqrt(evals)) @ evecs.T


def rank_population(candidates, objective_values) -> RankedPopulation:
    """Sort indices ascending by value; ties keep sampling order."""
    candidates = np.atleast_2d(np.asarray(candidates, dtype=float))
    values = np.asarray(objective_values, dtype=float)
    if values.shape != (candidates.shape[0],):
        raise ConfigurationError("one objective value per candidate is required")
    ranks = np.argsort(values, kind="stable")
    return RankedPopulation(candidates, values, ranks)


def update_distribution(dist: SearchDistribution, population: RankedPopulation) -> SearchDistribution:
    """One standard CMA-ES generation update from a ranked population.

    Weighted recombination of the best half, cumulative step-size adaptation,
    rank-one and rank-mu covariance update. Objective values are never read.
    """
    lam = population.size
    if lam < 4:
        raise ConfigurationError(f"update needs at least 4 candidates, got {lam}")
    X = population.candidates
    if X.shape[1] != dist.dim:
        raise ConfigurationError("candidate dimension does not match distribution")
    if not np.isfinite(X).all():
        raise NumericalError("non-finite candidate coordinates")

    sp = strategy_parameters(dist.dim, lam)
    n = dist.dim
    sigma = dist.step_size
    selected = X[population.ranks[: sp.mu]]
    ys = (selected - dist.mean) / sigma
    y_w = sp.weights @ ys
    mean = dist.mean + sigma * y_w

    evals, evecs = dist.eigen
    c_inv_sqrt_yw = evecs @ ((evecs.T @ y_w) / np.sqrt(evals))

    ps = (1 - sp.cs) * dist.path_sigma + math.sqrt(sp.cs * (2 - sp.cs) * sp.mueff) * c_inv_sqrt_yw
    t = dist.iteration + 1
    ps_norm = float(np.linalg.norm(ps))
    h_sigma = ps_norm / math.sqrt(1 - (1 - sp.cs) ** (2 * t)) / sp.chi_n < 1.4 + 2 / (n + 1)
    pc = (1 - sp.cc) * dist.path_c
    if h_sigma:
        pc = pc + math.sqrt(sp.cc * (2 - sp.cc) * sp.mueff) * y_w

    rank_mu = (ys.T * sp.weights) @ ys
    decay = 1 - sp.c1 - sp.cmu
    if not h_sigma:
        decay += sp.c1 * sp.cc * (2 - sp.cc)
    C = decay * dist.covariance + sp.c1 * np.outer(pc, pc) + sp.cmu * rank_mu
    C = (C + C.T) / 2

    new_sigma = sigma * math.exp((sp.cs / sp.damps) * (ps_norm / sp.chi_n - 1))
    if not (np.isfinite(C).all() and np.isfinite(mean).all() and math.isfinite(new_sigma) and new_sigma > 0):
        raise NumericalError("non-finite distribution after update")
    return SearchDistribution(mean, C, new_sigma, ps, pc, dist.iteration + 1)


def max_coord_std(covariance, step_size: float) -> float:
    """``step_size * max_l sqrt(C[l, l])``."""
    diag = np.diag(np.asarray(covariance, dtype=float))
    if (diag < 0).any():
        raise NumericalError(f"negative diagonal element in covariance: {diag}")
    return float(step_size * math.sqrt(diag.max()))


def condition_number(covariance) -> float:
    if isinstance(covariance, SearchDistribution):
        evals = covariance.eigen[0]
    else:
        evals = np.linalg.eigvalsh(np.asarray(covariance, dtype=float))
    if evals[0] <= 0:
        raise NumericalError(f"covariance is not positive definite (min eigenvalue {evals[0]:.3e})")
    return float(evals[-1] / evals[0])


class Termination(str, enum.Enum):
    CONTINUE = "continue"
    STD_FLOOR = "std_floor"
    ILL_CONDITIONED = "ill_conditioned"


def check_termination(dist: SearchDistribution, v_min: float, cond_max: float) -> Termination:
    """Coordinate-std floor (on ``step_size**2 * C``) wins over conditioning (on ``C``)."""
    if max_coord_std(dist.covariance, dist.step_size) < v_min:
        return Termination.STD_FLOOR
    if condition_number(dist) > cond_max:
        return Termination.ILL_CONDITIONED
    return Termination.CONTINUE
