"""Upper-level ranking approximation.

`ura_evaluate` turns a batch of upper-level candidates into approximate
upper-level values ``F(x_i, y_hat_i)`` whose *ranking* is what the upper
CMA-ES consumes. Lower-level solvers are warm-started from a cache of
distribution configurations, refined in short rounds of CMA-ES (`lower_round`)
and stopped as soon as the ranking stabilises in Kendall's tau. Afterwards the
cache is rewritten from the solvers that used it (`post_process`).
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .cma import (
    SearchDistribution,
    condition_number,
    default_popsize,
    init_distribution,
    max_coord_std,
    rank_population,
    sample_population,
    update_distribution,
)
from .errors import ConfigurationError, EvaluationError
from .problems.base import BilevelProblem, FeMeter, eval_lower_batch, eval_upper_batch

log = logging.getLogger(__name__)

# Scores are kept on a 1e-12 grid so that repeated +/- steps hit the
# threshold exactly (1 - 18 * 0.05 must equal 0.1, not 0.0999...).
_SCORE_DIGITS = 12


class WarmStartMode(str, enum.Enum):
    FULL = "full"
    SINGLE_CONFIG = "single_config"
    SINGLE_CONFIG_REFRESH = "single_config_refresh"


@dataclass(frozen=True)
class UraParams:
    """Hyperparameters of the ranking approximation and the lower-level rounds.

    ``n_omega`` and ``lambda_y`` default to ``3 * lambda_x`` and
    ``floor(4 + 3 ln d_y)``; call `resolved` to fill them in.
    """

    tau_threshold: float = 0.7
    p_threshold: float = 0.1
    p_plus: float = 0.4
    p_minus: float = 0.05
    n_omega: Optional[int] = None
    c_max: int = 1
    t_min: int = 10
    v_min_y: float = 1e-4
    cond_max_y: float = 1e7
    lambda_y: Optional[int] = None
    max_rounds: int = 50
    stall_rounds: int = 20
    stall_tolerance: float = 1e-6
    early_stopping_enabled: bool = True
    warm_starting_mode: WarmStartMode = WarmStartMode.FULL

    def __post_init__(self):
        if not -1 < self.tau_threshold <= 1:
            raise ConfigurationError(f"tau_threshold must be in (-1, 1], got {self.tau_threshold}")
        for name in ("p_threshold", "p_plus", "p_minus"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ConfigurationError(f"{name} must be in (0, 1], got {v}")
        if self.c_max < 1 or self.max_rounds < 1 or self.t_min < 0:
            raise ConfigurationError("c_max and max_rounds must be >= 1, t_min >= 0")
        if self.v_min_y <= 0 or self.cond_max_y < 1:
            raise ConfigurationError("v_min_y must be positive and cond_max_y >= 1")
        if self.n_omega is not None and self.n_omega < 1:
            raise ConfigurationError(f"n_omega must be positive, got {self.n_omega}")
        if self.lambda_y is not None and self.lambda_y < 4:
            raise ConfigurationError(f"lambda_y must be >= 4, got {self.lambda_y}")
        object.__setattr__(self, "warm_starting_mode", WarmStartMode(self.warm_starting_mode))

    def resolved(self, lambda_x: int, d_y: int) -> "UraParams":
        n_omega = self.n_omega if self.n_omega is not None else 3 * lambda_x
        if self.warm_starting_mode is not WarmStartMode.FULL:
            n_omega = 1
        lambda_y = self.lambda_y if self.lambda_y is not None else max(4, default_popsize(d_y))
        return replace(self, n_omega=n_omega, lambda_y=lambda_y)


@dataclass(frozen=True)
class CacheEntry:
    """Inheritable lower-level configuration: incumbent ``y``, distribution, score."""

    y: np.ndarray
    omega: SearchDistribution
    p: float = 1.0


@dataclass(frozen=True)
class LowerSolverState:
    """One lower-level CMA-ES attached to a fixed upper candidate ``x``.

    ``f_y == f(x, y_hat)`` always holds. ``omega.iteration`` is the solver's
    iteration counter and ``terminated`` the flag set by the covariance
    floor / condition-number reset.
    """

    x: np.ndarray
    y_hat: np.ndarray
    f_y: float
    omega: SearchDistribution
    k_min: int
    terminated: bool = False
    inner_iterations: int = 0
    stalled_rounds: int = 0
    frozen: bool = False


def refresh_entry(lower, upper, rng: np.random.Generator) -> CacheEntry:
    omega = init_distribution(lower, upper, rng)
    return CacheEntry(y=omega.mean.copy(), omega=omega, p=1.0)


def new_cache(n_omega: int, lower, upper, rng: np.random.Generator) -> list[CacheEntry]:
    return [refresh_entry(lower, upper, rng) for _ in range(n_omega)]


def warm_start(
    x_batch, cache: Sequence[CacheEntry], problem: BilevelProblem, meter: FeMeter
) -> tuple[list[LowerSolverState], np.ndarray]:
    """Select, for every candidate, the cache entry with the lowest ``f(x_i, y_k)``.

    Costs ``len(x_batch) * len(cache)`` lower FEs and ``len(x_batch)`` upper FEs.
    Returns the initialised solver states and the initial values ``F(x_i, y_kmin)``.
    """
    X = np.atleast_2d(np.asarray(x_batch, dtype=float))
    if X.shape[0] == 0 or len(cache) == 0:
        raise ConfigurationError("warm start needs a nonempty batch and cache")
    n, m = X.shape[0], len(cache)
    Yc = np.stack([entry.y for entry in cache])
    try:
        fv = eval_lower_batch(problem, np.repeat(X, m, axis=0), np.tile(Yc, (n, 1)), meter)
    except EvaluationError as exc:
        raise EvaluationError(f"warm start: {exc}") from exc
    fv = fv.reshape(n, m)
    k_min = np.argmin(fv, axis=1)  # first index on ties
    states = [
        LowerSolverState(
            x=X[i].copy(),
            y_hat=cache[k].y.copy(),
            f_y=float(fv[i, k]),
            omega=cache[k].omega.with_fresh_paths(),
            k_min=int(k),
        )
        for i, k in enumerate(k_min)
    ]
    phi0 = eval_upper_batch(problem, X, Yc[k_min], meter)
    return states, phi0


def covariance_floor(covariance, step_size: float, v_min_y: float) -> np.ndarray:
    """Scale coordinates whose std ``step_size * sqrt(C_ll)`` is below ``v_min_y`` up to it.

    Returns ``D C D`` with ``D_ll = max(1, v_min_y / (step_size sqrt(C_ll)))``;
    correlations are untouched.
    """
    C = np.asarray(covariance, dtype=float)
    d = np.maximum(1.0, v_min_y / (step_size * np.sqrt(np.diag(C))))
    return C * np.outer(d, d)


def lower_round(
    state: LowerSolverState,
    params: UraParams,
    problem: BilevelProblem,
    rng: np.random.Generator,
    meter: FeMeter,
) -> LowerSolverState:
    """Run the lower CMA-ES until ``c_max`` accepted improvements or termination.

    A batch whose best value is ``<= f_y`` replaces the incumbent. After each
    update the covariance is floored (once ``t' >= t_min``) or reset to its
    value at entry when its condition number exceeds ``cond_max_y``; either
    event ends the round. A round also ends early when the FE budget is spent.
    """
    if params.lambda_y is None:
        raise ConfigurationError("call UraParams.resolved() before running rounds")
    omega = state.omega
    cov_init, sigma_init = omega.covariance, omega.step_size
    y_hat, f_y = state.y_hat, state.f_y
    x_row = state.x[None, :]
    c = 0
    h = False
    inner = 0
    while c < params.c_max and not h:
        if meter.exhausted:
            break
        t_prime = omega.iteration
        Y = sample_population(omega, params.lambda_y, rng)
        fv = eval_lower_batch(problem, x_row, Y, meter)
        k = int(np.argmin(fv))
        if fv[k] <= f_y:
            f_y = float(fv[k])
            y_hat = problem.mirror_y(Y[k])
            c += 1
        omega = update_distribution(omega, rank_population(Y, fv))
        if max_coord_std(omega.covariance, omega.step_size) < params.v_min_y and t_prime >= params.t_min:
            omega = replace(omega, covariance=covariance_floor(omega.covariance, omega.step_size, params.v_min_y))
            h = True
        if condition_number(omega) > params.cond_max_y:
            omega = replace(omega, covariance=cov_init, step_size=sigma_init)
            h = True
        inner += 1
    return replace(
        state,
        y_hat=y_hat,
        f_y=f_y,
        omega=omega,
        terminated=h,
        inner_iterations=state.inner_iterations + inner,
    )


def kendall_tau_b(a, b) -> tuple[float, bool]:
    """Kendall's tau-b and a flag that is True when it is undefined (returned as 0)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise ConfigurationError("kendall_tau needs two 1-D sequences of equal length >= 2")
    iu = np.triu_indices(a.size, k=1)
    sa = np.sign(a[:, None] - a[None, :])[iu]
    sb = np.sign(b[:, None] - b[None, :])[iu]
    untied_a = int(np.count_nonzero(sa))
    untied_b = int(np.count_nonzero(sb))
    if untied_a == 0 or untied_b == 0:
        return 0.0, True
    s = int(np.sum(sa * sb))
    return s / math.sqrt(untied_a * untied_b), False


def kendall_tau(a, b) -> float:
    return kendall_tau_b(a, b)[0]


def post_process(
    cache: Sequence[CacheEntry],
    states: Sequence[LowerSolverState],
    phi,
    params: UraParams,
    lower,
    upper,
    rng: np.random.Generator,
) -> list[CacheEntry]:
    """Rewrite used cache entries, update scores and refresh decayed entries.

    For each selected entry the solver with the smallest ``phi`` among those
    that selected it donates its ``(y_hat, omega)``. Selected scores gain
    ``p_plus`` (capped at 1), unselected ones lose ``p_minus``, and entries
    falling below ``p_threshold`` are re-initialised over the lower box.
    """
    phi = np.asarray(phi, dtype=float)
    new = list(cache)
    k_mins = np.array([s.k_min for s in states])
    selected = set(int(k) for k in np.unique(k_mins))
    for k in sorted(selected):
        members = np.flatnonzero(k_mins == k)
        winner = states[int(members[np.argmin(phi[members])])]
        p = round(min(cache[k].p + params.p_plus, 1.0), _SCORE_DIGITS)
        new[k] = CacheEntry(y=winner.y_hat.copy(), omega=winner.omega, p=p)
    for k in range(len(new)):
        if k not in selected:
            new[k] = replace(new[k], p=round(new[k].p - params.p_minus, _SCORE_DIGITS))
    refresh_all = params.warm_starting_mode is WarmStartMode.SINGLE_CONFIG_REFRESH
    for k in range(len(new)):
        if refresh_all or new[k].p < params.p_threshold:
            new[k] = refresh_entry(lower, upper, rng)
    return new


@dataclass
class UraDiagnostics:
    rounds: int = 0
    taus: list = field(default_factory=list)
    degenerate_taus: int = 0
    stop_reason: str = ""
    budget_exhausted: bool = False
    lower_fes: int = 0
    upper_fes: int = 0
    inner_iterations: list = field(default_factory=list)
    k_min: list = field(default_factory=list)


@dataclass
class UraResult:
    phi: np.ndarray
    cache: list
    states: list
    diagnostics: UraDiagnostics


def ura_evaluate(
    x_batch,
    cache: Sequence[CacheEntry],
    params: UraParams,
    problem: BilevelProblem,
    rng: np.random.Generator,
    meter: FeMeter,
) -> UraResult:
    """Approximate ``F(x_i, y*_{x_i})`` for a batch, good enough to rank it.

    ``params`` must be resolved and ``len(cache) == params.n_omega``. Each
    candidate's lower solver draws from its own child stream of ``rng``, so
    the result does not depend on the order candidates are processed in.
    """
    X = np.atleast_2d(np.asarray(x_batch, dtype=float))
    if X.shape[0] < 2:
        raise ConfigurationError("ranking approximation needs at least two candidates")
    if params.n_omega is None or params.lambda_y is None:
        raise ConfigurationError("call UraParams.resolved() first")
    if len(cache) != params.n_omega:
        raise ConfigurationError(f"cache has {len(cache)} entries, expected {params.n_omega}")

    upper0, lower0 = meter.snapshot()
    diag = UraDiagnostics()
    states, phi = warm_start(X, cache, problem, meter)
    streams = rng.spawn(X.shape[0])

    for _ in range(params.max_rounds):
        if meter.exhausted:
            diag.stop_reason = "budget"
            break
        if all(s.frozen for s in states):
            diag.stop_reason = "stalled"
            break
        previous_f = [s.f_y for s in states]
        for i, s in enumerate(states):
            if not s.frozen:
                states[i] = lower_round(s, params, problem, streams[i], meter)
        new_phi = eval_upper_batch(problem, X, np.stack([s.y_hat for s in states]), meter)
        for i, s in enumerate(states):
            if s.frozen:
                continue
            stalled = s.stalled_rounds + 1 if previous_f[i] - s.f_y <= params.stall_tolerance else 0
            states[i] = replace(s, stalled_rounds=stalled, frozen=stalled >= params.stall_rounds)
        tau, degenerate = kendall_tau_b(phi, new_phi)
        diag.rounds += 1
        diag.taus.append(tau)
        diag.degenerate_taus += degenerate
        phi = new_phi
        if params.early_stopping_enabled and tau > params.tau_threshold:
            diag.stop_reason = "tau"
            break
    else:
        diag.stop_reason = "max_rounds"

    if meter.exhausted:
        diag.budget_exhausted = True
    new_cache_ = post_process(cache, states, phi, params, problem.lower_y, problem.upper_y, rng)
    upper1, lower1 = meter.snapshot()
    diag.upper_fes = upper1 - upper0
    diag.lower_fes = lower1 - lower0
    diag.inner_iterations = [s.inner_iterations for s in states]
    diag.k_min = [s.k_min for s in states]
    return UraResult(phi=phi, cache=new_cache_, states=states, diagnostics=diag)
