"""Experiment driver: the full nested solver, restarts, multi-seed runs and reports.

`run_trial` is the complete optimizer: an upper-level CMA-ES whose candidates
are ranked by `ura_evaluate`, restarted from scratch (cache included) when
the upper distribution degenerates or stagnates, until the target accuracy
is reached or the function-evaluation budget is spent.
"""
from __future__ import annotations

import csv
import enum
import json
import logging
import math
import os
import time
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .cma import (
    Termination,
    check_termination,
    default_popsize,
    init_distribution,
    rank_population,
    sample_population,
    update_distribution,
)
from .engine import UraParams, WarmStartMode, new_cache, ura_evaluate
from .errors import ConfigurationError, NumericalError
from .problems import BilevelProblem, FeMeter, make_problem

log = logging.getLogger(__name__)

ACCURACY_FLOOR = 1e-6
METRICS = ("best_F_gap", "best_f_gap", "upper_fes", "lower_fes", "total_fes")


class Ablation(str, enum.Enum):
    NONE = "none"
    EARLY_STOP_OFF = "early-stop"
    SINGLE_CONFIG = "warm-start"
    SINGLE_CONFIG_REFRESH = "warm-start-refresh"

    @classmethod
    def parse(cls, value) -> "Ablation":
        aliases = {
            "early_stop_off": cls.EARLY_STOP_OFF,
            "single_config": cls.SINGLE_CONFIG,
            "single_config_refresh": cls.SINGLE_CONFIG_REFRESH,
        }
        if isinstance(value, cls):
            return value
        if value in aliases:
            return aliases[value]
        try:
            return cls(value)
        except ValueError:
            raise ConfigurationError(f"unknown ablation {value!r}") from None

    def apply(self, params: UraParams) -> UraParams:
        if self is Ablation.EARLY_STOP_OFF:
            return replace(params, early_stopping_enabled=False)
        if self is Ablation.SINGLE_CONFIG:
            return replace(params, warm_starting_mode=WarmStartMode.SINGLE_CONFIG)
        if self is Ablation.SINGLE_CONFIG_REFRESH:
            return replace(params, warm_starting_mode=WarmStartMode.SINGLE_CONFIG_REFRESH)
        return params


@dataclass(frozen=True)
class RunConfig:
    suite: str = "synthetic"
    problem: int = 1
    d_x: int = 5
    d_y: int = 5
    conflict: float = 1.0
    seeds: tuple = tuple(range(20))
    budget: int = 10_000_000
    ura: UraParams = UraParams()
    v_min_x: float = 1e-12
    cond_max_x: float = 1e7
    stagnation_window: int = 60
    stagnation_tolerance: float = 1e-6
    target_accuracy: float = 1e-6
    ablation: Ablation = Ablation.NONE
    trace: bool = False
    out: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "ablation", Ablation.parse(self.ablation))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.seeds:
            raise ConfigurationError("at least one seed is required")
        if self.budget <= 0:
            raise ConfigurationError("budget must be positive")

    def make_problem(self) -> BilevelProblem:
        return make_problem(self.suite, self.problem, self.d_x, self.d_y, self.conflict)

    def echo(self) -> dict:
        d = asdict(self)
        d["ablation"] = self.ablation.value
        d["ura"]["warm_starting_mode"] = self.ura.warm_starting_mode.value
        d["seeds"] = list(self.seeds)
        return d


@dataclass
class TrialResult:
    problem: str
    seed: int
    best_F_gap: float
    best_f_gap: float
    upper_fes: int
    lower_fes: int
    restarts: int
    converged: bool
    wall_time: float = 0.0
    generations: int = 0
    best_x: list = field(default_factory=list)
    best_y: list = field(default_factory=list)
    restart_reasons: list = field(default_factory=list)
    trace: Optional[list] = None
    error: Optional[str] = None

    @property
    def total_fes(self) -> int:
        return self.upper_fes + self.lower_fes

    def to_dict(self) -> dict:
        d = asdict(self)
        d["total_fes"] = self.total_fes
        return d

    def comparable(self) -> dict:
        """Everything except wall time, for determinism checks."""
        d = self.to_dict()
        d.pop("wall_time")
        return d


class _Stagnation:
    """No change above ``tolerance`` in the generation-best value for ``window`` iterations."""

    def __init__(self, window: int, tolerance: float):
        self.tolerance = tolerance
        self.values = deque(maxlen=window + 1)

    def update(self, value: float) -> bool:
        self.values.append(value)
        return len(self.values) == self.values.maxlen and max(self.values) - min(self.values) <= self.tolerance


@dataclass
class _Best:
    F_gap: float = math.inf
    f_gap: float = math.inf
    x: Optional[np.ndarray] = None
    y: Optional[np.ndarray] = None


def _run_epoch(problem, config, params, lambda_x, rng, meter, best: _Best, trace) -> tuple[str, int]:
    """One restart epoch from a fresh upper distribution and cache.

    Depends on nothing but ``rng``, ``meter`` and ``best``; updates ``best``
    in place and returns the reason it ended plus the generations it ran.
    """
    F_star, f_star = problem.optimum.F, problem.optimum.f
    dist = init_distribution(problem.lower_x, problem.upper_x, rng)
    cache = new_cache(params.n_omega, problem.lower_y, problem.upper_y, rng)
    stagnation = _Stagnation(config.stagnation_window, config.stagnation_tolerance)
    generations = 0
    while True:
        if meter.exhausted:
            return "budget", generations
        X = sample_population(dist, lambda_x, rng)
        try:
            result = ura_evaluate(X, cache, params, problem, rng, meter)
        except NumericalError as exc:
            log.info("%s: numerical error in lower level: %s", problem.name, exc)
            return "numerical", generations
        generations += 1
        cache = result.cache
        phi = result.phi
        # the generation's top-ranked candidate is the solution the run reports
        i = int(np.argmin(phi))
        gap = abs(float(phi[i]) - F_star)
        if gap < best.F_gap:
            best.F_gap = gap
            best.f_gap = abs(result.states[i].f_y - f_star)
            best.x = problem.mirror_x(X[i])
            best.y = result.states[i].y_hat
            if trace is not None:
                trace.append((meter.upper_count, meter.lower_count, best.F_gap))
        if best.F_gap <= config.target_accuracy:
            return "converged", generations
        try:
            dist = update_distribution(dist, rank_population(X, phi))
            status = check_termination(dist, config.v_min_x, config.cond_max_x)
        except NumericalError as exc:
            log.info("%s: numerical error in upper update: %s", problem.name, exc)
            return "numerical", generations
        if status is not Termination.CONTINUE:
            return status.value, generations
        if stagnation.update(float(phi.min())):
            return "stagnation", generations


def upper_popsize(problem: BilevelProblem) -> int:
    return max(4, default_popsize(problem.d_x))


def run_trial(problem: BilevelProblem, config: RunConfig, seed: int) -> TrialResult:
    """One independent run with restarts; returns the best solution across restarts."""
    if problem.optimum is None:
        raise ConfigurationError(f"{problem.name} has no known optimum to measure accuracy against")
    started = time.perf_counter()
    rng = np.random.default_rng(seed)
    meter = FeMeter(config.budget)
    lambda_x = upper_popsize(problem)
    params = config.ablation.apply(config.ura).resolved(lambda_x, problem.d_y)

    best = _Best()
    trace = [] if config.trace else None
    reasons: list[str] = []
    generations = 0
    while not reasons or reasons[-1] not in ("converged", "budget"):
        if reasons:
            log.debug("%s seed %d: restart %d after %s", problem.name, seed, len(reasons), reasons[-1])
        reason, gens = _run_epoch(problem, config, params, lambda_x, rng, meter, best, trace)
        reasons.append(reason)
        generations += gens

    return TrialResult(
        problem=problem.name,
        seed=int(seed),
        best_F_gap=best.F_gap,
        best_f_gap=best.f_gap,
        upper_fes=meter.upper_count,
        lower_fes=meter.lower_count,
        restarts=len(reasons) - 1,
        converged=best.F_gap <= config.target_accuracy,
        wall_time=time.perf_counter() - started,
        generations=generations,
        best_x=[] if best.x is None else best.x.tolist(),
        best_y=[] if best.y is None else best.y.tolist(),
        restart_reasons=reasons,
        trace=trace,
    )


def floored(values) -> np.ndarray:
    return np.maximum(np.asarray(values, dtype=float), ACCURACY_FLOOR)


def median_iqr(values) -> tuple[float, float]:
    """Median and ``Q3 - Q1``.

    Quantiles interpolate linearly between order statistics placed at
    ``(i - 0.5) / n`` (numpy's ``hazen`` rule), so ``(1, 2, 3, 4)`` gives
    quartiles 1.5 and 3.5.
    """
    v = np.asarray(values, dtype=float)
    q1, med, q3 = np.percentile(v, [25, 50, 75], method="hazen")
    return float(med), float(q3 - q1)


@dataclass
class SuiteReport:
    problem: str
    config: dict
    trials: list
    aggregate: dict
    successes: int
    success: bool

    def to_dict(self) -> dict:
        return {
            "problem": self.problem,
            "config": self.config,
            "trials": [t.to_dict() for t in self.trials],
            "aggregate": self.aggregate,
            "successes": self.successes,
            "success": self.success,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, default=_json_default)

    def write(self, path) -> list[Path]:
        """JSON document at ``path``, CSV summary next to it, trace CSVs if recorded."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json())
        written = [path]
        summary = path.with_suffix(".csv")
        with summary.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["problem", "metric", "median", "iqr", "successes"])
            for metric, stats in self.aggregate.items():
                w.writerow([self.problem, metric, repr(stats["median"]), repr(stats["iqr"]), self.successes])
        written.append(summary)
        for t in self.trials:
            if t.trace:
                tp = path.with_name(f"{path.stem}.trace.seed{t.seed}.csv")
                with tp.open("w", newline="") as fh:
                    w = csv.writer(fh)
                    w.writerow(["upper_fes", "lower_fes", "best_F_gap"])
                    w.writerows(t.trace)
                written.append(tp)
        return written

    def table(self) -> str:
        lines = [f"{self.problem}: {self.successes}/{len(self.trials)} converged"]
        for metric, s in self.aggregate.items():
            lines.append(f"  {metric:<11} {s['median']:.2e} ({s['iqr']:.2e})")
        return "\n".join(lines)


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, enum.Enum):
        return obj.value
    raise TypeError(f"not JSON serializable: {type(obj)}")


def aggregate(trials: Sequence[TrialResult]) -> dict:
    """Median and IQR per metric over the trials that finished without error."""
    trials = [t for t in trials if t.error is None]
    out = {}
    if not trials:
        return {metric: {"median": math.nan, "iqr": math.nan} for metric in METRICS}
    for metric in METRICS:
        values = [getattr(t, metric) for t in trials]
        if metric.endswith("gap"):
            values = floored(values)
        med, iqr = median_iqr(values)
        out[metric] = {"median": med, "iqr": iqr}
    return out


def summarize(problem_name: str, config: RunConfig, trials: Sequence[TrialResult]) -> SuiteReport:
    trials = sorted(trials, key=lambda t: t.seed)
    agg = aggregate(trials)
    return SuiteReport(
        problem=problem_name,
        config=config.echo(),
        trials=list(trials),
        aggregate=agg,
        successes=sum(t.converged for t in trials),
        success=agg["best_F_gap"]["median"] <= ACCURACY_FLOOR,
    )


def _trial_worker(args) -> TrialResult:
    config, seed = args
    problem = config.make_problem()
    try:
        return run_trial(problem, config, seed)
    except (NumericalError, ArithmeticError) as exc:
        log.warning("%s seed %d failed: %s", problem.name, seed, exc)
        return TrialResult(problem.name, seed, math.inf, math.inf, 0, 0, 0, False, error=str(exc))


def worker_count(n_tasks: int) -> int:
    cap = os.environ.get("URA_THREADS")
    n = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(n, n_tasks))


def run_suite(config: RunConfig, workers: Optional[int] = None) -> SuiteReport:
    """Run every seed of ``config`` (in parallel processes when allowed) and aggregate."""
    problem = config.make_problem()
    tasks = [(config, s) for s in config.seeds]
    n = workers if workers is not None else worker_count(len(tasks))
    if n <= 1:
        trials = [_trial_worker(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=n) as pool:
            trials = list(pool.map(_trial_worker, tasks))
    report = summarize(problem.name, config, trials)
    if config.out:
        report.write(config.out)
    return report


@dataclass
class AblationReport:
    mode: str
    full: SuiteReport
    ablated: SuiteReport
    pairs: list

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "full": self.full.to_dict(),
            "ablated": self.ablated.to_dict(),
            "pairs": self.pairs,
        }


def run_ablation(config: RunConfig, mode, workers: Optional[int] = None) -> AblationReport:
    """Full method and one ablated variant on identical seeds, compared per seed."""
    mode = Ablation.parse(mode)
    if mode is Ablation.NONE:
        raise ConfigurationError("choose an ablation mode other than 'none'")
    full = run_suite(replace(config, ablation=Ablation.NONE, out=None), workers)
    ablated = run_suite(replace(config, ablation=mode, out=None), workers)
    pairs = [
        {
            "seed": a.seed,
            "full_total_fes": a.total_fes,
            "ablated_total_fes": b.total_fes,
            "full_converged": a.converged,
            "ablated_converged": b.converged,
            "fe_ratio": b.total_fes / a.total_fes if a.total_fes else math.nan,
        }
        for a, b in zip(full.trials, ablated.trials)
    ]
    return AblationReport(mode.value, full, ablated, pairs)
