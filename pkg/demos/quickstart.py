"""Solve a small synthetic bilevel quadratic and print what came back.

    python3 demos/quickstart.py
"""
from uracma import RunConfig, make_problem, run_trial

config = RunConfig(suite="synthetic", d_x=2, d_y=2, conflict=1.0, budget=200_000)
problem = make_problem("synthetic", 1, 2, 2, conflict=1.0)

result = run_trial(problem, config, seed=0)
print(f"problem      {result.problem}")
print(f"converged    {result.converged}")
print(f"|F - F*|     {result.best_F_gap:.3e}")
print(f"|f - f*|     {result.best_f_gap:.3e}")
print(f"upper FEs    {result.upper_fes}")
print(f"lower FEs    {result.lower_fes}")
print(f"best x       {[round(v, 6) for v in result.best_x]}")
print(f"best y       {[round(v, 6) for v in result.best_y]}")
