"""One call of the ranking approximation on a hand-made batch.

Shows that the approximate upper values order the batch the same way the
true values F(x, y*_x) do, and how many lower-level evaluations it took.
"""
import numpy as np

from uracma import FeMeter, UraParams, kendall_tau_b, make_problem, new_cache, ura_evaluate

problem = make_problem("synthetic", 1, 2, 2, conflict=1.0)
rng = np.random.default_rng(3)
lam = 6
params = UraParams().resolved(lam, problem.d_y)
cache = new_cache(params.n_omega, problem.lower_y, problem.upper_y, rng)

X = rng.uniform(-2, 2, size=(lam, problem.d_x))
meter = FeMeter(budget=10**6)
res = ura_evaluate(X, cache, params, problem, rng, meter)

# here the follower's best response is y*_x = x, so the true value is |x|^2
true = np.sum(X * X, axis=1)
print("approx phi :", np.round(res.phi, 4))
print("true F     :", np.round(true, 4))
tau, _ = kendall_tau_b(res.phi, true)
print("tau-b      :", round(tau, 3))
print("rounds     :", res.diagnostics.rounds, "stop:", res.diagnostics.stop_reason)
print("lower FEs  :", res.diagnostics.lower_fes)
