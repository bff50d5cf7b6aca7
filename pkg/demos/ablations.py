"""Compare the full method with its ablated variants on the same seeds.

    python3 demos/ablations.py            # a few seeds, small budgets
"""
from uracma import RunConfig, run_ablation

SEEDS = (0, 1, 2)

cases = [
    ("early-stop", RunConfig(suite="synthetic", d_x=2, d_y=2, seeds=SEEDS, budget=300_000)),
    ("warm-start", RunConfig(suite="wra", problem=1, d_x=2, d_y=2, seeds=SEEDS, budget=100_000)),
]
for mode, config in cases:
    report = run_ablation(config, mode, workers=1)
    print(f"== {mode} ablation on {report.full.problem}")
    for p in report.pairs:
        print(
            f"  seed {p['seed']}: full {p['full_total_fes']:>7} FEs "
            f"(converged={p['full_converged']}), ablated {p['ablated_total_fes']:>7} FEs "
            f"(converged={p['ablated_converged']})"
        )
