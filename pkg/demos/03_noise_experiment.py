"""Monte-Carlo robustness of the reconstruction against sample noise.

Runs a shortened version of the benchmark experiment (20 samples per
amplitude).  Pass --full for the 100-sample run from
data/benchmark_experiment.json.
"""
import sys
from dataclasses import replace
from pathlib import Path

from invlq.experiment import load_config, run_experiment
from invlq.io import load_problem

config = load_config(Path(__file__).resolve().parents[1] / "data" / "benchmark_experiment.json")
if "--full" not in sys.argv:
    config = replace(config, samples=20)
report = run_experiment(load_problem(config.problem_path), config)

print(f"{'alpha':>6} {'L':>4} {'Err_K':>8} {'Err_R':>8}")
for s in report.summaries:
    print(f"{s.amplitude:6.2f} {s.successes:4d} {s.err_K:8.3f} {s.err_R:8.3f}")
print("mean-cost trajectories vs exact, max deviation:", round(report.overlay["max_deviation"], 4))
