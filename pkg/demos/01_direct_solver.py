"""Solve a constant-coefficient LQ problem directly.

Builds the three-state benchmark, certifies its Riccati pair and traces the
optimal trajectory from the origin to e_1 in one time unit.
"""
import numpy as np

from invlq import (
    BoundaryData,
    canonical_cost_of,
    cost_of,
    lyapunov_residuals,
    optimal_trajectory,
    riccati_residual,
    synthesis_pair,
    validate,
)
from invlq.problems import benchmark_problem, benchmark_problem_as_tabulated

np.set_printoptions(precision=4, suppress=True)

problem = benchmark_problem()
print("assumption checks:", "ok" if validate(problem).ok else validate(problem).failed)

pair = synthesis_pair(problem)
print("A+ eigenvalues:", np.linalg.eigvals(pair.A_plus))
print("A- eigenvalues:", np.linalg.eigvals(pair.A_minus))
print("Riccati residuals:", riccati_residual(problem, pair.P_plus), riccati_residual(problem, pair.P_minus))
print("Lyapunov residuals:", lyapunov_residuals(pair, problem))

cost = canonical_cost_of(problem)
print("canonical K:\n", cost.K)
print("canonical R:\n", cost.R)

grid = np.linspace(0.0, 1.0, 11)
traj = optimal_trajectory(pair, problem, BoundaryData(0.0, 1.0, np.zeros(3), np.eye(3)[0]), grid)
for t, x, u in zip(traj.times[::2], traj.states[::2], traj.controls[::2]):
    print(f"t={t:.1f}  x={x}  u={u}")
print("cost of the trajectory:", cost_of(problem, traj))

# the cross term read with a factor 2 breaks the Hamiltonian dichotomy
print("literal cross-term reading:", validate(benchmark_problem_as_tabulated()).failed)
