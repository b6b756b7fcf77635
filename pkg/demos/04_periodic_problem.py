"""Periodic time-varying problem: x' = u, cost x^2 + (2 + sin t) u^2.

Computes the periodic stabilizing and anti-stabilizing Riccati solutions,
compares the two trajectory solvers and recovers the time-varying weight
R(t) from the closed-loop pair alone.
"""
import numpy as np

from invlq import BoundaryData
from invlq.timevarying import (
    TimeVaryingLqProblem,
    antistabilizing_periodic,
    closed_loop_fn,
    decomposition_solve,
    pvw_solve,
    solve_Z_equation,
    stabilizing_periodic,
)

one = np.eye(1)
problem = TimeVaryingLqProblem(
    lambda t: 0 * one, lambda t: one, lambda t: one, lambda t: 0 * one,
    lambda t: np.array([[2.0 + np.sin(t)]]), 1, 1, period=2 * np.pi, step=2e-3,
)
plus = stabilizing_periodic(problem)
minus = antistabilizing_periodic(problem)
print("monodromy radii:", plus.monodromy_radius, minus.monodromy_radius)
ts = np.linspace(0, 2 * np.pi, 5)
print("P+(t):", plus(ts)[:, 0, 0].round(4))
print("P-(t):", minus(ts)[:, 0, 0].round(4))

bd = BoundaryData(0.0, 3.0, [0.5], [-1.0])
grid = np.linspace(0.0, 3.0, 31)
a = decomposition_solve(problem, plus, minus, bd, grid)
b = pvw_solve(problem, bd, grid)
print("solver gap:", np.max(np.abs(a.states - b.states)))

grid = np.linspace(0.0, 2.0, 81)
_, R, info = solve_Z_equation(closed_loop_fn(problem, plus), closed_loop_fn(problem, minus),
                              problem.B, grid, step=problem.step)
# normalized so that R(0) = 1; the true weight over its value at 0
print("max |R(t) - (2 + sin t)/2|:", np.max(np.abs(R[:, 0, 0] - (2 + np.sin(grid)) / 2)))
