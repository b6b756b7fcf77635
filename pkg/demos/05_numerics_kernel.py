"""The dense linear-algebra kernel the solvers are built on."""
import numpy as np

from invlq import numerics as nx

rng = np.random.default_rng(0)
M = rng.standard_normal((4, 4))

E = nx.expm(M)
print("expm(M) expm(-M) - I:", np.max(np.abs(E @ nx.expm(-M) - np.eye(4))))
print("logm(expm(0.3 M)) - 0.3 M:", np.max(np.abs(nx.logm_principal(nx.expm(0.3 * M)) - 0.3 * M)))

A = M - 3 * np.eye(4)
X = nx.solve_lyapunov(A, -np.eye(4))
print("Lyapunov residual:", np.max(np.abs(A @ X + X @ A.T + np.eye(4))))

Us = nx.invariant_subspace(M, "stable")
Ua = nx.invariant_subspace(M, "antistable")
print("stable / antistable dimensions:", Us.shape[1], Ua.shape[1])
print("null space of a rank-1 matrix:", nx.nullspace(np.outer([1.0, 2.0, 3.0], [1.0, 0.0, 1.0])).shape)
