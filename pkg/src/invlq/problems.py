"""Reference problems and random problem generators."""

import numpy as np

from .autonomous import AutonomousLqProblem, validate

__all__ = [
    "benchmark_problem",
    "benchmark_problem_as_tabulated",
    "scalar_problem",
    "identity_problem",
    "product_problem",
    "random_problem",
    "random_canonical",
]


BENCHMARK_A = [[1, 0, 1], [-2, -3, -1], [0, 0, 2]]
BENCHMARK_B = [[1, 0], [0, 1], [0, 1]]
BENCHMARK_Q = [[20, 6, 34], [6, 2, 11], [34, 11, 61]]
BENCHMARK_S = [[20, 12], [6, 4], [34, 22]]
BENCHMARK_R = [[5, 3], [3, 2]]


def benchmark_problem():
    """Three-state, two-input benchmark with a coupled cost (``det R = 1``).

    The tabulated cross term ``BENCHMARK_S`` multiplies ``x'Su`` without the
    factor 2 used here, so it enters as ``S / 2``.  The cost is then
    canonical: ``Q = K'RK`` and ``S / 2 = K'R`` with ``K = [[2, 0, 1], [0, 1, 4]]``.
    """
    return AutonomousLqProblem(
        BENCHMARK_A, BENCHMARK_B, BENCHMARK_Q,
        0.5 * np.asarray(BENCHMARK_S, dtype=float), BENCHMARK_R,
    )


def benchmark_problem_as_tabulated():
    """Benchmark with the cross term read in the ``2 x'Su`` convention.

    Here ``Q - S R^{-1} S' = -3 Q`` and the Hamiltonian has a pair of
    imaginary eigenvalues, so this variant fails assumption D2.
    """
    return AutonomousLqProblem(BENCHMARK_A, BENCHMARK_B, BENCHMARK_Q, BENCHMARK_S, BENCHMARK_R)


def scalar_problem():
    """``x' = u``, cost ``x^2 + u^2``: ``P+ = 1``, ``A+ = -1``."""
    return AutonomousLqProblem([[0.0]], [[1.0]], [[1.0]], [[0.0]], [[1.0]])


def identity_problem(n=2):
    """``n`` decoupled copies of the scalar problem."""
    I = np.eye(n)
    return AutonomousLqProblem(np.zeros((n, n)), I, I, np.zeros((n, n)), I)


def product_problem(rng=None):
    """Block-diagonal problem with two independent subsystems (2 + 1 states,
    one input each) and a block-diagonal canonical cost."""
    A = np.array([[0.0, 1.0, 0.0], [-1.0, 0.5, 0.0], [0.0, 0.0, 0.3]])
    B = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    K = np.array([[1.0, 2.0, 0.0], [0.0, 0.0, 1.5]])
    R = np.diag([2.0, 0.5])
    if rng is not None:
        A[:2, :2] += 0.1 * rng.standard_normal((2, 2))
        K[0, :2] += 0.1 * rng.standard_normal(2)
    return AutonomousLqProblem.from_canonical(A, B, K, R)


def _spd(rng, m, cond=10.0):
    Qm, _ = np.linalg.qr(rng.standard_normal((m, m)))
    w = np.exp(rng.uniform(0.0, np.log(cond), m))
    return (Qm * w) @ Qm.T


def random_problem(rng, n, m, max_tries=100):
    """Random problem that passes :func:`validate`.

    ``Q - S R^{-1} S'`` is drawn positive semidefinite so the standing
    assumptions of the time-varying theory hold as well.
    """
    for _ in range(max_tries):
        A = rng.standard_normal((n, n))
        B = rng.standard_normal((n, m))
        R = _spd(rng, m)
        S = 0.5 * rng.standard_normal((n, m))
        G = rng.standard_normal((n, n))
        Q = G @ G.T / n + S @ np.linalg.solve(R, S.T)
        prob = AutonomousLqProblem(A, B, 0.5 * (Q + Q.T), S, R)
        if validate(prob).ok:
            return prob
    raise RuntimeError("could not draw a valid random problem")


def random_canonical(rng, n, m, max_tries=100):
    """Random ``(A, B)`` with a canonical cost ``(K, R)``, ``det R = 1`` and
    ``A - B K`` stable."""
    from scipy.signal import place_poles

    for _ in range(max_tries):
        A = rng.standard_normal((n, n))
        B = rng.standard_normal((n, m))
        poles = -np.sort(rng.uniform(0.5, 3.0, n))
        if np.min(np.diff(np.sort(poles))) < 0.05:
            continue
        try:
            K = place_poles(A, B, poles).gain_matrix
        except ValueError:
            continue
        K = K + 0.05 * rng.standard_normal(K.shape)
        if np.max(np.linalg.eigvals(A - B @ K).real) >= -0.1:
            continue
        R = _spd(rng, m)
        R = R / np.linalg.det(R) ** (1.0 / m)
        prob = AutonomousLqProblem.from_canonical(A, B, K, R)
        if validate(prob).ok:
            return prob, K, R
    raise RuntimeError("could not draw a valid canonical problem")
