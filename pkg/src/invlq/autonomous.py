"""Direct solver for autonomous linear-quadratic problems.

A problem is the dynamics ``x' = A x + B u`` with running cost
``x'Qx + 2 x'Su + u'Ru`` between fixed endpoints.  The optimal synthesis is
described by the closed-loop pair ``A_plus`` (stable) and ``A_minus``
(anti-stable) built from the stabilizing and anti-stabilizing solutions of
the algebraic Riccati equation

    P A + A'P - (S + P B) R^{-1} (S' + B'P) + Q = 0.

Every optimal trajectory is ``x(t) = e^{t A_plus} y_plus + e^{t A_minus} y_minus``.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson

from . import numerics as nx
from .errors import LqError, NumericsError, ValidationError

__all__ = [
    "AutonomousLqProblem",
    "CheckResult",
    "ValidationReport",
    "SynthesisPair",
    "BoundaryData",
    "Trajectory",
    "CanonicalCost",
    "validate",
    "hamiltonian_matrix",
    "feedback_gain",
    "closed_loop",
    "riccati_residual",
    "stabilizing_solution",
    "antistabilizing_solution",
    "synthesis_pair",
    "lyapunov_residuals",
    "boundary_decomposition",
    "optimal_trajectory",
    "cost_of",
    "canonical_cost_of",
]


@dataclass(frozen=True)
class AutonomousLqProblem:
    """Constant matrices ``(A, B, Q, S, R)`` of an LQ problem."""

    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    S: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        A = nx.as_matrix(self.A, "A")
        B = nx.as_matrix(self.B, "B")
        n, m = B.shape
        if A.shape != (n, n):
            raise ValidationError(f"A must be {n}x{n} to match B, got {A.shape}")
        Q = nx.as_matrix(self.Q, "Q")
        S = nx.as_matrix(self.S, "S")
        R = nx.as_matrix(self.R, "R")
        if Q.shape != (n, n) or S.shape != (n, m) or R.shape != (m, m):
            raise ValidationError(
                f"cost shapes Q{Q.shape} S{S.shape} R{R.shape} do not match n={n}, m={m}"
            )
        for name, M in zip("ABQSR", (A, B, Q, S, R)):
            M.setflags(write=False)
            object.__setattr__(self, name, M)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @classmethod
    def from_canonical(cls, A, B, K, R):
        """Problem with canonical cost ``(u + K x)' R (u + K x)``."""
        K = nx.as_matrix(K, "K")
        R = nx.as_matrix(R, "R")
        return cls(A, B, K.T @ R @ K, K.T @ R, R)

    def scaled(self, factor):
        """Same dynamics, cost multiplied by ``factor``."""
        return AutonomousLqProblem(
            self.A, self.B, factor * self.Q, factor * self.S, factor * self.R
        )


@dataclass(frozen=True)
class CheckResult:
    passed: bool
    value: float
    detail: str = ""


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of the standing-assumption checks, keyed by condition name."""

    checks: dict

    @property
    def ok(self):
        return all(c.passed for c in self.checks.values())

    @property
    def failed(self):
        return [name for name, c in self.checks.items() if not c.passed]

    def raise_if_failed(self):
        if not self.ok:
            details = "; ".join(f"{k}: {self.checks[k].detail}" for k in self.failed)
            raise ValidationError(f"assumption(s) {', '.join(self.failed)} failed ({details})")

    def lines(self):
        for name, c in self.checks.items():
            yield f"{name:3s} {'pass' if c.passed else 'FAIL'}  {c.detail}"


@dataclass(frozen=True)
class CanonicalCost:
    """Canonical cost ``(u + K x)' R (u + K x)`` with ``det R = 1``."""

    K: np.ndarray
    R: np.ndarray


@dataclass(frozen=True)
class SynthesisPair:
    A_plus: np.ndarray
    A_minus: np.ndarray
    P_plus: np.ndarray
    P_minus: np.ndarray
    Delta: np.ndarray
    X: np.ndarray


@dataclass(frozen=True)
class BoundaryData:
    t0: float
    t1: float
    x0: np.ndarray
    x1: np.ndarray

    def __post_init__(self):
        if not self.t0 < self.t1:
            raise LqError(f"boundary times must satisfy t0 < t1, got {self.t0}, {self.t1}")
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float).ravel())
        object.__setattr__(self, "x1", np.asarray(self.x1, dtype=float).ravel())
        if self.x0.shape != self.x1.shape:
            raise LqError(f"x0 and x1 differ in size: {self.x0.size} vs {self.x1.size}")


@dataclass(frozen=True)
class Trajectory:
    """States, costates and controls sampled on ``times`` (one row per time)."""

    times: np.ndarray
    states: np.ndarray
    costates: np.ndarray = field(default=None)
    controls: np.ndarray = field(default=None)


def _rank(M, rel_tol=1e-10):
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rel_tol * s[0]))


def validate(problem):
    """Check rank of ``B`` (C1), Kalman rank (C2), ``R > 0`` (D1) and the
    Hamiltonian spectrum (D2).  Never raises; failures are in the report."""
    A, B, Q, R = problem.A, problem.B, problem.Q, problem.R
    n, m = problem.n, problem.m
    checks = {}

    rank_b = _rank(B)
    checks["C1"] = CheckResult(rank_b == m, rank_b, f"rank B = {rank_b} (m = {m})")

    blocks = [B]
    for _ in range(n - 1):
        blocks.append(A @ blocks[-1])
    rank_k = _rank(np.hstack(blocks))
    checks["C2"] = CheckResult(rank_k == n, rank_k, f"Kalman rank = {rank_k} (n = {n})")

    sym_err = max(
        nx.spectral_norm(Q - Q.T) / max(nx.spectral_norm(Q), 1.0),
        nx.spectral_norm(R - R.T) / max(nx.spectral_norm(R), 1.0),
    )
    r_min = nx.min_eigenvalue(R)
    d1 = sym_err <= 1e-12 and nx.is_positive_definite(R)
    checks["D1"] = CheckResult(
        d1, r_min, f"min eig R = {r_min:.3g}, asymmetry = {sym_err:.1e}"
    )

    if d1:
        H = hamiltonian_matrix(problem)
        w = np.linalg.eigvals(H)
        margin = float(np.min(np.abs(w.real)))
        thr = nx.IM_AXIS_TOL * nx.spectral_norm(H)
        checks["D2"] = CheckResult(
            margin > thr, margin, f"min |Re eig H| = {margin:.3g} (tolerance {thr:.1e})"
        )
    else:
        checks["D2"] = CheckResult(False, float("nan"), "Hamiltonian undefined (R not positive definite)")
    return ValidationReport(checks)


def hamiltonian_matrix(problem):
    """The ``2n x 2n`` Hamiltonian matrix

        [[A - B R^{-1} S',  B R^{-1} B'],
         [Q - S R^{-1} S', -A' + S R^{-1} B']]
    """
    A, B, Q, S, R = problem.A, problem.B, problem.Q, problem.S, problem.R
    try:
        Rinv_St = np.linalg.solve(R, S.T)
        Rinv_Bt = np.linalg.solve(R, B.T)
    except np.linalg.LinAlgError as exc:
        raise ValidationError("singular R") from exc
    if np.linalg.cond(R) > 1e14:
        raise ValidationError("singular R")
    return np.block([
        [A - B @ Rinv_St, B @ Rinv_Bt],
        [Q - S @ Rinv_St, -A.T + S @ Rinv_Bt],
    ])


def feedback_gain(problem, P):
    """``R^{-1} (S' + B' P)``."""
    return np.linalg.solve(problem.R, problem.S.T + problem.B.T @ P)


def closed_loop(problem, P):
    """``A - B R^{-1} (S' + B' P)``."""
    return problem.A - problem.B @ feedback_gain(problem, P)


def riccati_residual(problem, P, relative=True):
    """Frobenius residual of the algebraic Riccati equation at ``P``.

    With ``relative=True`` the residual is divided by the sum of the norms
    of its terms, so that it is invariant under scaling of the cost.
    """
    A, B, Q, S, R = problem.A, problem.B, problem.Q, problem.S, problem.R
    L = S + P @ B
    quad = L @ np.linalg.solve(R, L.T)
    res = P @ A + A.T @ P - quad + Q
    err = float(np.linalg.norm(res))
    if not relative:
        return err
    scale = 2 * np.linalg.norm(P @ A) + np.linalg.norm(quad) + np.linalg.norm(Q)
    return err / scale if scale > 0 else err


def _riccati_from_subspace(problem, side):
    n = problem.n
    H = hamiltonian_matrix(problem)
    U = nx.invariant_subspace(H, side)
    if U.shape[1] != n:
        raise NumericsError(f"{side} subspace has dimension {U.shape[1]}, expected {n}")
    U1, U2 = U[:n], U[n:]
    if np.linalg.cond(U1) > 1e12:
        raise NumericsError(f"{side} subspace not a graph (U1 singular)")
    # graph of x -> -P x is invariant, so U2 = -P U1
    P = nx.symmetrize(-np.linalg.solve(U1.T, U2.T).T)
    return _newton_polish(problem, P)


def _newton_polish(problem, P, steps=2):
    # defect correction: F'E + EF = -Ric(P), F the closed loop at P
    for _ in range(steps):
        L = problem.S + P @ problem.B
        res = P @ problem.A + problem.A.T @ P - L @ np.linalg.solve(problem.R, L.T) + problem.Q
        try:
            E = nx.solve_lyapunov(closed_loop(problem, P).T, -res)
        except NumericsError:
            break
        P_new = nx.symmetrize(P + E)
        if riccati_residual(problem, P_new) >= riccati_residual(problem, P):
            break
        P = P_new
    return P


def stabilizing_solution(problem):
    """Riccati solution ``P_plus`` whose closed loop is stable."""
    return _riccati_from_subspace(problem, "stable")


def antistabilizing_solution(problem):
    """Riccati solution ``P_minus`` whose closed loop is anti-stable."""
    return _riccati_from_subspace(problem, "antistable")


def lyapunov_residuals(pair, problem):
    """Relative residuals of ``A+ X + X A+' = -B R^{-1} B'`` and
    ``A+ X + X A-' = 0``."""
    Ap, Am, X = pair.A_plus, pair.A_minus, pair.X
    BRB = problem.B @ np.linalg.solve(problem.R, problem.B.T)
    scale = 2 * nx.spectral_norm(Ap) * nx.spectral_norm(X) + nx.spectral_norm(BRB)
    r1 = nx.spectral_norm(Ap @ X + X @ Ap.T + BRB) / scale
    r2 = nx.spectral_norm(Ap @ X + X @ Am.T) / scale
    return r1, r2


def synthesis_pair(problem, tol=1e-9):
    """Assemble ``(A+, A-, P+, P-, Delta, X)`` and certify it.

    ``X = Delta^{-1}`` is cross-checked against the solution of
    ``A+ X + X A+' = -B R^{-1} B'`` (the Gramian of ``(A+, B R^{-1/2})``).
    """
    P_plus = stabilizing_solution(problem)
    P_minus = antistabilizing_solution(problem)
    A_plus = closed_loop(problem, P_plus)
    A_minus = closed_loop(problem, P_minus)
    Delta = nx.symmetrize(P_plus - P_minus)
    if not nx.is_positive_definite(Delta):
        raise LqError(f"Delta = P+ - P- is not positive definite (min eig {nx.min_eigenvalue(Delta):.3g})")
    X = nx.symmetrize(np.linalg.inv(Delta))
    pair = SynthesisPair(A_plus, A_minus, P_plus, P_minus, Delta, X)

    r1, r2 = lyapunov_residuals(pair, problem)
    if r1 > tol or r2 > tol:
        raise LqError(f"Lyapunov identities violated (residuals {r1:.2e}, {r2:.2e})")
    gram = nx.solve_lyapunov(A_plus, -problem.B @ np.linalg.solve(problem.R, problem.B.T))
    # forward error of the Lyapunov solve grows like |A+| / sep
    sep = 2 * np.min(np.abs(np.linalg.eigvals(A_plus).real))
    cond = max(1.0, nx.spectral_norm(A_plus) / sep)
    if nx.spectral_norm(gram - X) > 1e-7 * cond * nx.spectral_norm(X):
        raise LqError("Delta^{-1} disagrees with the controllability Gramian of A+")
    return pair


def boundary_decomposition(pair, bd):
    """Coefficients ``(y_plus, y_minus)`` with
    ``x(t) = e^{t A+} y_plus + e^{t A-} y_minus`` meeting both endpoints.

    The block system is solved for ``e^{t0 A+} y_plus`` and
    ``e^{t1 A-} y_minus`` so that only decaying exponentials appear; the
    returned coefficients are mapped back to the absolute convention.
    """
    yp_hat, ym_hat = _scaled_coefficients(pair, bd)
    y_plus = nx.expm(-bd.t0 * pair.A_plus) @ yp_hat
    y_minus = nx.expm(-bd.t1 * pair.A_minus) @ ym_hat
    return y_plus, y_minus


def _scaled_coefficients(pair, bd):
    n = pair.A_plus.shape[0]
    if bd.x0.size != n:
        raise LqError(f"boundary vectors have size {bd.x0.size}, expected {n}")
    T = bd.t1 - bd.t0
    E_plus = nx.expm(T * pair.A_plus)
    E_minus = nx.expm(-T * pair.A_minus)
    I = np.eye(n)
    M = np.block([[I, E_minus], [E_plus, I]])
    if np.linalg.cond(M) > 1e12:
        raise NumericsError(
            "boundary system numerically singular; t1 - t0 too large for double precision"
        )
    y = np.linalg.solve(M, np.concatenate([bd.x0, bd.x1]))
    return y[:n], y[n:]


def optimal_trajectory(pair, problem, bd, grid):
    """States, costates ``p = -P+ x+ - P- x-`` and controls
    ``u = -R^{-1} S' x + R^{-1} B' p`` on ``grid``."""
    grid = np.asarray(grid, dtype=float).ravel()
    span = bd.t1 - bd.t0
    if grid.min() < bd.t0 - 1e-12 * span or grid.max() > bd.t1 + 1e-12 * span:
        raise LqError("grid must lie inside [t0, t1]")
    yp_hat, ym_hat = _scaled_coefficients(pair, bd)
    n = pair.A_plus.shape[0]
    xs = np.empty((grid.size, n))
    ps = np.empty((grid.size, n))
    for k, t in enumerate(grid):
        xp = nx.expm((t - bd.t0) * pair.A_plus) @ yp_hat
        xm = nx.expm((t - bd.t1) * pair.A_minus) @ ym_hat
        xs[k] = xp + xm
        ps[k] = -pair.P_plus @ xp - pair.P_minus @ xm
    R = problem.R
    us = (np.linalg.solve(R, -problem.S.T @ xs.T + problem.B.T @ ps.T)).T
    return Trajectory(grid, xs, ps, us)


def cost_of(problem, traj):
    """Composite Simpson quadrature of ``x'Qx + 2x'Su + u'Ru``."""
    if traj.times.size < 3:
        raise LqError("cost quadrature needs at least 3 grid points")
    x, u = traj.states, traj.controls
    c = (
        np.einsum("ki,ij,kj->k", x, problem.Q, x)
        + 2 * np.einsum("ki,ij,kj->k", x, problem.S, u)
        + np.einsum("ki,ij,kj->k", u, problem.R, u)
    )
    return float(simpson(c, x=traj.times))


def canonical_cost_of(problem):
    """Canonical representative ``(K+, R / det(R)^{1/m})`` of the cost."""
    P_plus = stabilizing_solution(problem)
    K = feedback_gain(problem, P_plus)
    R = problem.R / np.linalg.det(problem.R) ** (1.0 / problem.m)
    return CanonicalCost(K, nx.symmetrize(R))
