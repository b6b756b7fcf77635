"""Time-varying LQ: Riccati flows, periodic stabilizing solutions,
transition matrices and finite-horizon trajectories.

Coefficients are callables ``t -> matrix``.  All flows use a fixed-step
classical Runge-Kutta scheme; values between steps come from cubic
Hermite interpolation with the exact derivative, so interpolation error
matches the integrator's order.

Riccati convention (same signs as :mod:`invlq.autonomous`)::

    P' = -P A - A'P + (P B + S) R^{-1} (B'P + S') - Q
"""

from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg as sla
from scipy.integrate import simpson
from scipy.interpolate import CubicHermiteSpline

from . import numerics as nx
from .autonomous import BoundaryData, CheckResult, Trajectory, ValidationReport
from .inverse import _sym_basis
from .errors import IntegrationError, LqError, ReconstructionError, ValidationError

__all__ = [
    "TimeVaryingLqProblem",
    "RiccatiFlowResult",
    "TransitionGrid",
    "riccati_rhs",
    "integrate_riccati",
    "stabilizing_periodic",
    "antistabilizing_periodic",
    "closed_loop_fn",
    "transition_matrix",
    "pvw_solve",
    "decomposition_solve",
    "reconstruct_K_tv",
    "solve_Z_equation",
    "time_reversed",
]


def _const(M):
    M = nx.as_matrix(M)
    M.setflags(write=False)
    return lambda t: M


@dataclass(frozen=True)
class TimeVaryingLqProblem:
    """Callable coefficients ``A, B, Q, S, R`` of sizes fixed by ``n, m``.

    ``period`` (optional) declares the coefficients periodic; ``step`` is
    the Runge-Kutta step and ``tolerance`` the accepted relative residual
    of computed flows.
    """

    A: object
    B: object
    Q: object
    S: object
    R: object
    n: int
    m: int
    period: float = None
    step: float = 1e-3
    tolerance: float = 1e-6

    def __post_init__(self):
        if self.period is not None and not self.period > 0:
            raise ValidationError(f"period must be positive, got {self.period}")
        if not self.step > 0:
            raise ValidationError(f"step must be positive, got {self.step}")

    @classmethod
    def constant(cls, problem, period=None, **settings):
        """Embed an :class:`~invlq.autonomous.AutonomousLqProblem`."""
        return cls(
            _const(problem.A), _const(problem.B), _const(problem.Q),
            _const(problem.S), _const(problem.R), problem.n, problem.m,
            period=period, **settings,
        )

    def at(self, t):
        return self.A(t), self.B(t), self.Q(t), self.S(t), self.R(t)

    def check(self, t0=0.0, t1=None, samples=64):
        """Sample-grid probes of symmetry, ``R(t) > 0``, injectivity of
        ``B(t)`` and (if declared) periodicity."""
        if t1 is None:
            t1 = t0 + (self.period if self.period is not None else 1.0)
        ts = np.linspace(t0, t1, samples)
        sym = 0.0
        r_min = np.inf
        b_rank = self.m
        per = 0.0
        for t in ts:
            A, B, Q, S, R = self.at(t)
            if A.shape != (self.n, self.n) or B.shape != (self.n, self.m) or R.shape != (self.m, self.m):
                raise ValidationError(f"coefficient shapes at t={t} do not match n={self.n}, m={self.m}")
            sym = max(sym, nx.spectral_norm(Q - Q.T), nx.spectral_norm(R - R.T))
            r_min = min(r_min, nx.min_eigenvalue(R))
            s = np.linalg.svd(B, compute_uv=False)
            b_rank = min(b_rank, int(np.sum(s > 1e-10 * s[0])) if s[0] > 0 else 0)
            if self.period is not None:
                for M0, M1 in zip(self.at(t), self.at(t + self.period)):
                    per = max(per, nx.spectral_norm(M0 - M1))
        checks = {
            "symmetric": CheckResult(sym <= 1e-12, sym, f"max asymmetry of Q, R = {sym:.1e}"),
            "R_uniform": CheckResult(r_min > 0, r_min, f"min eig R(t) = {r_min:.3g}"),
            "B_injective": CheckResult(b_rank == self.m, b_rank, f"min rank B(t) = {b_rank}"),
        }
        if self.period is not None:
            checks["periodic"] = CheckResult(per <= 1e-9, per, f"max |M(t+T) - M(t)| = {per:.1e}")
        return ValidationReport(checks)


@dataclass(frozen=True)
class RiccatiFlowResult:
    """Solution of the Riccati ODE on ``grid`` (ascending).

    Calling the result evaluates ``P(t)`` by cubic Hermite interpolation,
    reduced modulo ``period`` when one is set.
    """

    grid: np.ndarray
    P_values: np.ndarray
    converged: bool
    residual: float
    derivatives: np.ndarray = None
    period: float = None
    monodromy_radius: float = None

    def __call__(self, t):
        if self.period is not None:
            t = self.grid[0] + np.mod(t - self.grid[0], self.period)
        return _interp(self, "P_values", t)


@dataclass(frozen=True)
class TransitionGrid:
    """``Phi(t, t0)`` for ``t`` on ``grid``."""

    t0: float
    grid: np.ndarray
    Phi_values: np.ndarray

    def between(self, i, j):
        """``Phi(grid[i], grid[j])``."""
        return np.linalg.solve(self.Phi_values[j].T, self.Phi_values[i].T).T


def _interp(obj, attr, t):
    cache = obj.__dict__.get("_spline")
    if cache is None:
        vals = getattr(obj, attr)
        cache = CubicHermiteSpline(obj.grid, vals, obj.derivatives, axis=0)
        object.__setattr__(obj, "_spline", cache)
    return cache(t)


def riccati_rhs(t, P, problem):
    """Right-hand side of the Riccati ODE at ``(t, P)``, symmetrized."""
    A, B, Q, S, R = problem.at(t)
    L = P @ B + S
    try:
        G = np.linalg.solve(R, L.T)
    except np.linalg.LinAlgError as exc:
        raise ValidationError(f"singular R at t={t}") from exc
    return nx.symmetrize(-P @ A - A.T @ P + L @ G - Q)


def _rk4(f, t_start, y_start, t_stop, step):
    """Fixed-step RK4 from ``t_start`` to ``t_stop`` (either direction).

    Returns the times, values and derivatives at every step.
    """
    span = t_stop - t_start
    k = max(1, int(np.ceil(abs(span) / step - 1e-9)))
    ts = t_start + span * np.arange(k + 1) / k
    h = span / k
    ys = [np.asarray(y_start, dtype=float)]
    ds = [f(ts[0], ys[0])]
    for i in range(k):
        t, y, d1 = ts[i], ys[-1], ds[-1]
        d2 = f(t + h / 2, y + h / 2 * d1)
        d3 = f(t + h / 2, y + h / 2 * d2)
        d4 = f(t + h, y + h * d3)
        ynew = y + h / 6 * (d1 + 2 * d2 + 2 * d3 + d4)
        ys.append(ynew)
        ds.append(f(ts[i + 1], ynew))
    return ts, np.stack(ys), np.stack(ds)


def _step_residual(f, ts, ys, ds):
    """Largest per-step defect ``y_{i+1} - y_i - (Simpson integral of f)``,
    relative to ``h (1 + max|f|)``; the midpoint value is the cubic Hermite
    interpolant, so the defect is fourth order in the step."""
    worst = 0.0
    scale = 1.0 + np.max(np.abs(ds))
    for i in range(ts.size - 1):
        h = ts[i + 1] - ts[i]
        ym = 0.5 * (ys[i] + ys[i + 1]) + h / 8 * (ds[i] - ds[i + 1])
        simpson = h / 6 * (ds[i] + 4 * f(ts[i] + h / 2, ym) + ds[i + 1])
        worst = max(worst, float(np.max(np.abs(ys[i + 1] - ys[i] - simpson))) / abs(h))
    return worst / scale


def integrate_riccati(problem, t_end, P_end, t_start, step=None, blowup=1e8):
    """Integrate the Riccati ODE backward from ``P(t_end) = P_end``.

    Raises
    ------
    IntegrationError
        On finite escape (``Riccati blow-up``) or when the per-step
        residual exceeds ``problem.tolerance`` (step too coarse).
    """
    if not t_start < t_end:
        raise LqError(f"need t_start < t_end, got {t_start}, {t_end}")
    step = problem.step if step is None else step
    P_end = nx.symmetrize(nx.as_matrix(P_end, "P_end"))
    limit = blowup * (1.0 + nx.spectral_norm(P_end))

    def f(t, P):
        if not np.all(np.isfinite(P)) or nx.spectral_norm(P) > limit:
            raise IntegrationError(f"Riccati blow-up near t={t:.6g}")
        return riccati_rhs(t, P, problem)

    ts, Ps, dPs = _rk4(f, t_end, P_end, t_start, step)
    ts, Ps, dPs = ts[::-1], Ps[::-1], dPs[::-1]
    res = _step_residual(f, ts, Ps, dPs)
    if res > problem.tolerance:
        raise IntegrationError(f"step too coarse: Riccati residual {res:.2e}")
    return RiccatiFlowResult(ts, Ps, True, res, dPs)


def _monodromy_radius(problem, P_fn, t0):
    Acl = closed_loop_fn(problem, P_fn)
    tg = transition_matrix(Acl, t0, np.array([t0, t0 + problem.period]), step=problem.step)
    return float(np.max(np.abs(np.linalg.eigvals(tg.Phi_values[-1]))))


def stabilizing_periodic(problem, t0=0.0, max_iters=500, tol=1e-9, P_start=None):
    """Periodic stabilizing solution ``P_plus`` on one period ``[t0, t0 + T]``.

    Iterates the backward period map from ``P_start`` to a fixed point.
    The default start reads ``P_plus(t0)`` off the contracting invariant
    subspace of the Hamiltonian monodromy matrix, so the iteration usually
    only confirms it.  The identity is the fallback start, since the
    backward flow converges to ``P_plus`` from any ``P > P_minus`` and
    ``P_minus < 0``.  The function then checks ``P_plus >= 0`` and that the monodromy of
    ``A_plus`` has spectral radius below 1.
    """
    if problem.period is None:
        raise LqError("stabilizing_periodic needs a periodic problem")
    T = problem.period
    if P_start is None:
        P_start = _monodromy_seed(problem, t0)
    P = nx.as_matrix(P_start)
    for it in range(max_iters):
        flow = integrate_riccati(problem, t0 + T, P, t0)
        P_new = flow.P_values[0]
        change = nx.spectral_norm(P_new - P)
        P = P_new
        if change <= tol * max(1.0, nx.spectral_norm(P)):
            break
    else:
        raise IntegrationError(f"no stabilizing periodic solution found in {max_iters} periods")
    flow = integrate_riccati(problem, t0 + T, P, t0)
    result = RiccatiFlowResult(flow.grid, flow.P_values, True, flow.residual, flow.derivatives, T)
    lam = min(nx.min_eigenvalue(Pi) for Pi in flow.P_values)
    if lam < -1e-8 * max(1.0, nx.spectral_norm(P)):
        raise IntegrationError(f"periodic solution is not nonnegative (min eig {lam:.3g})")
    rho = _monodromy_radius(problem, result, t0)
    if not rho < 1.0:
        raise IntegrationError(f"periodic solution is not stabilizing (monodromy radius {rho:.6g})")
    return replace(result, monodromy_radius=rho)


def _hamiltonian_at(problem, t):
    A, B, Q, S, R = problem.at(t)
    G = np.linalg.solve(R, np.hstack([S.T, B.T]))
    RiS, RiB = G[:, : S.shape[0]], G[:, S.shape[0]:]
    return np.block([[A - B @ RiS, B @ RiB], [Q - S @ RiS, -A.T + S @ RiB]])


def _monodromy_seed(problem, t0):
    n = problem.n
    try:
        tg = transition_matrix(lambda t: _hamiltonian_at(problem, t), t0,
                               np.array([t0, t0 + problem.period]), problem.step)
        _, U, sdim = sla.schur(tg.Phi_values[-1], output="real", sort="iuc")
        if sdim != n or np.linalg.cond(U[:n, :n]) > 1e10:
            return np.eye(n)
        return nx.symmetrize(-np.linalg.solve(U[:n, :n].T, U[n:, :n].T).T)
    except (np.linalg.LinAlgError, ValueError):
        return np.eye(n)


def time_reversed(problem, pivot=0.0):
    """Problem in reversed time ``s = 2 pivot - t``: ``A, B`` change sign,
    the cost is evaluated at the reflected time."""
    def rev(fn, sign=1.0):
        return lambda s: sign * fn(2 * pivot - s)

    return TimeVaryingLqProblem(
        rev(problem.A, -1.0), rev(problem.B, -1.0), rev(problem.Q), rev(problem.S), rev(problem.R),
        problem.n, problem.m, problem.period, problem.step, problem.tolerance,
    )


def antistabilizing_periodic(problem, t0=0.0, **kwargs):
    """Periodic anti-stabilizing solution ``P_minus(t) = -P~_plus(2 t0 - t)``
    where ``P~_plus`` solves the time-reversed problem."""
    rev = time_reversed(problem, t0)
    T = problem.period
    tilde = stabilizing_periodic(rev, t0, **kwargs)
    # tilde lives on [t0, t0+T]; P_minus on [t0, t0+T] reads tilde at 2 t0 - t mod T
    grid = tilde.grid
    refl = t0 + np.mod(t0 - grid, T)
    P = np.stack([-tilde(s) for s in refl])
    dP = np.stack([riccati_rhs(t, Pi, problem) for t, Pi in zip(grid, P)])
    result = RiccatiFlowResult(grid, P, True, tilde.residual, dP, T)
    lam = max(-nx.min_eigenvalue(-Pi) for Pi in P)
    if lam > 1e-8 * max(1.0, np.max(np.abs(P))):
        raise IntegrationError(f"anti-stabilizing solution is not nonpositive (max eig {lam:.3g})")
    rho = _monodromy_radius(problem, result, t0)
    if not rho > 1.0:
        raise IntegrationError(f"periodic solution is not anti-stabilizing (monodromy radius {rho:.6g})")
    return replace(result, monodromy_radius=rho)


def closed_loop_fn(problem, P_fn):
    """``t -> A - B R^{-1} (S' + B'P(t))``; ``P_fn`` may be a constant matrix."""
    if not callable(P_fn):
        P_fn = _const(P_fn)

    def Acl(t):
        A, B, _, S, R = problem.at(t)
        return A - B @ np.linalg.solve(R, S.T + B.T @ P_fn(t))

    return Acl


def transition_matrix(A_fn, t0, grid, step=1e-3):
    """``Phi(t, t0)`` for ``t`` on ``grid`` (``grid[0] == t0``), RK4 with at
    most ``step`` between evaluations."""
    grid = np.asarray(grid, dtype=float).ravel()
    if grid[0] != t0:
        raise LqError("grid must start at t0")
    if not callable(A_fn):
        A_fn = _const(A_fn)
    n = A_fn(t0).shape[0]
    Phis = [np.eye(n)]
    f = lambda t, Y: A_fn(t) @ Y
    for a, b in zip(grid[:-1], grid[1:]):
        _, ys, _ = _rk4(f, a, Phis[-1], b, step)
        Phis.append(ys[-1])
    return TransitionGrid(t0, grid, np.stack(Phis))


def _fine_grid(grid, step):
    pieces = [grid[:1]]
    for a, b in zip(grid[:-1], grid[1:]):
        k = max(1, int(np.ceil((b - a) / step - 1e-9)))
        pieces.append(a + (b - a) * np.arange(1, k + 1) / k)
    fine = np.concatenate(pieces)
    idx = np.searchsorted(fine, grid)
    return fine, idx


def _check_grid(grid, bd):
    grid = np.asarray(grid, dtype=float).ravel()
    if not bd.t0 < bd.t1:
        raise LqError("need t0 < t1")
    if np.any(np.diff(grid) <= 0) or grid[0] < bd.t0 - 1e-12 or grid[-1] > bd.t1 + 1e-12:
        raise LqError("grid must be increasing and inside [t0, t1]")
    return np.unique(np.concatenate([[bd.t0], grid, [bd.t1]])), grid


def pvw_solve(problem, bd, grid):
    """Finite-horizon optimal trajectory by the ``P, V, W`` feedback.

    ``P`` (with ``P(t1) = 0``), ``V`` (``V(t1) = I``) and ``W``
    (``W(t1) = 0``) are integrated backward; the state then follows
    ``u = -R^{-1}(B'M + S') x - R^{-1} B'N x1`` with ``M = P - V W^{-1} V'``
    and ``N = V W^{-1}``.  Because ``W(t1) = 0`` the gain is singular at
    ``t1``.  Once ``step * |B R^{-1} B'M|`` exceeds 1/2 (never later than
    ``t1 - step``) the state is closed with the open-loop control built
    from ``nu = W^{-1}(V'x - x1)``.  That multiplier is constant along the
    optimal trajectory and is evaluated at ``t0``.

    Raises
    ------
    IntegrationError
        If ``W`` is numerically singular away from ``t1``.
    """
    n = problem.n
    full, user = _check_grid(grid, bd)
    fine, _ = _fine_grid(full, problem.step)

    def f(t, Y):
        P, V = Y[:, :n], Y[:, n:2 * n]
        A, B, Q, S, R = problem.at(t)
        L = P @ B + S
        G = np.linalg.solve(R, np.hstack([L.T, B.T]))
        RiL, RiB = G[:, :n], G[:, n:]
        dP = nx.symmetrize(-P @ A - A.T @ P + L @ RiL - Q)
        dV = (-A.T + L @ RiB) @ V
        dW = V.T @ B @ RiB @ V
        return np.hstack([dP, dV, dW])

    Y1 = np.hstack([np.zeros((n, n)), np.eye(n), np.zeros((n, n))])
    ts, Ys, dYs = [], [], []
    for a, b in zip(fine[::-1][:-1], fine[::-1][1:]):
        t_, y_, d_ = _rk4(f, a, Y1 if not Ys else Ys[-1][-1], b, problem.step)
        ts.append(t_ if not ts else t_[1:])
        Ys.append(y_ if not Ys else y_[1:])
        dYs.append(d_ if not dYs else d_[1:])
    ts = np.concatenate(ts)[::-1]
    Ys = np.concatenate(Ys)[::-1]
    dYs = np.concatenate(dYs)[::-1]
    spline = CubicHermiteSpline(ts, Ys, dYs, axis=0)

    def parts(t):
        Y = spline(t)
        return Y[:, :n], Y[:, n:2 * n], Y[:, 2 * n:]

    P0, V0, W0 = parts(fine[0])
    if np.linalg.cond(W0) > 1e12:
        raise IntegrationError("controllability failure on interval: W singular before t1")
    # invariant multiplier; W(t0) is the best-conditioned place to solve for it
    nu = np.linalg.solve(W0, V0.T @ bd.x0 - bd.x1)

    def gains(t):
        P, V, W = parts(t)
        try:
            N = np.linalg.solve(W.T, V.T).T
        except np.linalg.LinAlgError as exc:
            raise IntegrationError(f"controllability failure on interval at t={t:.6g}") from exc
        return P - N @ V.T, N

    x1 = bd.x1

    def closed(t, x):
        A, B, _, S, R = problem.at(t)
        M, N = gains(t)
        u = -np.linalg.solve(R, (B.T @ M + S.T) @ x + B.T @ N @ x1)
        return A @ x + B @ u

    # feedback until the gain gets stiff for the step, then the multiplier form
    switch = fine.size - 2
    for i in range(fine.size - 1):
        A, B, _, S, R = problem.at(fine[i])
        M, _ = gains(fine[i])
        if problem.step * nx.spectral_norm(B @ np.linalg.solve(R, B.T @ M)) > 0.5:
            switch = max(i - 1, 0)
            break

    def open_loop(t, x):
        A, B, _, S, R = problem.at(t)
        P, V, _ = parts(t)
        u = np.linalg.solve(R, -(S.T + B.T @ P) @ x + B.T @ V @ nu)
        return A @ x + B @ u

    xs = [np.asarray(bd.x0, dtype=float)]
    for i in range(fine.size - 1):
        rhs = closed if i < switch else open_loop
        _, y_, _ = _rk4(rhs, fine[i], xs[-1], fine[i + 1], problem.step)
        xs.append(y_[-1])
    xs = np.stack(xs)
    t_switch = fine[switch]

    idx = np.searchsorted(fine, user - 1e-12 * (bd.t1 - bd.t0))
    x_out = xs[idx]
    ps, us = [], []
    for t, x in zip(user, x_out):
        A, B, _, S, R = problem.at(t)
        P, V, W = parts(t)
        if t < t_switch:
            M, N = gains(t)
            p = -M @ x - N @ x1
        else:
            p = -P @ x + V @ nu
        ps.append(p)
        us.append(np.linalg.solve(R, -S.T @ x + B.T @ p))
    return Trajectory(user, x_out, np.stack(ps), np.stack(us))


def _as_fn(P):
    return P if callable(P) else _const(P)


def decomposition_solve(problem, P_plus, P_minus, bd, grid):
    """Trajectory ``x = Phi_plus(t, t0) y_plus + Phi_minus(t, t0) y_minus``.

    ``P_plus`` and ``P_minus`` are callables (e.g. :class:`RiccatiFlowResult`)
    or constant matrices.  Costate ``p = -P_plus Phi_plus y_plus - P_minus
    Phi_minus y_minus``.
    """
    n = problem.n
    full, user = _check_grid(grid, bd)
    Pp, Pm = _as_fn(P_plus), _as_fn(P_minus)
    tp = transition_matrix(closed_loop_fn(problem, Pp), bd.t0, full, problem.step)
    tm = transition_matrix(closed_loop_fn(problem, Pm), bd.t0, full, problem.step)
    M = np.block([[np.eye(n), np.eye(n)], [tp.Phi_values[-1], tm.Phi_values[-1]]])
    if np.linalg.cond(M) > 1e12:
        raise IntegrationError("endpoint system singular")
    y = np.linalg.solve(M, np.concatenate([bd.x0, bd.x1]))
    yp, ym = y[:n], y[n:]
    idx = np.searchsorted(full, user - 1e-12 * (bd.t1 - bd.t0))
    xs, ps, us = [], [], []
    for i, t in zip(idx, user):
        xp = tp.Phi_values[i] @ yp
        xm = tm.Phi_values[i] @ ym
        x = xp + xm
        p = -Pp(t) @ xp - Pm(t) @ xm
        A, B, _, S, R = problem.at(t)
        xs.append(x)
        ps.append(p)
        us.append(np.linalg.solve(R, -S.T @ x + B.T @ p))
    return Trajectory(user, np.stack(xs), np.stack(ps), np.stack(us))


def _quadrature_weights(grid, i, rule):
    """Weights on ``grid[:len(w)]`` for the integral over ``[grid[0], grid[i]]``.

    Simpson weights for an even count of intervals.  An odd count uses
    the 3/8 rule on the first three intervals.  A single interval
    integrates the quadratic through the first three nodes, so its
    weights reach one node past ``grid[i]``.
    """
    x = grid[: i + 1]
    if rule == "trapezoid" or grid.size < 3:
        w = np.zeros(i + 1)
        dx = np.diff(x)
        w[:-1] += dx / 2
        w[1:] += dx / 2
        return w
    if rule != "simpson":
        raise ValueError(f"unknown quadrature rule {rule!r}")
    h = grid[1] - grid[0]
    if not np.allclose(np.diff(grid), h, rtol=1e-9, atol=0):
        return simpson(np.eye(i + 1), x=x, axis=1)
    if i == 1:
        return h * np.array([5.0, 8.0, -1.0]) / 12
    w = np.zeros(i + 1)
    start = 0
    if i % 2:
        w[:4] += 3 * h / 8 * np.array([1.0, 3.0, 3.0, 1.0])
        start = 3
    for a in range(start, i, 2):
        w[a:a + 3] += h / 3 * np.array([1.0, 4.0, 1.0])
    return w


def reconstruct_K_tv(A_fn, B_fn, A_plus_fn, grid):
    """``K(t) = (B'B)^{-1} B'(A - A_plus)`` at each grid point."""
    Ks = []
    for t in np.asarray(grid, dtype=float).ravel():
        B = nx.as_matrix(B_fn(t))
        s = np.linalg.svd(B, compute_uv=False)
        if s[-1] <= 1e-10 * s[0]:
            raise ReconstructionError(f"B(t) rank-deficient at t={t:.6g}", stage="cost")
        Ks.append(np.linalg.solve(B.T @ B, B.T @ (A_fn(t) - A_plus_fn(t))))
    return np.stack(Ks)


def solve_Z_equation(A_plus, A_minus, B_fn, grid, step=None, tol=1e-3, quadrature="simpson"):
    """Weights ``Z(t) = R(t)^{-1}`` from the synthesis pair.

    Collocates, at every grid point ``t``,

        B Z(t) B' (I - Phi_-(t,0)^{-T} Phi_+(t,0)') =
            (A_-(t) - A_+(t)) int_0^t Phi_+(t,s) B Z(s) B' Phi_+(t,s)' ds

    with the chosen quadrature, and takes the smallest right singular vector
    of the stacked homogeneous system.  Both sides vanish at the anchor,
    so rows are divided by ``t - grid[0]``.  The scale is fixed by
    ``det Z(grid[0]) = 1``.

    Parameters
    ----------
    A_plus, A_minus : callable or array
    B_fn : callable or array
    grid : increasing times, ``grid[0]`` is the anchor
    step : RK4 step for the transition matrices (default: grid spacing / 4)
    tol : singular values at most ``tol * s_max`` count toward the kernel
    quadrature : {'simpson', 'trapezoid'}
        Rule for the integral.  The problem is ill-conditioned enough that
        the trapezoid error is visible in ``R``.

    Returns
    -------
    Z, R : arrays of shape ``(len(grid), m, m)``
    info : dict with ``kernel_dim`` and the relative singular values

    Raises
    ------
    ReconstructionError
        ``stage='delta'`` for an empty or multi-dimensional kernel, or
        ``stage='cost'`` if ``Z`` is not positive definite.
    """
    Ap_fn, Am_fn, B_fn = _as_fn(A_plus), _as_fn(A_minus), _as_fn(B_fn)
    grid = np.asarray(grid, dtype=float).ravel()
    G = grid.size
    if step is None:
        step = np.min(np.diff(grid)) / 4
    Phi_p = transition_matrix(Ap_fn, grid[0], grid, step).Phi_values
    Phi_m = transition_matrix(Am_fn, grid[0], grid, step).Phi_values
    Bs = [nx.as_matrix(B_fn(t)) for t in grid]
    n, m = Bs[0].shape
    basis = _sym_basis(m)
    d = len(basis)
    BEB = [[B @ E @ B.T for E in basis] for B in Bs]  # per grid point, per basis element
    Phi_p_inv = np.linalg.inv(Phi_p)
    rows = []
    for i in range(1, G):
        t = grid[i]
        D = Am_fn(t) - Ap_fn(t)
        lhs_factor = np.eye(n) - np.linalg.solve(Phi_m[i].T, Phi_p[i].T)
        w = _quadrature_weights(grid, i, quadrature)
        block = np.zeros((n * n, G * d))
        for j in range(w.size):
            F = Phi_p[i] @ Phi_p_inv[j]
            for k in range(d):
                block[:, j * d + k] -= (w[j] * D @ F @ BEB[j][k] @ F.T).ravel()
        for k in range(d):
            block[:, i * d + k] += (BEB[i][k] @ lhs_factor).ravel()
        # both sides are O(t - t0); rescale so early rows are not discounted
        rows.append(block / (t - grid[0]))
    L = np.vstack(rows)
    # full V: with fewer rows than unknowns the kernel lies outside the thin SVD
    _, s, Vh = np.linalg.svd(L, full_matrices=L.shape[0] < L.shape[1])
    s = np.concatenate([s, np.zeros(G * d - s.size)])
    s_max = s[0]
    dim = int(np.sum(s <= tol * s_max))
    info = {"kernel_dim": dim, "singular_values": s / s_max}
    err = None
    if dim == 0:
        err = ReconstructionError(
            f"inconsistent synthesis data (smallest singular value {s[-1] / s_max:.2e})", stage="delta"
        )
    elif dim > 1:
        err = ReconstructionError(f"non-injective (product form suspected), kernel dimension {dim}", stage="delta")
    if err is not None:
        err.info = info
        raise err
    v = Vh[-1]
    Z = np.stack([nx.symmetrize(sum(c * E for c, E in zip(v[j * d:(j + 1) * d], basis))) for j in range(G)])
    if np.trace(Z[0]) < 0:
        Z = -Z
    det0 = np.linalg.det(Z[0])
    if det0 <= 0 or not all(nx.is_positive_definite(Zi) for Zi in Z):
        err = ReconstructionError("Z(t) is not positive definite", stage="cost")
        err.info = info
        raise err
    Z = Z / det0 ** (1.0 / m)
    det0 = np.linalg.det(Z[0])
    R = np.stack([nx.symmetrize(det0 ** (1.0 / m) * np.linalg.inv(Zi)) for Zi in Z])
    return Z, R, info
