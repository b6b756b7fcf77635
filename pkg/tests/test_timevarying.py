import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from invlq import numerics as nx
from invlq.autonomous import BoundaryData, feedback_gain, optimal_trajectory, synthesis_pair
from invlq.errors import IntegrationError, LqError, ReconstructionError
from invlq.problems import benchmark_problem, random_problem, scalar_problem
from invlq.timevarying import (
    TimeVaryingLqProblem,
    antistabilizing_periodic,
    closed_loop_fn,
    decomposition_solve,
    integrate_riccati,
    pvw_solve,
    reconstruct_K_tv,
    riccati_rhs,
    solve_Z_equation,
    stabilizing_periodic,
    time_reversed,
    transition_matrix,
)

from oracles import BENCHMARK_K, BENCHMARK_R, scalar_riccati_backward, scalar_two_point

TWO_PI = 2 * np.pi


def periodic_scalar(step=1e-3):
    one = np.array([[1.0]])
    return TimeVaryingLqProblem(
        lambda t: np.zeros((1, 1)), lambda t: one, lambda t: one, lambda t: np.zeros((1, 1)),
        lambda t: np.array([[2.0 + np.sin(t)]]), 1, 1, period=TWO_PI, step=step,
    )


@pytest.fixture(scope="module")
def periodic():
    prob = periodic_scalar(step=2e-3)
    return prob, stabilizing_periodic(prob), antistabilizing_periodic(prob)


def test_rhs_equilibrium_and_zero():
    p = TimeVaryingLqProblem.constant(scalar_problem())
    assert riccati_rhs(0.0, np.eye(1), p)[0, 0] == 0.0
    b = TimeVaryingLqProblem.constant(benchmark_problem().scaled(1.0))
    Q0 = TimeVaryingLqProblem(b.A, b.B, b.Q, lambda t: np.zeros((3, 2)), b.R, 3, 2)
    np.testing.assert_allclose(riccati_rhs(0.3, np.zeros((3, 3)), Q0), -benchmark_problem().Q)


@given(st.integers(0, 10_000))
@settings(max_examples=10)
def test_rhs_matches_flow_derivative(seed):
    rng = np.random.default_rng(seed)
    p = TimeVaryingLqProblem.constant(random_problem(rng, 3, 2), step=1e-3)
    flow = integrate_riccati(p, 0.2, np.zeros((3, 3)), 0.0)
    i = 100
    h = flow.grid[1] - flow.grid[0]
    fd = (flow.P_values[i + 1] - flow.P_values[i - 1]) / (2 * h)
    x = rng.standard_normal(3)
    # d/dt x'Px along the flow equals x' rhs x
    assert x @ fd @ x == pytest.approx(x @ riccati_rhs(flow.grid[i], flow.P_values[i], p) @ x,
                                       rel=1e-4, abs=1e-6)


def test_integrate_riccati_tanh():
    p = TimeVaryingLqProblem.constant(scalar_problem())
    flow = integrate_riccati(p, 1.0, np.zeros((1, 1)), 0.0)
    np.testing.assert_allclose(flow.P_values[:, 0, 0], scalar_riccati_backward(flow.grid, 1.0),
                               atol=1e-8)
    ts = np.linspace(0, 1, 37)
    np.testing.assert_allclose(flow(ts)[:, 0, 0], np.tanh(1 - ts), atol=1e-8)


def test_integrate_riccati_fixed_point():
    prob = random_problem(np.random.default_rng(1), 3, 2)
    p = TimeVaryingLqProblem.constant(prob)
    P = synthesis_pair(prob).P_plus
    flow = integrate_riccati(p, 1.0, P, 0.0)
    assert np.max(np.abs(flow.P_values - P)) <= 1e-8 * (1 + np.max(np.abs(P)))


def test_integrate_riccati_blowup():
    p = TimeVaryingLqProblem.constant(scalar_problem())
    with pytest.raises(IntegrationError, match="blow-up"):
        integrate_riccati(p, 3.0, -2.0 * np.eye(1), 0.0)


def test_integrate_riccati_coarse_step():
    stiff = scalar_problem().scaled(1.0)
    stiff = type(stiff)(stiff.A, stiff.B, [[100.0]], stiff.S, stiff.R)
    p = TimeVaryingLqProblem.constant(stiff, step=0.05)
    with pytest.raises(IntegrationError, match="step too coarse"):
        integrate_riccati(p, 1.0, np.zeros((1, 1)), 0.0)


def test_integrate_riccati_interval_order():
    with pytest.raises(LqError):
        integrate_riccati(TimeVaryingLqProblem.constant(scalar_problem()), 0.0, np.eye(1), 1.0)


def test_periodic_backward_solution_bounded():
    p = periodic_scalar(step=5e-3)
    flow = integrate_riccati(p, 10 * TWO_PI, np.zeros((1, 1)), 0.0)
    assert np.all(np.abs(flow.P_values) < 10)


def test_stabilizing_periodic_constant_matches_algebraic():
    b = benchmark_problem()
    p = TimeVaryingLqProblem.constant(b, period=1.0, step=2e-3)
    pair = synthesis_pair(b)
    plus = stabilizing_periodic(p)
    minus = antistabilizing_periodic(p)
    assert np.max(np.abs(plus.P_values - pair.P_plus)) <= 1e-8
    assert np.max(np.abs(minus.P_values - pair.P_minus)) <= 1e-8


def test_stabilizing_periodic_zero_cost_on_stable_system():
    A = np.array([[-1.0, 2.0], [0.0, -0.5]])
    p = TimeVaryingLqProblem(lambda t: A, lambda t: np.eye(2), lambda t: np.zeros((2, 2)),
                             lambda t: np.zeros((2, 2)), lambda t: np.eye(2), 2, 2,
                             period=1.0, step=5e-3)
    res = stabilizing_periodic(p)
    assert np.max(np.abs(res.P_values)) <= 1e-10


def test_antistabilizing_constant_scalar():
    p = TimeVaryingLqProblem.constant(scalar_problem(), period=1.0, step=5e-3)
    res = antistabilizing_periodic(p)
    np.testing.assert_allclose(res.P_values, -1.0, atol=1e-9)


def test_periodic_scalar_theory(periodic):
    prob, plus, minus = periodic
    assert plus.monodromy_radius < 1 < minus.monodromy_radius
    assert np.all(plus.P_values >= -1e-8)
    assert np.all(minus.P_values <= 1e-8)
    assert np.all(plus.P_values - minus.P_values > 0)
    # periodicity on the grid
    assert abs(plus.P_values[0, 0, 0] - plus.P_values[-1, 0, 0]) <= 1e-8
    assert abs(minus.P_values[0, 0, 0] - minus.P_values[-1, 0, 0]) <= 1e-8
    ts = np.linspace(0, TWO_PI, 9)
    np.testing.assert_allclose(plus(ts), plus(ts + TWO_PI), atol=1e-12)


def test_lyapunov_flow_consistency(periodic):
    prob, plus, minus = periodic
    ts = np.linspace(0.5, 5.5, 11)
    h = 1e-4
    X = lambda t: 1.0 / (plus(t)[0, 0] - minus(t)[0, 0])
    Ap = lambda t: closed_loop_fn(prob, plus)(t)[0, 0]
    Am = lambda t: closed_loop_fn(prob, minus)(t)[0, 0]
    for t in ts:
        dX = (X(t + h) - X(t - h)) / (2 * h)
        Z = 1.0 / prob.R(t)[0, 0]
        assert dX == pytest.approx(2 * Ap(t) * X(t) + Z, abs=1e-6)
        assert dX == pytest.approx(Ap(t) * X(t) + X(t) * Am(t), abs=1e-6)


def test_time_reversal_involution():
    p = periodic_scalar()
    twice = time_reversed(time_reversed(p, 0.3), 0.3)
    for t in (0.0, 1.1, 4.0):
        for a, b in zip(p.at(t), twice.at(t)):
            np.testing.assert_allclose(a, b, atol=1e-14)


def test_transition_matrix_oracles():
    grid = np.linspace(0, 2, 11)
    tg = transition_matrix(np.zeros((2, 2)), 0.0, grid)
    np.testing.assert_allclose(tg.Phi_values, np.broadcast_to(np.eye(2), (11, 2, 2)))
    A = np.array([[0.0, 1.0], [-2.0, -0.3]])
    tg = transition_matrix(A, 0.0, grid)
    for t, Phi in zip(grid, tg.Phi_values):
        np.testing.assert_allclose(Phi, nx.expm(t * A), atol=1e-10)
    tg = transition_matrix(lambda t: np.cos(t) * np.eye(2), 0.0, grid)
    for t, Phi in zip(grid, tg.Phi_values):
        np.testing.assert_allclose(Phi, np.exp(np.sin(t)) * np.eye(2), atol=1e-10)


@given(st.integers(0, 10_000))
@settings(max_examples=10)
def test_transition_cocycle(seed):
    rng = np.random.default_rng(seed)
    C = rng.standard_normal((3, 3))
    tg = transition_matrix(lambda t: np.sin(t) * C, 0.0, np.linspace(0, 1, 6))
    lhs = tg.between(5, 3) @ tg.between(3, 1)
    np.testing.assert_allclose(lhs, tg.between(5, 1), atol=1e-9 * np.max(np.abs(lhs)))


def test_transition_grid_must_start_at_t0():
    with pytest.raises(LqError):
        transition_matrix(np.eye(1), 0.0, [0.5, 1.0])


def test_pvw_scalar_closed_form():
    p = TimeVaryingLqProblem.constant(scalar_problem())
    grid = np.linspace(0, 1, 21)
    tr = pvw_solve(p, BoundaryData(0.0, 1.0, [0.0], [1.0]), grid)
    np.testing.assert_allclose(tr.states[:, 0], scalar_two_point(grid, 1.0, 1.0), atol=1e-6)


def test_pvw_zero_boundary():
    p = TimeVaryingLqProblem.constant(benchmark_problem())
    tr = pvw_solve(p, BoundaryData(0.0, 1.0, np.zeros(3), np.zeros(3)), np.linspace(0, 1, 5))
    assert np.max(np.abs(tr.states)) == 0.0


@pytest.mark.parametrize("i", range(3))
def test_pvw_matches_autonomous(i):
    b = benchmark_problem()
    bd = BoundaryData(0.0, 1.0, np.zeros(3), np.eye(3)[i])
    grid = np.linspace(0, 1, 21)
    ref = optimal_trajectory(synthesis_pair(b), b, bd, grid)
    tr = pvw_solve(TimeVaryingLqProblem.constant(b), bd, grid)
    assert np.max(np.abs(tr.states - ref.states)) <= 1e-6
    assert np.max(np.abs(tr.controls - ref.controls)) <= 1e-6
    assert np.max(np.abs(tr.states[-1] - bd.x1)) <= 1e-6


def test_pvw_uncontrollable():
    p = TimeVaryingLqProblem(lambda t: np.zeros((1, 1)), lambda t: np.zeros((1, 1)),
                             lambda t: np.eye(1), lambda t: np.zeros((1, 1)), lambda t: np.eye(1), 1, 1)
    with pytest.raises(IntegrationError, match="controllability"):
        pvw_solve(p, BoundaryData(0.0, 1.0, [0.0], [1.0]), np.linspace(0, 1, 5))


def test_decomposition_constant_matches_autonomous():
    b = benchmark_problem()
    pair = synthesis_pair(b)
    bd = BoundaryData(0.0, 1.0, np.array([1.0, -1.0, 0.5]), np.array([0.0, 1.0, 0.0]))
    grid = np.linspace(0, 1, 11)
    ref = optimal_trajectory(pair, b, bd, grid)
    tr = decomposition_solve(TimeVaryingLqProblem.constant(b), pair.P_plus, pair.P_minus, bd, grid)
    assert np.max(np.abs(tr.states - ref.states)) <= 1e-8
    assert np.max(np.abs(tr.costates - ref.costates)) <= 1e-8
    zero = decomposition_solve(TimeVaryingLqProblem.constant(b), pair.P_plus, pair.P_minus,
                               BoundaryData(0.0, 1.0, np.zeros(3), np.zeros(3)), grid)
    assert np.max(np.abs(zero.states)) == 0.0


def test_decomposition_matches_pvw_periodic(periodic):
    prob, plus, minus = periodic
    bd = BoundaryData(0.0, 3.0, [0.5], [-1.0])
    grid = np.linspace(0, 3, 31)
    a = decomposition_solve(prob, plus, minus, bd, grid)
    b = pvw_solve(prob, bd, grid)
    assert np.max(np.abs(a.states - b.states)) <= 1e-6
    assert np.max(np.abs(a.costates - b.costates)) <= 1e-6


def test_reconstruct_K_constant_and_zero():
    b = benchmark_problem()
    pair = synthesis_pair(b)
    grid = np.linspace(0, 1, 5)
    K = reconstruct_K_tv(lambda t: b.A, lambda t: b.B, lambda t: pair.A_plus, grid)
    np.testing.assert_allclose(K, np.broadcast_to(feedback_gain(b, pair.P_plus), K.shape), atol=1e-10)
    K0 = reconstruct_K_tv(lambda t: b.A, lambda t: b.B, lambda t: b.A, grid)
    assert np.max(np.abs(K0)) == 0.0
    with pytest.raises(ReconstructionError):
        reconstruct_K_tv(lambda t: b.A, lambda t: np.zeros((3, 2)), lambda t: b.A, grid)


def test_reconstruct_K_periodic(periodic):
    prob, plus, _ = periodic
    Ap = closed_loop_fn(prob, plus)
    grid = np.linspace(0, 2, 5)
    K = reconstruct_K_tv(prob.A, prob.B, Ap, grid)
    K2 = reconstruct_K_tv(prob.A, prob.B, Ap, grid + TWO_PI)
    np.testing.assert_allclose(K, K2, atol=1e-8)
    np.testing.assert_allclose(K[:, 0, 0], plus(grid)[:, 0, 0] / (2 + np.sin(grid)), atol=1e-8)


def test_Z_equation_scalar():
    # constant Z solves the continuous equation; the discrete one up to quadrature error
    Z, R, info = solve_Z_equation(-np.eye(1), np.eye(1), np.eye(1), np.linspace(0, 1, 21))
    assert info["kernel_dim"] == 1
    np.testing.assert_allclose(Z, 1.0, atol=1e-3)
    np.testing.assert_allclose(R, 1.0, atol=1e-3)
    Z2, _, _ = solve_Z_equation(-np.eye(1), np.eye(1), np.eye(1), np.linspace(0, 1, 41))
    assert np.max(np.abs(Z2 - 1)) < np.max(np.abs(Z - 1)) / 4


def test_Z_equation_identity_case_non_injective():
    with pytest.raises(ReconstructionError, match="non-injective") as exc:
        solve_Z_equation(-np.eye(2), np.eye(2), np.eye(2), np.linspace(0, 1, 11))
    assert exc.value.info["kernel_dim"] > 1


def test_Z_equation_benchmark_is_constant_and_converges():
    b = benchmark_problem()
    pair = synthesis_pair(b)
    errs = []
    for G in (51, 101, 201):
        _, R, _ = solve_Z_equation(pair.A_plus, pair.A_minus, b.B, np.linspace(0, 2, G))
        errs.append(np.max(np.abs(R - BENCHMARK_R)))
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] <= 0.05


def test_Z_equation_periodic_weight(periodic):
    prob, plus, minus = periodic
    grid = np.linspace(0, 2, 81)
    Z, R, _ = solve_Z_equation(closed_loop_fn(prob, plus), closed_loop_fn(prob, minus), prob.B, grid,
                               step=prob.step)
    # canonical scaling: R(0) = 2
    expected = (2 + np.sin(grid)) / 2.0
    np.testing.assert_allclose(R[:, 0, 0], expected, rtol=1e-3)


def test_problem_check_reports():
    rep = periodic_scalar().check()
    assert rep.ok and set(rep.checks) == {"symmetric", "R_uniform", "B_injective", "periodic"}
    bad = TimeVaryingLqProblem(lambda t: np.zeros((1, 1)), lambda t: np.eye(1), lambda t: np.eye(1),
                               lambda t: np.zeros((1, 1)), lambda t: np.array([[np.sin(t)]]), 1, 1)
    assert "R_uniform" in bad.check(0.0, 6.0).failed
