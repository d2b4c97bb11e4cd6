"""Integrators, closed-form gap evolution, turnpike construction and metrics."""

import numpy as np
import pytest

from sismfg import (
    MixedState,
    ModelParams,
    StationaryControl,
    TimeGrid,
    TurnpikeHypothesisError,
    ValueVector,
    check_turnpike_hypotheses,
    default_grid,
    gap_closed_form,
    integrate_backward,
    integrate_forward,
    solve_turnpike,
    turnpike_metrics,
)
from sismfg.dynamics import integrate_value_forward
from sismfg.stationary import fixed_point_single, hjb_single_exact, solve_candidate

from conftest import P0_GAP, oracle_euler_path

SINGLE1 = StationaryControl.single(2, 0)


def stationary_pair(p):
    x_star, x = fixed_point_single(p, 0)
    return x, hjb_single_exact(p, 0, x_star)


# ---------------------------------------------------------------------------
# grids


def test_grid_validation():
    with pytest.raises(ValueError):
        TimeGrid(1.0, 1.0, 10)
    with pytest.raises(ValueError):
        TimeGrid(0.0, 1.0, 0)
    assert TimeGrid(0.0, 2.0, 100).h == pytest.approx(0.02)


def test_default_grid_step_rule(p0):
    assert default_grid(p0, 0.0, 1.0).n_steps == 1000  # h = 0.1/lam = 1e-3
    slow = ModelParams(d=1, lam=5.0, delta=0.1, q_plus=[0.5], q_minus=[0.5],
                       beta=[[0.0]], w_I=[2.0], w_S=[1.0])
    assert default_grid(slow, 0.0, 1.0).n_steps == 100  # h = 0.01


# ---------------------------------------------------------------------------
# forward integration


def test_forward_fixed_point_is_stationary(p0):
    x, _ = stationary_pair(p0)
    grid = TimeGrid(0.0, 10.0, 2000)
    path = integrate_forward(p0, x, SINGLE1, grid)
    assert np.max(np.abs(path - x.x)) <= 1e-9


def test_forward_p0_uniform_reaches_fixed_point(p0):
    x_star, x_fix = fixed_point_single(p0, 0)
    grid = TimeGrid(0.0, 50.0, 10000)
    path = integrate_forward(p0, MixedState.uniform(2), SINGLE1, grid)
    assert np.max(np.abs(path[-1] - x_fix.x)) <= 1e-6
    # independent reference flow: fine-step Euler over the tail
    euler = oracle_euler_path(p0, MixedState.uniform(2).x, SINGLE1, 50.0, 400000)
    assert np.max(np.abs(path[-1] - euler)) <= 1e-6


def test_forward_nodes_stay_on_simplex(p0):
    grid = TimeGrid(0.0, 5.0, 1000)
    path = integrate_forward(p0, MixedState.uniform(2), SINGLE1, grid)
    assert np.all(path >= 0.0)
    assert np.max(np.abs(path.sum(axis=1) - 1.0)) <= 1e-12


def test_forward_substep_halving_recovers_coarse_grid(p0):
    # h = 1 with lam = 100 rejects the raw RK4 step (the iterate explodes off
    # the simplex); halving is a rescue valve, not an accuracy device, so the
    # rescued node is only loosely accurate but must stay on the simplex
    coarse = integrate_forward(p0, MixedState.uniform(2), SINGLE1, TimeGrid(0.0, 1.0, 1))
    fine = integrate_forward(p0, MixedState.uniform(2), SINGLE1, TimeGrid(0.0, 1.0, 1000))
    assert np.all(coarse[-1] >= 0.0)
    assert abs(coarse[-1].sum() - 1.0) <= 1e-12
    assert np.max(np.abs(coarse[-1] - fine[-1])) <= 0.05


def test_forward_order_four(p0):
    # start on the single-strategy slow manifold so the stiff transient is
    # absent and the step-halving error ratio is the clean RK4 one
    x0 = MixedState([0.45, 0.55, 0.0, 0.0])
    T = 5.0

    def terminal(n):
        return integrate_forward(p0, x0, SINGLE1, TimeGrid(0.0, T, n))[-1]

    err = {}
    for n in (50, 100):
        err[n] = np.max(np.abs(terminal(n) - terminal(16 * n)))
    ratio = err[50] / err[100]
    assert 2.0 <= ratio / 8.0 <= 2.0 * 2.0  # h^4 within factor 2, i.e. [8, 32]


# ---------------------------------------------------------------------------
# backward integration


def test_backward_stationary_values_constant(p0):
    x, g = stationary_pair(p0)
    grid = TimeGrid(0.0, 10.0, 2000)
    x_path = np.tile(x.x, (grid.n_steps + 1, 1))
    back = integrate_backward(p0, g, x_path, SINGLE1, grid, mode="fixed")
    assert np.max(np.abs(back.g_path - g.g)) <= 1e-9
    assert back.cone_ok.all() and back.argmin_ok.all()


def test_backward_zero_terminal_gap_matches_closed_form(p0):
    x, _ = stationary_pair(p0)
    grid = TimeGrid(0.0, 5.0, 20000)
    x_path = np.tile(x.x, (grid.n_steps + 1, 1))
    back = integrate_backward(p0, ValueVector(np.zeros(4)), x_path, SINGLE1, grid)
    gap_int = back.g_path[:, 0] - back.g_path[:, 1]
    gap_cf = gap_closed_form(p0, 0, x_path, 0.0, grid)
    assert np.max(np.abs(gap_int - gap_cf)) <= 1e-8


def test_backward_fixed_equals_adaptive_inside_cone(p0):
    x, g = stationary_pair(p0)
    grid = TimeGrid(0.0, 20.0, 4000)
    x_path = integrate_forward(p0, MixedState.uniform(2), SINGLE1, grid)
    fixed = integrate_backward(p0, g, x_path, SINGLE1, grid, mode="fixed")
    adaptive = integrate_backward(p0, g, x_path, SINGLE1, grid, mode="adaptive")
    assert fixed.argmin_ok.all()
    assert np.array_equal(fixed.g_path, adaptive.g_path)  # bitwise


def test_backward_forward_reversibility_frozen_coefficients():
    p = ModelParams(d=2, lam=2.0, delta=0.2, q_plus=[0.5, 0.7], q_minus=[0.6, 0.4],
                    beta=[[0.1, 0.05], [0.05, 0.1]], w_I=[2.0, 3.0], w_S=[1.0, 2.0])
    x, g = stationary_pair(p)
    gT = ValueVector(g.g + np.array([0.0, 0.0, 0.3, 0.2]))
    grid = TimeGrid(0.0, 1.0, 1000)
    x_path = np.tile(x.x, (grid.n_steps + 1, 1))
    back = integrate_backward(p, gT, x_path, StationaryControl.single(2, 0), grid)
    g0 = ValueVector(back.g_path[0])
    forward_terminal = integrate_value_forward(p, g0, x_path, StationaryControl.single(2, 0), grid)
    assert np.max(np.abs(forward_terminal - gT.g)) <= 1e-9


# ---------------------------------------------------------------------------
# gap closed form


def test_gap_constant_path_scalar_solution(p0):
    x, _ = stationary_pair(p0)
    a = 0.5 + 0.5 + 0.1 + 0.2 * x.x_I(0)

    def sup_error(n):
        grid = TimeGrid(0.0, 50.0, n)
        x_path = np.tile(x.x, (n + 1, 1))
        gap = gap_closed_form(p0, 0, x_path, 0.0, grid)
        times = grid.times()
        exact = (1.0 / a) * (1.0 - np.exp(-a * (50.0 - times)))  # w gap = 1 at P0
        return np.max(np.abs(gap - exact)), gap[0]

    err_coarse, head = sup_error(5000)
    assert err_coarse <= 2e-5  # trapezoid quadrature, a*h^2/12 at h = 0.01
    assert head == pytest.approx(P0_GAP, abs=2e-5)  # long-horizon limit
    err_fine, _ = sup_error(20000)
    assert 8.0 <= err_coarse / err_fine <= 24.0  # second-order quadrature


def test_gap_short_horizon_recovers_terminal(p0):
    x, _ = stationary_pair(p0)
    grid = TimeGrid(0.0, 1e-4, 10)
    x_path = np.tile(x.x, (grid.n_steps + 1, 1))
    gap = gap_closed_form(p0, 0, x_path, 0.7, grid)
    assert gap[0] == pytest.approx(0.7, abs=2e-4)


def test_gap_envelope_bound(p0):
    grid = TimeGrid(0.0, 30.0, 6000)
    x_path = integrate_forward(p0, MixedState.uniform(2), SINGLE1, grid)
    gT_gap = 0.4
    gap = gap_closed_form(p0, 0, x_path, gT_gap, grid)
    times = grid.times()
    a_min = 0.5 + 0.5 + 0.1
    bound = np.exp(-a_min * (30.0 - times)) * gT_gap + 1.0 / a_min
    assert np.all(gap <= bound + 1e-12)


# ---------------------------------------------------------------------------
# hypotheses


def test_hypotheses_pass_at_p0(p0):
    _, g = stationary_pair(p0)
    report = check_turnpike_hypotheses(p0, 0, g)
    assert report.ok, report.failures


def test_hypotheses_flag_rate_ordering(p0):
    bad = ModelParams(d=2, lam=100.0, delta=0.1, q_plus=[0.5, 0.4], q_minus=[0.5, 0.3],
                      beta=[[0.2, 0.05], [0.05, 0.05]], w_I=[2.0, 3.0], w_S=[1.0, 2.5])
    _, g = stationary_pair(bad)
    with pytest.raises(TurnpikeHypothesisError) as err:
        solve_turnpike(bad, 0, MixedState.uniform(2), g,
                       TimeGrid(0.0, 1.0, 100))
    assert any("rate-ordering-q-plus(2)" in f for f in err.value.failures)


def test_hypotheses_flag_terminal_cone(p0):
    _, g = stationary_pair(p0)
    outside = g.g.copy()
    outside[2] = g.g[0] - 1.0  # strategy 2 infected value below the anchor
    with pytest.raises(TurnpikeHypothesisError) as err:
        solve_turnpike(p0, 0, MixedState.uniform(2), ValueVector(outside),
                       TimeGrid(0.0, 1.0, 100))
    assert any("terminal-cone" in f for f in err.value.failures)


# ---------------------------------------------------------------------------
# turnpike construction


def test_turnpike_stationary_inputs(p0):
    x, g = stationary_pair(p0)
    grid = TimeGrid(0.0, 10.0, 2000)
    sol = solve_turnpike(p0, 0, x, g, grid)
    assert sol.certified
    assert sol.stats.sup_x_mid <= 1e-9
    assert sol.stats.sup_g_mid <= 1e-9
    eq = solve_candidate(p0, SINGLE1)
    window = turnpike_metrics(sol, eq)
    assert window.entry == grid.t_start and window.exit == grid.t_end
    assert window.inside_fraction == 1.0


def test_turnpike_p0_long_horizon(p0):
    _, g = stationary_pair(p0)
    grid = TimeGrid(0.0, 50.0, 10000)
    sol = solve_turnpike(p0, 0, MixedState.uniform(2), g, grid)
    assert sol.certified
    assert sol.cone_ok.all() and sol.argmin_ok.all()
    assert sol.stats.sup_g_mid <= 1e-3
    assert sol.stats.sup_x_mid <= 1e-3  # measured ~3.1e-4, transient tail
    eq = solve_candidate(p0, SINGLE1)
    window = turnpike_metrics(sol, eq)
    assert window.inside_fraction >= 0.8
    assert window.exit == grid.t_end


def test_turnpike_population_path_ignores_terminal_values(p0):
    _, g = stationary_pair(p0)
    grid = TimeGrid(0.0, 10.0, 2000)
    shifted = g.g.copy()
    shifted[2] += 0.05  # stays inside the cone
    shifted[3] += 0.05
    a = solve_turnpike(p0, 0, MixedState.uniform(2), g, grid)
    b = solve_turnpike(p0, 0, MixedState.uniform(2), ValueVector(shifted), grid)
    assert np.array_equal(a.x_path, b.x_path)  # bitwise decoupling


def test_turnpike_short_horizon_may_never_enter(p0):
    _, g = stationary_pair(p0)
    grid = TimeGrid(0.0, 0.1, 200)
    sol = solve_turnpike(p0, 0, MixedState.uniform(2), g, grid)
    eq = solve_candidate(p0, SINGLE1)
    window = turnpike_metrics(sol, eq)
    # x starts far from x*, 0.1 time units cannot close the gap
    assert window.never_entered
    assert window.inside_fraction == 0.0


def test_turnpike_metrics_control_mismatch(p0):
    x, g = stationary_pair(p0)
    sol = solve_turnpike(p0, 0, x, g, TimeGrid(0.0, 1.0, 100))
    eq = solve_candidate(p0, StationaryControl.single(2, 1))
    with pytest.raises(ValueError, match="control"):
        turnpike_metrics(sol, eq)


def test_cone_invariance_random_admissible_draws():
    rng = np.random.default_rng(99)
    solved = 0
    for _ in range(10):
        d = int(rng.integers(2, 4))
        q_plus = np.empty(d)
        q_minus = np.empty(d)
        q_plus[0] = rng.uniform(0.2, 0.6)
        q_minus[0] = rng.uniform(0.5, 1.5)
        q_plus[1:] = q_plus[0] + rng.uniform(0.02, 0.08, d - 1)
        q_minus[1:] = np.maximum(q_minus[0] - rng.uniform(0.05, 0.15, d - 1), 0.05)
        w_S = np.empty(d)
        w_I = np.empty(d)
        w_S[0] = rng.uniform(0.2, 1.0)
        w_I[0] = w_S[0] + rng.uniform(0.5, 2.0)
        w_S[1:] = w_S[0] + rng.uniform(1.2, 2.5, d - 1)
        w_I[1:] = np.maximum(w_I[0], w_S[1:]) + rng.uniform(0.5, 2.0, d - 1)
        p = ModelParams(d=d, lam=float(rng.uniform(1.0, 20.0)),
                        delta=float(rng.uniform(0.05, 0.5)),
                        q_plus=q_plus, q_minus=q_minus,
                        beta=rng.uniform(0.0, 0.01, (d, d)), w_I=w_I, w_S=w_S)
        x_star, _ = fixed_point_single(p, 0)
        gT = hjb_single_exact(p, 0, x_star)
        if not check_turnpike_hypotheses(p, 0, gT).ok:
            continue
        grid = TimeGrid(0.0, 3.0, 3000)
        sol = solve_turnpike(p, 0, MixedState.uniform(d), gT, grid)
        assert sol.certified, f"cone violated at t={sol.first_violation_time}"
        solved += 1
    assert solved >= 5  # the constructive draws should mostly satisfy the hypotheses
