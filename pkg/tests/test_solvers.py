import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lexrank.catalog import box_rule, catalog_suite, get_problem, line_problem, quad_rule, rulebook_from_specs
from lexrank.core import Rulebook, RulebookError, rank
from lexrank.scalarization import LambdaSchedule, utility_objective
from lexrank.solvers import (
    GRID_BUDGET,
    DivergenceError,
    SolverConfig,
    UtilityObjective,
    central_path_solve,
    finite_diff_gradient,
    gradient_step,
    grid_oracle,
    make_grid,
    preemptive_solve,
    solve_inner,
    timescale_solve,
)

from conftest import random_rulebook


def square(x):
    return float(x @ x), 2.0 * x


def rosenbrock(x):
    a, b = x
    f = (1 - a) ** 2 + 100 * (b - a * a) ** 2
    g = np.array([-2 * (1 - a) - 400 * a * (b - a * a), 200 * (b - a * a)])
    return float(f), g


# -- gradient_step / solve_inner ------------------------------------------------


def test_gradient_step_quadratic():
    res = gradient_step(square, np.array([4.0]))
    assert abs(res.x[0]) < 4.0 and res.value < 16.0 and not res.stalled


def test_gradient_step_at_stationary_point():
    res = gradient_step(square, np.array([0.0]))
    np.testing.assert_array_equal(res.x, [0.0])
    assert res.step == 0.0


def test_gradient_step_rosenbrock_monotone():
    x = np.array([-1.0, 1.0])
    f_prev = rosenbrock(x)[0]
    for _ in range(100):
        res = gradient_step(rosenbrock, x)
        assert res.value <= f_prev
        x, f_prev = res.x, res.value
    assert f_prev < rosenbrock(np.array([-1.0, 1.0]))[0]


def test_gradient_step_stall_flag():
    # the "gradient" points uphill, so no trial step satisfies Armijo
    def liar(x):
        return float(x @ x), -2.0 * x

    res = gradient_step(liar, np.array([1.0]), SolverConfig(max_backtracks=5))
    assert res.stalled
    np.testing.assert_array_equal(res.x, [1.0])


def test_gradient_step_respects_max_step():
    res = gradient_step(square, np.array([100.0]), SolverConfig(max_step=0.5))
    assert abs(res.x[0] - 100.0) <= 0.5 + 1e-12


def test_solve_inner_examples():
    res = solve_inner(square, np.array([4.0]), SolverConfig(inner_tol=1e-4))
    assert res.converged and abs(res.x[0]) < 1e-4
    res = solve_inner(square, np.array([0.0]))
    assert res.steps == 0 and res.converged


def test_solve_inner_two_rule_catalog_postcondition():
    rb = get_problem("gen_01").rulebook()
    cfg = SolverConfig()
    obj = UtilityObjective(rb, 8.0)
    res = solve_inner(obj, np.zeros(rb.dim), cfg, rb.bounds)
    assert res.converged and res.grad_norm <= cfg.inner_tol


def test_solve_inner_iteration_limit_flagged():
    res = solve_inner(rosenbrock, np.array([-1.0, 1.0]), SolverConfig(max_inner_iters=3))
    assert not res.converged and res.steps == 3


def test_solve_inner_divergence():
    def nan_after_origin(x):
        return (float("nan"), x) if x[0] != 4.0 else (16.0, 2 * x)

    with pytest.raises(DivergenceError):
        solve_inner(lambda x: (float("inf"), x), np.array([1.0]))
    res = solve_inner(nan_after_origin, np.array([4.0]), SolverConfig(max_backtracks=3))
    assert res.stalled  # non-finite trials are rejected by the line search


def test_solver_config_validation():
    for kw in (
        {"inner_tol": 0.0},
        {"armijo_c1": 1.0},
        {"backtrack_factor": 1.0},
        {"timescale_ratio": 0},
        {"max_step": 0.0},
        {"max_inner_iters": 0},
    ):
        with pytest.raises(RulebookError):
            SolverConfig(**kw)


# -- continuation solvers -------------------------------------------------------


def test_central_path_line_problem():
    rb = line_problem().rulebook()
    tr = central_path_solve(rb, np.array([5.0]))
    assert tr.converged and tr.final_rank == 1
    assert abs(tr.final_decision[0]) < 1e-6
    oracle = grid_oracle(rb, points_per_dim=601)
    assert oracle.min_rank == 1 and abs(oracle.lex_argmin[0]) < 1e-12


def test_timescale_line_problem_same_rank():
    rb = line_problem().rulebook()
    tr = timescale_solve(rb, np.array([5.0]))
    assert tr.final_rank == 1 == grid_oracle(rb, points_per_dim=601).min_rank
    assert tr.total_inner_steps <= SolverConfig().max_outer_iters


def test_all_satisfiable_reaches_rank_n():
    rb = Rulebook((box_rule([0.0, 0.0], [1.0, 1.0]), quad_rule([0.5, 0.5])), dim=2, bounds=[[-3, 3], [-3, 3]])
    for solve in (central_path_solve, timescale_solve):
        assert solve(rb, np.array([2.5, -2.0])).final_rank == 2


def test_timescale_converges_at_saturation():
    rb = line_problem().rulebook()
    schedule = LambdaSchedule(lambda0=0.5, growth=2.0, lambda_max=8.0)
    tr = timescale_solve(rb, np.array([0.0]), schedule, SolverConfig(inner_tol=1e-6))
    assert tr.converged and tr.iterations[-1].lam == 8.0
    assert tr.iterations[-1].grad_norm <= 1e-6


def test_timescale_ratio_speeds_up_lambda():
    rb = line_problem().rulebook()
    t1 = timescale_solve(rb, np.array([3.0]), cfg=SolverConfig(timescale_ratio=1))
    t3 = timescale_solve(rb, np.array([3.0]), cfg=SolverConfig(timescale_ratio=3))
    assert t3.iterations[1].lam == 8 * t3.iterations[0].lam
    assert t1.iterations[1].lam == 2 * t1.iterations[0].lam
    assert t3.final_rank == 1


def test_trace_bookkeeping():
    rb = get_problem("gen_02").rulebook()
    for solve in (central_path_solve, timescale_solve):
        tr = solve(rb, None, cfg=SolverConfig(seed=4))
        assert np.all(np.diff(tr.lambdas) >= 0)
        assert tr.total_inner_steps == sum(r.inner_steps for r in tr.iterations)
        assert tr.final_rank == tr.iterations[-1].rank == rank(rb, tr.final_decision)


def test_catalog_subset_reaches_oracle_rank():
    for p in catalog_suite(8):
        rb = p.rulebook()
        want = grid_oracle(rb, points_per_dim=p.points_per_dim).min_rank
        for solve in (central_path_solve, timescale_solve):
            assert solve(rb, None, cfg=SolverConfig(seed=1)).final_rank == want, (p.name, solve.__name__)


# -- preemptive baseline --------------------------------------------------------


def test_preemptive_examples():
    rb = line_problem().rulebook()
    res = preemptive_solve(rb, np.array([5.0]))
    assert res.stages == rb.N == len(res.stage_levels)
    assert abs(res.x[0]) < 1e-2 and rank(rb, res.x) == central_path_solve(rb, np.array([5.0])).final_rank
    sat = Rulebook((box_rule([0.0], [1.0]), quad_rule([0.5])), dim=1, bounds=[[-3, 3]])
    assert rank(sat, preemptive_solve(sat, np.array([2.0])).x) == 2


# -- grid oracle / finite differences -------------------------------------------


def test_grid_oracle_examples():
    sat = Rulebook((box_rule([0.0], [1.0]),), dim=1)
    res = grid_oracle(sat, bounds=[[-0.5, 0.5]], points_per_dim=11)
    assert res.min_rank == 1
    assert res.argmin_index == 0 and res.lex_argmin[0] == -0.5  # tie -> first grid point
    rb = line_problem().rulebook()
    res = grid_oracle(rb, points_per_dim=601)
    grid = make_grid(rb.bounds, 601)
    assert res.lex_argmin[0] == grid[np.argmin(np.abs(grid[:, 0]))][0]
    assert res.grid_size == 601


def test_grid_oracle_budget():
    rb = random_rulebook(np.random.default_rng(0), 2, 3)
    with pytest.raises(RulebookError):
        grid_oracle(rb, points_per_dim=101)  # 101^3 > 1e6
    assert 100**3 <= GRID_BUDGET


def test_finite_diff_examples():
    np.testing.assert_allclose(finite_diff_gradient(lambda x: float(x @ x), np.array([3.0])), [6.0], atol=1e-6)
    np.testing.assert_array_equal(finite_diff_gradient(lambda x: 2.0, np.array([1.0, -4.0])), [0.0, 0.0])
    with pytest.raises(RulebookError):
        finite_diff_gradient(lambda x: 0.0, np.array([0.0]), h=0.0)


# -- properties -----------------------------------------------------------------


@given(st.integers(0, 10**6), st.floats(0.5, 100.0))
def test_descent_at_fixed_lambda(seed, lam):
    rng = np.random.default_rng(seed)
    rb = random_rulebook(rng, int(rng.integers(2, 5)), int(rng.integers(1, 4)))
    res = solve_inner(utility_objective(rb, lam), rng.uniform(-3, 3, rb.dim), SolverConfig(max_inner_iters=60), rb.bounds)
    assert np.all(np.diff(res.values) <= 0)


@given(st.integers(0, 10**6), st.sampled_from(["central_path", "timescale"]))
def test_monotone_lambda_and_determinism(seed, solver):
    rng = np.random.default_rng(seed)
    rb = random_rulebook(rng, int(rng.integers(2, 5)), int(rng.integers(1, 3)))
    solve = central_path_solve if solver == "central_path" else timescale_solve
    cfg = SolverConfig(seed=seed % 97, max_outer_iters=60, max_inner_iters=60)
    a, b = solve(rb, None, cfg=cfg), solve(rb, None, cfg=cfg)
    assert np.all(np.diff(a.lambdas) >= 0)
    assert len(a.iterations) == len(b.iterations)
    for ra, rb_ in zip(a.iterations, b.iterations):
        assert (ra.lam, ra.objective, ra.rank, ra.inner_steps) == (rb_.lam, rb_.objective, rb_.rank, rb_.inner_steps)
        np.testing.assert_array_equal(ra.x, rb_.x)
